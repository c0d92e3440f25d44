// Shared fixtures for the model-layer tests: a tiny configuration and
// prepared episodes.
#pragma once

#include "vln/eval/runner.hpp"
#include "vln/nn/agent.hpp"

namespace fixtures {

using namespace vln;

inline Config tiny_cfg() {
  Config cfg;
  cfg.extent_m = 6.4;
  cfg.categories = 6;
  cfg.goal_min_m = 1.5;
  cfg.goal_max_m = 3.5;
  cfg.dim = 8;
  cfg.grid_h = 3;
  cfg.grid_w = 3;
  cfg.isr_layers = 2;
  cfg.isr_heads = 2;
  cfg.xmodal_layers = 1;
  cfg.xmodal_heads = 2;
  cfg.mlp_ratio = 2;
  cfg.z_dim = 4;
  cfg.pano_dim = 8;
  cfg.k_future = 20;
  cfg.batch_size = 2;
  cfg.epochs = 2;
  return cfg;
}

inline std::vector<sim::PreparedEpisode> tiny_episodes(const Config& cfg, uint64_t seed,
                                                       int scenes, int per_scene = 1) {
  const sim::Dataset ds = sim::generate_dataset(cfg, seed, scenes, per_scene);
  return eval::prepare_all(ds, cfg);
}

}  // namespace fixtures
