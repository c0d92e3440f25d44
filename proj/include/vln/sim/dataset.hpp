#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vln/lang/instructions.hpp"
#include "vln/sim/world.hpp"

namespace vln::sim {

struct TrajectoryStep {
  Pose pose;             // pose before the action is applied
  Action expert_action;
};

struct Trajectory {
  uint64_t scene_seed = 0;
  int episode_index = 0;
  uint64_t instruction_id = 0;
  lang::Instruction instruction;
  std::vector<TrajectoryStep> steps;  // last action is Stop
  Goal goal;
  real shortest_length = 0.0;         // geodesic(start, goal)
};

struct Dataset {
  static constexpr int kFormatVersion = 1;
  int format_version = kFormatVersion;
  Config config;                       // generator settings snapshot
  std::vector<Trajectory> episodes;
  std::vector<uint64_t> scene_seeds;   // distinct scenes, generation order
};

uint64_t scene_seed_for(uint64_t dataset_seed, int index);

// Scenes are generated from hashed per-index seeds; rare generator failures
// advance to the next candidate seed, deterministically.
Dataset generate_dataset(const Config& cfg, uint64_t dataset_seed, int num_scenes,
                         int episodes_per_scene);

// Line-delimited persistence: a header record with the format version and
// config, then one episode per line.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// True when the simulator/instruction settings of two configs agree, i.e. a
// dataset produced under `a` can train a model configured with `b`.
bool sim_compatible(const Config& a, const Config& b);

// Model-facing view of one episode: rendered observations, semantic-map
// targets, frozen panorama embeddings and progress targets. Owns a copy of
// the trajectory so prepared episodes outlive their source dataset.
struct PreparedEpisode {
  SceneSpec scene;
  std::shared_ptr<const Trajectory> traj;
  std::vector<PanoramicObservation> panoramas;
  std::vector<std::vector<uint8_t>> ego_maps;
  Tensor pano_embed;        // T x pano_dim
  std::vector<real> d_t;    // normalized distance-to-goal per step
  int length() const { return static_cast<int>(traj->steps.size()); }
};

// Frozen gaussian projection used to embed panoramas for view imagination
// targets; plays the role of a frozen pre-trained encoder.
const Tensor& frozen_pano_projection(int raw_dim, int pano_dim);
Tensor embed_panorama(const PanoramicObservation& pano, int pano_dim);

PreparedEpisode prepare_episode(const Trajectory& traj, const Config& cfg);

}  // namespace vln::sim
