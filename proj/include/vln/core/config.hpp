#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vln/core/common.hpp"

namespace vln {

// Flat key-value experiment configuration. The on-disk format is
// "[section]" headers followed by "key = value" lines; '#' starts a comment.
// Unknown sections or keys are hard errors so typos never pass silently.
struct Config {
  // --- simworld ---
  real extent_m = 12.8;        // square scene side; occupancy cell is 0.2 m
  int categories = 12;         // C, includes "wall" as category 1
  int views = 8;               // K panoramic views
  int sectors_per_view = 4;
  int depth_bins = 8;
  real max_range_m = 5.0;
  real min_room_m = 2.4;
  int objects_per_room = 3;
  real success_radius_m = 0.75;
  real goal_min_m = 2.0;
  real goal_max_m = 9.0;
  int max_episode_steps = 200;

  // --- instructions ---
  int max_len = 160;           // L
  std::string vocab_file;      // optional overrides; built-ins when empty
  std::string lexicon_file;

  // --- model ---
  int dim = 128;               // d
  int grid_h = 6;
  int grid_w = 6;
  int isr_layers = 4;
  int isr_heads = 8;
  int xmodal_layers = 2;
  int xmodal_heads = 8;
  int mlp_ratio = 4;
  int z_dim = 32;
  int pano_dim = 64;
  int k_future = 20;           // k, imagination horizon
  real tau_vi = 0.07;
  real alpha_pos = 1.0;
  real alpha_neg = 2.0;
  real tau_sa = 0.07;
  std::string alg_variant = "scene_priority";  // or action_priority
  std::string position_loss = "ce";            // or literal_bce

  // --- training ---
  int batch_size = 4;
  int epochs = 30;
  real stage1_fraction = 0.5;
  real lr_pretrain = 1e-4;
  real lr_finetune = 5e-5;
  real weight_decay = 0.01;
  real grad_clip = 5.0;
  real gamma_inflection = 2.0;
  real beta = 0.3;             // Eq.(7) auxiliary weight
  real lambda = 0.5;           // Eq.(7) grounding weight
  real beta_future = 0.5;      // KL weight for future-pose queries
  bool use_map = true;
  bool use_con = true;
  bool use_kl = true;
  bool use_pro = true;
  bool use_pa = true;
  bool use_sa = true;
  int train_scenes = 400;
  int episodes_per_scene = 5;
  int val_scenes = 50;
  int dagger_rounds = 3;
  int dagger_episodes_per_round = 100;
  int dagger_epochs_per_round = 2;
  uint64_t seed = 0;
  int num_seeds = 3;

  // --- eval ---
  int max_steps = 200;
  int dump_weight_episodes = 4;
  std::vector<int> sweep_k = {10, 20, 30, 40};
  std::vector<int> sweep_grid = {3, 4, 6, 8};

  static Config load(const std::string& path);
  static Config parse(const std::string& text);
  std::string to_text() const;
  void save(const std::string& path) const;
  uint64_t hash() const;
  // throws VlnError when values are out of range or inconsistent
  void validate() const;
};

}  // namespace vln
