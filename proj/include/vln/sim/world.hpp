#pragma once

#include <limits>
#include <vector>

#include "vln/core/tensor.hpp"
#include "vln/sim/scene.hpp"

namespace vln::sim {

constexpr real kInfDistance = std::numeric_limits<real>::infinity();

struct StepResult {
  Pose pose;
  bool collided = false;
};

// Applies one low-level action. Forward translates 0.25 m unless the swept
// segment crosses occupied space, in which case the pose is unchanged and
// collided is set. Turns are exact +-15 degrees.
StepResult step(const SceneSpec& scene, const Pose& pose, Action action);

struct PanoramicObservation {
  int views = 0;
  int feature_dim = 0;
  // views x (C visibility + S*B depth one-hots + 1 free ratio)
  Tensor features;
  // views x C: fraction of the view's rays whose nearest hit is category c.
  // Supervision for semantic prediction, not part of the encoded feature.
  Tensor category_ratio;
};

// Ray-cast panorama. Headings are quantized to a fine lattice that the 15
// degree action turns land on exactly, so rotating the agent by 360/K
// cyclically shifts the K views bit-identically.
PanoramicObservation render_panorama(const SceneSpec& scene, const Pose& pose,
                                     const Config& cfg);

// 32x32 egocentric category map, agent at the center cell, forward along the
// +row axis. Cell centers are sampled from the scene raster.
std::vector<uint8_t> render_ego_map(const SceneSpec& scene, const Pose& pose);

// Shortest-path distances over the free-cell graph (4-connected, uniform
// cost kCellM). `inflate` plans on obstacles dilated by one cell.
class DistanceField {
 public:
  DistanceField(const SceneSpec& scene, real src_x, real src_y, bool inflate);

  real distance_at(real x, real y) const;         // meters, inf if unreachable
  real distance_cell(int row, int col) const;
  bool cell_passable(int row, int col) const;
  const SceneSpec& scene() const { return *scene_; }

 private:
  const SceneSpec* scene_;
  int grid_;
  std::vector<real> dist_;
  std::vector<uint8_t> passable_;
};

real geodesic_distance(const SceneSpec& scene, real x0, real y0, real x1, real y1);

// Geodesic-greedy expert with heading-aware turn insertion. Plans over the
// one-cell-inflated free graph when possible so forward motion keeps
// clearance from walls. Also provides the per-state pseudo labels used to
// relabel learner rollouts.
class ExpertPolicy {
 public:
  ExpertPolicy(const SceneSpec& scene, real goal_x, real goal_y, real success_radius);

  bool reachable(const Pose& pose) const;
  // First action of the shortest path from this pose (Stop inside the radius).
  Action next_action(const Pose& pose) const;

 private:
  const SceneSpec* scene_;
  real success_radius_;
  DistanceField raw_;
  DistanceField inflated_;
};

// Executes the expert until Stop. Throws when the goal is unreachable or the
// step budget is exceeded.
std::vector<Action> shortest_path_expert(const SceneSpec& scene, const Pose& from,
                                         real goal_x, real goal_y,
                                         real success_radius, int max_steps = 2000);

}  // namespace vln::sim
