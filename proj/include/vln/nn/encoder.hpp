#pragma once

#include "vln/nn/common.hpp"
#include "vln/sim/world.hpp"

namespace vln::nn {

// Fuses panorama, pose, previous action and timestep into the observation
// feature o_t, and hosts the visual-semantic-prediction head.
class ObservationEncoder {
 public:
  ObservationEncoder(const Config& cfg, ParamStore& store);

  // 1 x d observation feature. prev_action_id is an Action id, or
  // kStartActionId at t = 0.
  int encode(Graph& g, ParamInjector& P, const sim::PanoramicObservation& pano,
             const Pose& pose, int prev_action_id, int t) const;

  // BCE over per-view existence and occupancy-ratio predictions.
  int vsp_loss(Graph& g, ParamInjector& P, int o_t,
               const sim::PanoramicObservation& pano) const;

  // targets derived from a panorama: [existence | ratio], each views x C
  Tensor vsp_targets(const sim::PanoramicObservation& pano) const;

  int view_feature_dim() const { return view_feature_dim_; }

 private:
  const Config* cfg_;
  MlpParams view_mlp_;
  int w_pose_, b_pose_;
  int act_emb_;
  int w_fuse_, b_fuse_;
  MlpParams vsp_mlp_;
  int view_feature_dim_;
};

}  // namespace vln::nn
