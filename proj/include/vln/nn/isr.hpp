#pragma once

#include <vector>

#include "vln/nn/common.hpp"

namespace vln::nn {

// The implicit scene representation: a fixed h x w grid of d-dim memory
// vectors with positional initialization, updated by a multi-layer
// transformer over [grids, observation, pose queries]. Pose-query tokens are
// masked out of the grid/observation attention, so the memory update is
// bit-identical with or without queries.
class SceneMemory {
 public:
  SceneMemory(const Config& cfg, ParamStore& store);

  int grid_count() const { return cfg_->grid_h * cfg_->grid_w; }

  // M^0[ij] = w0 + MLP([i - h/2, j - w/2])
  int init_grid(Graph& g, ParamInjector& P) const;

  struct UpdateOut {
    int memory = -1;        // hw x d
    int obs_fused = -1;     // 1 x d
    std::vector<int> query_outs;
    int token_count = 0;
    // max over layers/grid rows of attention mass on query columns; the
    // masking contract makes this exactly zero
    real grid_query_attention_mass = 0.0;
  };
  UpdateOut update(Graph& g, ParamInjector& P, int memory_prev, int obs,
                   const std::vector<int>& queries) const;

  // 1 x d encoding of a query pose through a linear layer
  int encode_pose_query(Graph& g, ParamInjector& P, const Pose& pose) const;

  // MLP from a query output token to the panorama-embedding space
  int query_visual(Graph& g, ParamInjector& P, int query_out) const;

  Tensor grid_positions() const;  // hw x 2 relative positions

 private:
  int grid_pos_embedding(Graph& g, ParamInjector& P) const;

  const Config* cfg_;
  int w0_;
  MlpParams pos_mlp_;
  int w_query_, b_query_;
  MlpParams qvis_mlp_;
  std::vector<TransformerLayerParams> layers_;
  int lnf_g_, lnf_b_;  // final norm keeps the recurrent memory bounded
};

}  // namespace vln::nn
