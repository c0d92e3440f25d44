#pragma once

#include <cstdint>
#include <vector>

#include "vln/core/rng.hpp"
#include "vln/nn/common.hpp"

namespace vln::nn {

struct ImaginationSample {
  int t_query = 0;       // queried trajectory step
  int candidate_count = 0;  // candidates are steps [0, candidate_count)
  bool future = false;   // t_query > t: KL term active
};

// View-imagination and scene-layout-imagination heads and losses.
class Imagination {
 public:
  Imagination(const Config& cfg, ParamStore& store);

  // Uniform query over [0, min(t+k, T-1)]; candidate set is every panorama
  // embedding up to that horizon.
  static ImaginationSample sample(int trajectory_length, int t, int k, Rng& rng);

  // InfoNCE over cosine similarities at temperature tau; candidates are
  // frozen panorama embeddings.
  int contrastive_loss(Graph& g, int v_q, Tensor candidates, int target_index,
                       real tau) const;

  // KL(q(z | v_q, v_true) || p(z | v_q)) between diagonal gaussians.
  int future_kl(Graph& g, ParamInjector& P, int v_q, const Tensor& v_true) const;

  // BCE between Linear(flattened memory) and the one-hot-per-cell semantic map.
  int sli_loss(Graph& g, ParamInjector& P, int memory,
               const std::vector<uint8_t>& gt_map) const;

 private:
  const Config* cfg_;
  MlpParams prior_mlp_;   // v_q -> (mean, log-std)
  MlpParams post_mlp_;    // [v_q, v_true] -> (mean, log-std)
  int sli_w_, sli_b_;
};

}  // namespace vln::nn
