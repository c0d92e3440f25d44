#include "vln/nn/rvi.hpp"

#include <algorithm>

namespace vln::nn {

namespace {
constexpr real kLogStdMin = -5.0;
constexpr real kLogStdMax = 2.0;
}

Imagination::Imagination(const Config& cfg, ParamStore& store) : cfg_(&cfg) {
  const int p = cfg.pano_dim;
  const int z = cfg.z_dim;
  prior_mlp_ = register_mlp(store, "rvi.prior", p, std::max(2 * z, 32), 2 * z);
  post_mlp_ = register_mlp(store, "rvi.post", 2 * p, std::max(2 * z, 32), 2 * z);
  const int map_classes = cfg.categories + 1;
  sli_w_ = store.add("rvi.sli.w", cfg.grid_h * cfg.grid_w * cfg.dim,
                     kEgoMapH * kEgoMapW * map_classes);
  sli_b_ = store.add("rvi.sli.b", 1, kEgoMapH * kEgoMapW * map_classes, false);
}

ImaginationSample Imagination::sample(int trajectory_length, int t, int k, Rng& rng) {
  if (trajectory_length < 1) throw VlnError("sample_imagination: empty trajectory");
  if (t < 0 || t >= trajectory_length)
    throw VlnError("sample_imagination: t outside trajectory");
  ImaginationSample s;
  const int hi = std::min(t + k, trajectory_length - 1);
  s.t_query = rng.uniform_int(hi + 1);
  s.candidate_count = hi + 1;
  s.future = s.t_query > t;
  return s;
}

int Imagination::contrastive_loss(Graph& g, int v_q, Tensor candidates,
                                  int target_index, real tau) const {
  if (candidates.rows < 1) throw VlnError("contrastive_loss: no candidates");
  if (target_index < 0 || target_index >= candidates.rows)
    throw VlnError("contrastive_loss: target outside candidate set");
  if (tau <= 0.0) throw VlnError("contrastive_loss: tau must be positive");
  const int sims = g.cosine_rows_const(v_q, std::move(candidates));
  return g.ce_with_logits_index(g.scale(sims, 1.0 / tau), target_index);
}

int Imagination::future_kl(Graph& g, ParamInjector& P, int v_q,
                           const Tensor& v_true) const {
  const int z = cfg_->z_dim;
  const int prior_out = mlp(g, P, prior_mlp_, v_q);
  const int post_in = g.concat_cols({v_q, g.leaf(v_true)});
  const int post_out = mlp(g, P, post_mlp_, post_in);

  std::vector<int> mean_idx(z), std_idx(z);
  for (int i = 0; i < z; ++i) {
    mean_idx[i] = i;
    std_idx[i] = z + i;
  }
  const int mu_p = g.gather_cols(prior_out, mean_idx);
  const int lp = g.clamp(g.gather_cols(prior_out, std_idx), kLogStdMin, kLogStdMax);
  const int mu_q = g.gather_cols(post_out, mean_idx);
  const int lq = g.clamp(g.gather_cols(post_out, std_idx), kLogStdMin, kLogStdMax);
  return g.gaussian_kl(mu_q, lq, mu_p, lp);
}

int Imagination::sli_loss(Graph& g, ParamInjector& P, int memory,
                          const std::vector<uint8_t>& gt_map) const {
  if (static_cast<int>(gt_map.size()) != kEgoMapH * kEgoMapW)
    throw VlnError("sli_loss: semantic map shape mismatch");
  const int classes = cfg_->categories + 1;
  Tensor target(1, kEgoMapH * kEgoMapW * classes);
  for (int cell = 0; cell < kEgoMapH * kEgoMapW; ++cell) {
    const int cat = gt_map[cell];
    if (cat >= classes)
      throw VlnError("sli_loss: map category exceeds configured classes");
    target.v[cell * classes + cat] = 1.0;
  }
  const int flat = g.reshape(memory, 1, g.val(memory).size());
  const int logits = linear(g, flat, P(sli_w_), P(sli_b_));
  return g.bce_with_logits(logits, std::move(target), /*mean=*/true);
}

}  // namespace vln::nn
