#include "vln/nn/isr.hpp"

#include <cmath>
#include <limits>

namespace vln::nn {

SceneMemory::SceneMemory(const Config& cfg, ParamStore& store) : cfg_(&cfg) {
  const int d = cfg.dim;
  w0_ = store.add("isr.seed", 1, d);
  pos_mlp_ = register_mlp(store, "isr.pos", 2, d, d);
  w_query_ = store.add("isr.query.w", 4, d);
  b_query_ = store.add("isr.query.b", 1, d, false);
  qvis_mlp_ = register_mlp(store, "isr.qvis", d, d, cfg.pano_dim);
  for (int l = 0; l < cfg.isr_layers; ++l)
    layers_.push_back(register_transformer_layer(store, "isr.l" + std::to_string(l),
                                                 d, cfg.mlp_ratio));
  lnf_g_ = store.add("isr.lnf.g", 1, d, false);
  lnf_b_ = store.add("isr.lnf.b", 1, d, false);
}

Tensor SceneMemory::grid_positions() const {
  const int h = cfg_->grid_h, w = cfg_->grid_w;
  Tensor pos(h * w, 2);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      pos.at(i * w + j, 0) = i - h / 2.0;
      pos.at(i * w + j, 1) = j - w / 2.0;
    }
  return pos;
}

int SceneMemory::grid_pos_embedding(Graph& g, ParamInjector& P) const {
  return mlp(g, P, pos_mlp_, g.leaf(grid_positions()));
}

int SceneMemory::init_grid(Graph& g, ParamInjector& P) const {
  return g.add_rowvec(grid_pos_embedding(g, P), P(w0_));
}

SceneMemory::UpdateOut SceneMemory::update(Graph& g, ParamInjector& P,
                                           int memory_prev, int obs,
                                           const std::vector<int>& queries) const {
  const int hw = grid_count();
  if (g.val(memory_prev).rows != hw || g.val(memory_prev).cols != cfg_->dim)
    throw VlnError("isr update: bad memory shape");

  // positional embedding is re-added at every step to keep the grids
  // geometry-anchored under recurrence
  const int grids_in = g.add(memory_prev, grid_pos_embedding(g, P));
  std::vector<int> token_list = {grids_in, obs};
  for (int q : queries) token_list.push_back(q);
  int tokens = g.concat_rows(token_list);

  const int n = hw + 1 + static_cast<int>(queries.size());
  // grid and observation rows must not attend to query columns
  Tensor mask;
  const Tensor* mask_ptr = nullptr;
  if (!queries.empty()) {
    mask = Tensor(n, n);
    const real ninf = -std::numeric_limits<real>::infinity();
    for (int i = 0; i < hw + 1; ++i)
      for (int j = hw + 1; j < n; ++j) mask.at(i, j) = ninf;
    mask_ptr = &mask;
  }

  UpdateOut out;
  out.token_count = n;
  for (const auto& lp : layers_) {
    TransformerLayerOut lo =
        transformer_layer(g, P, lp, tokens, cfg_->isr_heads, mask_ptr);
    tokens = lo.tokens;
    if (!queries.empty()) {
      const Tensor probs = g.mha_mean_probs(lo.att_node);
      for (int i = 0; i < hw + 1; ++i)
        for (int j = hw + 1; j < n; ++j)
          out.grid_query_attention_mass =
              std::max(out.grid_query_attention_mass, probs.at(i, j));
    }
  }
  tokens = g.layernorm(tokens, P(lnf_g_), P(lnf_b_));
  out.memory = g.slice_rows(tokens, 0, hw);
  out.obs_fused = g.slice_rows(tokens, hw, hw + 1);
  for (size_t i = 0; i < queries.size(); ++i)
    out.query_outs.push_back(
        g.slice_rows(tokens, hw + 1 + static_cast<int>(i), hw + 2 + static_cast<int>(i)));
  return out;
}

int SceneMemory::encode_pose_query(Graph& g, ParamInjector& P, const Pose& pose) const {
  Tensor v(1, 4);
  v.v[0] = pose.x / cfg_->extent_m;
  v.v[1] = pose.y / cfg_->extent_m;
  v.v[2] = std::sin(pose.theta);
  v.v[3] = std::cos(pose.theta);
  return linear(g, g.leaf(std::move(v)), P(w_query_), P(b_query_));
}

int SceneMemory::query_visual(Graph& g, ParamInjector& P, int query_out) const {
  return mlp(g, P, qvis_mlp_, query_out);
}

}  // namespace vln::nn
