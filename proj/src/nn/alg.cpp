#include "vln/nn/alg.hpp"

#include <cmath>

namespace vln::nn {

Grounding::Grounding(const Config& cfg, ParamStore& store) : cfg_(&cfg) {
  const int d = cfg.dim;
  tok_emb_ = store.add("alg.emb", 256, d);
  for (int l = 0; l < cfg.xmodal_layers; ++l) {
    const std::string p = "alg.x" + std::to_string(l);
    XLayer layer;
    layer.word_self = register_transformer_layer(store, p + ".self", d, cfg.mlp_ratio);
    layer.word_to_grid = register_cross_block(store, p + ".w2g", d);
    layer.word_ffn = register_ffn(store, p + ".wffn", d, cfg.mlp_ratio);
    layer.grid_to_word = register_cross_block(store, p + ".g2w", d);
    layer.grid_ffn = register_ffn(store, p + ".gffn", d, cfg.mlp_ratio);
    layers_.push_back(layer);
  }
  wln_g_ = store.add("alg.wln.g", 1, d, false);
  wln_b_ = store.add("alg.wln.b", 1, d, false);
  gln_g_ = store.add("alg.gln.g", 1, d, false);
  gln_b_ = store.add("alg.gln.b", 1, d, false);
  prog_w1_ = store.add("alg.prog.w1", d, d);
  prog_b1_ = store.add("alg.prog.b1", 1, d, false);
  prog_ww_ = store.add("alg.prog.ww", d, 1);
  prog_bw_ = store.add("alg.prog.bw", 1, 1, false);
  prog_ws_ = store.add("alg.prog.ws", d, 1);
  prog_bs_ = store.add("alg.prog.bs", 1, 1, false);
  pa_mlp_ = register_mlp(store, "alg.pa", d, d, cfg.max_len);
  act_mlp_ = register_mlp(store, "alg.act", 3 * d, d, kNumActions);
}

Grounding::FuseOut Grounding::fuse(Graph& g, ParamInjector& P, int memory,
                                   const std::vector<int>& tokens) const {
  if (tokens.empty()) throw VlnError("fuse: empty instruction");
  if (static_cast<int>(tokens.size()) > cfg_->max_len)
    throw VlnError("fuse: instruction exceeds max_len");
  const int n = static_cast<int>(tokens.size());

  int words = g.gather_rows(P(tok_emb_), tokens);
  Tensor posemb(n, cfg_->dim);
  for (int i = 0; i < n; ++i) {
    Tensor e = sinusoidal_embedding(i, cfg_->dim);
    std::copy(e.v.begin(), e.v.end(), posemb.row_ptr(i));
  }
  words = g.add(words, g.leaf(std::move(posemb)));

  int grids = memory;
  int last_w2g_att = -1;
  for (const auto& layer : layers_) {
    words = transformer_layer(g, P, layer.word_self, words, cfg_->xmodal_heads,
                              nullptr)
                .tokens;
    CrossBlockOut w2g =
        cross_block(g, P, layer.word_to_grid, words, grids, cfg_->xmodal_heads);
    words = ffn_block(g, P, layer.word_ffn, w2g.tokens);
    last_w2g_att = w2g.att_node;
    CrossBlockOut g2w =
        cross_block(g, P, layer.grid_to_word, grids, words, cfg_->xmodal_heads);
    grids = ffn_block(g, P, layer.grid_ffn, g2w.tokens);
  }

  FuseOut out;
  out.words = g.layernorm(words, P(wln_g_), P(wln_b_));
  out.grids = g.layernorm(grids, P(gln_g_), P(gln_b_));
  out.affinity = g.mha_mean_probs(last_w2g_att);
  return out;
}

Grounding::ProgressOut Grounding::progress(Graph& g, ParamInjector& P,
                                           int fused_words) const {
  const int trunk = g.relu(linear(g, fused_words, P(prog_w1_), P(prog_b1_)));
  const int weights = g.sigmoid(linear(g, trunk, P(prog_ww_), P(prog_bw_)));
  const int scalars = g.sigmoid(linear(g, trunk, P(prog_ws_), P(prog_bs_)));
  const int wsum = g.add(g.sum_all(weights), g.leaf(Tensor::full(1, 1, 1e-12)));
  const int wnorm = g.div_by_scalar(weights, wsum);
  ProgressOut out;
  out.weights = weights;
  out.d_hat = g.dot(wnorm, scalars);
  out.weights_value = g.val(weights);
  return out;
}

std::vector<int> Grounding::select_attentive_grids(const Tensor& affinity) {
  std::vector<int> sel(affinity.rows, 0);
  for (int i = 0; i < affinity.rows; ++i) {
    int best = 0;
    for (int j = 1; j < affinity.cols; ++j)
      if (affinity.at(i, j) > affinity.at(i, best)) best = j;  // ties: lowest index
    sel[i] = best;
  }
  return sel;
}

bool Grounding::is_positive(lang::Component c) const {
  if (cfg_->alg_variant == "action_priority")
    return c == lang::Component::Action || c == lang::Component::Orientation;
  return c == lang::Component::Landmark || c == lang::Component::Scene;
}

int Grounding::position_alignment_loss(Graph& g, ParamInjector& P,
                                       int pooled_selection,
                                       const std::vector<lang::Component>& tags,
                                       const Tensor& progress_weights) const {
  const int n = static_cast<int>(tags.size());
  if (progress_weights.size() != n)
    throw VlnError("position_alignment_loss: weights/tags mismatch");
  Tensor target(1, cfg_->max_len);
  real sum = 0.0;
  for (int i = 0; i < n && i < cfg_->max_len; ++i) {
    if (!is_positive(tags[i])) continue;
    target.v[i] = progress_weights.v[i];  // L_total (x) W_t, stop-gradient
    sum += target.v[i];
  }
  if (sum <= 0.0) return -1;  // no positive token carries weight: skip
  for (auto& x : target.v) x /= sum;

  const int logits = mlp(g, P, pa_mlp_, pooled_selection);
  const int valid = std::min(n, cfg_->max_len);
  if (cfg_->position_loss == "literal_bce") {
    // the formula as printed: BCE applied to the softmax output
    const int probs = g.softmax_masked(logits, valid);
    std::vector<int> cols(valid);
    for (int i = 0; i < valid; ++i) cols[i] = i;
    Tensor tgt(1, valid);
    std::copy(target.v.begin(), target.v.begin() + valid, tgt.v.begin());
    return g.bce_on_probs(g.gather_cols(probs, cols), std::move(tgt), /*mean=*/true);
  }
  return g.ce_with_logits_dist(logits, std::move(target), valid);
}

int Grounding::semantic_alignment_loss(Graph& g, int pooled_selection,
                                       int fused_words,
                                       const std::vector<lang::Component>& tags) const {
  std::vector<int> positives, negatives;
  for (size_t i = 0; i < tags.size(); ++i)
    (is_positive(tags[i]) ? positives : negatives).push_back(static_cast<int>(i));
  if (positives.empty()) return -1;

  const int m_bar = g.l2_normalize_rows(pooled_selection);
  const int words_n = g.l2_normalize_rows(fused_words);
  const int sims = g.matmul(m_bar, words_n, false, true);  // 1 x n cosines
  const int pos_scaled = g.scale(sims, cfg_->alpha_pos / cfg_->tau_sa);
  const int neg_scaled =
      negatives.empty() ? -1 : g.scale(sims, cfg_->alpha_neg / cfg_->tau_sa);

  std::vector<std::pair<int, real>> terms;
  const real inv = 1.0 / static_cast<real>(positives.size());
  for (int i : positives) {
    const int pos_term = g.gather_cols(pos_scaled, {i});
    int lse;
    if (negatives.empty()) {
      lse = g.logsumexp(pos_term);
    } else {
      const int negs = g.gather_cols(neg_scaled, negatives);
      lse = g.logsumexp(g.concat_cols({pos_term, negs}));
    }
    terms.emplace_back(g.sub(lse, pos_term), inv);
  }
  return g.wsum(terms);
}

int Grounding::action_logits(Graph& g, ParamInjector& P, int fused_words,
                             int fused_grids, int obs_fused) const {
  const int pooled = g.concat_cols(
      {g.mean_rows(fused_words), g.mean_rows(fused_grids), obs_fused});
  return mlp(g, P, act_mlp_, pooled);
}

}  // namespace vln::nn
