#include "vln/nn/common.hpp"

namespace vln::nn {

TransformerLayerParams register_transformer_layer(ParamStore& store,
                                                  const std::string& prefix,
                                                  int dim, int mlp_ratio) {
  TransformerLayerParams p;
  p.ln1_g = store.add(prefix + ".ln1.g", 1, dim, false);
  p.ln1_b = store.add(prefix + ".ln1.b", 1, dim, false);
  p.wq = store.add(prefix + ".wq", dim, dim);
  p.bq = store.add(prefix + ".bq", 1, dim, false);
  p.wk = store.add(prefix + ".wk", dim, dim);
  p.bk = store.add(prefix + ".bk", 1, dim, false);
  p.wv = store.add(prefix + ".wv", dim, dim);
  p.bv = store.add(prefix + ".bv", 1, dim, false);
  p.wo = store.add(prefix + ".wo", dim, dim);
  p.bo = store.add(prefix + ".bo", 1, dim, false);
  p.ln2_g = store.add(prefix + ".ln2.g", 1, dim, false);
  p.ln2_b = store.add(prefix + ".ln2.b", 1, dim, false);
  p.ffn_w1 = store.add(prefix + ".ffn.w1", dim, dim * mlp_ratio);
  p.ffn_b1 = store.add(prefix + ".ffn.b1", 1, dim * mlp_ratio, false);
  p.ffn_w2 = store.add(prefix + ".ffn.w2", dim * mlp_ratio, dim);
  p.ffn_b2 = store.add(prefix + ".ffn.b2", 1, dim, false);
  return p;
}

TransformerLayerOut transformer_layer(Graph& g, ParamInjector& P,
                                      const TransformerLayerParams& lp, int tokens,
                                      int heads, const Tensor* mask) {
  const int xn = g.layernorm(tokens, P(lp.ln1_g), P(lp.ln1_b));
  const int q = linear(g, xn, P(lp.wq), P(lp.bq));
  const int k = linear(g, xn, P(lp.wk), P(lp.bk));
  const int v = linear(g, xn, P(lp.wv), P(lp.bv));
  const int att = g.mha(q, k, v, heads, mask);
  int x = g.add(tokens, linear(g, att, P(lp.wo), P(lp.bo)));
  const int xf = g.layernorm(x, P(lp.ln2_g), P(lp.ln2_b));
  const int h = g.relu(linear(g, xf, P(lp.ffn_w1), P(lp.ffn_b1)));
  x = g.add(x, linear(g, h, P(lp.ffn_w2), P(lp.ffn_b2)));
  return {x, att};
}

CrossBlockParams register_cross_block(ParamStore& store, const std::string& prefix,
                                      int dim) {
  CrossBlockParams p;
  p.lnq_g = store.add(prefix + ".lnq.g", 1, dim, false);
  p.lnq_b = store.add(prefix + ".lnq.b", 1, dim, false);
  p.lnkv_g = store.add(prefix + ".lnkv.g", 1, dim, false);
  p.lnkv_b = store.add(prefix + ".lnkv.b", 1, dim, false);
  p.wq = store.add(prefix + ".wq", dim, dim);
  p.bq = store.add(prefix + ".bq", 1, dim, false);
  p.wk = store.add(prefix + ".wk", dim, dim);
  p.bk = store.add(prefix + ".bk", 1, dim, false);
  p.wv = store.add(prefix + ".wv", dim, dim);
  p.bv = store.add(prefix + ".bv", 1, dim, false);
  p.wo = store.add(prefix + ".wo", dim, dim);
  p.bo = store.add(prefix + ".bo", 1, dim, false);
  return p;
}

CrossBlockOut cross_block(Graph& g, ParamInjector& P, const CrossBlockParams& bp,
                          int q_tokens, int kv_tokens, int heads) {
  const int qn = g.layernorm(q_tokens, P(bp.lnq_g), P(bp.lnq_b));
  const int kn = g.layernorm(kv_tokens, P(bp.lnkv_g), P(bp.lnkv_b));
  const int q = linear(g, qn, P(bp.wq), P(bp.bq));
  const int k = linear(g, kn, P(bp.wk), P(bp.bk));
  const int v = linear(g, kn, P(bp.wv), P(bp.bv));
  const int att = g.mha(q, k, v, heads, nullptr);
  const int out = g.add(q_tokens, linear(g, att, P(bp.wo), P(bp.bo)));
  return {out, att};
}

FfnParams register_ffn(ParamStore& store, const std::string& prefix, int dim,
                       int mlp_ratio) {
  FfnParams p;
  p.ln_g = store.add(prefix + ".ln.g", 1, dim, false);
  p.ln_b = store.add(prefix + ".ln.b", 1, dim, false);
  p.w1 = store.add(prefix + ".w1", dim, dim * mlp_ratio);
  p.b1 = store.add(prefix + ".b1", 1, dim * mlp_ratio, false);
  p.w2 = store.add(prefix + ".w2", dim * mlp_ratio, dim);
  p.b2 = store.add(prefix + ".b2", 1, dim, false);
  return p;
}

int ffn_block(Graph& g, ParamInjector& P, const FfnParams& fp, int tokens) {
  const int xn = g.layernorm(tokens, P(fp.ln_g), P(fp.ln_b));
  const int h = g.relu(linear(g, xn, P(fp.w1), P(fp.b1)));
  return g.add(tokens, linear(g, h, P(fp.w2), P(fp.b2)));
}

MlpParams register_mlp(ParamStore& store, const std::string& prefix, int in_dim,
                       int hidden, int out_dim) {
  MlpParams p;
  p.w1 = store.add(prefix + ".w1", in_dim, hidden);
  p.b1 = store.add(prefix + ".b1", 1, hidden, false);
  p.w2 = store.add(prefix + ".w2", hidden, out_dim);
  p.b2 = store.add(prefix + ".b2", 1, out_dim, false);
  return p;
}

int mlp(Graph& g, ParamInjector& P, const MlpParams& mp, int x) {
  const int h = g.relu(linear(g, x, P(mp.w1), P(mp.b1)));
  return linear(g, h, P(mp.w2), P(mp.b2));
}

}  // namespace vln::nn
