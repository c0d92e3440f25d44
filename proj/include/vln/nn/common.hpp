#pragma once

#include <string>
#include <vector>

#include "vln/core/config.hpp"
#include "vln/core/graph.hpp"
#include "vln/core/params.hpp"

namespace vln::nn {

// Lazily injects parameters into a Graph, one node per parameter per graph.
class ParamInjector {
 public:
  ParamInjector(Graph& g, const ParamStore& store)
      : g_(&g), store_(&store), node_(store.count(), -1) {}

  int operator()(int param_index) {
    int& n = node_[param_index];
    if (n < 0) n = g_->param(store_->tensor(param_index), param_index);
    return n;
  }

 private:
  Graph* g_;
  const ParamStore* store_;
  std::vector<int> node_;
};

// Parameter ids of one pre-LN transformer encoder layer.
struct TransformerLayerParams {
  int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
  int ln2_g, ln2_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

TransformerLayerParams register_transformer_layer(ParamStore& store,
                                                  const std::string& prefix,
                                                  int dim, int mlp_ratio);

struct TransformerLayerOut {
  int tokens;
  int att_node;  // the Mha node, for attention-probability inspection
};

// x -> x + Wo*MHA(LN(x)) -> x + FFN(LN(x)); optional additive attention mask.
TransformerLayerOut transformer_layer(Graph& g, ParamInjector& P,
                                      const TransformerLayerParams& lp, int tokens,
                                      int heads, const Tensor* mask);

// One cross-attention sub-block: q_tokens attend to kv_tokens.
struct CrossBlockParams {
  int lnq_g, lnq_b, lnkv_g, lnkv_b, wq, bq, wk, bk, wv, bv, wo, bo;
};

CrossBlockParams register_cross_block(ParamStore& store, const std::string& prefix,
                                      int dim);

struct CrossBlockOut {
  int tokens;
  int att_node;
};

CrossBlockOut cross_block(Graph& g, ParamInjector& P, const CrossBlockParams& bp,
                          int q_tokens, int kv_tokens, int heads);

struct FfnParams {
  int ln_g, ln_b, w1, b1, w2, b2;
};

FfnParams register_ffn(ParamStore& store, const std::string& prefix, int dim,
                       int mlp_ratio);

int ffn_block(Graph& g, ParamInjector& P, const FfnParams& fp, int tokens);

// Two-layer relu MLP parameter bundle (used by several heads).
struct MlpParams {
  int w1, b1, w2, b2;
};

MlpParams register_mlp(ParamStore& store, const std::string& prefix, int in_dim,
                       int hidden, int out_dim);

int mlp(Graph& g, ParamInjector& P, const MlpParams& mp, int x);

}  // namespace vln::nn
