#pragma once

#include <vector>

#include "vln/lang/instructions.hpp"
#include "vln/nn/common.hpp"

namespace vln::nn {

// Adaptive linguistic grounding: cross-modal fusion of instruction tokens
// with the memory grids, progress tracking, affinity-based grid selection,
// position/semantic alignment losses, and the action head.
class Grounding {
 public:
  Grounding(const Config& cfg, ParamStore& store);

  struct FuseOut {
    int words = -1;    // n x d fused word tokens
    int grids = -1;    // hw x d fused grid tokens
    Tensor affinity;   // n x hw; head-averaged last-layer word->grid attention
  };
  // Only real tokens enter the graph; pad positions never exist here.
  FuseOut fuse(Graph& g, ParamInjector& P, int memory,
               const std::vector<int>& tokens) const;

  struct ProgressOut {
    int weights = -1;      // n x 1, sigmoid outputs
    int d_hat = -1;        // 1 x 1 weighted scalar prediction
    Tensor weights_value;  // detached copy (logging, PA target)
  };
  ProgressOut progress(Graph& g, ParamInjector& P, int fused_words) const;

  // Row-wise argmax of the affinity matrix; ties break to the lowest index.
  static std::vector<int> select_attentive_grids(const Tensor& affinity);

  bool is_positive(lang::Component c) const;

  // Cross-entropy between Softmax(MLP(Mean(selected grids))) and the
  // progress-weighted component-position target (stop-gradient). Returns -1
  // when no positive token carries weight (contribution skipped).
  int position_alignment_loss(Graph& g, ParamInjector& P, int pooled_selection,
                              const std::vector<lang::Component>& tags,
                              const Tensor& progress_weights) const;

  // Contrastive alignment of the pooled grid vector with the decoupled token
  // features. Returns -1 when the positive set is empty.
  int semantic_alignment_loss(Graph& g, int pooled_selection, int fused_words,
                              const std::vector<lang::Component>& tags) const;

  int action_logits(Graph& g, ParamInjector& P, int fused_words, int fused_grids,
                    int obs_fused) const;

 private:
  const Config* cfg_;
  int tok_emb_;
  struct XLayer {
    TransformerLayerParams word_self;
    CrossBlockParams word_to_grid;
    FfnParams word_ffn;
    CrossBlockParams grid_to_word;
    FfnParams grid_ffn;
  };
  std::vector<XLayer> layers_;
  int wln_g_, wln_b_, gln_g_, gln_b_;  // final norms on fused tokens
  int prog_w1_, prog_b1_, prog_ww_, prog_bw_, prog_ws_, prog_bs_;
  MlpParams pa_mlp_;
  MlpParams act_mlp_;
};

}  // namespace vln::nn
