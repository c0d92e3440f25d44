#pragma once

#include <utility>
#include <vector>

#include "vln/core/tensor.hpp"

namespace vln {

// Reverse-mode autodiff tape over 2D tensors. One Graph instance is built per
// episode (or per forward pass); it is not thread-safe, but independent graphs
// may run on different threads.
class Graph {
 public:
  enum class Op : int {
    Leaf, Param,
    Matmul, Add, Sub, Hadamard, Scale, AddRowvec, DivByScalar,
    Relu, Sigmoid, Tanh, Clamp,
    LayerNorm, Mha,
    ConcatRows, ConcatCols, SliceRows, GatherRows, GatherCols, Reshape,
    MeanRows, SumAll, MeanAll, StopGrad,
    L2NormalizeRows, Dot, LogSumExp, SoftmaxMasked,
    CeLogitsDist, CeLogitsIndex, BceLogits, BceProbs,
    CosineRowsConst, GaussianKl, MseConst, WSum,
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1, d = -1;   // parent ids
    int i0 = 0, i1 = 0;                   // op-specific ints
    real r0 = 0.0, r1 = 0.0;              // op-specific scalars
    Tensor value;
    const Tensor* alias = nullptr;        // set for Param nodes (no copy)
    Tensor aux, aux2;                     // saved forward intermediates
    Tensor cst;                           // constant operand (targets, masks)
    std::vector<int> parents;             // for Concat*/WSum
    std::vector<real> weights;            // for WSum
    std::vector<int> idx;                 // for Gather*
    Tensor grad;
    bool needs_grad = false;
    int param_index = -1;
  };

  Graph() = default;

  // --- inputs -------------------------------------------------------------
  int leaf(Tensor t);                      // constant input
  int input(Tensor t);                     // differentiable non-param input
  int param(const Tensor& w, int param_index);

  // --- arithmetic ---------------------------------------------------------
  int matmul(int a, int b, bool trans_a = false, bool trans_b = false);
  int add(int a, int b);
  int sub(int a, int b);
  int hadamard(int a, int b);
  int scale(int a, real c);
  int add_rowvec(int a, int bias);
  int div_by_scalar(int a, int s);         // s is a 1x1 node
  int relu(int a);
  int sigmoid(int a);
  int tanh_(int a);
  int clamp(int a, real lo, real hi);

  // --- structured ---------------------------------------------------------
  int layernorm(int x, int gamma, int beta);
  // Multi-head attention core over already-projected q/k/v. `mask` is an
  // optional additive (nq x nk) matrix; use -inf to exclude a key.
  int mha(int q, int k, int v, int heads, const Tensor* mask = nullptr);
  // Head-averaged attention probabilities of an Mha node (nq x nk).
  Tensor mha_mean_probs(int mha_node) const;

  int concat_rows(const std::vector<int>& xs);
  int concat_cols(const std::vector<int>& xs);
  int slice_rows(int a, int r0, int r1);
  int gather_rows(int a, std::vector<int> rows);
  int gather_cols(int a, std::vector<int> cols);
  int reshape(int a, int r, int c);
  int mean_rows(int a);
  int sum_all(int a);
  int mean_all(int a);
  int stop_grad(int a);

  // --- losses / reductions -------------------------------------------------
  int l2_normalize_rows(int a);
  int dot(int a, int b);                   // same-size, flattened
  int logsumexp(int a);                    // 1xN -> 1x1
  int softmax_masked(int a, int valid);    // 1xN, cols >= valid excluded
  // -sum_j t_j log softmax(logits)_j over the first `valid` columns.
  int ce_with_logits_dist(int logits, Tensor target, int valid);
  int ce_with_logits_index(int logits, int target_index);
  int bce_with_logits(int logits, Tensor targets, bool mean);
  int bce_on_probs(int probs, Tensor targets, bool mean);
  // Cosine similarity of a 1xP vector against constant rows (NxP) -> 1xN.
  int cosine_rows_const(int vq, Tensor rows);
  int gaussian_kl(int mu_q, int logstd_q, int mu_p, int logstd_p);
  int mse_to_const(int pred, real target);
  int wsum(const std::vector<std::pair<int, real>>& terms);

  // --- execution ------------------------------------------------------------
  const Tensor& val(int id) const {
    const Node& n = nodes_[id];
    return n.alias ? *n.alias : n.value;
  }
  real scalar(int id) const { return val(id).v[0]; }
  size_t num_nodes() const { return nodes_.size(); }
  size_t value_bytes() const;

  // Backpropagates d(root)=1. Gradients of Param nodes are accumulated into
  // `param_grads[param_index]`, which must be pre-sized to the store shapes.
  void backward(int root, std::vector<Tensor>& param_grads);
  // Gradient of a non-param differentiable input after backward().
  const Tensor& grad(int id) const { return nodes_[id].grad; }

 private:
  int push(Node n);
  Node& at(int id) { return nodes_[id]; }
  std::vector<Node> nodes_;
};

// y = x W + b (b may be -1 for no bias)
int linear(Graph& g, int x, int w, int b);

// Sinusoidal embedding of an integer position, dimension d.
Tensor sinusoidal_embedding(int pos, int d);

}  // namespace vln
