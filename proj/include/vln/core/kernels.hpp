#pragma once

#include "vln/core/tensor.hpp"

namespace vln::kernels {

// Runtime switch between the serial reference kernels and the OpenMP ones.
// Parallel kernels split work across independent output rows only, so both
// paths produce bit-identical results; tests assert that.
void set_parallel(bool enabled);
bool parallel_enabled();
void set_num_threads(int n);
int num_threads();

// C = alpha * op(A) * op(B) (+ C if accumulate). op is optional transpose.
struct MatmulOpts {
  bool trans_a = false;
  bool trans_b = false;
  bool accumulate = false;
  real alpha = 1.0;
};

namespace serial {
void matmul(const Tensor& a, const Tensor& b, Tensor& c, const MatmulOpts& o);
void add_rowvec(Tensor& x, const Tensor& bias);
void relu_fwd(const Tensor& x, Tensor& y);
void relu_bwd(const Tensor& x, const Tensor& dy, Tensor& dx);
void sigmoid_fwd(const Tensor& x, Tensor& y);
void tanh_fwd(const Tensor& x, Tensor& y);
// softmax over each row; mask entries <= -1e30 are treated as excluded.
void softmax_rows(const Tensor& logits, Tensor& probs);
void layernorm_fwd(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& y, Tensor& mean, Tensor& rstd);
void layernorm_bwd(const Tensor& x, const Tensor& gamma, const Tensor& mean,
                   const Tensor& rstd, const Tensor& dy, Tensor& dx,
                   Tensor& dgamma, Tensor& dbeta);
void adamw_step(Tensor& w, const Tensor& g, Tensor& m, Tensor& v, real lr,
                real beta1, real beta2, real eps, real weight_decay, int step);
}  // namespace serial

namespace par {
void matmul(const Tensor& a, const Tensor& b, Tensor& c, const MatmulOpts& o);
void add_rowvec(Tensor& x, const Tensor& bias);
void relu_fwd(const Tensor& x, Tensor& y);
void relu_bwd(const Tensor& x, const Tensor& dy, Tensor& dx);
void sigmoid_fwd(const Tensor& x, Tensor& y);
void tanh_fwd(const Tensor& x, Tensor& y);
void softmax_rows(const Tensor& logits, Tensor& probs);
void layernorm_fwd(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& y, Tensor& mean, Tensor& rstd);
void layernorm_bwd(const Tensor& x, const Tensor& gamma, const Tensor& mean,
                   const Tensor& rstd, const Tensor& dy, Tensor& dx,
                   Tensor& dgamma, Tensor& dbeta);
void adamw_step(Tensor& w, const Tensor& g, Tensor& m, Tensor& v, real lr,
                real beta1, real beta2, real eps, real weight_decay, int step);
}  // namespace par

// Dispatching entry points used by the rest of the library.
void matmul(const Tensor& a, const Tensor& b, Tensor& c, const MatmulOpts& o = {});
void add_rowvec(Tensor& x, const Tensor& bias);
void relu_fwd(const Tensor& x, Tensor& y);
void relu_bwd(const Tensor& x, const Tensor& dy, Tensor& dx);
void sigmoid_fwd(const Tensor& x, Tensor& y);
void tanh_fwd(const Tensor& x, Tensor& y);
void softmax_rows(const Tensor& logits, Tensor& probs);
void layernorm_fwd(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& y, Tensor& mean, Tensor& rstd);
void layernorm_bwd(const Tensor& x, const Tensor& gamma, const Tensor& mean,
                   const Tensor& rstd, const Tensor& dy, Tensor& dx,
                   Tensor& dgamma, Tensor& dbeta);
void adamw_step(Tensor& w, const Tensor& g, Tensor& m, Tensor& v, real lr,
                real beta1, real beta2, real eps, real weight_decay, int step);

}  // namespace vln::kernels
