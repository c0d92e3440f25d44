#include "vln/core/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vln::kernels {

namespace {
std::atomic<bool> g_parallel{true};
// Below this many output elements the OpenMP fork costs more than it saves.
constexpr int kParThreshold = 4096;
}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// Shared row bodies. Each computes one output row serially so that the serial
// and parallel kernels execute the exact same FP operations per element.
// ---------------------------------------------------------------------------
namespace detail {

inline void matmul_row(const Tensor& a, const Tensor& b, Tensor& c,
                       const MatmulOpts& o, int i) {
  const int n = c.cols;
  const int k = o.trans_a ? a.rows : a.cols;
  real* crow = c.row_ptr(i);
  if (!o.accumulate) {
    for (int j = 0; j < n; ++j) crow[j] = 0.0;
  }
  if (!o.trans_a && !o.trans_b) {
    const real* arow = a.row_ptr(i);
    for (int p = 0; p < k; ++p) {
      const real av = o.alpha * arow[p];
      const real* brow = b.row_ptr(p);
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  } else if (!o.trans_a && o.trans_b) {
    const real* arow = a.row_ptr(i);
    for (int j = 0; j < n; ++j) {
      const real* brow = b.row_ptr(j);
      real s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += o.alpha * s;
    }
  } else if (o.trans_a && !o.trans_b) {
    for (int p = 0; p < k; ++p) {
      const real av = o.alpha * a.at(p, i);
      const real* brow = b.row_ptr(p);
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  } else {
    for (int j = 0; j < n; ++j) {
      real s = 0.0;
      for (int p = 0; p < k; ++p) s += a.at(p, i) * b.at(j, p);
      crow[j] += o.alpha * s;
    }
  }
}

inline void check_matmul_shapes(const Tensor& a, const Tensor& b, Tensor& c,
                                const MatmulOpts& o) {
  const int m = o.trans_a ? a.cols : a.rows;
  const int k = o.trans_a ? a.rows : a.cols;
  const int kb = o.trans_b ? b.cols : b.rows;
  const int n = o.trans_b ? b.rows : b.cols;
  if (k != kb) throw VlnError("matmul: inner dimensions disagree");
  if (c.rows != m || c.cols != n) {
    if (o.accumulate) throw VlnError("matmul: accumulate into wrong shape");
    c = Tensor(m, n);
  }
}

inline void softmax_row(const Tensor& logits, Tensor& probs, int i) {
  const int n = logits.cols;
  const real* in = logits.row_ptr(i);
  real* out = probs.row_ptr(i);
  real mx = -1e300;
  for (int j = 0; j < n; ++j)
    if (in[j] > mx) mx = in[j];
  real denom = 0.0;
  for (int j = 0; j < n; ++j) {
    const real e = std::exp(in[j] - mx);
    out[j] = e;
    denom += e;
  }
  const real inv = 1.0 / denom;
  for (int j = 0; j < n; ++j) out[j] *= inv;
}

inline void layernorm_fwd_row(const Tensor& x, const Tensor& gamma,
                              const Tensor& beta, Tensor& y, Tensor& mean,
                              Tensor& rstd, int i) {
  const int n = x.cols;
  const real* in = x.row_ptr(i);
  real mu = 0.0;
  for (int j = 0; j < n; ++j) mu += in[j];
  mu /= n;
  real var = 0.0;
  for (int j = 0; j < n; ++j) {
    const real d = in[j] - mu;
    var += d * d;
  }
  var /= n;
  const real rs = 1.0 / std::sqrt(var + 1e-5);
  mean.v[i] = mu;
  rstd.v[i] = rs;
  real* out = y.row_ptr(i);
  for (int j = 0; j < n; ++j)
    out[j] = (in[j] - mu) * rs * gamma.v[j] + beta.v[j];
}

inline void layernorm_bwd_row(const Tensor& x, const Tensor& gamma,
                              const Tensor& mean, const Tensor& rstd,
                              const Tensor& dy, Tensor& dx, int i) {
  const int n = x.cols;
  const real* in = x.row_ptr(i);
  const real* dout = dy.row_ptr(i);
  real* din = dx.row_ptr(i);
  const real mu = mean.v[i];
  const real rs = rstd.v[i];
  real sum_dyg = 0.0, sum_dyg_xhat = 0.0;
  for (int j = 0; j < n; ++j) {
    const real xhat = (in[j] - mu) * rs;
    const real dyg = dout[j] * gamma.v[j];
    sum_dyg += dyg;
    sum_dyg_xhat += dyg * xhat;
  }
  const real invn = 1.0 / n;
  for (int j = 0; j < n; ++j) {
    const real xhat = (in[j] - mu) * rs;
    const real dyg = dout[j] * gamma.v[j];
    din[j] += rs * (dyg - invn * sum_dyg - xhat * invn * sum_dyg_xhat);
  }
}

inline void adamw_elem(Tensor& w, const Tensor& g, Tensor& m, Tensor& v,
                       real lr, real beta1, real beta2, real eps,
                       real weight_decay, real bc1, real bc2, int i) {
  const real gi = g.v[i];
  m.v[i] = beta1 * m.v[i] + (1.0 - beta1) * gi;
  v.v[i] = beta2 * v.v[i] + (1.0 - beta2) * gi * gi;
  const real mhat = m.v[i] / bc1;
  const real vhat = v.v[i] / bc2;
  w.v[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w.v[i]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Serial reference kernels
// ---------------------------------------------------------------------------
namespace serial {

void matmul(const Tensor& a, const Tensor& b, Tensor& c, const MatmulOpts& o) {
  detail::check_matmul_shapes(a, b, c, o);
  for (int i = 0; i < c.rows; ++i) detail::matmul_row(a, b, c, o, i);
}

void add_rowvec(Tensor& x, const Tensor& bias) {
  for (int i = 0; i < x.rows; ++i) {
    real* row = x.row_ptr(i);
    for (int j = 0; j < x.cols; ++j) row[j] += bias.v[j];
  }
}

void relu_fwd(const Tensor& x, Tensor& y) {
  y = Tensor(x.rows, x.cols);
  for (int i = 0; i < x.size(); ++i) y.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
}

void relu_bwd(const Tensor& x, const Tensor& dy, Tensor& dx) {
  for (int i = 0; i < x.size(); ++i)
    if (x.v[i] > 0.0) dx.v[i] += dy.v[i];
}

void sigmoid_fwd(const Tensor& x, Tensor& y) {
  y = Tensor(x.rows, x.cols);
  for (int i = 0; i < x.size(); ++i) y.v[i] = 1.0 / (1.0 + std::exp(-x.v[i]));
}

void tanh_fwd(const Tensor& x, Tensor& y) {
  y = Tensor(x.rows, x.cols);
  for (int i = 0; i < x.size(); ++i) y.v[i] = std::tanh(x.v[i]);
}

void softmax_rows(const Tensor& logits, Tensor& probs) {
  probs = Tensor(logits.rows, logits.cols);
  for (int i = 0; i < logits.rows; ++i) detail::softmax_row(logits, probs, i);
}

void layernorm_fwd(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& y, Tensor& mean, Tensor& rstd) {
  y = Tensor(x.rows, x.cols);
  mean = Tensor(1, x.rows);
  rstd = Tensor(1, x.rows);
  for (int i = 0; i < x.rows; ++i)
    detail::layernorm_fwd_row(x, gamma, beta, y, mean, rstd, i);
}

void layernorm_bwd(const Tensor& x, const Tensor& gamma, const Tensor& mean,
                   const Tensor& rstd, const Tensor& dy, Tensor& dx,
                   Tensor& dgamma, Tensor& dbeta) {
  for (int i = 0; i < x.rows; ++i)
    detail::layernorm_bwd_row(x, gamma, mean, rstd, dy, dx, i);
  for (int j = 0; j < x.cols; ++j) {
    real dg = 0.0, db = 0.0;
    for (int i = 0; i < x.rows; ++i) {
      const real xhat = (x.at(i, j) - mean.v[i]) * rstd.v[i];
      dg += dy.at(i, j) * xhat;
      db += dy.at(i, j);
    }
    dgamma.v[j] += dg;
    dbeta.v[j] += db;
  }
}

void adamw_step(Tensor& w, const Tensor& g, Tensor& m, Tensor& v, real lr,
                real beta1, real beta2, real eps, real weight_decay, int step) {
  const real bc1 = 1.0 - std::pow(beta1, step);
  const real bc2 = 1.0 - std::pow(beta2, step);
  for (int i = 0; i < w.size(); ++i)
    detail::adamw_elem(w, g, m, v, lr, beta1, beta2, eps, weight_decay, bc1, bc2, i);
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP kernels: same per-row bodies, rows distributed across threads.
// ---------------------------------------------------------------------------
namespace par {

void matmul(const Tensor& a, const Tensor& b, Tensor& c, const MatmulOpts& o) {
  detail::check_matmul_shapes(a, b, c, o);
  const int rows = c.rows;
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * c.cols >= kParThreshold)
  for (int i = 0; i < rows; ++i) detail::matmul_row(a, b, c, o, i);
}

void add_rowvec(Tensor& x, const Tensor& bias) {
  const int rows = x.rows;
#pragma omp parallel for schedule(static) if (x.size() >= kParThreshold)
  for (int i = 0; i < rows; ++i) {
    real* row = x.row_ptr(i);
    for (int j = 0; j < x.cols; ++j) row[j] += bias.v[j];
  }
}

void relu_fwd(const Tensor& x, Tensor& y) {
  y = Tensor(x.rows, x.cols);
  const int n = x.size();
#pragma omp parallel for schedule(static) if (n >= kParThreshold)
  for (int i = 0; i < n; ++i) y.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
}

void relu_bwd(const Tensor& x, const Tensor& dy, Tensor& dx) {
  const int n = x.size();
#pragma omp parallel for schedule(static) if (n >= kParThreshold)
  for (int i = 0; i < n; ++i)
    if (x.v[i] > 0.0) dx.v[i] += dy.v[i];
}

void sigmoid_fwd(const Tensor& x, Tensor& y) {
  y = Tensor(x.rows, x.cols);
  const int n = x.size();
#pragma omp parallel for schedule(static) if (n >= kParThreshold)
  for (int i = 0; i < n; ++i) y.v[i] = 1.0 / (1.0 + std::exp(-x.v[i]));
}

void tanh_fwd(const Tensor& x, Tensor& y) {
  y = Tensor(x.rows, x.cols);
  const int n = x.size();
#pragma omp parallel for schedule(static) if (n >= kParThreshold)
  for (int i = 0; i < n; ++i) y.v[i] = std::tanh(x.v[i]);
}

void softmax_rows(const Tensor& logits, Tensor& probs) {
  probs = Tensor(logits.rows, logits.cols);
  const int rows = logits.rows;
#pragma omp parallel for schedule(static) if (logits.size() >= kParThreshold)
  for (int i = 0; i < rows; ++i) detail::softmax_row(logits, probs, i);
}

void layernorm_fwd(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& y, Tensor& mean, Tensor& rstd) {
  y = Tensor(x.rows, x.cols);
  mean = Tensor(1, x.rows);
  rstd = Tensor(1, x.rows);
  const int rows = x.rows;
#pragma omp parallel for schedule(static) if (x.size() >= kParThreshold)
  for (int i = 0; i < rows; ++i)
    detail::layernorm_fwd_row(x, gamma, beta, y, mean, rstd, i);
}

void layernorm_bwd(const Tensor& x, const Tensor& gamma, const Tensor& mean,
                   const Tensor& rstd, const Tensor& dy, Tensor& dx,
                   Tensor& dgamma, Tensor& dbeta) {
  const int rows = x.rows;
#pragma omp parallel for schedule(static) if (x.size() >= kParThreshold)
  for (int i = 0; i < rows; ++i)
    detail::layernorm_bwd_row(x, gamma, mean, rstd, dy, dx, i);
  const int cols = x.cols;
#pragma omp parallel for schedule(static) if (x.size() >= kParThreshold)
  for (int j = 0; j < cols; ++j) {
    real dg = 0.0, db = 0.0;
    for (int i = 0; i < x.rows; ++i) {
      const real xhat = (x.at(i, j) - mean.v[i]) * rstd.v[i];
      dg += dy.at(i, j) * xhat;
      db += dy.at(i, j);
    }
    dgamma.v[j] += dg;
    dbeta.v[j] += db;
  }
}

void adamw_step(Tensor& w, const Tensor& g, Tensor& m, Tensor& v, real lr,
                real beta1, real beta2, real eps, real weight_decay, int step) {
  const real bc1 = 1.0 - std::pow(beta1, step);
  const real bc2 = 1.0 - std::pow(beta2, step);
  const int n = w.size();
#pragma omp parallel for schedule(static) if (n >= kParThreshold)
  for (int i = 0; i < n; ++i)
    detail::adamw_elem(w, g, m, v, lr, beta1, beta2, eps, weight_decay, bc1, bc2, i);
}

}  // namespace par

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------
#define VLN_DISPATCH(fn, ...)            \
  do {                                   \
    if (parallel_enabled())              \
      par::fn(__VA_ARGS__);              \
    else                                 \
      serial::fn(__VA_ARGS__);           \
  } while (0)

void matmul(const Tensor& a, const Tensor& b, Tensor& c, const MatmulOpts& o) {
  VLN_DISPATCH(matmul, a, b, c, o);
}
void add_rowvec(Tensor& x, const Tensor& bias) { VLN_DISPATCH(add_rowvec, x, bias); }
void relu_fwd(const Tensor& x, Tensor& y) { VLN_DISPATCH(relu_fwd, x, y); }
void relu_bwd(const Tensor& x, const Tensor& dy, Tensor& dx) {
  VLN_DISPATCH(relu_bwd, x, dy, dx);
}
void sigmoid_fwd(const Tensor& x, Tensor& y) { VLN_DISPATCH(sigmoid_fwd, x, y); }
void tanh_fwd(const Tensor& x, Tensor& y) { VLN_DISPATCH(tanh_fwd, x, y); }
void softmax_rows(const Tensor& logits, Tensor& probs) {
  VLN_DISPATCH(softmax_rows, logits, probs);
}
void layernorm_fwd(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& y, Tensor& mean, Tensor& rstd) {
  VLN_DISPATCH(layernorm_fwd, x, gamma, beta, y, mean, rstd);
}
void layernorm_bwd(const Tensor& x, const Tensor& gamma, const Tensor& mean,
                   const Tensor& rstd, const Tensor& dy, Tensor& dx,
                   Tensor& dgamma, Tensor& dbeta) {
  VLN_DISPATCH(layernorm_bwd, x, gamma, mean, rstd, dy, dx, dgamma, dbeta);
}
void adamw_step(Tensor& w, const Tensor& g, Tensor& m, Tensor& v, real lr,
                real beta1, real beta2, real eps, real weight_decay, int step) {
  VLN_DISPATCH(adamw_step, w, g, m, v, lr, beta1, beta2, eps, weight_decay, step);
}

#undef VLN_DISPATCH

}  // namespace vln::kernels
