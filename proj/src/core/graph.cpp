#include "vln/core/graph.hpp"

#include <algorithm>
#include <cmath>

#include "vln/core/kernels.hpp"

namespace vln {

namespace {
constexpr real kNormEps = 1e-12;

void ensure_grad(Tensor& g, int rows, int cols) {
  if (g.rows != rows || g.cols != cols) g = Tensor(rows, cols);
}
}  // namespace

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

size_t Graph::value_bytes() const {
  size_t b = 0;
  for (const auto& n : nodes_) {
    b += n.value.v.size() * sizeof(real);
    b += n.aux.v.size() * sizeof(real);
    b += n.aux2.v.size() * sizeof(real);
    b += n.cst.v.size() * sizeof(real);
  }
  return b;
}

int Graph::leaf(Tensor t) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(t);
  n.needs_grad = false;
  return push(std::move(n));
}

int Graph::input(Tensor t) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(t);
  n.needs_grad = true;
  return push(std::move(n));
}

int Graph::param(const Tensor& w, int param_index) {
  Node n;
  n.op = Op::Param;
  n.alias = &w;
  n.param_index = param_index;
  n.needs_grad = true;
  return push(std::move(n));
}

int Graph::matmul(int a, int b, bool trans_a, bool trans_b) {
  Node n;
  n.op = Op::Matmul;
  n.a = a;
  n.b = b;
  n.i0 = trans_a ? 1 : 0;
  n.i1 = trans_b ? 1 : 0;
  kernels::MatmulOpts o;
  o.trans_a = trans_a;
  o.trans_b = trans_b;
  kernels::matmul(val(a), val(b), n.value, o);
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

int Graph::add(int a, int b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw VlnError("add: shape mismatch");
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.value = ta;
  for (int i = 0; i < n.value.size(); ++i) n.value.v[i] += tb.v[i];
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

int Graph::sub(int a, int b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw VlnError("sub: shape mismatch");
  Node n;
  n.op = Op::Sub;
  n.a = a;
  n.b = b;
  n.value = ta;
  for (int i = 0; i < n.value.size(); ++i) n.value.v[i] -= tb.v[i];
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

int Graph::hadamard(int a, int b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw VlnError("hadamard: shape mismatch");
  Node n;
  n.op = Op::Hadamard;
  n.a = a;
  n.b = b;
  n.value = ta;
  for (int i = 0; i < n.value.size(); ++i) n.value.v[i] *= tb.v[i];
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

int Graph::scale(int a, real c) {
  Node n;
  n.op = Op::Scale;
  n.a = a;
  n.r0 = c;
  n.value = val(a);
  for (auto& e : n.value.v) e *= c;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::add_rowvec(int a, int bias) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(bias);
  if (tb.rows != 1 || tb.cols != ta.cols) throw VlnError("add_rowvec: bad bias shape");
  Node n;
  n.op = Op::AddRowvec;
  n.a = a;
  n.b = bias;
  n.value = ta;
  kernels::add_rowvec(n.value, tb);
  n.needs_grad = nodes_[a].needs_grad || nodes_[bias].needs_grad;
  return push(std::move(n));
}

int Graph::div_by_scalar(int a, int s) {
  const Tensor& ts = val(s);
  if (ts.size() != 1) throw VlnError("div_by_scalar: divisor must be 1x1");
  Node n;
  n.op = Op::DivByScalar;
  n.a = a;
  n.b = s;
  n.value = val(a);
  const real inv = 1.0 / ts.v[0];
  for (auto& e : n.value.v) e *= inv;
  n.needs_grad = nodes_[a].needs_grad || nodes_[s].needs_grad;
  return push(std::move(n));
}

int Graph::relu(int a) {
  Node n;
  n.op = Op::Relu;
  n.a = a;
  kernels::relu_fwd(val(a), n.value);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::sigmoid(int a) {
  Node n;
  n.op = Op::Sigmoid;
  n.a = a;
  kernels::sigmoid_fwd(val(a), n.value);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::tanh_(int a) {
  Node n;
  n.op = Op::Tanh;
  n.a = a;
  kernels::tanh_fwd(val(a), n.value);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::clamp(int a, real lo, real hi) {
  Node n;
  n.op = Op::Clamp;
  n.a = a;
  n.r0 = lo;
  n.r1 = hi;
  n.value = val(a);
  for (auto& e : n.value.v) e = std::min(hi, std::max(lo, e));
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::layernorm(int x, int gamma, int beta) {
  Node n;
  n.op = Op::LayerNorm;
  n.a = x;
  n.b = gamma;
  n.c = beta;
  kernels::layernorm_fwd(val(x), val(gamma), val(beta), n.value, n.aux, n.aux2);
  n.needs_grad =
      nodes_[x].needs_grad || nodes_[gamma].needs_grad || nodes_[beta].needs_grad;
  return push(std::move(n));
}

int Graph::mha(int q, int ki, int vi, int heads, const Tensor* mask) {
  const Tensor& Q = val(q);
  const Tensor& K = val(ki);
  const Tensor& V = val(vi);
  if (Q.cols != K.cols || K.rows != V.rows || K.cols != V.cols)
    throw VlnError("mha: shape mismatch");
  if (Q.cols % heads != 0) throw VlnError("mha: dim not divisible by heads");
  const int dh = Q.cols / heads;
  const int nq = Q.rows, nk = K.rows;
  if (mask && (mask->rows != nq || mask->cols != nk))
    throw VlnError("mha: mask shape mismatch");

  Node n;
  n.op = Op::Mha;
  n.a = q;
  n.b = ki;
  n.c = vi;
  n.i0 = heads;
  if (mask) n.cst = *mask;
  n.value = Tensor(nq, Q.cols);
  n.aux = Tensor(heads * nq, nk);  // per-head attention probabilities
  const real inv_sqrt = 1.0 / std::sqrt(static_cast<real>(dh));

  for (int h = 0; h < heads; ++h) {
    const int off = h * dh;
    for (int i = 0; i < nq; ++i) {
      real* prow = n.aux.row_ptr(h * nq + i);
      const real* qrow = Q.row_ptr(i) + off;
      // scores with optional additive mask
      real mx = -1e300;
      for (int j = 0; j < nk; ++j) {
        const real* krow = K.row_ptr(j) + off;
        real s = 0.0;
        for (int p = 0; p < dh; ++p) s += qrow[p] * krow[p];
        s *= inv_sqrt;
        if (mask) s += mask->at(i, j);
        prow[j] = s;
        if (s > mx) mx = s;
      }
      real denom = 0.0;
      for (int j = 0; j < nk; ++j) {
        const real e = std::exp(prow[j] - mx);
        prow[j] = e;
        denom += e;
      }
      const real inv = 1.0 / denom;
      real* orow = n.value.row_ptr(i) + off;
      for (int p = 0; p < dh; ++p) orow[p] = 0.0;
      for (int j = 0; j < nk; ++j) {
        prow[j] *= inv;
        if (prow[j] != 0.0) {
          const real* vrow = V.row_ptr(j) + off;
          const real w = prow[j];
          for (int p = 0; p < dh; ++p) orow[p] += w * vrow[p];
        }
      }
    }
  }
  n.needs_grad =
      nodes_[q].needs_grad || nodes_[ki].needs_grad || nodes_[vi].needs_grad;
  return push(std::move(n));
}

Tensor Graph::mha_mean_probs(int mha_node) const {
  const Node& n = nodes_[mha_node];
  if (n.op != Op::Mha) throw VlnError("mha_mean_probs: not an mha node");
  const int heads = n.i0;
  const int nq = n.value.rows;
  const int nk = n.aux.cols;
  Tensor m(nq, nk);
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < nq; ++i)
      for (int j = 0; j < nk; ++j) m.at(i, j) += n.aux.at(h * nq + i, j);
  const real inv = 1.0 / heads;
  for (auto& e : m.v) e *= inv;
  return m;
}

int Graph::concat_rows(const std::vector<int>& xs) {
  if (xs.empty()) throw VlnError("concat_rows: empty");
  int cols = val(xs[0]).cols;
  int rows = 0;
  for (int x : xs) {
    if (val(x).cols != cols) throw VlnError("concat_rows: column mismatch");
    rows += val(x).rows;
  }
  Node n;
  n.op = Op::ConcatRows;
  n.parents = xs;
  n.value = Tensor(rows, cols);
  int r = 0;
  for (int x : xs) {
    const Tensor& t = val(x);
    std::copy(t.v.begin(), t.v.end(), n.value.row_ptr(r));
    r += t.rows;
    n.needs_grad = n.needs_grad || nodes_[x].needs_grad;
  }
  return push(std::move(n));
}

int Graph::concat_cols(const std::vector<int>& xs) {
  if (xs.empty()) throw VlnError("concat_cols: empty");
  int rows = val(xs[0]).rows;
  int cols = 0;
  for (int x : xs) {
    if (val(x).rows != rows) throw VlnError("concat_cols: row mismatch");
    cols += val(x).cols;
  }
  Node n;
  n.op = Op::ConcatCols;
  n.parents = xs;
  n.value = Tensor(rows, cols);
  int c0 = 0;
  for (int x : xs) {
    const Tensor& t = val(x);
    for (int i = 0; i < rows; ++i)
      std::copy(t.row_ptr(i), t.row_ptr(i) + t.cols, n.value.row_ptr(i) + c0);
    c0 += t.cols;
    n.needs_grad = n.needs_grad || nodes_[x].needs_grad;
  }
  return push(std::move(n));
}

int Graph::slice_rows(int a, int r0, int r1) {
  const Tensor& t = val(a);
  if (r0 < 0 || r1 > t.rows || r0 >= r1) throw VlnError("slice_rows: bad range");
  Node n;
  n.op = Op::SliceRows;
  n.a = a;
  n.i0 = r0;
  n.i1 = r1;
  n.value = Tensor(r1 - r0, t.cols);
  std::copy(t.row_ptr(r0), t.row_ptr(r0) + static_cast<size_t>(r1 - r0) * t.cols,
            n.value.v.begin());
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::gather_rows(int a, std::vector<int> rows) {
  const Tensor& t = val(a);
  Node n;
  n.op = Op::GatherRows;
  n.a = a;
  n.value = Tensor(static_cast<int>(rows.size()), t.cols);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= t.rows) throw VlnError("gather_rows: index out of range");
    std::copy(t.row_ptr(rows[i]), t.row_ptr(rows[i]) + t.cols, n.value.row_ptr(static_cast<int>(i)));
  }
  n.idx = std::move(rows);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::gather_cols(int a, std::vector<int> cols) {
  const Tensor& t = val(a);
  Node n;
  n.op = Op::GatherCols;
  n.a = a;
  n.value = Tensor(t.rows, static_cast<int>(cols.size()));
  for (int i = 0; i < t.rows; ++i)
    for (size_t j = 0; j < cols.size(); ++j) {
      if (cols[j] < 0 || cols[j] >= t.cols) throw VlnError("gather_cols: index out of range");
      n.value.at(i, static_cast<int>(j)) = t.at(i, cols[j]);
    }
  n.idx = std::move(cols);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::reshape(int a, int r, int c) {
  const Tensor& t = val(a);
  if (r * c != t.size()) throw VlnError("reshape: size mismatch");
  Node n;
  n.op = Op::Reshape;
  n.a = a;
  n.value = t;
  n.value.rows = r;
  n.value.cols = c;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::mean_rows(int a) {
  const Tensor& t = val(a);
  Node n;
  n.op = Op::MeanRows;
  n.a = a;
  n.value = Tensor(1, t.cols);
  for (int i = 0; i < t.rows; ++i)
    for (int j = 0; j < t.cols; ++j) n.value.v[j] += t.at(i, j);
  const real inv = 1.0 / t.rows;
  for (auto& e : n.value.v) e *= inv;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::sum_all(int a) {
  const Tensor& t = val(a);
  Node n;
  n.op = Op::SumAll;
  n.a = a;
  n.value = Tensor(1, 1);
  real s = 0.0;
  for (real e : t.v) s += e;
  n.value.v[0] = s;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::mean_all(int a) {
  const Tensor& t = val(a);
  Node n;
  n.op = Op::MeanAll;
  n.a = a;
  n.value = Tensor(1, 1);
  real s = 0.0;
  for (real e : t.v) s += e;
  n.value.v[0] = s / t.size();
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::stop_grad(int a) {
  Node n;
  n.op = Op::StopGrad;
  n.a = a;
  n.value = val(a);
  n.needs_grad = false;
  return push(std::move(n));
}

int Graph::l2_normalize_rows(int a) {
  const Tensor& t = val(a);
  Node n;
  n.op = Op::L2NormalizeRows;
  n.a = a;
  n.value = Tensor(t.rows, t.cols);
  n.aux = Tensor(1, t.rows);  // norms
  for (int i = 0; i < t.rows; ++i) {
    real s = 0.0;
    for (int j = 0; j < t.cols; ++j) s += t.at(i, j) * t.at(i, j);
    const real nrm = std::sqrt(s);
    if (nrm < kNormEps) throw VlnError("l2_normalize_rows: zero-norm row");
    n.aux.v[i] = nrm;
    const real inv = 1.0 / nrm;
    for (int j = 0; j < t.cols; ++j) n.value.at(i, j) = t.at(i, j) * inv;
  }
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::dot(int a, int b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.size() != tb.size()) throw VlnError("dot: size mismatch");
  Node n;
  n.op = Op::Dot;
  n.a = a;
  n.b = b;
  n.value = Tensor(1, 1);
  real s = 0.0;
  for (int i = 0; i < ta.size(); ++i) s += ta.v[i] * tb.v[i];
  n.value.v[0] = s;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

int Graph::logsumexp(int a) {
  const Tensor& t = val(a);
  Node n;
  n.op = Op::LogSumExp;
  n.a = a;
  n.value = Tensor(1, 1);
  real mx = -1e300;
  for (real e : t.v) mx = std::max(mx, e);
  real s = 0.0;
  for (real e : t.v) s += std::exp(e - mx);
  n.value.v[0] = mx + std::log(s);
  n.aux = Tensor(t.rows, t.cols);  // softmax weights for backward
  for (int i = 0; i < t.size(); ++i) n.aux.v[i] = std::exp(t.v[i] - n.value.v[0]);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::softmax_masked(int a, int valid) {
  const Tensor& t = val(a);
  if (t.rows != 1 || valid < 1 || valid > t.cols) throw VlnError("softmax_masked: bad args");
  Node n;
  n.op = Op::SoftmaxMasked;
  n.a = a;
  n.i0 = valid;
  n.value = Tensor(1, t.cols);
  real mx = -1e300;
  for (int j = 0; j < valid; ++j) mx = std::max(mx, t.v[j]);
  real denom = 0.0;
  for (int j = 0; j < valid; ++j) {
    n.value.v[j] = std::exp(t.v[j] - mx);
    denom += n.value.v[j];
  }
  const real inv = 1.0 / denom;
  for (int j = 0; j < valid; ++j) n.value.v[j] *= inv;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Graph::ce_with_logits_dist(int logits, Tensor target, int valid) {
  const Tensor& t = val(logits);
  if (t.rows != 1 || target.size() != t.size()) throw VlnError("ce_dist: shape mismatch");
  if (valid < 1 || valid > t.cols) throw VlnError("ce_dist: bad valid count");
  Node n;
  n.op = Op::CeLogitsDist;
  n.a = logits;
  n.i0 = valid;
  real mx = -1e300;
  for (int j = 0; j < valid; ++j) mx = std::max(mx, t.v[j]);
  real denom = 0.0;
  for (int j = 0; j < valid; ++j) denom += std::exp(t.v[j] - mx);
  const real log_denom = mx + std::log(denom);
  real loss = 0.0;
  real tsum = 0.0;
  n.aux = Tensor(1, valid);  // probs
  for (int j = 0; j < valid; ++j) {
    n.aux.v[j] = std::exp(t.v[j] - log_denom);
    loss -= target.v[j] * (t.v[j] - log_denom);
    tsum += target.v[j];
  }
  n.r0 = tsum;
  n.cst = std::move(target);
  n.value = Tensor(1, 1);
  n.value.v[0] = loss;
  n.needs_grad = nodes_[logits].needs_grad;
  return push(std::move(n));
}

int Graph::ce_with_logits_index(int logits, int target_index) {
  const Tensor& t = val(logits);
  if (t.rows != 1 || target_index < 0 || target_index >= t.cols)
    throw VlnError("ce_index: bad args");
  Node n;
  n.op = Op::CeLogitsIndex;
  n.a = logits;
  n.i0 = target_index;
  real mx = -1e300;
  for (real e : t.v) mx = std::max(mx, e);
  real denom = 0.0;
  for (real e : t.v) denom += std::exp(e - mx);
  const real log_denom = mx + std::log(denom);
  n.aux = Tensor(1, t.cols);
  for (int j = 0; j < t.cols; ++j) n.aux.v[j] = std::exp(t.v[j] - log_denom);
  n.value = Tensor(1, 1);
  n.value.v[0] = log_denom - t.v[target_index];
  n.needs_grad = nodes_[logits].needs_grad;
  return push(std::move(n));
}

int Graph::bce_with_logits(int logits, Tensor targets, bool mean) {
  const Tensor& t = val(logits);
  if (!t.same_shape(targets)) throw VlnError("bce_with_logits: shape mismatch");
  Node n;
  n.op = Op::BceLogits;
  n.a = logits;
  n.i0 = mean ? 1 : 0;
  real loss = 0.0;
  for (int i = 0; i < t.size(); ++i) {
    const real x = t.v[i];
    const real y = targets.v[i];
    loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
  }
  if (mean) loss /= t.size();
  n.cst = std::move(targets);
  n.value = Tensor(1, 1);
  n.value.v[0] = loss;
  n.needs_grad = nodes_[logits].needs_grad;
  return push(std::move(n));
}

int Graph::bce_on_probs(int probs, Tensor targets, bool mean) {
  const Tensor& t = val(probs);
  if (!t.same_shape(targets)) throw VlnError("bce_on_probs: shape mismatch");
  constexpr real eps = 1e-7;
  Node n;
  n.op = Op::BceProbs;
  n.a = probs;
  n.i0 = mean ? 1 : 0;
  real loss = 0.0;
  for (int i = 0; i < t.size(); ++i) {
    const real p = std::min(1.0 - eps, std::max(eps, t.v[i]));
    loss -= targets.v[i] * std::log(p) + (1.0 - targets.v[i]) * std::log(1.0 - p);
  }
  if (mean) loss /= t.size();
  n.cst = std::move(targets);
  n.value = Tensor(1, 1);
  n.value.v[0] = loss;
  n.needs_grad = nodes_[probs].needs_grad;
  return push(std::move(n));
}

int Graph::cosine_rows_const(int vq, Tensor rows) {
  const Tensor& q = val(vq);
  if (q.rows != 1 || rows.cols != q.cols) throw VlnError("cosine_rows_const: shape mismatch");
  real qn = 0.0;
  for (real e : q.v) qn += e * e;
  qn = std::sqrt(qn);
  if (qn < kNormEps) throw VlnError("cosine_rows_const: zero-norm query");
  Node n;
  n.op = Op::CosineRowsConst;
  n.a = vq;
  n.value = Tensor(1, rows.rows);
  n.aux = Tensor(1, rows.rows);  // row norms
  for (int i = 0; i < rows.rows; ++i) {
    real rn = 0.0, d = 0.0;
    for (int j = 0; j < rows.cols; ++j) {
      rn += rows.at(i, j) * rows.at(i, j);
      d += rows.at(i, j) * q.v[j];
    }
    rn = std::sqrt(rn);
    if (rn < kNormEps) throw VlnError("cosine_rows_const: zero-norm candidate");
    n.aux.v[i] = rn;
    n.value.v[i] = d / (qn * rn);
  }
  n.r0 = qn;
  n.cst = std::move(rows);
  n.needs_grad = nodes_[vq].needs_grad;
  return push(std::move(n));
}

int Graph::gaussian_kl(int mu_q, int logstd_q, int mu_p, int logstd_p) {
  const Tensor& mq = val(mu_q);
  const Tensor& lq = val(logstd_q);
  const Tensor& mp = val(mu_p);
  const Tensor& lp = val(logstd_p);
  if (mq.size() != lq.size() || mq.size() != mp.size() || mq.size() != lp.size())
    throw VlnError("gaussian_kl: shape mismatch");
  Node n;
  n.op = Op::GaussianKl;
  n.a = mu_q;
  n.b = logstd_q;
  n.c = mu_p;
  n.d = logstd_p;
  real kl = 0.0;
  for (int i = 0; i < mq.size(); ++i) {
    const real vq_ = std::exp(2.0 * lq.v[i]);
    const real vp_ = std::exp(2.0 * lp.v[i]);
    const real dm = mq.v[i] - mp.v[i];
    kl += lp.v[i] - lq.v[i] + (vq_ + dm * dm) / (2.0 * vp_) - 0.5;
  }
  n.value = Tensor(1, 1);
  n.value.v[0] = kl;
  n.needs_grad = nodes_[mu_q].needs_grad || nodes_[logstd_q].needs_grad ||
                 nodes_[mu_p].needs_grad || nodes_[logstd_p].needs_grad;
  return push(std::move(n));
}

int Graph::mse_to_const(int pred, real target) {
  const Tensor& t = val(pred);
  if (t.size() != 1) throw VlnError("mse_to_const: pred must be scalar");
  Node n;
  n.op = Op::MseConst;
  n.a = pred;
  n.r0 = target;
  n.value = Tensor(1, 1);
  const real d = t.v[0] - target;
  n.value.v[0] = d * d;
  n.needs_grad = nodes_[pred].needs_grad;
  return push(std::move(n));
}

int Graph::wsum(const std::vector<std::pair<int, real>>& terms) {
  if (terms.empty()) throw VlnError("wsum: empty");
  Node n;
  n.op = Op::WSum;
  n.value = Tensor(1, 1);
  for (const auto& [id, w] : terms) {
    if (val(id).size() != 1) throw VlnError("wsum: non-scalar term");
    n.value.v[0] += w * val(id).v[0];
    n.parents.push_back(id);
    n.weights.push_back(w);
    n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
  }
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------
void Graph::backward(int root, std::vector<Tensor>& param_grads) {
  Node& rn = nodes_[root];
  if (val(root).size() != 1) throw VlnError("backward: root must be scalar");
  if (!rn.needs_grad) return;
  rn.grad = Tensor(1, 1);
  rn.grad.v[0] = 1.0;

  auto add_into = [&](int id, const Tensor& g, auto&& writer) {
    Node& p = nodes_[id];
    if (!p.needs_grad) return;
    const Tensor& pv = val(id);
    ensure_grad(p.grad, pv.rows, pv.cols);
    writer(p.grad, g);
  };
  (void)add_into;

  auto grad_of = [&](int id) -> Tensor& {
    Node& p = nodes_[id];
    const Tensor& pv = val(id);
    ensure_grad(p.grad, pv.rows, pv.cols);
    return p.grad;
  };
  auto needs = [&](int id) { return id >= 0 && nodes_[id].needs_grad; };

  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Param:
        if (n.param_index >= 0) {
          Tensor& pg = param_grads[n.param_index];
          for (int i = 0; i < g.size(); ++i) pg.v[i] += g.v[i];
        }
        break;
      case Op::Matmul: {
        const bool ta = n.i0 != 0, tb = n.i1 != 0;
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          kernels::MatmulOpts o;
          o.accumulate = true;
          if (!ta && !tb) { o.trans_b = true; kernels::matmul(g, val(n.b), da, o); }
          else if (!ta && tb) { kernels::matmul(g, val(n.b), da, o); }
          else if (ta && !tb) { o.trans_b = true; kernels::matmul(val(n.b), g, da, o); }
          else { o.trans_a = true; o.trans_b = true; kernels::matmul(val(n.b), g, da, o); }
        }
        if (needs(n.b)) {
          Tensor& db = grad_of(n.b);
          if (!ta && !tb) { kernels::MatmulOpts o; o.trans_a = true; o.accumulate = true;
            kernels::matmul(val(n.a), g, db, o); }
          else if (!ta && tb) { kernels::MatmulOpts o; o.trans_a = true; o.accumulate = true;
            kernels::matmul(g, val(n.a), db, o); }
          else if (ta && !tb) { kernels::MatmulOpts o; o.accumulate = true;
            kernels::matmul(val(n.a), g, db, o); }
          else { kernels::MatmulOpts o; o.trans_a = true; o.trans_b = true; o.accumulate = true;
            kernels::matmul(g, val(n.a), db, o); }
        }
        break;
      }
      case Op::Add:
        if (needs(n.a)) { Tensor& da = grad_of(n.a); for (int i = 0; i < g.size(); ++i) da.v[i] += g.v[i]; }
        if (needs(n.b)) { Tensor& db = grad_of(n.b); for (int i = 0; i < g.size(); ++i) db.v[i] += g.v[i]; }
        break;
      case Op::Sub:
        if (needs(n.a)) { Tensor& da = grad_of(n.a); for (int i = 0; i < g.size(); ++i) da.v[i] += g.v[i]; }
        if (needs(n.b)) { Tensor& db = grad_of(n.b); for (int i = 0; i < g.size(); ++i) db.v[i] -= g.v[i]; }
        break;
      case Op::Hadamard:
        if (needs(n.a)) { Tensor& da = grad_of(n.a); const Tensor& tb = val(n.b);
          for (int i = 0; i < g.size(); ++i) da.v[i] += g.v[i] * tb.v[i]; }
        if (needs(n.b)) { Tensor& db = grad_of(n.b); const Tensor& ta = val(n.a);
          for (int i = 0; i < g.size(); ++i) db.v[i] += g.v[i] * ta.v[i]; }
        break;
      case Op::Scale:
        if (needs(n.a)) { Tensor& da = grad_of(n.a);
          for (int i = 0; i < g.size(); ++i) da.v[i] += g.v[i] * n.r0; }
        break;
      case Op::AddRowvec:
        if (needs(n.a)) { Tensor& da = grad_of(n.a); for (int i = 0; i < g.size(); ++i) da.v[i] += g.v[i]; }
        if (needs(n.b)) { Tensor& db = grad_of(n.b);
          for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) db.v[j] += g.at(i, j); }
        break;
      case Op::DivByScalar: {
        const real s = val(n.b).v[0];
        if (needs(n.a)) { Tensor& da = grad_of(n.a);
          for (int i = 0; i < g.size(); ++i) da.v[i] += g.v[i] / s; }
        if (needs(n.b)) { Tensor& ds = grad_of(n.b); const Tensor& ta = val(n.a);
          real acc = 0.0;
          for (int i = 0; i < g.size(); ++i) acc += g.v[i] * (-ta.v[i] / (s * s));
          ds.v[0] += acc; }
        break;
      }
      case Op::Relu:
        if (needs(n.a)) kernels::relu_bwd(val(n.a), g, grad_of(n.a));
        break;
      case Op::Sigmoid:
        if (needs(n.a)) { Tensor& da = grad_of(n.a);
          for (int i = 0; i < g.size(); ++i) {
            const real y = n.value.v[i];
            da.v[i] += g.v[i] * y * (1.0 - y);
          } }
        break;
      case Op::Tanh:
        if (needs(n.a)) { Tensor& da = grad_of(n.a);
          for (int i = 0; i < g.size(); ++i) {
            const real y = n.value.v[i];
            da.v[i] += g.v[i] * (1.0 - y * y);
          } }
        break;
      case Op::Clamp:
        if (needs(n.a)) { Tensor& da = grad_of(n.a); const Tensor& ta = val(n.a);
          for (int i = 0; i < g.size(); ++i)
            if (ta.v[i] > n.r0 && ta.v[i] < n.r1) da.v[i] += g.v[i]; }
        break;
      case Op::LayerNorm: {
        Tensor dummy_dx;
        Tensor* dx = nullptr;
        if (needs(n.a)) dx = &grad_of(n.a); else { dummy_dx = Tensor(val(n.a).rows, val(n.a).cols); dx = &dummy_dx; }
        Tensor dummy_g(1, val(n.b).cols), dummy_b(1, val(n.b).cols);
        Tensor* dgamma = needs(n.b) ? &grad_of(n.b) : &dummy_g;
        Tensor* dbeta = needs(n.c) ? &grad_of(n.c) : &dummy_b;
        kernels::layernorm_bwd(val(n.a), val(n.b), n.aux, n.aux2, g, *dx, *dgamma, *dbeta);
        break;
      }
      case Op::Mha: {
        const int heads = n.i0;
        const Tensor& Q = val(n.a);
        const Tensor& K = val(n.b);
        const Tensor& V = val(n.c);
        const int dh = Q.cols / heads;
        const int nq = Q.rows, nk = K.rows;
        const real inv_sqrt = 1.0 / std::sqrt(static_cast<real>(dh));
        Tensor* dQ = needs(n.a) ? &grad_of(n.a) : nullptr;
        Tensor* dK = needs(n.b) ? &grad_of(n.b) : nullptr;
        Tensor* dV = needs(n.c) ? &grad_of(n.c) : nullptr;
        std::vector<real> dprobs(nk), dscores(nk);
        for (int h = 0; h < heads; ++h) {
          const int off = h * dh;
          for (int i = 0; i < nq; ++i) {
            const real* prow = n.aux.row_ptr(h * nq + i);
            const real* grow = g.row_ptr(i) + off;
            // dprobs_j = g . V_j ; dV_j += p_j * g
            real dot_pp = 0.0;
            for (int j = 0; j < nk; ++j) {
              const real* vrow = V.row_ptr(j) + off;
              real s = 0.0;
              for (int p = 0; p < dh; ++p) s += grow[p] * vrow[p];
              dprobs[j] = s;
              dot_pp += prow[j] * s;
              if (dV && prow[j] != 0.0) {
                real* dvrow = dV->row_ptr(j) + off;
                for (int p = 0; p < dh; ++p) dvrow[p] += prow[j] * grow[p];
              }
            }
            for (int j = 0; j < nk; ++j) dscores[j] = prow[j] * (dprobs[j] - dot_pp);
            const real* qrow = Q.row_ptr(i) + off;
            if (dQ) {
              real* dqrow = dQ->row_ptr(i) + off;
              for (int j = 0; j < nk; ++j) {
                if (dscores[j] == 0.0) continue;
                const real w = dscores[j] * inv_sqrt;
                const real* krow = K.row_ptr(j) + off;
                for (int p = 0; p < dh; ++p) dqrow[p] += w * krow[p];
              }
            }
            if (dK) {
              for (int j = 0; j < nk; ++j) {
                if (dscores[j] == 0.0) continue;
                const real w = dscores[j] * inv_sqrt;
                real* dkrow = dK->row_ptr(j) + off;
                for (int p = 0; p < dh; ++p) dkrow[p] += w * qrow[p];
              }
            }
          }
        }
        break;
      }
      case Op::ConcatRows: {
        int r = 0;
        for (int x : n.parents) {
          const Tensor& t = val(x);
          if (needs(x)) {
            Tensor& dx = grad_of(x);
            for (int i = 0; i < t.rows; ++i)
              for (int j = 0; j < t.cols; ++j) dx.at(i, j) += g.at(r + i, j);
          }
          r += t.rows;
        }
        break;
      }
      case Op::ConcatCols: {
        int c0 = 0;
        for (int x : n.parents) {
          const Tensor& t = val(x);
          if (needs(x)) {
            Tensor& dx = grad_of(x);
            for (int i = 0; i < t.rows; ++i)
              for (int j = 0; j < t.cols; ++j) dx.at(i, j) += g.at(i, c0 + j);
          }
          c0 += t.cols;
        }
        break;
      }
      case Op::SliceRows:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) da.at(n.i0 + i, j) += g.at(i, j);
        }
        break;
      case Op::GatherRows:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          for (size_t i = 0; i < n.idx.size(); ++i)
            for (int j = 0; j < g.cols; ++j)
              da.at(n.idx[i], j) += g.at(static_cast<int>(i), j);
        }
        break;
      case Op::GatherCols:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          for (int i = 0; i < g.rows; ++i)
            for (size_t j = 0; j < n.idx.size(); ++j)
              da.at(i, n.idx[j]) += g.at(i, static_cast<int>(j));
        }
        break;
      case Op::Reshape:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          for (int i = 0; i < g.size(); ++i) da.v[i] += g.v[i];
        }
        break;
      case Op::MeanRows:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          const real inv = 1.0 / val(n.a).rows;
          for (int i = 0; i < da.rows; ++i)
            for (int j = 0; j < da.cols; ++j) da.at(i, j) += g.v[j] * inv;
        }
        break;
      case Op::SumAll:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          for (auto& e : da.v) e += g.v[0];
        }
        break;
      case Op::MeanAll:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          const real inv = g.v[0] / val(n.a).size();
          for (auto& e : da.v) e += inv;
        }
        break;
      case Op::StopGrad:
        break;
      case Op::L2NormalizeRows:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          for (int i = 0; i < g.rows; ++i) {
            const real inv = 1.0 / n.aux.v[i];
            real ydotg = 0.0;
            for (int j = 0; j < g.cols; ++j) ydotg += n.value.at(i, j) * g.at(i, j);
            for (int j = 0; j < g.cols; ++j)
              da.at(i, j) += inv * (g.at(i, j) - n.value.at(i, j) * ydotg);
          }
        }
        break;
      case Op::Dot:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          const Tensor& tb = val(n.b);
          for (int i = 0; i < da.size(); ++i) da.v[i] += g.v[0] * tb.v[i];
        }
        if (needs(n.b)) {
          Tensor& db = grad_of(n.b);
          const Tensor& ta = val(n.a);
          for (int i = 0; i < db.size(); ++i) db.v[i] += g.v[0] * ta.v[i];
        }
        break;
      case Op::LogSumExp:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          for (int i = 0; i < da.size(); ++i) da.v[i] += g.v[0] * n.aux.v[i];
        }
        break;
      case Op::SoftmaxMasked:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          const int valid = n.i0;
          real dot_pg = 0.0;
          for (int j = 0; j < valid; ++j) dot_pg += n.value.v[j] * g.v[j];
          for (int j = 0; j < valid; ++j)
            da.v[j] += n.value.v[j] * (g.v[j] - dot_pg);
        }
        break;
      case Op::CeLogitsDist:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          for (int j = 0; j < n.i0; ++j)
            da.v[j] += g.v[0] * (n.aux.v[j] * n.r0 - n.cst.v[j]);
        }
        break;
      case Op::CeLogitsIndex:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          for (int j = 0; j < da.size(); ++j) {
            real d = n.aux.v[j];
            if (j == n.i0) d -= 1.0;
            da.v[j] += g.v[0] * d;
          }
        }
        break;
      case Op::BceLogits:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          const Tensor& x = val(n.a);
          const real w = n.i0 ? g.v[0] / x.size() : g.v[0];
          for (int i = 0; i < x.size(); ++i) {
            const real s = 1.0 / (1.0 + std::exp(-x.v[i]));
            da.v[i] += w * (s - n.cst.v[i]);
          }
        }
        break;
      case Op::BceProbs:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          const Tensor& p = val(n.a);
          constexpr real eps = 1e-7;
          const real w = n.i0 ? g.v[0] / p.size() : g.v[0];
          for (int i = 0; i < p.size(); ++i) {
            const real pc = std::min(1.0 - eps, std::max(eps, p.v[i]));
            if (p.v[i] > eps && p.v[i] < 1.0 - eps)
              da.v[i] += w * (-n.cst.v[i] / pc + (1.0 - n.cst.v[i]) / (1.0 - pc));
          }
        }
        break;
      case Op::CosineRowsConst:
        if (needs(n.a)) {
          Tensor& da = grad_of(n.a);
          const Tensor& q = val(n.a);
          const real qn = n.r0;
          for (int i = 0; i < n.cst.rows; ++i) {
            const real gi = g.v[i];
            if (gi == 0.0) continue;
            const real rn = n.aux.v[i];
            const real cosv = n.value.v[i];
            for (int j = 0; j < q.cols; ++j)
              da.v[j] += gi * (n.cst.at(i, j) / (qn * rn) - cosv * q.v[j] / (qn * qn));
          }
        }
        break;
      case Op::GaussianKl: {
        const Tensor& mq = val(n.a);
        const Tensor& lq = val(n.b);
        const Tensor& mp = val(n.c);
        const Tensor& lp = val(n.d);
        const real up = g.v[0];
        for (int i = 0; i < mq.size(); ++i) {
          const real vq_ = std::exp(2.0 * lq.v[i]);
          const real vp_ = std::exp(2.0 * lp.v[i]);
          const real dm = mq.v[i] - mp.v[i];
          if (needs(n.a)) grad_of(n.a).v[i] += up * dm / vp_;
          if (needs(n.b)) grad_of(n.b).v[i] += up * (vq_ / vp_ - 1.0);
          if (needs(n.c)) grad_of(n.c).v[i] -= up * dm / vp_;
          if (needs(n.d)) grad_of(n.d).v[i] += up * (1.0 - (vq_ + dm * dm) / vp_);
        }
        break;
      }
      case Op::MseConst:
        if (needs(n.a)) grad_of(n.a).v[0] += g.v[0] * 2.0 * (val(n.a).v[0] - n.r0);
        break;
      case Op::WSum:
        for (size_t i = 0; i < n.parents.size(); ++i)
          if (needs(n.parents[i])) grad_of(n.parents[i]).v[0] += g.v[0] * n.weights[i];
        break;
    }
  }
}

int linear(Graph& g, int x, int w, int b) {
  int y = g.matmul(x, w);
  if (b >= 0) y = g.add_rowvec(y, b);
  return y;
}

Tensor sinusoidal_embedding(int pos, int d) {
  Tensor t(1, d);
  for (int i = 0; i < d; ++i) {
    const real exponent = static_cast<real>(2 * (i / 2)) / d;
    const real freq = std::pow(10000.0, exponent);
    const real x = pos / freq;
    t.v[i] = (i % 2 == 0) ? std::sin(x) : std::cos(x);
  }
  return t;
}

}  // namespace vln
