#include <doctest.h>

#include "oracles.hpp"
#include "vln/core/kernels.hpp"
#include "vln/core/rng.hpp"

using namespace vln;

namespace {
Tensor random_tensor(int r, int c, uint64_t seed) {
  Tensor t(r, c);
  Rng rng(seed);
  for (auto& x : t.v) x = rng.normal();
  return t;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const int m = ta ? a.cols : a.rows;
  const int k = ta ? a.rows : a.cols;
  const int n = tb ? b.rows : b.cols;
  Tensor c(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      real s = 0.0;
      for (int p = 0; p < k; ++p)
        s += (ta ? a.at(p, i) : a.at(i, p)) * (tb ? b.at(j, p) : b.at(p, j));
      c.at(i, j) = s;
    }
  return c;
}
}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("matmul matches a naive triple loop in all transpose modes") {
  for (int mode = 0; mode < 4; ++mode) {
    const bool ta = mode & 1, tb = mode & 2;
    const Tensor a = ta ? random_tensor(7, 5, 1) : random_tensor(5, 7, 1);
    const Tensor b = tb ? random_tensor(6, 7, 2) : random_tensor(7, 6, 2);
    Tensor c;
    kernels::MatmulOpts o;
    o.trans_a = ta;
    o.trans_b = tb;
    kernels::serial::matmul(a, b, c, o);
    const Tensor want = naive_matmul(a, b, ta, tb);
    REQUIRE(c.same_shape(want));
    CHECK(c.max_abs_diff(want) < 1e-12);
  }
}

TEST_CASE("openmp kernels are bit-identical to the serial reference") {
  const Tensor a = random_tensor(33, 47, 3);
  const Tensor b = random_tensor(47, 29, 4);
  Tensor cs, cp;
  kernels::serial::matmul(a, b, cs, {});
  kernels::par::matmul(a, b, cp, {});
  CHECK(cs == cp);

  Tensor ys, yp;
  kernels::serial::relu_fwd(a, ys);
  kernels::par::relu_fwd(a, yp);
  CHECK(ys == yp);

  kernels::serial::softmax_rows(a, ys);
  kernels::par::softmax_rows(a, yp);
  CHECK(ys == yp);

  const Tensor gamma = Tensor::full(1, 47, 1.25);
  const Tensor beta = Tensor::full(1, 47, -0.5);
  Tensor ls, ms, rs, lp, mp, rp;
  kernels::serial::layernorm_fwd(a, gamma, beta, ls, ms, rs);
  kernels::par::layernorm_fwd(a, gamma, beta, lp, mp, rp);
  CHECK(ls == lp);

  Tensor w1 = random_tensor(31, 17, 5), w2 = w1;
  const Tensor g = random_tensor(31, 17, 6);
  Tensor m1(31, 17), v1(31, 17), m2(31, 17), v2(31, 17);
  kernels::serial::adamw_step(w1, g, m1, v1, 1e-3, 0.9, 0.999, 1e-8, 0.01, 1);
  kernels::par::adamw_step(w2, g, m2, v2, 1e-3, 0.9, 0.999, 1e-8, 0.01, 1);
  CHECK(w1 == w2);
}

TEST_CASE("adamw first step moves a weight by lr against the gradient sign") {
  Tensor w(1, 1), g(1, 1), m(1, 1), v(1, 1);
  w.v[0] = 1.0;
  g.v[0] = 0.5;
  kernels::serial::adamw_step(w, g, m, v, 0.1, 0.9, 0.999, 1e-12, 0.0, 1);
  // mhat = g, vhat = g^2 -> update = lr * sign(g)
  CHECK(w.v[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-9));
}

TEST_CASE("softmax rows sum to one and honor -inf exclusions") {
  Tensor logits(2, 4);
  logits.at(0, 0) = 1.0;
  logits.at(0, 1) = 2.0;
  logits.at(0, 2) = -std::numeric_limits<real>::infinity();
  logits.at(0, 3) = 0.5;
  logits.at(1, 1) = 3.0;
  Tensor probs;
  kernels::softmax_rows(logits, probs);
  for (int r = 0; r < 2; ++r) {
    real s = 0.0;
    for (int c = 0; c < 4; ++c) s += probs.at(r, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(probs.at(0, 2) == 0.0);
}

TEST_CASE("layernorm backward matches finite differences") {
  const Tensor x = random_tensor(3, 8, 11);
  Tensor gamma = random_tensor(1, 8, 12);
  Tensor beta = random_tensor(1, 8, 13);
  const Tensor dy = random_tensor(3, 8, 14);

  auto loss = [&](const Tensor& xi, const Tensor& gi, const Tensor& bi) {
    Tensor y, mean, rstd;
    kernels::serial::layernorm_fwd(xi, gi, bi, y, mean, rstd);
    real s = 0.0;
    for (int i = 0; i < y.size(); ++i) s += y.v[i] * dy.v[i];
    return s;
  };

  Tensor y, mean, rstd;
  kernels::serial::layernorm_fwd(x, gamma, beta, y, mean, rstd);
  Tensor dx(3, 8), dgamma(1, 8), dbeta(1, 8);
  kernels::serial::layernorm_bwd(x, gamma, mean, rstd, dy, dx, dgamma, dbeta);

  const real eps = 1e-6;
  for (int i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp.v[i] += eps;
    xm.v[i] -= eps;
    const real num = (loss(xp, gamma, beta) - loss(xm, gamma, beta)) / (2 * eps);
    CHECK(dx.v[i] == doctest::Approx(num).epsilon(1e-4));
  }
  for (int i = 0; i < gamma.size(); ++i) {
    Tensor gp = gamma, gm = gamma;
    gp.v[i] += eps;
    gm.v[i] -= eps;
    const real num = (loss(x, gp, beta) - loss(x, gm, beta)) / (2 * eps);
    CHECK(dgamma.v[i] == doctest::Approx(num).epsilon(1e-4));
  }
}

}  // TEST_SUITE
