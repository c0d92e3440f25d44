#include <doctest.h>

#include "model_fixtures.hpp"
#include "oracles.hpp"

using namespace vln;
using fixtures::tiny_cfg;

TEST_SUITE("rvi") {

TEST_CASE("contrastive loss: uniform candidates give ln N") {
  const Config cfg = tiny_cfg();
  nn::Agent agent(cfg, 21);
  Graph g;
  const Tensor cands = Tensor::full(4, 6, 0.5);  // 4 identical candidates
  const int vq = g.input(Tensor::full(1, 6, 1.0));
  const int loss = agent.imagination().contrastive_loss(g, vq, cands, 2, 0.07);
  CHECK(g.scalar(loss) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("contrastive loss: two candidates with sims (1, 0) at tau 0.07") {
  const Config cfg = tiny_cfg();
  nn::Agent agent(cfg, 22);
  Graph g;
  Tensor cands(2, 2);
  cands.at(0, 0) = 1.0;  // cosine 1 with vq
  cands.at(1, 1) = 1.0;  // cosine 0 with vq
  Tensor vq(1, 2);
  vq.v[0] = 1.0;
  const int loss =
      agent.imagination().contrastive_loss(g, g.input(vq), cands, 0, 0.07);
  const real want = std::log(1.0 + std::exp(-1.0 / 0.07));  // ~6.2e-7
  CHECK(g.scalar(loss) == doctest::Approx(want).epsilon(1e-9));
  CHECK(g.scalar(loss) < 1e-6);
}

TEST_CASE("contrastive loss decreases as the target similarity rises") {
  const Config cfg = tiny_cfg();
  nn::Agent agent(cfg, 23);
  Tensor cands(3, 2);
  cands.at(0, 0) = 1.0;
  cands.at(1, 1) = 1.0;
  cands.at(2, 0) = -1.0;
  real prev = 1e9;
  for (real mix : {0.0, 0.4, 0.8, 0.99}) {
    Graph g;
    Tensor vq(1, 2);
    vq.v[0] = mix;
    vq.v[1] = 1.0 - mix;
    const int loss =
        agent.imagination().contrastive_loss(g, g.input(vq), cands, 0, 0.3);
    CHECK(g.scalar(loss) < prev);
    prev = g.scalar(loss);
  }
}

TEST_CASE("contrastive loss matches the direct InfoNCE oracle") {
  const Config cfg = tiny_cfg();
  nn::Agent agent(cfg, 24);
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + rng.uniform_int(6);
    Tensor cands(n, 5);
    for (auto& x : cands.v) x = rng.normal();
    Tensor vq(1, 5);
    for (auto& x : vq.v) x = rng.normal();
    const int target = rng.uniform_int(n);
    Graph g;
    const int loss =
        agent.imagination().contrastive_loss(g, g.input(vq), cands, target, 0.07);
    std::vector<std::vector<real>> cand_rows;
    for (int i = 0; i < n; ++i)
      cand_rows.emplace_back(cands.row_ptr(i), cands.row_ptr(i) + 5);
    const real want = oracles::info_nce(vq.v, cand_rows, target, 0.07);
    CHECK(g.scalar(loss) == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("contrastive loss rejects zero-norm vectors and bad targets") {
  const Config cfg = tiny_cfg();
  nn::Agent agent(cfg, 25);
  Graph g;
  const int vq = g.input(Tensor::full(1, 3, 1.0));
  CHECK_THROWS_AS(agent.imagination().contrastive_loss(g, vq, Tensor(2, 3), 0, 0.07),
                  VlnError);
  CHECK_THROWS_AS(
      agent.imagination().contrastive_loss(g, vq, Tensor::full(2, 3, 1.0), 5, 0.07),
      VlnError);
}

TEST_CASE("future kl: zero for identical distributions, closed form, clamped") {
  Graph g;
  const int mu = g.input(Tensor::full(1, 3, 0.7));
  const int ls = g.input(Tensor::full(1, 3, -0.2));
  CHECK(g.scalar(g.gaussian_kl(mu, ls, mu, ls)) == doctest::Approx(0.0));
  // kl >= 0 on random pairs
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    Tensor a(1, 4), b(1, 4), c(1, 4), d(1, 4);
    for (auto* t : {&a, &b, &c, &d})
      for (auto& x : t->v) x = rng.normal();
    Graph gg;
    const real kl = gg.scalar(gg.gaussian_kl(gg.input(a), gg.input(b), gg.input(c),
                                             gg.input(d)));
    CHECK(kl >= -1e-12);
    const real want = oracles::gaussian_kl(a.v, b.v, c.v, d.v);
    CHECK(kl == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("future kl head differentiates into memory parameters") {
  const Config cfg = tiny_cfg();
  nn::Agent agent(cfg, 26);
  const auto eps = fixtures::tiny_episodes(cfg, 51, 1);
  const auto& ep = eps[0];
  ParamStore& store = agent.params();
  Tensor v_true(1, cfg.pano_dim);
  std::copy(ep.pano_embed.row_ptr(0), ep.pano_embed.row_ptr(0) + cfg.pano_dim,
            v_true.v.begin());

  auto build = [&](Graph& g) {
    nn::ParamInjector P(g, store);
    const int m0 = agent.memory().init_grid(g, P);
    const int o0 = agent.encoder().encode(g, P, ep.panoramas[0], ep.traj->steps[0].pose,
                                          kStartActionId, 0);
    const int q = agent.memory().encode_pose_query(g, P, ep.traj->steps[0].pose);
    auto out = agent.memory().update(g, P, m0, o0, {q});
    const int vq = agent.memory().query_visual(g, P, out.query_outs[0]);
    return agent.imagination().future_kl(g, P, vq, v_true);
  };
  Graph g;
  const int loss = build(g);
  std::vector<Tensor> grads = store.make_grad_sink();
  g.backward(loss, grads);
  real memory_grad = 0.0;
  memory_grad += ParamStore::grad_norm({grads[store.index_of("isr.seed")]});
  CHECK(g.scalar(loss) >= 0.0);
  CHECK(memory_grad > 0.0);  // differentiable end-to-end into the grids
}

TEST_CASE("sli loss: saturated zero, ln2 at 0.5, oracle match, shape errors") {
  const Config cfg = tiny_cfg();
  nn::Agent agent(cfg, 27);
  const auto eps = fixtures::tiny_episodes(cfg, 52, 1);
  const auto& ep = eps[0];
  const int classes = cfg.categories + 1;
  const auto& map = ep.ego_maps[0];

  // element-wise checks on the bce core with the one-hot target
  Tensor target(1, kEgoMapH * kEgoMapW * classes);
  for (int cell = 0; cell < kEgoMapH * kEgoMapW; ++cell)
    target.v[cell * classes + map[cell]] = 1.0;
  Graph g;
  Tensor sat(1, target.size());
  for (int i = 0; i < target.size(); ++i) sat.v[i] = target.v[i] > 0.5 ? 40.0 : -40.0;
  CHECK(g.scalar(g.bce_with_logits(g.leaf(sat), target, true)) < 1e-12);
  Tensor zeros(1, target.size());
  CHECK(g.scalar(g.bce_with_logits(g.leaf(zeros), target, true)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // the head itself: random memory matches the element-wise oracle
  ParamStore& store = agent.params();
  nn::ParamInjector P(g, store);
  const int m = g.input([&] {
    Tensor t(cfg.grid_h * cfg.grid_w, cfg.dim);
    Rng rng(8);
    for (auto& x : t.v) x = rng.normal();
    return t;
  }());
  const int loss = agent.imagination().sli_loss(g, P, m, map);
  // recompute via oracle: logits = flat(memory) * W + b
  const Tensor& W = store.tensor(store.index_of("rvi.sli.w"));
  const Tensor& b = store.tensor(store.index_of("rvi.sli.b"));
  Tensor logits(1, W.cols);
  for (int i = 0; i < W.rows; ++i) {
    const real x = g.val(m).v[i];
    for (int j = 0; j < W.cols; ++j) logits.v[j] += x * W.at(i, j);
  }
  for (int j = 0; j < W.cols; ++j) logits.v[j] += b.v[j];
  CHECK(std::fabs(g.scalar(loss) - oracles::bce_logits(logits, target, true)) < 1e-6);

  // shape mismatch is an explicit error
  std::vector<uint8_t> bad(10, 0);
  CHECK_THROWS_AS(agent.imagination().sli_loss(g, P, m, bad), VlnError);
}

TEST_CASE("sample_imagination: degenerate episode, range contract, uniformity") {
  Rng rng(77);
  // T = 1, t = 0: single candidate, query 0
  const auto s = nn::Imagination::sample(1, 0, 20, rng);
  CHECK(s.t_query == 0);
  CHECK(s.candidate_count == 1);
  CHECK_FALSE(s.future);

  // candidates never exceed min(t+k, T-1)
  for (int trial = 0; trial < 200; ++trial) {
    const int T = 2 + rng.uniform_int(30);
    const int t = rng.uniform_int(T);
    const int k = rng.uniform_int(25);
    const auto smp = nn::Imagination::sample(T, t, k, rng);
    const int hi = std::min(t + k, T - 1);
    CHECK(smp.t_query <= hi);
    CHECK(smp.candidate_count == hi + 1);
    CHECK(smp.future == (smp.t_query > t));
  }

  // empirical uniformity over 10^4 draws: chi-squared below the p=0.01
  // critical value for dof=20 (37.57)
  const int T = 40, t = 10, k = 10;  // support = [0, 20], 21 values
  std::vector<int> counts(21, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto smp = nn::Imagination::sample(T, t, k, rng);
    ++counts[smp.t_query];
  }
  CHECK(oracles::chi2_uniform(counts, 10000) < 37.57);
}

}  // TEST_SUITE
