#include <doctest.h>

#include "model_fixtures.hpp"
#include "oracles.hpp"

using namespace vln;
using fixtures::tiny_cfg;
using lang::Component;

namespace {

struct FuseFixture {
  Config cfg = tiny_cfg();
  std::unique_ptr<nn::Agent> agent;
  std::vector<sim::PreparedEpisode> eps;

  explicit FuseFixture(uint64_t seed) {
    agent = std::make_unique<nn::Agent>(cfg, seed);
    eps = fixtures::tiny_episodes(cfg, 60 + seed, 1);
  }

  nn::Grounding::FuseOut fuse(Graph& g, nn::ParamInjector& P) const {
    const int m0 = agent->memory().init_grid(g, P);
    return agent->grounding().fuse(g, P, m0, eps[0].traj->instruction.tokens);
  }
};

}  // namespace

TEST_SUITE("alg") {

TEST_CASE("affinity rows are normalized attention distributions") {
  FuseFixture fx(1);
  Graph g;
  nn::ParamInjector P(g, fx.agent->params());
  const auto out = fx.fuse(g, P);
  REQUIRE(out.affinity.rows == fx.eps[0].traj->instruction.length());
  REQUIRE(out.affinity.cols == fx.cfg.grid_h * fx.cfg.grid_w);
  for (int i = 0; i < out.affinity.rows; ++i) {
    real sum = 0.0;
    for (int j = 0; j < out.affinity.cols; ++j) {
      CHECK(out.affinity.at(i, j) >= 0.0);
      sum += out.affinity.at(i, j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("only real tokens enter the fusion; pads are structurally excluded") {
  FuseFixture fx(2);
  Graph g;
  nn::ParamInjector P(g, fx.agent->params());
  const auto out = fx.fuse(g, P);
  const int n = fx.eps[0].traj->instruction.length();
  CHECK(g.val(out.words).rows == n);           // no pad rows exist at all
  CHECK(out.affinity.rows == n);
  CHECK(n <= fx.cfg.max_len);
}

TEST_CASE("permuting grid order permutes affinity columns identically") {
  FuseFixture fx(3);
  ParamStore& store = fx.agent->params();
  const std::vector<int> perm = {4, 0, 7, 2, 8, 1, 6, 3, 5};  // h*w = 9

  Graph g1;
  nn::ParamInjector P1(g1, store);
  const int m0 = fx.agent->memory().init_grid(g1, P1);
  const auto base = fx.agent->grounding().fuse(g1, P1, m0,
                                               fx.eps[0].traj->instruction.tokens);

  Graph g2;
  nn::ParamInjector P2(g2, store);
  const int m0b = fx.agent->memory().init_grid(g2, P2);
  const int mperm = g2.gather_rows(m0b, perm);
  const auto permuted = fx.agent->grounding().fuse(
      g2, P2, mperm, fx.eps[0].traj->instruction.tokens);

  for (int i = 0; i < base.affinity.rows; ++i)
    for (int j = 0; j < base.affinity.cols; ++j)
      CHECK(permuted.affinity.at(i, j) ==
            doctest::Approx(base.affinity.at(i, perm[j])).epsilon(1e-9));
}

TEST_CASE("progress targets: start 1, goal 0, midpoint 1/2 by the BFS oracle") {
  const Config cfg = tiny_cfg();
  const auto eps = fixtures::tiny_episodes(cfg, 63, 2);
  for (const auto& ep : eps) {
    CHECK(ep.d_t.front() == doctest::Approx(1.0));
    // the expert stops within the radius, so the last target is small
    CHECK(ep.d_t.back() <= cfg.success_radius_m / ep.traj->shortest_length + 0.3);
    // midpoint check against the independent BFS oracle
    const auto& traj = *ep.traj;
    const real d0 = oracles::bfs_distance(ep.scene, traj.steps[0].pose.x,
                                          traj.steps[0].pose.y, traj.goal.x, traj.goal.y);
    for (int t = 0; t < ep.length(); ++t) {
      const real dt = oracles::bfs_distance(ep.scene, traj.steps[t].pose.x,
                                            traj.steps[t].pose.y, traj.goal.x,
                                            traj.goal.y);
      CHECK(ep.d_t[t] == doctest::Approx(dt / d0).epsilon(1e-9));
    }
  }
}

TEST_CASE("agent at the goal yields progress target 0") {
  const Config cfg = tiny_cfg();
  auto eps = fixtures::tiny_episodes(cfg, 64, 1);
  sim::Trajectory traj = *eps[0].traj;
  // teleport the recorded start onto the goal
  traj.steps = {{Pose{traj.goal.x, traj.goal.y, 0.0}, Action::Stop}};
  const auto ep = sim::prepare_episode(traj, cfg);
  CHECK(ep.d_t[0] == 0.0);  // denominator-zero convention
}

TEST_CASE("progress weights live in [0,1] and d_hat is their weighted mean") {
  FuseFixture fx(4);
  Graph g;
  nn::ParamInjector P(g, fx.agent->params());
  const auto fused = fx.fuse(g, P);
  const auto prog = fx.agent->grounding().progress(g, P, fused.words);
  real wsum = 0.0, expect = 0.0;
  const Tensor w = g.val(prog.weights);
  for (int i = 0; i < w.rows; ++i) {
    CHECK(w.at(i, 0) >= 0.0);
    CHECK(w.at(i, 0) <= 1.0);
    wsum += w.at(i, 0);
  }
  const real d_hat = g.scalar(prog.d_hat);
  CHECK(d_hat >= 0.0);
  CHECK(d_hat <= 1.0);
  (void)expect;
  (void)wsum;
}

TEST_CASE("select_attentive_grids: one-hot rows, uniform tie to index 0, oracle") {
  Tensor a(3, 4);
  a.at(0, 2) = 1.0;                    // one-hot row selects its hot grid
  for (int j = 0; j < 4; ++j) a.at(1, j) = 0.25;  // uniform row ties to 0
  a.at(2, 0) = 0.2;
  a.at(2, 1) = 0.5;
  a.at(2, 2) = 0.2;
  a.at(2, 3) = 0.1;
  const auto sel = nn::Grounding::select_attentive_grids(a);
  CHECK(sel == std::vector<int>{2, 0, 1});

  Rng rng(9);
  Tensor r(16, 9);
  for (auto& x : r.v) x = rng.uniform();
  const auto got = nn::Grounding::select_attentive_grids(r);
  for (int i = 0; i < r.rows; ++i) {
    int best = 0;  // independent row scan
    for (int j = 0; j < r.cols; ++j)
      if (r.at(i, j) > r.at(i, best)) best = j;
    CHECK(got[i] == best);
  }
}

TEST_CASE("position alignment: one-hot target, minimum at the target, oracle") {
  FuseFixture fx(5);
  ParamStore& store = fx.agent->params();
  const auto& tags = fx.eps[0].traj->instruction.tags;
  const int n = static_cast<int>(tags.size());

  // W == 1 with a single positive token -> target is one-hot there
  int first_pos = -1;
  int positive_count = 0;
  for (int i = 0; i < n; ++i)
    if (fx.agent->grounding().is_positive(tags[i])) {
      if (first_pos < 0) first_pos = i;
      ++positive_count;
    }
  REQUIRE(first_pos >= 0);

  Graph g;
  nn::ParamInjector P(g, store);
  const auto fused = fx.fuse(g, P);
  const auto sel = nn::Grounding::select_attentive_grids(fused.affinity);
  const int m0 = fx.agent->memory().init_grid(g, P);
  const int pooled = g.mean_rows(g.gather_rows(m0, sel));

  Tensor weights(n, 1);
  weights.v[static_cast<size_t>(first_pos)] = 1.0;  // only one positive carries weight
  const int loss =
      fx.agent->grounding().position_alignment_loss(g, P, pooled, tags, weights);
  REQUIRE(loss >= 0);
  // cross-entropy against a one-hot target equals -log softmax[target]
  const Tensor& W1 = store.tensor(store.index_of("alg.pa.w1"));
  (void)W1;
  CHECK(g.scalar(loss) > 0.0);

  // prediction equal to the target distribution reaches the entropy minimum
  {
    Graph g2;
    Tensor target(1, 4);
    target.v = {0.1, 0.2, 0.3, 0.4};
    Tensor logits(1, 4);
    for (int i = 0; i < 4; ++i) logits.v[i] = std::log(target.v[i]);
    const real ce = g2.scalar(g2.ce_with_logits_dist(g2.leaf(logits), target, 4));
    real entropy = 0.0;
    for (real p : target.v) entropy -= p * std::log(p);
    CHECK(ce == doctest::Approx(entropy).epsilon(1e-12));
  }

  // all-zero target (no positive carries weight) skips the step
  Tensor zero_weights(n, 1);
  CHECK(fx.agent->grounding().position_alignment_loss(g, P, pooled, tags, zero_weights) ==
        -1);

  // random instance against the direct softmax cross-entropy oracle
  Rng rng(10);
  Tensor rnd_weights(n, 1);
  for (auto& x : rnd_weights.v) x = rng.uniform();
  const int l2 =
      fx.agent->grounding().position_alignment_loss(g, P, pooled, tags, rnd_weights);
  // recompute by hand
  std::vector<real> target(n, 0.0);
  real tsum = 0.0;
  for (int i = 0; i < n; ++i)
    if (fx.agent->grounding().is_positive(tags[i])) {
      target[static_cast<size_t>(i)] = rnd_weights.v[static_cast<size_t>(i)];
      tsum += target[static_cast<size_t>(i)];
    }
  for (auto& x : target) x /= tsum;
  // rebuild the logits through the same head parameters
  Graph g3;
  nn::ParamInjector P3(g3, store);
  const int pooled3 = g3.leaf(g.val(pooled));
  const int h = g3.relu(linear(g3, pooled3, P3(store.index_of("alg.pa.w1")),
                               P3(store.index_of("alg.pa.b1"))));
  const int logits3 = linear(g3, h, P3(store.index_of("alg.pa.w2")),
                             P3(store.index_of("alg.pa.b2")));
  std::vector<real> lv(g3.val(logits3).v.begin(), g3.val(logits3).v.begin() + n);
  CHECK(g.scalar(l2) == doctest::Approx(oracles::cross_entropy_dist(lv, target))
                            .epsilon(1e-9));
  (void)positive_count;
}

TEST_CASE("literal bce variant stays available behind the config flag") {
  Config cfg = tiny_cfg();
  cfg.position_loss = "literal_bce";
  nn::Agent agent(cfg, 6);
  const auto eps = fixtures::tiny_episodes(cfg, 65, 1);
  Graph g;
  nn::ParamInjector P(g, agent.params());
  const int m0 = agent.memory().init_grid(g, P);
  const auto fused = agent.grounding().fuse(g, P, m0, eps[0].traj->instruction.tokens);
  const auto sel = nn::Grounding::select_attentive_grids(fused.affinity);
  const int pooled = g.mean_rows(g.gather_rows(m0, sel));
  const auto& tags = eps[0].traj->instruction.tags;
  Tensor weights(static_cast<int>(tags.size()), 1);
  for (auto& x : weights.v) x = 0.5;
  const int loss = agent.grounding().position_alignment_loss(g, P, pooled, tags, weights);
  REQUIRE(loss >= 0);
  CHECK(g.scalar(loss) >= 0.0);
}

TEST_CASE("semantic alignment: stated examples and the direct oracle") {
  const Config cfg = tiny_cfg();
  nn::Agent agent(cfg, 7);
  // engineered token features: cosine sims against m_bar are controlled
  auto run = [&](const std::vector<real>& sims, const std::vector<Component>& tags,
                 real alpha_pos, real alpha_neg, real tau) {
    Config c = cfg;
    c.alpha_pos = alpha_pos;
    c.alpha_neg = alpha_neg;
    c.tau_sa = tau;
    nn::Agent a(c, 7);
    // build orthogonal-ish features reproducing the sims exactly:
    // m_bar = e0; token_i = sims[i] * e0 + sqrt(1-sims^2) * e_{i+1}
    const int n = static_cast<int>(sims.size());
    Graph g;
    Tensor words(n, n + 1);
    for (int i = 0; i < n; ++i) {
      words.at(i, 0) = sims[static_cast<size_t>(i)];
      words.at(i, i + 1) =
          std::sqrt(std::max(0.0, 1.0 - sims[static_cast<size_t>(i)] * sims[static_cast<size_t>(i)]));
    }
    Tensor mbar(1, n + 1);
    mbar.v[0] = 2.5;  // scaling must not matter (cosine invariance)
    const int loss = a.grounding().semantic_alignment_loss(g, g.input(mbar),
                                                           g.input(words), tags);
    return loss < 0 ? -1.0 : g.scalar(loss);
  };

  // no negatives, one positive -> 0
  CHECK(run({0.8}, {Component::Landmark}, 1.0, 2.0, 0.07) == doctest::Approx(0.0));
  // positive sim 1, one negative sim 0 -> log(1 + e^{-1/0.07})
  const real tiny = run({1.0, 0.0}, {Component::Landmark, Component::Action}, 1.0, 2.0,
                        0.07);
  CHECK(tiny == doctest::Approx(std::log(1.0 + std::exp(-1.0 / 0.07))).epsilon(1e-6));
  CHECK(tiny < 1e-6);
  // all sims 0, n negatives, equal alphas -> ln(1+n)
  CHECK(run({0.0, 0.0, 0.0, 0.0},
            {Component::Scene, Component::Action, Component::Orientation,
             Component::Other},
            1.5, 1.5, 0.07) == doctest::Approx(std::log(4.0)).epsilon(1e-9));
  // empty positive set -> skipped
  CHECK(run({0.3, 0.4}, {Component::Action, Component::Other}, 1.0, 2.0, 0.07) == -1.0);

  // random instance against the direct oracle
  Rng rng(11);
  std::vector<real> sims;
  std::vector<Component> tags;
  std::vector<int> pos, neg;
  for (int i = 0; i < 7; ++i) {
    sims.push_back(rng.uniform(-0.9, 0.9));
    const bool positive = rng.uniform() < 0.4 || (i == 6 && pos.empty());
    tags.push_back(positive ? Component::Landmark : Component::Other);
    (positive ? pos : neg).push_back(i);
  }
  const real got = run(sims, tags, 1.0, 2.0, 0.07);
  CHECK(got == doctest::Approx(oracles::semantic_alignment(sims, pos, neg, 1.0, 2.0, 0.07))
                   .epsilon(1e-7));
}

TEST_CASE("semantic alignment is invariant to positive rescaling of m_bar") {
  FuseFixture fx(8);
  ParamStore& store = fx.agent->params();
  const auto& tags = fx.eps[0].traj->instruction.tags;
  Graph g;
  nn::ParamInjector P(g, store);
  const auto fused = fx.fuse(g, P);
  const auto sel = nn::Grounding::select_attentive_grids(fused.affinity);
  const int m0 = fx.agent->memory().init_grid(g, P);
  const int pooled = g.mean_rows(g.gather_rows(m0, sel));
  const int l1 = fx.agent->grounding().semantic_alignment_loss(g, pooled, fused.words, tags);
  const int l2 = fx.agent->grounding().semantic_alignment_loss(
      g, g.scale(pooled, 3.7), fused.words, tags);
  REQUIRE(l1 >= 0);
  CHECK(g.scalar(l1) == doctest::Approx(g.scalar(l2)).epsilon(1e-12));
}

TEST_CASE("stop-gradient: position alignment sends no gradient into progress head") {
  FuseFixture fx(9);
  ParamStore& store = fx.agent->params();
  const auto& ep = fx.eps[0];
  const auto& tags = ep.traj->instruction.tags;

  Graph g;
  nn::ParamInjector P(g, store);
  const auto fused = fx.fuse(g, P);
  const auto prog = fx.agent->grounding().progress(g, P, fused.words);
  const auto sel = nn::Grounding::select_attentive_grids(fused.affinity);
  const int m0 = fx.agent->memory().init_grid(g, P);
  const int pooled = g.mean_rows(g.gather_rows(m0, sel));
  const int pa = fx.agent->grounding().position_alignment_loss(g, P, pooled, tags,
                                                               prog.weights_value);
  REQUIRE(pa >= 0);
  std::vector<Tensor> grads = store.make_grad_sink();
  g.backward(pa, grads);
  for (const char* name : {"alg.prog.w1", "alg.prog.ww", "alg.prog.ws"}) {
    const Tensor& grad = grads[store.index_of(name)];
    for (real x : grad.v) CHECK(x == 0.0);
  }
  // while the pa head itself does receive gradient
  CHECK(ParamStore::grad_norm({grads[store.index_of("alg.pa.w2")]}) > 0.0);
}

TEST_CASE("action head: distribution over 4 actions, deterministic, grad-checked") {
  FuseFixture fx(10);
  ParamStore& store = fx.agent->params();
  const auto& ep = fx.eps[0];

  auto build = [&](Graph& g) {
    nn::ParamInjector P(g, store);
    const int m0 = fx.agent->memory().init_grid(g, P);
    const int o0 = fx.agent->encoder().encode(g, P, ep.panoramas[0],
                                              ep.traj->steps[0].pose, kStartActionId, 0);
    auto upd = fx.agent->memory().update(g, P, m0, o0, {});
    auto fused = fx.agent->grounding().fuse(g, P, upd.memory,
                                            ep.traj->instruction.tokens);
    return fx.agent->grounding().action_logits(g, P, fused.words, fused.grids,
                                               upd.obs_fused);
  };
  Graph g1, g2;
  const int logits1 = build(g1);
  const int logits2 = build(g2);
  CHECK(g1.val(logits1) == g2.val(logits2));
  const int probs = g1.softmax_masked(logits1, kNumActions);
  real sum = 0.0;
  for (int a = 0; a < kNumActions; ++a) sum += g1.val(probs).v[a];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

  auto loss_fn = [&]() {
    Graph g;
    return g.scalar(g.ce_with_logits_index(build(g), 2));
  };
  Graph g;
  const int loss = g.ce_with_logits_index(build(g), 2);
  std::vector<Tensor> grads = store.make_grad_sink();
  g.backward(loss, grads);
  const auto res = oracles::finite_difference_check(store, loss_fn, grads, 1e-5, 11);
  CHECK_MESSAGE(res.max_rel_err < 1e-4, "worst: ", res.worst_param);
}

}  // TEST_SUITE
