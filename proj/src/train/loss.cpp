#include "vln/train/loss.hpp"

#include <cmath>

namespace vln::train {

void LossBreakdown::accumulate(const LossBreakdown& other) {
  action += other.action;
  con += other.con;
  kl += other.kl;
  map += other.map;
  sem += other.sem;
  pro += other.pro;
  pa += other.pa;
  sa += other.sa;
  total += other.total;
  episodes += other.episodes;
}

void LossBreakdown::finish() {
  if (episodes == 0) return;
  const real inv = 1.0 / episodes;
  action *= inv;
  con *= inv;
  kl *= inv;
  map *= inv;
  sem *= inv;
  pro *= inv;
  pa *= inv;
  sa *= inv;
  total *= inv;
  episodes = 1;
}

namespace {
void check_component(real v, const char* name) {
  if (std::isnan(v))
    throw VlnError(std::string("total_loss: component ") + name + " is NaN");
}
}  // namespace

int total_loss_node(Graph& g, const nn::Agent::EpisodeLossNodes& nodes,
                    const Config& cfg, LossBreakdown* breakdown) {
  std::vector<std::pair<int, real>> terms;
  LossBreakdown b;
  b.episodes = 1;
  auto take = [&](int node, real weight, real* slot, const char* name) {
    if (node < 0) return;
    const real v = g.scalar(node);
    check_component(v, name);
    *slot = v;
    if (weight != 0.0) terms.emplace_back(node, weight);
  };
  take(nodes.action, 1.0, &b.action, "L_Action");
  take(nodes.con, cfg.beta, &b.con, "L_Con");
  take(nodes.kl, cfg.beta * cfg.beta_future, &b.kl, "L_KL");
  take(nodes.map, cfg.beta, &b.map, "L_Map");
  take(nodes.sem, cfg.beta, &b.sem, "L_Sem");
  take(nodes.pro, cfg.lambda, &b.pro, "L_Pro");
  take(nodes.pa, cfg.lambda, &b.pa, "L_PA");
  take(nodes.sa, cfg.lambda, &b.sa, "L_SA");
  if (terms.empty()) throw VlnError("total_loss: no loss terms");
  const int total = g.wsum(terms);
  b.total = g.scalar(total);
  check_component(b.total, "L_total");
  if (breakdown) *breakdown = b;
  return total;
}

real total_loss_value(const LossBreakdown& c, const Config& cfg) {
  const real vf = c.con + cfg.beta_future * c.kl;
  return c.action + cfg.beta * (vf + c.map + c.sem) +
         cfg.lambda * (c.pro + c.pa + c.sa);
}

real bc_loss(const std::vector<Tensor>& logits, const std::vector<Action>& expert,
             real gamma) {
  if (logits.size() != expert.size() || logits.empty())
    throw VlnError("bc_loss: misaligned sequences");
  real total = 0.0;
  for (size_t t = 0; t < logits.size(); ++t) {
    const Tensor& row = logits[t];
    real mx = -1e300;
    for (real e : row.v) mx = std::max(mx, e);
    real denom = 0.0;
    for (real e : row.v) denom += std::exp(e - mx);
    const real logp = row.v[static_cast<int>(expert[t])] - (mx + std::log(denom));
    const bool inflection = t == 0 || expert[t] != expert[t - 1];
    total += (1.0 + (inflection ? gamma : 0.0)) * -logp;
  }
  return total / static_cast<real>(logits.size());
}

}  // namespace vln::train
