#pragma once

#include "vln/nn/agent.hpp"

namespace vln::train {

// Per-batch component means plus the weighted total:
//   L_total = L_Action + beta (L_VF + L_Map + L_Sem) + lambda (L_Pro + L_PA + L_SA)
// with L_VF = L_Con + beta_future * L_KL. L_KL stores the raw gated KL mean.
struct LossBreakdown {
  real action = 0, con = 0, kl = 0, map = 0, sem = 0, pro = 0, pa = 0, sa = 0;
  real total = 0;
  int episodes = 0;

  void accumulate(const LossBreakdown& other);
  void finish();  // divide sums by episode count
};

// Builds the total-loss node for one episode and records component values.
// Throws naming the offending component when any value is NaN.
int total_loss_node(Graph& g, const nn::Agent::EpisodeLossNodes& nodes,
                    const Config& cfg, LossBreakdown* breakdown);

// Scalar weighted-total from component values (same arithmetic as the node
// version; used for traces and the loss bookkeeping tests).
real total_loss_value(const LossBreakdown& components, const Config& cfg);

// Inflection-weighted behavior cloning loss over a sequence of action logits
// (each 1 x 4). The first action always counts as an inflection.
real bc_loss(const std::vector<Tensor>& logits, const std::vector<Action>& expert,
             real gamma);

}  // namespace vln::train
