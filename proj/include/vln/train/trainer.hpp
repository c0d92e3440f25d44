#pragma once

#include <functional>
#include <vector>

#include "vln/train/loss.hpp"

namespace vln::train {

struct EpochRecord {
  int epoch = 0;
  int stage = 1;
  LossBreakdown losses;
};

struct DaggerRecord {
  int round = 0;
  real mean_ce = 0.0;
  int aggregated_episodes = 0;
};

// Behavior-cloning pre-training (two-stage composite loss) and DAgger
// fine-tuning. Batch episodes are processed by parallel workers; gradient
// merging is serialized in episode order, so traces are independent of the
// thread count.
class Trainer {
 public:
  Trainer(nn::Agent& agent, const Config& cfg);

  using EpochCallback = std::function<void(const EpochRecord&)>;
  std::vector<EpochRecord> pretrain(const std::vector<sim::PreparedEpisode>& episodes,
                                    const EpochCallback& on_epoch = nullptr);

  using RoundCallback = std::function<void(const DaggerRecord&)>;
  std::vector<DaggerRecord> dagger(const std::vector<sim::PreparedEpisode>& bc_episodes,
                                   const RoundCallback& on_round = nullptr);

  // One learner rollout with pseudo labels at every visited state.
  sim::Trajectory collect_dagger_rollout(const sim::PreparedEpisode& source,
                                         uint64_t rollout_seed) const;

 private:
  LossBreakdown run_epoch(const std::vector<const sim::PreparedEpisode*>& episodes,
                          const nn::LossProfile& profile, AdamW& opt,
                          uint64_t epoch_salt);

  nn::Agent* agent_;
  const Config* cfg_;
};

}  // namespace vln::train
