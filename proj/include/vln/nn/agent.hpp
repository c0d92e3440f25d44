#pragma once

#include <memory>
#include <string>

#include "vln/nn/alg.hpp"
#include "vln/nn/encoder.hpp"
#include "vln/nn/isr.hpp"
#include "vln/nn/rvi.hpp"
#include "vln/sim/dataset.hpp"

namespace vln::nn {

// Which loss terms an episode graph should build. L_Action is always on;
// L_Sem accompanies it in every profile (the observation encoder is trained
// in all ablations). DAgger fine-tuning uses the plain cross-entropy profile.
struct LossProfile {
  bool sem = true;
  bool map = true, con = true, kl = true;
  bool pro = true, pa = true, sa = true;
  real gamma = 2.0;  // inflection weight; 0 disables inflection upweighting

  static LossProfile pretrain(const Config& cfg, bool stage2);
  static LossProfile dagger_ce();
};

class Agent {
 public:
  Agent(const Config& cfg, uint64_t param_seed);

  const Config& config() const { return *cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  const ObservationEncoder& encoder() const { return *encoder_; }
  const SceneMemory& memory() const { return *memory_; }
  const Imagination& imagination() const { return *imagination_; }
  const Grounding& grounding() const { return *grounding_; }

  // Scalar loss nodes for one expert episode (teacher forced, full BPTT).
  // Nodes are -1 when the profile switches the term off or every step
  // skipped it. kl_steps counts future-query steps (beta gating).
  struct EpisodeLossNodes {
    int action = -1, sem = -1, con = -1, kl = -1, map = -1;
    int pro = -1, pa = -1, sa = -1;
    int steps = 0;
    int kl_steps = 0;
  };
  EpisodeLossNodes build_episode_losses(Graph& g, const sim::PreparedEpisode& ep,
                                        const LossProfile& profile,
                                        uint64_t sample_seed) const;

  // Teacher-forced progress predictions along an episode (one per step).
  std::vector<real> progress_trace(const sim::PreparedEpisode& ep) const;

  // --- stateless rollout interface -----------------------------------------
  struct RolloutState {
    Tensor memory;            // hw x d, detached between steps
    int t = 0;
    int prev_action = kStartActionId;
  };
  RolloutState begin_rollout() const;

  struct PolicyOutput {
    Tensor action_probs;      // 1 x 4
    Tensor progress_weights;  // n x 1
    real d_hat = 0.0;
  };
  PolicyOutput policy_step(RolloutState& state, const sim::PanoramicObservation& pano,
                           const Pose& pose, const std::vector<int>& tokens) const;

  // --- persistence ----------------------------------------------------------
  void save_checkpoint(const std::string& path) const;
  static Agent load_checkpoint(const std::string& path);

 private:
  // heap-held so submodule back-pointers survive moves
  std::unique_ptr<Config> cfg_;
  ParamStore store_;
  std::unique_ptr<ObservationEncoder> encoder_;
  std::unique_ptr<SceneMemory> memory_;
  std::unique_ptr<Imagination> imagination_;
  std::unique_ptr<Grounding> grounding_;
};

}  // namespace vln::nn
