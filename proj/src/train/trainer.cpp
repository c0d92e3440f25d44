#include "vln/train/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace vln::train {

Trainer::Trainer(nn::Agent& agent, const Config& cfg) : agent_(&agent), cfg_(&cfg) {}

LossBreakdown Trainer::run_epoch(const std::vector<const sim::PreparedEpisode*>& episodes,
                                 const nn::LossProfile& profile, AdamW& opt,
                                 uint64_t epoch_salt) {
  const int n = static_cast<int>(episodes.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng shuffle_rng = Rng::derive(cfg_->seed, {0x0DE8ull, epoch_salt});
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);

  LossBreakdown epoch_losses;
  ParamStore& store = agent_->params();
  std::vector<Tensor> grads = store.make_grad_sink();

  for (int start = 0; start < n; start += cfg_->batch_size) {
    const int bn = std::min(cfg_->batch_size, n - start);
    std::vector<std::vector<Tensor>> sinks(bn);
    std::vector<LossBreakdown> breakdowns(bn);
    std::string error;

#pragma omp parallel for schedule(dynamic, 1)
    for (int bi = 0; bi < bn; ++bi) {
      try {
        const int ep_index = order[start + bi];
        Graph g;
        nn::Agent::EpisodeLossNodes nodes = agent_->build_episode_losses(
            g, *episodes[ep_index], profile,
            hash_mix(cfg_->seed, hash_mix(epoch_salt, static_cast<uint64_t>(ep_index))));
        const int total = total_loss_node(g, nodes, *cfg_, &breakdowns[bi]);
        sinks[bi] = store.make_grad_sink();
        g.backward(total, sinks[bi]);
      } catch (const std::exception& e) {
#pragma omp critical
        if (error.empty()) error = e.what();
      }
    }
    if (!error.empty()) throw VlnError(error);

    for (auto& g : grads)
      std::fill(g.v.begin(), g.v.end(), 0.0);
    for (int bi = 0; bi < bn; ++bi) {
      ParamStore::accumulate(grads, sinks[bi]);
      epoch_losses.accumulate(breakdowns[bi]);
    }
    ParamStore::scale_grads(grads, 1.0 / bn);
    opt.step(grads, cfg_->grad_clip);
  }
  epoch_losses.finish();
  return epoch_losses;
}

std::vector<EpochRecord> Trainer::pretrain(
    const std::vector<sim::PreparedEpisode>& episodes, const EpochCallback& on_epoch) {
  if (episodes.empty()) throw VlnError("pretrain: empty dataset");
  std::vector<const sim::PreparedEpisode*> ptrs;
  ptrs.reserve(episodes.size());
  for (const auto& e : episodes) ptrs.push_back(&e);

  AdamW opt(agent_->params(), cfg_->lr_pretrain, cfg_->weight_decay);
  const int stage1_epochs =
      static_cast<int>(std::lround(cfg_->epochs * cfg_->stage1_fraction));
  std::vector<EpochRecord> records;
  for (int epoch = 0; epoch < cfg_->epochs; ++epoch) {
    const bool stage2 = epoch >= stage1_epochs;
    const nn::LossProfile profile = nn::LossProfile::pretrain(*cfg_, stage2);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = stage2 ? 2 : 1;
    rec.losses = run_epoch(ptrs, profile, opt, static_cast<uint64_t>(epoch));
    records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return records;
}

sim::Trajectory Trainer::collect_dagger_rollout(const sim::PreparedEpisode& source,
                                                uint64_t rollout_seed) const {
  const sim::SceneSpec& scene = source.scene;
  sim::ExpertPolicy expert(scene, scene.goal.x, scene.goal.y, cfg_->success_radius_m);
  Rng rng = Rng::derive(rollout_seed, {0xDA66ull});

  sim::Trajectory traj;
  traj.scene_seed = source.traj->scene_seed;
  traj.episode_index = source.traj->episode_index;
  traj.instruction_id = source.traj->instruction_id;
  traj.instruction = source.traj->instruction;
  traj.goal = source.traj->goal;
  traj.shortest_length = source.traj->shortest_length;

  nn::Agent::RolloutState state = agent_->begin_rollout();
  Pose pose = source.traj->steps.front().pose;
  for (int t = 0; t < cfg_->max_episode_steps; ++t) {
    const sim::PanoramicObservation pano = sim::render_panorama(scene, pose, *cfg_);
    nn::Agent::PolicyOutput out =
        agent_->policy_step(state, pano, pose, traj.instruction.tokens);

    // pseudo label: the expert's action at the visited state
    traj.steps.push_back({pose, expert.next_action(pose)});

    // sample the next action from the learner's own distribution
    const real u = rng.uniform();
    real acc = 0.0;
    int choice = kNumActions - 1;
    for (int a = 0; a < kNumActions; ++a) {
      acc += out.action_probs.v[a];
      if (u < acc) {
        choice = a;
        break;
      }
    }
    state.prev_action = choice;
    if (static_cast<Action>(choice) == Action::Stop) break;
    pose = sim::step(scene, pose, static_cast<Action>(choice)).pose;
  }
  return traj;
}

std::vector<DaggerRecord> Trainer::dagger(
    const std::vector<sim::PreparedEpisode>& bc_episodes, const RoundCallback& on_round) {
  if (bc_episodes.empty()) throw VlnError("dagger: empty base dataset");
  AdamW opt(agent_->params(), cfg_->lr_finetune, cfg_->weight_decay);
  const nn::LossProfile profile = nn::LossProfile::dagger_ce();

  std::vector<sim::PreparedEpisode> aggregated;  // grows across rounds
  std::vector<DaggerRecord> records;
  for (int round = 0; round < cfg_->dagger_rounds; ++round) {
    // roll out the current policy and relabel every visited state
    const int n_roll = cfg_->dagger_episodes_per_round;
    std::vector<sim::Trajectory> rollouts(n_roll);
    std::string error;
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n_roll; ++i) {
      try {
        Rng pick = Rng::derive(cfg_->seed, {0xDA99ull, static_cast<uint64_t>(round),
                                            static_cast<uint64_t>(i)});
        const auto& source =
            bc_episodes[pick.uniform_int(static_cast<int>(bc_episodes.size()))];
        rollouts[i] = collect_dagger_rollout(
            source, hash_mix(cfg_->seed, hash_mix(round, 0x1000ull + i)));
      } catch (const std::exception& e) {
#pragma omp critical
        if (error.empty()) error = e.what();
      }
    }
    if (!error.empty()) throw VlnError(error);
    for (auto& t : rollouts) aggregated.push_back(sim::prepare_episode(t, *cfg_));

    std::vector<const sim::PreparedEpisode*> ptrs;
    for (const auto& e : bc_episodes) ptrs.push_back(&e);
    for (const auto& e : aggregated) ptrs.push_back(&e);

    LossBreakdown last;
    for (int epoch = 0; epoch < cfg_->dagger_epochs_per_round; ++epoch)
      last = run_epoch(ptrs, profile, opt,
                       0xF17Eull + static_cast<uint64_t>(round) * 131 + epoch);

    DaggerRecord rec;
    rec.round = round;
    rec.mean_ce = last.action;
    rec.aggregated_episodes = static_cast<int>(aggregated.size());
    records.push_back(rec);
    if (on_round) on_round(rec);
  }
  return records;
}

}  // namespace vln::train
