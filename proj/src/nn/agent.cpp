#include "vln/nn/agent.hpp"

#include <cstring>
#include <fstream>

namespace vln::nn {

LossProfile LossProfile::pretrain(const Config& cfg, bool stage2) {
  LossProfile p;
  p.sem = true;
  p.map = cfg.use_map;
  p.con = cfg.use_con;
  p.kl = cfg.use_kl;
  // the grounding group only enters in the second training stage
  p.pro = stage2 && cfg.use_pro;
  p.pa = stage2 && cfg.use_pa;
  p.sa = stage2 && cfg.use_sa;
  p.gamma = cfg.gamma_inflection;
  return p;
}

LossProfile LossProfile::dagger_ce() {
  LossProfile p;
  p.sem = false;
  p.map = p.con = p.kl = p.pro = p.pa = p.sa = false;
  p.gamma = 0.0;
  return p;
}

Agent::Agent(const Config& cfg, uint64_t param_seed)
    : cfg_(std::make_unique<Config>(cfg)) {
  cfg_->validate();
  encoder_ = std::make_unique<ObservationEncoder>(*cfg_, store_);
  memory_ = std::make_unique<SceneMemory>(*cfg_, store_);
  imagination_ = std::make_unique<Imagination>(*cfg_, store_);
  grounding_ = std::make_unique<Grounding>(*cfg_, store_);
  store_.init_weights(param_seed);
}

Agent::EpisodeLossNodes Agent::build_episode_losses(Graph& g,
                                                    const sim::PreparedEpisode& ep,
                                                    const LossProfile& profile,
                                                    uint64_t sample_seed) const {
  const int T = ep.length();
  if (T < 1) throw VlnError("build_episode_losses: empty episode");
  ParamInjector P(g, store_);
  const real invT = 1.0 / T;

  std::vector<std::pair<int, real>> action_terms, sem_terms, con_terms, kl_terms,
      map_terms, pro_terms, pa_terms, sa_terms;

  int memory = memory_->init_grid(g, P);
  const std::vector<int>& tokens = ep.traj->instruction.tokens;
  const auto& tags = ep.traj->instruction.tags;

  for (int t = 0; t < T; ++t) {
    const auto& step = ep.traj->steps[t];
    const int prev_action =
        t == 0 ? kStartActionId : static_cast<int>(ep.traj->steps[t - 1].expert_action);
    const int o_t = encoder_->encode(g, P, ep.panoramas[t], step.pose, prev_action, t);

    if (profile.sem)
      sem_terms.emplace_back(encoder_->vsp_loss(g, P, o_t, ep.panoramas[t]), invT);

    // view imagination: one pose query per step
    std::vector<int> queries;
    ImaginationSample sample;
    if (profile.con || profile.kl) {
      Rng rng = Rng::derive(sample_seed, {0x52B1ull, static_cast<uint64_t>(t)});
      sample = Imagination::sample(T, t, cfg_->k_future, rng);
      queries.push_back(
          memory_->encode_pose_query(g, P, ep.traj->steps[sample.t_query].pose));
    }

    SceneMemory::UpdateOut upd = memory_->update(g, P, memory, o_t, queries);
    memory = upd.memory;

    if (!queries.empty()) {
      const int v_q = memory_->query_visual(g, P, upd.query_outs[0]);
      if (profile.con) {
        Tensor candidates(sample.candidate_count, cfg_->pano_dim);
        std::copy(ep.pano_embed.v.begin(),
                  ep.pano_embed.v.begin() +
                      static_cast<size_t>(sample.candidate_count) * cfg_->pano_dim,
                  candidates.v.begin());
        con_terms.emplace_back(
            imagination_->contrastive_loss(g, v_q, std::move(candidates),
                                           sample.t_query, cfg_->tau_vi),
            invT);
      }
      if (profile.kl && sample.future) {
        Tensor v_true(1, cfg_->pano_dim);
        std::copy(ep.pano_embed.row_ptr(sample.t_query),
                  ep.pano_embed.row_ptr(sample.t_query) + cfg_->pano_dim,
                  v_true.v.begin());
        kl_terms.emplace_back(imagination_->future_kl(g, P, v_q, v_true), invT);
      }
    }

    if (profile.map)
      map_terms.emplace_back(imagination_->sli_loss(g, P, memory, ep.ego_maps[t]), invT);

    Grounding::FuseOut fused = grounding_->fuse(g, P, memory, tokens);

    Tensor progress_weights;
    if (profile.pro || profile.pa) {
      Grounding::ProgressOut prog = grounding_->progress(g, P, fused.words);
      progress_weights = prog.weights_value;
      if (profile.pro)
        pro_terms.emplace_back(g.mse_to_const(prog.d_hat, ep.d_t[t]), invT);
      if (!profile.pa) progress_weights = Tensor();
    }

    int pooled_selection = -1;
    if (profile.pa || profile.sa) {
      const std::vector<int> selection =
          Grounding::select_attentive_grids(fused.affinity);
      pooled_selection = g.mean_rows(g.gather_rows(memory, selection));
    }
    if (profile.pa) {
      const int pa = grounding_->position_alignment_loss(g, P, pooled_selection,
                                                         tags, progress_weights);
      if (pa >= 0) pa_terms.emplace_back(pa, invT);
    }
    if (profile.sa) {
      const int sa =
          grounding_->semantic_alignment_loss(g, pooled_selection, fused.words, tags);
      if (sa >= 0) sa_terms.emplace_back(sa, invT);
    }

    const int logits =
        grounding_->action_logits(g, P, fused.words, fused.grids, upd.obs_fused);
    const int ce = g.ce_with_logits_index(logits, static_cast<int>(step.expert_action));
    const bool inflection =
        t == 0 || step.expert_action != ep.traj->steps[t - 1].expert_action;
    action_terms.emplace_back(ce, (1.0 + (inflection ? profile.gamma : 0.0)) * invT);
  }

  EpisodeLossNodes out;
  out.steps = T;
  out.kl_steps = static_cast<int>(kl_terms.size());
  auto combine = [&](const std::vector<std::pair<int, real>>& terms) {
    return terms.empty() ? -1 : g.wsum(terms);
  };
  out.action = combine(action_terms);
  out.sem = combine(sem_terms);
  out.con = combine(con_terms);
  out.kl = combine(kl_terms);
  out.map = combine(map_terms);
  out.pro = combine(pro_terms);
  out.pa = combine(pa_terms);
  out.sa = combine(sa_terms);
  return out;
}

std::vector<real> Agent::progress_trace(const sim::PreparedEpisode& ep) const {
  std::vector<real> out;
  RolloutState state = begin_rollout();
  for (int t = 0; t < ep.length(); ++t) {
    const auto& step = ep.traj->steps[t];
    state.prev_action =
        t == 0 ? kStartActionId : static_cast<int>(ep.traj->steps[t - 1].expert_action);
    PolicyOutput po =
        policy_step(state, ep.panoramas[t], step.pose, ep.traj->instruction.tokens);
    out.push_back(po.d_hat);
  }
  return out;
}

Agent::RolloutState Agent::begin_rollout() const {
  Graph g;
  ParamInjector P(g, store_);
  RolloutState state;
  state.memory = g.val(memory_->init_grid(g, P));
  return state;
}

Agent::PolicyOutput Agent::policy_step(RolloutState& state,
                                       const sim::PanoramicObservation& pano,
                                       const Pose& pose,
                                       const std::vector<int>& tokens) const {
  Graph g;
  ParamInjector P(g, store_);
  const int memory_prev = g.leaf(state.memory);
  const int o_t = encoder_->encode(g, P, pano, pose, state.prev_action, state.t);
  SceneMemory::UpdateOut upd = memory_->update(g, P, memory_prev, o_t, {});
  Grounding::FuseOut fused = grounding_->fuse(g, P, upd.memory, tokens);
  Grounding::ProgressOut prog = grounding_->progress(g, P, fused.words);
  const int logits =
      grounding_->action_logits(g, P, fused.words, fused.grids, upd.obs_fused);
  const int probs = g.softmax_masked(logits, kNumActions);

  PolicyOutput out;
  out.action_probs = g.val(probs);
  out.progress_weights = prog.weights_value;
  out.d_hat = g.scalar(prog.d_hat);
  state.memory = g.val(upd.memory);
  state.t += 1;
  return out;
}

// ---------------------------------------------------------------------------
// checkpoint: versioned binary blob (config text + named parameter tensors)
// ---------------------------------------------------------------------------
namespace {
constexpr char kMagic[8] = {'V', 'L', 'N', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_pod(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw VlnError("checkpoint: truncated file");
}
}  // namespace

void Agent::save_checkpoint(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw VlnError("cannot write checkpoint: " + path);
  f.write(kMagic, sizeof(kMagic));
  const std::string cfg_text = cfg_->to_text();
  write_pod(f, static_cast<uint32_t>(cfg_text.size()));
  f.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  write_pod(f, static_cast<uint32_t>(store_.count()));
  for (int i = 0; i < store_.count(); ++i) {
    const auto& e = store_.entry(i);
    write_pod(f, static_cast<uint32_t>(e.name.size()));
    f.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_pod(f, static_cast<uint32_t>(e.w.rows));
    write_pod(f, static_cast<uint32_t>(e.w.cols));
    f.write(reinterpret_cast<const char*>(e.w.v.data()),
            static_cast<std::streamsize>(e.w.v.size() * sizeof(real)));
  }
}

Agent Agent::load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw VlnError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw VlnError("checkpoint: bad magic / unsupported version: " + path);
  uint32_t cfg_len;
  read_pod(f, cfg_len);
  std::string cfg_text(cfg_len, '\0');
  f.read(cfg_text.data(), cfg_len);
  Agent agent(Config::parse(cfg_text), /*param_seed=*/0);
  uint32_t count;
  read_pod(f, count);
  if (static_cast<int>(count) != agent.store_.count())
    throw VlnError("checkpoint: parameter count mismatch");
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len;
    read_pod(f, name_len);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    uint32_t rows, cols;
    read_pod(f, rows);
    read_pod(f, cols);
    Tensor& w = agent.store_.tensor(agent.store_.index_of(name));
    if (w.rows != static_cast<int>(rows) || w.cols != static_cast<int>(cols))
      throw VlnError("checkpoint: shape mismatch for " + name);
    f.read(reinterpret_cast<char*>(w.v.data()),
           static_cast<std::streamsize>(w.v.size() * sizeof(real)));
    if (!f) throw VlnError("checkpoint: truncated tensor data");
  }
  return agent;
}

}  // namespace vln::nn
