#include "vln/eval/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

namespace vln::eval {

namespace fs = std::filesystem;
using nlohmann::json;

RunDir RunDir::create(const std::string& root) {
  RunDir dir{root};
  fs::create_directories(dir.checkpoints());
  fs::create_directories(dir.traces());
  fs::create_directories(dir.results());
  fs::create_directories(dir.plots());
  return dir;
}

void write_manifest(const RunDir& dir, const Config& cfg, const std::string& command,
                    const std::vector<uint64_t>& train_scene_seeds,
                    const std::vector<uint64_t>& eval_scene_seeds) {
  cfg.save(dir.root + "/config.snapshot");
  json m;
  m["command"] = command;
  m["config_hash"] = cfg.hash();
  m["seed"] = cfg.seed;
  m["success_radius_m"] = cfg.success_radius_m;
  m["max_steps"] = cfg.max_steps;
  m["train_scene_seeds"] = train_scene_seeds;
  m["eval_scene_seeds"] = eval_scene_seeds;
  std::ofstream f(dir.root + "/manifest.json");
  if (!f) throw VlnError("cannot write manifest under " + dir.root);
  f << m.dump(2) << "\n";
}

namespace {

EpisodeResult rollout_episode(const nn::Agent& agent, const sim::Trajectory& traj,
                              const Config& cfg, const EvalOptions& opts,
                              uint64_t episode_salt, Tensor* weights_out) {
  sim::SceneSpec scene = sim::generate_scene(traj.scene_seed, cfg);
  scene.start = traj.steps.front().pose;
  scene.goal = traj.goal;
  sim::DistanceField goal_field(scene, scene.goal.x, scene.goal.y, false);

  EpisodeResult res;
  res.shortest_length = traj.shortest_length;

  nn::Agent::RolloutState state = agent.begin_rollout();
  Pose pose = scene.start;
  real best_dist = goal_field.distance_at(pose.x, pose.y);
  Rng rng = Rng::derive(opts.sample_seed, {episode_salt});
  const int n_tokens = traj.instruction.length();
  if (weights_out) *weights_out = Tensor(0, n_tokens);

  bool stopped = false;
  for (int t = 0; t < cfg.max_steps; ++t) {
    const sim::PanoramicObservation pano = sim::render_panorama(scene, pose, cfg);
    nn::Agent::PolicyOutput out =
        agent.policy_step(state, pano, pose, traj.instruction.tokens);

    if (weights_out) {
      Tensor& w = *weights_out;
      w.v.insert(w.v.end(), out.progress_weights.v.begin(), out.progress_weights.v.end());
      w.rows += 1;
    }

    int choice = 0;
    if (opts.sample) {
      const real u = rng.uniform();
      real acc = 0.0;
      choice = kNumActions - 1;
      for (int a = 0; a < kNumActions; ++a) {
        acc += out.action_probs.v[a];
        if (u < acc) {
          choice = a;
          break;
        }
      }
    } else {
      for (int a = 1; a < kNumActions; ++a)
        if (out.action_probs.v[a] > out.action_probs.v[choice]) choice = a;
    }
    state.prev_action = choice;
    ++res.steps;
    if (static_cast<Action>(choice) == Action::Stop) {
      stopped = true;
      break;
    }
    const Pose before = pose;
    pose = sim::step(scene, pose, static_cast<Action>(choice)).pose;
    res.path_length += std::hypot(pose.x - before.x, pose.y - before.y);
    best_dist = std::min(best_dist, goal_field.distance_at(pose.x, pose.y));
  }
  res.final_distance = goal_field.distance_at(pose.x, pose.y);
  res.oracle_success = best_dist <= cfg.success_radius_m;
  res.success = stopped && res.final_distance <= cfg.success_radius_m;
  return res;
}

}  // namespace

EvalOutput evaluate(const nn::Agent& agent, const sim::Dataset& val,
                    const std::vector<uint64_t>& train_scene_seeds,
                    const EvalOptions& opts) {
  const std::set<uint64_t> train_set(train_scene_seeds.begin(), train_scene_seeds.end());
  for (uint64_t s : val.scene_seeds)
    if (train_set.count(s))
      throw VlnError("evaluate: validation scene " + std::to_string(s) +
                     " overlaps the training seeds (val-unseen contract)");
  if (!sim::sim_compatible(val.config, agent.config()))
    throw VlnError("evaluate: dataset simulator settings do not match the checkpoint");

  const Config& cfg = agent.config();
  const int n = static_cast<int>(val.episodes.size());
  EvalOutput out;
  out.episodes.resize(n);
  std::vector<Tensor> weights(std::min(n, opts.dump_weight_episodes));
  std::string error;

#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      Tensor* w = i < opts.dump_weight_episodes ? &weights[i] : nullptr;
      out.episodes[i] = rollout_episode(agent, val.episodes[i], cfg, opts,
                                        static_cast<uint64_t>(i), w);
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw VlnError(error);

  for (size_t i = 0; i < weights.size(); ++i) {
    if (opts.dump_dir.empty()) break;
    // rows = timesteps, columns = token positions
    std::ofstream f(opts.dump_dir + "/weights_ep" + std::to_string(i) + ".csv");
    f << "step";
    for (int c = 0; c < weights[i].cols; ++c) f << ",tok" << c;
    f << "\n";
    f.precision(17);
    for (int r = 0; r < weights[i].rows; ++r) {
      f << r;
      for (int c = 0; c < weights[i].cols; ++c) f << "," << weights[i].at(r, c);
      f << "\n";
    }
  }
  out.summary = summarize(out.episodes);
  return out;
}

real progress_spearman(const nn::Agent& agent,
                       const std::vector<sim::PreparedEpisode>& episodes) {
  std::vector<real> pred, truth;
  for (const auto& ep : episodes) {
    const std::vector<real> trace = agent.progress_trace(ep);
    for (int t = 0; t < ep.length(); ++t) {
      pred.push_back(trace[t]);
      truth.push_back(ep.d_t[t]);
    }
  }
  return spearman(pred, truth);
}

std::vector<sim::PreparedEpisode> prepare_all(const sim::Dataset& ds, const Config& cfg) {
  std::vector<sim::PreparedEpisode> eps(ds.episodes.size());
  std::string error;
  const int n = static_cast<int>(ds.episodes.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      eps[i] = sim::prepare_episode(ds.episodes[i], cfg);
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw VlnError(error);
  return eps;
}

nn::Agent train_agent(const Config& cfg,
                      const std::vector<sim::PreparedEpisode>& train_eps,
                      std::vector<train::EpochRecord>* trace,
                      const train::Trainer::EpochCallback& on_epoch) {
  nn::Agent agent(cfg, cfg.seed);
  train::Trainer trainer(agent, agent.config());
  std::vector<train::EpochRecord> records = trainer.pretrain(train_eps, on_epoch);
  if (trace) *trace = std::move(records);
  return agent;
}

std::vector<AblationRow> table3_rows() {
  return {
      {"baseline", false, false, false, false, false, false},
      {"map", true, false, false, false, false, false},
      {"map_con", true, true, false, false, false, false},
      {"rvi", true, true, true, false, false, false},
      {"rvi_pro_pa", true, true, true, true, true, false},
      {"rvi_pa_sa", true, true, true, false, true, true},
      {"full", true, true, true, true, true, true},
  };
}

std::optional<AblationRow> find_row(const std::string& name) {
  for (const auto& row : table3_rows())
    if (row.name == name) return row;
  return std::nullopt;
}

Config apply_row(const Config& cfg, const AblationRow& row) {
  Config c = cfg;
  c.use_map = row.map;
  c.use_con = row.con;
  c.use_kl = row.kl;
  c.use_pro = row.pro;
  c.use_pa = row.pa;
  c.use_sa = row.sa;
  return c;
}

namespace {

AblationCell run_cell(const Config& row_cfg, const RunDir& dir, const std::string& name,
                      uint64_t seed, const std::vector<sim::PreparedEpisode>& train_eps,
                      const sim::Dataset& train, const sim::Dataset& val) {
  Config cfg = row_cfg;
  cfg.seed = seed;
  const std::string ckpt =
      dir.checkpoints() + "/" + name + "_seed" + std::to_string(seed) + ".ckpt";
  nn::Agent agent = [&]() {
    if (fs::exists(ckpt)) return nn::Agent::load_checkpoint(ckpt);
    std::vector<train::EpochRecord> trace;
    nn::Agent a = train_agent(cfg, train_eps, &trace);
    a.save_checkpoint(ckpt);
    write_trace_jsonl(dir.traces() + "/" + name + "_seed" + std::to_string(seed) +
                          ".jsonl",
                      trace);
    return a;
  }();
  AblationCell cell;
  cell.row = name;
  cell.seed = seed;
  cell.val = evaluate(agent, val, train.scene_seeds).summary;
  return cell;
}

}  // namespace

std::vector<AblationCell> run_ablation(const Config& cfg, const RunDir& dir,
                                       const sim::Dataset& train,
                                       const sim::Dataset& val,
                                       const std::vector<std::string>& row_names) {
  const std::vector<sim::PreparedEpisode> train_eps = prepare_all(train, cfg);
  std::vector<AblationCell> cells;
  for (const std::string& name : row_names) {
    const auto row = find_row(name);
    if (!row) throw VlnError("unknown ablation row: " + name);
    const Config row_cfg = apply_row(cfg, *row);
    for (int s = 0; s < cfg.num_seeds; ++s)
      cells.push_back(
          run_cell(row_cfg, dir, name, cfg.seed + s, train_eps, train, val));
  }
  write_ablation_csv(dir.results() + "/ablation.csv", cells);
  return cells;
}

std::vector<AblationCell> run_sweep(const Config& cfg, const RunDir& dir,
                                    const sim::Dataset& train, const sim::Dataset& val,
                                    const std::string& param,
                                    const std::vector<int>& values) {
  std::vector<AblationCell> cells;
  for (int v : values) {
    Config c = cfg;
    if (param == "k") {
      c.k_future = v;
    } else if (param == "grid") {
      c.grid_h = v;
      c.grid_w = v;
    } else {
      throw VlnError("unknown sweep parameter: " + param + " (expected k or grid)");
    }
    const std::vector<sim::PreparedEpisode> train_eps = prepare_all(train, c);
    const std::string name = "sweep_" + param + std::to_string(v);
    cells.push_back(run_cell(c, dir, name, c.seed, train_eps, train, val));
  }
  write_ablation_csv(dir.results() + "/sweep_" + param + ".csv", cells);
  return cells;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationCell>& cells) {
  std::ofstream f(path);
  if (!f) throw VlnError("cannot write " + path);
  f.precision(17);
  f << "row,seed,SR,OSR,SPL,DTS,episodes\n";
  for (const auto& c : cells)
    f << c.row << "," << c.seed << "," << c.val.sr << "," << c.val.osr << ","
      << c.val.spl << "," << c.val.dts << "," << c.val.episodes << "\n";
}

void write_eval_csv(const std::string& path, const std::vector<EpisodeResult>& eps) {
  std::ofstream f(path);
  if (!f) throw VlnError("cannot write " + path);
  f.precision(17);
  f << "episode,success,oracle_success,path_length,shortest_length,final_distance,steps,spl\n";
  for (size_t i = 0; i < eps.size(); ++i) {
    const auto& r = eps[i];
    f << i << "," << (r.success ? 1 : 0) << "," << (r.oracle_success ? 1 : 0) << ","
      << r.path_length << "," << r.shortest_length << "," << r.final_distance << ","
      << r.steps << "," << r.spl() << "\n";
  }
}

void write_trace_jsonl(const std::string& path,
                       const std::vector<train::EpochRecord>& records) {
  std::ofstream f(path);
  if (!f) throw VlnError("cannot write " + path);
  for (const auto& r : records) {
    json j;
    j["epoch"] = r.epoch;
    j["stage"] = r.stage;
    j["L_Action"] = r.losses.action;
    j["L_Con"] = r.losses.con;
    j["L_KL"] = r.losses.kl;
    j["L_Map"] = r.losses.map;
    j["L_Sem"] = r.losses.sem;
    j["L_Pro"] = r.losses.pro;
    j["L_PA"] = r.losses.pa;
    j["L_SA"] = r.losses.sa;
    j["L_total"] = r.losses.total;
    f << j.dump() << "\n";
  }
}

std::vector<train::EpochRecord> read_trace_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw VlnError("cannot open trace: " + path);
  std::vector<train::EpochRecord> records;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    train::EpochRecord r;
    r.epoch = j.at("epoch").get<int>();
    r.stage = j.at("stage").get<int>();
    r.losses.action = j.at("L_Action").get<real>();
    r.losses.con = j.at("L_Con").get<real>();
    r.losses.kl = j.at("L_KL").get<real>();
    r.losses.map = j.at("L_Map").get<real>();
    r.losses.sem = j.at("L_Sem").get<real>();
    r.losses.pro = j.at("L_Pro").get<real>();
    r.losses.pa = j.at("L_PA").get<real>();
    r.losses.sa = j.at("L_SA").get<real>();
    r.losses.total = j.at("L_total").get<real>();
    r.losses.episodes = 1;
    records.push_back(r);
  }
  return records;
}

}  // namespace vln::eval
