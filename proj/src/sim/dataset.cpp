#include "vln/sim/dataset.hpp"

#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "vln/core/rng.hpp"

namespace vln::sim {

using nlohmann::json;

uint64_t scene_seed_for(uint64_t dataset_seed, int index) {
  return hash_mix(dataset_seed, 0xDA7A5EEDull + static_cast<uint64_t>(index));
}

namespace {

Trajectory make_episode(const SceneSpec& scene, int episode_index, const Config& cfg) {
  Trajectory traj;
  traj.scene_seed = scene.seed;
  traj.episode_index = episode_index;
  traj.goal = scene.goal;
  traj.shortest_length =
      geodesic_distance(scene, scene.start.x, scene.start.y, scene.goal.x, scene.goal.y);

  std::vector<Action> actions = shortest_path_expert(
      scene, scene.start, scene.goal.x, scene.goal.y, cfg.success_radius_m);
  if (static_cast<int>(actions.size()) > cfg.max_episode_steps)
    throw VlnError("episode exceeds max_episode_steps");

  std::vector<Pose> poses;
  Pose pose = scene.start;
  for (Action a : actions) {
    poses.push_back(pose);
    pose = step(scene, pose, a).pose;
  }
  traj.instruction_id = hash_mix(scene.seed, 0x1257A9ull + static_cast<uint64_t>(episode_index));
  traj.instruction = lang::generate_instruction(scene, poses, actions,
                                                traj.instruction_id, cfg.max_len);
  traj.steps.reserve(actions.size());
  for (size_t t = 0; t < actions.size(); ++t)
    traj.steps.push_back({poses[t], actions[t]});
  return traj;
}

}  // namespace

Dataset generate_dataset(const Config& cfg, uint64_t dataset_seed, int num_scenes,
                         int episodes_per_scene) {
  Dataset ds;
  ds.config = cfg;
  int candidate = 0;
  while (static_cast<int>(ds.scene_seeds.size()) < num_scenes) {
    if (candidate > num_scenes * 4 + 64)
      throw VlnError("generate_dataset: too many scene generation failures");
    const uint64_t seed = scene_seed_for(dataset_seed, candidate++);
    SceneSpec scene;
    try {
      scene = generate_scene(seed, cfg);
    } catch (const VlnError&) {
      continue;  // seed produced no valid scene; take the next candidate
    }
    bool all_ok = true;
    std::vector<Trajectory> eps;
    for (int e = 0; e < episodes_per_scene; ++e) {
      try {
        SceneSpec ep_scene = scene;
        resample_episode(ep_scene, e, cfg);
        eps.push_back(make_episode(ep_scene, e, cfg));
      } catch (const VlnError&) {
        all_ok = false;
        break;
      }
    }
    if (!all_ok) continue;
    ds.scene_seeds.push_back(seed);
    for (auto& t : eps) ds.episodes.push_back(std::move(t));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw VlnError("cannot write dataset: " + path);
  json header;
  header["format_version"] = ds.format_version;
  header["kind"] = "vln-episodes";
  header["config"] = ds.config.to_text();
  header["scene_seeds"] = ds.scene_seeds;
  f << header.dump() << "\n";
  for (const auto& t : ds.episodes) {
    json e;
    e["scene_seed"] = t.scene_seed;
    e["episode_index"] = t.episode_index;
    e["instruction_id"] = t.instruction_id;
    e["tokens"] = t.instruction.tokens;
    std::vector<int> tags;
    for (auto c : t.instruction.tags) tags.push_back(static_cast<int>(c));
    e["tags"] = tags;
    e["goal"] = {t.goal.x, t.goal.y, t.goal.category};
    e["shortest_length"] = t.shortest_length;
    json steps = json::array();
    for (const auto& s : t.steps)
      steps.push_back({s.pose.x, s.pose.y, s.pose.theta, static_cast<int>(s.expert_action)});
    e["steps"] = steps;
    f << e.dump() << "\n";
  }
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw VlnError("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(f, line)) throw VlnError("dataset is empty: " + path);
  json header = json::parse(line);
  Dataset ds;
  ds.format_version = header.value("format_version", -1);
  if (ds.format_version != Dataset::kFormatVersion)
    throw VlnError("dataset format-version mismatch: expected " +
                   std::to_string(Dataset::kFormatVersion) + ", found " +
                   std::to_string(ds.format_version));
  if (header.value("kind", "") != "vln-episodes")
    throw VlnError("not an episode dataset: " + path);
  ds.config = Config::parse(header.at("config").get<std::string>());
  ds.scene_seeds = header.at("scene_seeds").get<std::vector<uint64_t>>();
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json e = json::parse(line);
    Trajectory t;
    t.scene_seed = e.at("scene_seed").get<uint64_t>();
    t.episode_index = e.at("episode_index").get<int>();
    t.instruction_id = e.at("instruction_id").get<uint64_t>();
    t.instruction.id = t.instruction_id;
    t.instruction.tokens = e.at("tokens").get<std::vector<int>>();
    for (int tag : e.at("tags").get<std::vector<int>>())
      t.instruction.tags.push_back(static_cast<lang::Component>(tag));
    t.goal.x = e.at("goal")[0].get<real>();
    t.goal.y = e.at("goal")[1].get<real>();
    t.goal.category = e.at("goal")[2].get<int>();
    t.shortest_length = e.at("shortest_length").get<real>();
    for (const auto& s : e.at("steps")) {
      TrajectoryStep ts;
      ts.pose.x = s[0].get<real>();
      ts.pose.y = s[1].get<real>();
      ts.pose.theta = s[2].get<real>();
      ts.expert_action = static_cast<Action>(s[3].get<int>());
      t.steps.push_back(ts);
    }
    if (t.steps.empty()) throw VlnError("dataset episode with no steps");
    ds.episodes.push_back(std::move(t));
  }
  return ds;
}

bool sim_compatible(const Config& a, const Config& b) {
  return a.extent_m == b.extent_m && a.categories == b.categories &&
         a.views == b.views && a.sectors_per_view == b.sectors_per_view &&
         a.depth_bins == b.depth_bins && a.max_range_m == b.max_range_m &&
         a.min_room_m == b.min_room_m && a.objects_per_room == b.objects_per_room &&
         a.success_radius_m == b.success_radius_m && a.goal_min_m == b.goal_min_m &&
         a.goal_max_m == b.goal_max_m && a.max_len == b.max_len;
}

const Tensor& frozen_pano_projection(int raw_dim, int pano_dim) {
  static std::map<std::pair<int, int>, Tensor> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(raw_dim, pano_dim);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  Tensor p(raw_dim, pano_dim);
  Rng rng = Rng::derive(0xF12A7E0ull, {static_cast<uint64_t>(raw_dim),
                                       static_cast<uint64_t>(pano_dim)});
  const real scale = 1.0 / std::sqrt(static_cast<real>(raw_dim));
  for (auto& x : p.v) x = scale * rng.normal();
  return cache.emplace(key, std::move(p)).first->second;
}

Tensor embed_panorama(const PanoramicObservation& pano, int pano_dim) {
  const int raw_dim = pano.views * pano.feature_dim;
  const Tensor& proj = frozen_pano_projection(raw_dim, pano_dim);
  Tensor out(1, pano_dim);
  for (int i = 0; i < raw_dim; ++i) {
    const real x = pano.features.v[i];
    if (x == 0.0) continue;
    const real* prow = proj.row_ptr(i);
    for (int j = 0; j < pano_dim; ++j) out.v[j] += x * prow[j];
  }
  return out;
}

PreparedEpisode prepare_episode(const Trajectory& traj, const Config& cfg) {
  PreparedEpisode ep;
  ep.traj = std::make_shared<Trajectory>(traj);
  ep.scene = generate_scene(traj.scene_seed, cfg);
  ep.scene.start = traj.steps.front().pose;
  ep.scene.goal = traj.goal;

  const int T = static_cast<int>(traj.steps.size());
  ep.panoramas.reserve(T);
  ep.ego_maps.reserve(T);
  ep.pano_embed = Tensor(T, cfg.pano_dim);
  DistanceField field(ep.scene, traj.goal.x, traj.goal.y, false);
  const real d0 = field.distance_at(traj.steps.front().pose.x, traj.steps.front().pose.y);
  ep.d_t.resize(T);
  for (int t = 0; t < T; ++t) {
    const Pose& pose = traj.steps[t].pose;
    ep.panoramas.push_back(render_panorama(ep.scene, pose, cfg));
    ep.ego_maps.push_back(render_ego_map(ep.scene, pose));
    Tensor emb = embed_panorama(ep.panoramas.back(), cfg.pano_dim);
    std::copy(emb.v.begin(), emb.v.end(), ep.pano_embed.row_ptr(t));
    const real d = field.distance_at(pose.x, pose.y);
    ep.d_t[t] = (d0 > 0.0 && std::isfinite(d0)) ? d / d0 : 0.0;
  }
  return ep;
}

}  // namespace vln::sim
