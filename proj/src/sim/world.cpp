#include "vln/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace vln::sim {

namespace {

bool segment_free(const SceneSpec& scene, real x0, real y0, real x1, real y1) {
  const real len = std::hypot(x1 - x0, y1 - y0);
  const int n = std::max(2, static_cast<int>(std::ceil(len / 0.05)) + 1);
  for (int i = 0; i <= n; ++i) {
    const real t = static_cast<real>(i) / n;
    if (!scene.free_at(x0 + t * (x1 - x0), y0 + t * (y1 - y0))) return false;
  }
  return true;
}

}  // namespace

StepResult step(const SceneSpec& scene, const Pose& pose, Action action) {
  if (!scene.free_at(pose.x, pose.y))
    throw VlnError("step: pose is not in free space");
  StepResult res;
  res.pose = pose;
  switch (action) {
    case Action::Forward: {
      const real nx = pose.x + kForwardStepM * std::cos(pose.theta);
      const real ny = pose.y + kForwardStepM * std::sin(pose.theta);
      if (segment_free(scene, pose.x, pose.y, nx, ny)) {
        res.pose.x = nx;
        res.pose.y = ny;
      } else {
        res.collided = true;
      }
      break;
    }
    case Action::TurnLeft:
      res.pose.theta = wrap_angle(pose.theta + kTurnStepRad);
      break;
    case Action::TurnRight:
      res.pose.theta = wrap_angle(pose.theta - kTurnStepRad);
      break;
    case Action::Stop:
      break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Panorama
// ---------------------------------------------------------------------------
namespace {

constexpr int kRaysPerSector = 5;
constexpr real kRayStepM = 0.025;

// Heading lattice: Q positions per turn, chosen so both the 15 degree action
// turns and the per-ray offsets are integer lattice steps.
int lattice_size(int views, int sectors) {
  return 24 * views * sectors * kRaysPerSector;
}

void lattice_dir(int q, int Q, real& dx, real& dy) {
  q %= Q;
  if (q < 0) q += Q;
  // exact axes so axis-aligned tests stay bit-clean
  if (q == 0) { dx = 1.0; dy = 0.0; return; }
  if (4 * q == Q) { dx = 0.0; dy = 1.0; return; }
  if (2 * q == Q) { dx = -1.0; dy = 0.0; return; }
  if (4 * q == 3 * Q) { dx = 0.0; dy = -1.0; return; }
  const real a = 2.0 * kPi * q / Q;
  dx = std::cos(a);
  dy = std::sin(a);
}

int depth_bin(real dist, real max_range, int bins) {
  const real dmin = 0.25;
  if (dist <= dmin) return 0;
  if (dist >= max_range) return bins - 1;
  const real f = std::log(dist / dmin) / std::log(max_range / dmin);
  return std::min(bins - 1, static_cast<int>(f * bins));
}

}  // namespace

PanoramicObservation render_panorama(const SceneSpec& scene, const Pose& pose,
                                     const Config& cfg) {
  const int K = cfg.views;
  const int S = cfg.sectors_per_view;
  const int B = cfg.depth_bins;
  const int C = cfg.categories;
  const int R = kRaysPerSector;
  const int Q = lattice_size(K, S);
  const int rays_total = K * S * R;
  const int lattice_step = Q / rays_total;

  const int tq = static_cast<int>(std::llround(pose.theta * Q / (2.0 * kPi)));
  // first ray points at the left edge of view 0 (which is centered on the
  // agent heading), advanced to the first ray center
  const int base = tq - Q / (2 * K) + lattice_step / 2;

  PanoramicObservation obs;
  obs.views = K;
  obs.feature_dim = C + S * B + 1;
  obs.features = Tensor(K, obs.feature_dim);
  obs.category_ratio = Tensor(K, C);

  const int max_steps = static_cast<int>(cfg.max_range_m / kRayStepM);
  for (int k = 0; k < K; ++k) {
    real* feat = obs.features.row_ptr(k);
    int free_rays = 0;
    for (int s = 0; s < S; ++s) {
      real nearest = kInfDistance;
      for (int r = 0; r < R; ++r) {
        const int ray_index = (k * S + s) * R + r;
        real dx, dy;
        lattice_dir(base + ray_index * lattice_step, Q, dx, dy);
        int hit_cat = 0;
        real hit_dist = kInfDistance;
        for (int m = 1; m <= max_steps; ++m) {
          const real d = m * kRayStepM;
          const int cat = scene.category_at(pose.x + d * dx, pose.y + d * dy);
          if (cat != 0) {
            hit_cat = cat;
            hit_dist = d;
            break;
          }
        }
        if (hit_cat == 0) {
          ++free_rays;
        } else {
          if (hit_cat >= 1 && hit_cat <= C) {
            feat[hit_cat - 1] = 1.0;  // visibility indicator
            obs.category_ratio.at(k, hit_cat - 1) += 1.0;
          }
          nearest = std::min(nearest, hit_dist);
        }
      }
      const int bin = std::isfinite(nearest)
                          ? depth_bin(nearest, cfg.max_range_m, B)
                          : B - 1;  // no hit: max-range bin
      feat[C + s * B + bin] = 1.0;
    }
    feat[C + S * B] = static_cast<real>(free_rays) / (S * R);
    for (int c = 0; c < C; ++c) obs.category_ratio.at(k, c) /= S * R;
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Egocentric semantic map
// ---------------------------------------------------------------------------
std::vector<uint8_t> render_ego_map(const SceneSpec& scene, const Pose& pose) {
  std::vector<uint8_t> map(static_cast<size_t>(kEgoMapH) * kEgoMapW, 0);
  real fx = std::cos(pose.theta), fy = std::sin(pose.theta);
  // snap to exact axes when the heading is a right angle, so axis-aligned
  // rotations reproduce the map exactly
  for (int k = 0; k < 4; ++k) {
    const real axis = wrap_angle(k * kPi / 2.0);
    if (std::fabs(wrap_angle(pose.theta - axis)) < 1e-9) {
      fx = std::round(std::cos(axis));
      fy = std::round(std::sin(axis));
      break;
    }
  }
  const real rx = fy, ry = -fx;  // agent's right-hand direction
  for (int r = 0; r < kEgoMapH; ++r) {
    const real fwd = (r - kEgoMapH / 2 + 0.5) * kCellM;
    for (int c = 0; c < kEgoMapW; ++c) {
      const real side = (c - kEgoMapW / 2 + 0.5) * kCellM;
      const real wx = pose.x + fwd * fx + side * rx;
      const real wy = pose.y + fwd * fy + side * ry;
      map[static_cast<size_t>(r) * kEgoMapW + c] =
          static_cast<uint8_t>(scene.category_at(wx, wy));
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// Distance field / geodesics
// ---------------------------------------------------------------------------
DistanceField::DistanceField(const SceneSpec& scene, real src_x, real src_y,
                             bool inflate)
    : scene_(&scene), grid_(scene.grid) {
  const size_t n = static_cast<size_t>(grid_) * grid_;
  passable_.assign(n, 1);
  for (size_t i = 0; i < n; ++i)
    if (scene.occupancy[i] != 0) passable_[i] = 0;
  if (inflate) {
    std::vector<uint8_t> inflated = passable_;
    for (int r = 0; r < grid_; ++r)
      for (int c = 0; c < grid_; ++c) {
        if (passable_[scene.cell_index(r, c)]) continue;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc)
            if (scene.cell_in_bounds(r + dr, c + dc))
              inflated[scene.cell_index(r + dr, c + dc)] = 0;
      }
    passable_ = std::move(inflated);
  }

  dist_.assign(n, kInfDistance);
  const int sr = scene.row_of(src_y), sc = scene.col_of(src_x);
  if (!scene.cell_in_bounds(sr, sc) || !passable_[scene.cell_index(sr, sc)]) return;

  // uniform-cost Dijkstra over the 4-connected free-cell graph
  using Item = std::pair<real, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  dist_[scene.cell_index(sr, sc)] = 0.0;
  pq.emplace(0.0, scene.cell_index(sr, sc));
  const int dr[4] = {1, -1, 0, 0};
  const int dc[4] = {0, 0, 1, -1};
  while (!pq.empty()) {
    const auto [d, idx] = pq.top();
    pq.pop();
    if (d > dist_[idx]) continue;
    const int r = idx / grid_, c = idx % grid_;
    for (int k = 0; k < 4; ++k) {
      const int nr = r + dr[k], nc = c + dc[k];
      if (!scene.cell_in_bounds(nr, nc)) continue;
      const int nidx = scene.cell_index(nr, nc);
      if (!passable_[nidx]) continue;
      const real nd = d + kCellM;
      if (nd < dist_[nidx]) {
        dist_[nidx] = nd;
        pq.emplace(nd, nidx);
      }
    }
  }
}

real DistanceField::distance_at(real x, real y) const {
  const int r = scene_->row_of(y), c = scene_->col_of(x);
  if (!scene_->cell_in_bounds(r, c)) return kInfDistance;
  return dist_[scene_->cell_index(r, c)];
}

real DistanceField::distance_cell(int row, int col) const {
  if (!scene_->cell_in_bounds(row, col)) return kInfDistance;
  return dist_[scene_->cell_index(row, col)];
}

bool DistanceField::cell_passable(int row, int col) const {
  if (!scene_->cell_in_bounds(row, col)) return false;
  return passable_[scene_->cell_index(row, col)] != 0;
}

real geodesic_distance(const SceneSpec& scene, real x0, real y0, real x1, real y1) {
  if (!scene.free_at(x0, y0) || !scene.free_at(x1, y1))
    throw VlnError("geodesic_distance: endpoint not in free space");
  DistanceField field(scene, x1, y1, false);
  return field.distance_at(x0, y0);
}

// ---------------------------------------------------------------------------
// Expert: geodesic-greedy over the free-cell distance field with
// heading-aware turn insertion.
// ---------------------------------------------------------------------------
ExpertPolicy::ExpertPolicy(const SceneSpec& scene, real goal_x, real goal_y,
                           real success_radius)
    : scene_(&scene),
      success_radius_(success_radius),
      raw_(scene, goal_x, goal_y, false),
      inflated_(scene, goal_x, goal_y, true) {}

bool ExpertPolicy::reachable(const Pose& pose) const {
  return std::isfinite(raw_.distance_at(pose.x, pose.y));
}

Action ExpertPolicy::next_action(const Pose& pose) const {
  if (raw_.distance_at(pose.x, pose.y) <= success_radius_) return Action::Stop;
  const bool planar = std::isfinite(inflated_.distance_at(pose.x, pose.y));
  const DistanceField& plan = planar ? inflated_ : raw_;
  const int q_cur =
      static_cast<int>(((std::llround(pose.theta / kTurnStepRad) % 24) + 24) % 24);

  // score every heading by the field distance after one forward step plus a
  // small turn cost; candidates are scanned by growing |turn| so that exact
  // ties break toward the smaller absolute turn
  constexpr real kTurnCost = 0.05;
  int best_q = -1;
  real best_score = kInfDistance;
  for (int off = 0; off <= 12; ++off) {
    for (const int sign : {+1, -1}) {
      if (off == 0 && sign < 0) continue;
      if (off == 12 && sign < 0) continue;
      const int q = ((q_cur + sign * off) % 24 + 24) % 24;
      const real heading = q * kTurnStepRad;
      const real nx = pose.x + kForwardStepM * std::cos(heading);
      const real ny = pose.y + kForwardStepM * std::sin(heading);
      if (!segment_free(*scene_, pose.x, pose.y, nx, ny)) continue;
      real d = plan.distance_at(nx, ny);
      if (!std::isfinite(d)) {
        d = raw_.distance_at(nx, ny);
        if (!std::isfinite(d)) continue;
        d += 1.0;  // off the planned corridor; strongly discouraged
      }
      const real score = d + kTurnCost * off;
      if (score < best_score) {
        best_score = score;
        best_q = q;
      }
    }
  }
  if (best_q < 0) throw VlnError("expert: no collision-free heading");
  if (best_q == q_cur) return Action::Forward;
  const int diff = (best_q - q_cur + 24) % 24;
  return diff <= 12 ? Action::TurnLeft : Action::TurnRight;
}

std::vector<Action> shortest_path_expert(const SceneSpec& scene, const Pose& from,
                                         real goal_x, real goal_y,
                                         real success_radius, int max_steps) {
  ExpertPolicy expert(scene, goal_x, goal_y, success_radius);
  if (!expert.reachable(from))
    throw VlnError("shortest_path_expert: goal unreachable from start");

  std::vector<Action> actions;
  Pose pose = from;
  int stall = 0;
  while (static_cast<int>(actions.size()) < max_steps) {
    const Action a = expert.next_action(pose);
    actions.push_back(a);
    if (a == Action::Stop) return actions;
    StepResult res = step(scene, pose, a);
    if (a == Action::Forward && res.collided) {
      if (++stall > 48) throw VlnError("shortest_path_expert: stuck against an obstacle");
    } else if (a == Action::Forward) {
      stall = 0;
    }
    pose = res.pose;
  }
  throw VlnError("shortest_path_expert: step budget exceeded");
}

}  // namespace vln::sim
