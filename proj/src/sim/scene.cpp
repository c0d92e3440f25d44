#include "vln/sim/scene.hpp"

#include <algorithm>
#include <sstream>

#include "vln/core/rng.hpp"
#include "vln/sim/world.hpp"

namespace vln::sim {

const std::vector<std::string>& room_type_names() {
  static const std::vector<std::string> names = {
      "bedroom", "kitchen", "hallway", "bathroom",
      "lounge",  "office",  "pantry",  "studio"};
  return names;
}

const std::vector<std::string>& category_names() {
  static const std::vector<std::string> names = {
      "<free>", "wall", "chair", "table", "couch", "bed", "plant",
      "lamp",   "shelf", "rug",  "sink",  "mirror", "cabinet"};
  return names;
}

int SceneSpec::category_at(real x, real y) const {
  const int col = col_of(x);
  const int row = row_of(y);
  if (!cell_in_bounds(row, col)) return kWallCategory;
  return occupancy[cell_index(row, col)];
}

int SceneSpec::room_at(real x, real y) const {
  const int col = col_of(x);
  const int row = row_of(y);
  for (size_t i = 0; i < rooms.size(); ++i) {
    const Room& r = rooms[i];
    if (row >= r.r0 && row < r.r1 && col >= r.c0 && col < r.c1)
      return static_cast<int>(i);
  }
  return -1;
}

std::string SceneSpec::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"seed\":" << seed << ",\"extent_m\":" << extent_m << ",\"grid\":" << grid;
  os << ",\"occupancy\":[";
  for (size_t i = 0; i < occupancy.size(); ++i)
    os << (i ? "," : "") << static_cast<int>(occupancy[i]);
  os << "],\"rooms\":[";
  for (size_t i = 0; i < rooms.size(); ++i) {
    const Room& r = rooms[i];
    os << (i ? "," : "") << "[" << r.type << "," << r.r0 << "," << r.c0 << ","
       << r.r1 << "," << r.c1 << "]";
  }
  os << "],\"objects\":[";
  for (size_t i = 0; i < objects.size(); ++i) {
    const SceneObject& o = objects[i];
    os << (i ? "," : "") << "[" << o.category << "," << o.x << "," << o.y << ","
       << o.side_cells << "]";
  }
  os << "],\"start\":[" << start.x << "," << start.y << "," << start.theta << "]";
  os << ",\"goal\":[" << goal.x << "," << goal.y << "," << goal.category << "]}";
  return os.str();
}

namespace {

struct RectSpan {
  int r0, c0, r1, c1;  // half-open
  int rows() const { return r1 - r0; }
  int cols() const { return c1 - c0; }
};

// Recursive binary partition; carves a door into every wall it draws, which
// keeps the free space connected by construction.
void split_rect(const RectSpan& rect, int min_cells, Rng& rng,
                std::vector<uint8_t>& occ, int grid,
                std::vector<RectSpan>& leaves, int depth) {
  const bool can_split_rows = rect.rows() >= 2 * min_cells + 1;
  const bool can_split_cols = rect.cols() >= 2 * min_cells + 1;
  if ((!can_split_rows && !can_split_cols) || depth >= 5 ||
      (depth >= 2 && rng.uniform() < 0.25)) {
    leaves.push_back(rect);
    return;
  }
  bool split_rows;
  if (can_split_rows && can_split_cols)
    split_rows = rect.rows() > rect.cols() ||
                 (rect.rows() == rect.cols() && rng.uniform() < 0.5);
  else
    split_rows = can_split_rows;

  if (split_rows) {
    const int cut = rect.r0 + min_cells + rng.uniform_int(rect.rows() - 2 * min_cells);
    const int door = rect.c0 + rng.uniform_int(std::max(1, rect.cols() - 3));
    for (int c = rect.c0; c < rect.c1; ++c)
      if (c < door || c >= door + 3) occ[cut * grid + c] = kWallCategory;
    split_rect({rect.r0, rect.c0, cut, rect.c1}, min_cells, rng, occ, grid, leaves, depth + 1);
    split_rect({cut + 1, rect.c0, rect.r1, rect.c1}, min_cells, rng, occ, grid, leaves, depth + 1);
  } else {
    const int cut = rect.c0 + min_cells + rng.uniform_int(rect.cols() - 2 * min_cells);
    const int door = rect.r0 + rng.uniform_int(std::max(1, rect.rows() - 3));
    for (int r = rect.r0; r < rect.r1; ++r)
      if (r < door || r >= door + 3) occ[r * grid + cut] = kWallCategory;
    split_rect({rect.r0, rect.c0, rect.r1, cut}, min_cells, rng, occ, grid, leaves, depth + 1);
    split_rect({rect.r0, cut + 1, rect.r1, rect.c1}, min_cells, rng, occ, grid, leaves, depth + 1);
  }
}

bool cell_clear_for_agent(const SceneSpec& s, int row, int col) {
  // free with one cell of clearance all around
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) {
      const int r = row + dr, c = col + dc;
      if (!s.cell_in_bounds(r, c)) return false;
      if (s.occupancy[s.cell_index(r, c)] != 0) return false;
    }
  return true;
}

real cell_center(int i) { return (i + 0.5) * kCellM; }

bool try_pick_start_goal(SceneSpec& s, Rng& rng, const Config& cfg) {
  if (s.objects.empty()) return false;
  for (int attempt = 0; attempt < 60; ++attempt) {
    const int row = rng.uniform_int(s.grid);
    const int col = rng.uniform_int(s.grid);
    if (!cell_clear_for_agent(s, row, col)) continue;
    Pose start;
    start.x = cell_center(col);
    start.y = cell_center(row);
    start.theta = wrap_angle((rng.uniform_int(24) - 12) * kTurnStepRad);

    // goal: approach point of a random object, reachable and in range
    for (int oa = 0; oa < 30; ++oa) {
      const SceneObject& obj = s.objects[rng.uniform_int(static_cast<int>(s.objects.size()))];
      const int orow = s.row_of(obj.y);
      const int ocol = s.col_of(obj.x);
      // nearest clear cell around the object footprint
      int best_r = -1, best_c = -1;
      int best_d2 = 1 << 30;
      const int reach = 3;
      for (int dr = -reach; dr <= reach; ++dr)
        for (int dc = -reach; dc <= reach; ++dc) {
          const int r = orow + dr, c = ocol + dc;
          if (!s.cell_in_bounds(r, c) || !cell_clear_for_agent(s, r, c)) continue;
          const int d2 = dr * dr + dc * dc;
          if (d2 < best_d2) {
            best_d2 = d2;
            best_r = r;
            best_c = c;
          }
        }
      if (best_r < 0) continue;
      Goal goal;
      goal.x = cell_center(best_c);
      goal.y = cell_center(best_r);
      goal.category = obj.category;
      const real d = geodesic_distance(s, start.x, start.y, goal.x, goal.y);
      if (!std::isfinite(d) || d < cfg.goal_min_m || d > cfg.goal_max_m) continue;
      // the expert plans with one cell of clearance; require that route too
      DistanceField inflated(s, goal.x, goal.y, true);
      if (!std::isfinite(inflated.distance_at(start.x, start.y))) continue;
      s.start = start;
      s.goal = goal;
      return true;
    }
  }
  return false;
}

}  // namespace

SceneSpec generate_scene(uint64_t seed, const Config& cfg) {
  const int grid = static_cast<int>(std::lround(cfg.extent_m / kCellM));
  const int min_cells = std::max(4, static_cast<int>(std::lround(cfg.min_room_m / kCellM)));

  for (int attempt = 0; attempt < 24; ++attempt) {
    Rng rng = Rng::derive(seed, {0x5CE17Eu, static_cast<uint64_t>(attempt)});
    SceneSpec s;
    s.seed = seed;
    s.extent_m = grid * kCellM;
    s.grid = grid;
    s.occupancy.assign(static_cast<size_t>(grid) * grid, 0);
    for (int i = 0; i < grid; ++i) {
      s.occupancy[s.cell_index(0, i)] = kWallCategory;
      s.occupancy[s.cell_index(grid - 1, i)] = kWallCategory;
      s.occupancy[s.cell_index(i, 0)] = kWallCategory;
      s.occupancy[s.cell_index(i, grid - 1)] = kWallCategory;
    }

    std::vector<RectSpan> leaves;
    split_rect({1, 1, grid - 1, grid - 1}, min_cells, rng, s.occupancy, grid, leaves, 0);
    for (const RectSpan& rect : leaves) {
      Room room;
      room.type = rng.uniform_int(static_cast<int>(room_type_names().size()));
      room.r0 = rect.r0;
      room.c0 = rect.c0;
      room.r1 = rect.r1;
      room.c1 = rect.c1;
      s.rooms.push_back(room);
    }

    // objects: ids 2..C, square footprints, kept off walls
    const int ncats = cfg.categories;
    for (const Room& room : s.rooms) {
      const int want = rng.uniform_int(cfg.objects_per_room + 1);
      for (int i = 0; i < want; ++i) {
        const int side = 1 + rng.uniform_int(2);
        for (int placement = 0; placement < 10; ++placement) {
          const int r = room.r0 + 1 + rng.uniform_int(std::max(1, room.r1 - room.r0 - side - 1));
          const int c = room.c0 + 1 + rng.uniform_int(std::max(1, room.c1 - room.c0 - side - 1));
          bool ok = true;
          for (int dr = -1; dr <= side && ok; ++dr)
            for (int dc = -1; dc <= side && ok; ++dc) {
              const int rr = r + dr, cc = c + dc;
              if (!s.cell_in_bounds(rr, cc) || s.occupancy[s.cell_index(rr, cc)] != 0)
                ok = false;
            }
          if (!ok) continue;
          SceneObject obj;
          obj.category = ncats >= 3 ? 2 + rng.uniform_int(ncats - 1) : 2;
          obj.side_cells = side;
          obj.x = (c + side * 0.5) * kCellM;
          obj.y = (r + side * 0.5) * kCellM;
          for (int dr = 0; dr < side; ++dr)
            for (int dc = 0; dc < side; ++dc)
              s.occupancy[s.cell_index(r + dr, c + dc)] =
                  static_cast<uint8_t>(obj.category);
          s.objects.push_back(obj);
          break;
        }
      }
    }

    if (try_pick_start_goal(s, rng, cfg)) return s;
  }
  throw VlnError("generate_scene: no valid scene for seed " + std::to_string(seed) +
                 " within retry budget (goal unreachable)");
}

void resample_episode(SceneSpec& scene, int episode_index, const Config& cfg) {
  if (episode_index == 0) return;
  Rng rng = Rng::derive(scene.seed, {0xE9150Dull, static_cast<uint64_t>(episode_index)});
  SceneSpec tmp = scene;
  if (!try_pick_start_goal(tmp, rng, cfg))
    throw VlnError("resample_episode: no valid start/goal pair for scene " +
                   std::to_string(scene.seed) + " episode " + std::to_string(episode_index));
  scene.start = tmp.start;
  scene.goal = tmp.goal;
}

}  // namespace vln::sim
