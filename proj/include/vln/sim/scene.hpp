#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vln/core/common.hpp"
#include "vln/core/config.hpp"

namespace vln::sim {

// Category 0 means free space everywhere in the simulator; category 1 is
// reserved for walls. Placed objects use categories 2..C.
constexpr int kWallCategory = 1;

struct Room {
  int type = 0;               // index into room_type_names()
  int r0 = 0, c0 = 0, r1 = 0, c1 = 0;  // cell rect, half-open
};

struct SceneObject {
  int category = 2;
  real x = 0.0, y = 0.0;      // center, meters
  int side_cells = 1;         // square footprint edge in cells
};

struct Goal {
  real x = 0.0, y = 0.0;
  int category = -1;          // -1: plain position goal
};

struct SceneSpec {
  uint64_t seed = 0;
  real extent_m = 12.8;
  int grid = 64;                       // cells per side (extent / 0.2)
  std::vector<uint8_t> occupancy;      // grid*grid, row-major [row=y][col=x]
  std::vector<Room> rooms;
  std::vector<SceneObject> objects;
  Pose start;
  Goal goal;

  int cell_index(int row, int col) const { return row * grid + col; }
  bool cell_in_bounds(int row, int col) const {
    return row >= 0 && row < grid && col >= 0 && col < grid;
  }
  // Point queries; out-of-bounds points read as wall.
  int category_at(real x, real y) const;
  bool free_at(real x, real y) const { return category_at(x, y) == 0; }
  int row_of(real y) const { return static_cast<int>(std::floor(y / kCellM)); }
  int col_of(real x) const { return static_cast<int>(std::floor(x / kCellM)); }
  int room_at(real x, real y) const;   // room index or -1

  std::string to_json() const;
};

const std::vector<std::string>& room_type_names();
const std::vector<std::string>& category_names();  // index 1..12 valid

// Deterministic procedural generator. Throws VlnError when no valid scene
// can be produced within the retry budget.
SceneSpec generate_scene(uint64_t seed, const Config& cfg);

// Re-samples the start pose and goal for episode `episode_index` of a scene
// (episode 0 keeps the generator's pair). Deterministic.
void resample_episode(SceneSpec& scene, int episode_index, const Config& cfg);

}  // namespace vln::sim
