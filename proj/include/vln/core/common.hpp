#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace vln {

// All numerics run in double precision; the loss/gradient tooling relies on it.
using real = double;

constexpr real kPi = 3.14159265358979323846;
constexpr real kForwardStepM = 0.25;   // Forward translation per action
constexpr real kTurnStepRad = kPi / 12.0;  // 15 degree turns
constexpr real kCellM = 0.2;           // occupancy raster cell size
constexpr int kEgoMapH = 32;           // egocentric semantic map is fixed 32x32
constexpr int kEgoMapW = 32;

enum class Action : int { Forward = 0, TurnLeft = 1, TurnRight = 2, Stop = 3 };
constexpr int kNumActions = 4;
// Previous-action slot used at t=0, before any action was taken.
constexpr int kStartActionId = 4;

inline const char* action_name(Action a) {
  switch (a) {
    case Action::Forward: return "forward";
    case Action::TurnLeft: return "turn_left";
    case Action::TurnRight: return "turn_right";
    case Action::Stop: return "stop";
  }
  return "?";
}

// Normalizes an angle to [-pi, pi).
inline real wrap_angle(real a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

struct Pose {
  real x = 0.0;
  real y = 0.0;
  real theta = 0.0;  // radians, [-pi, pi), CCW from +x

  bool operator==(const Pose& o) const {
    return x == o.x && y == o.y && theta == o.theta;
  }
};

class VlnError : public std::runtime_error {
 public:
  explicit VlnError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vln
