#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace viewplan {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;

/// Raised when 2D keypoints cannot be spine-normalized (neck or both hips
/// missing, or a degenerate spine). Callers typically fall back to the last
/// good field.
class NormalizationError : public std::runtime_error {
 public:
  explicit NormalizationError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Raised when an iterative solver produces a non-finite cost.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int iteration)
      : std::runtime_error(what), iteration(iteration) {}
  int iteration;
};

/// Raised by strict field queries outside the lattice; carries the value the
/// field takes at the clamped boundary point.
class OutOfBoundsError : public std::runtime_error {
 public:
  OutOfBoundsError(const std::string& what, double clamped_value)
      : std::runtime_error(what), clamped_value(clamped_value) {}
  double clamped_value;
};

/// Raised when no candidate viewpoint passes the feasibility checks.
class NoViewpointError : public std::runtime_error {
 public:
  explicit NoViewpointError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Raised when a simulation episode must stop (e.g. the drone left the
/// environment bounds).
class EpisodeAbortError : public std::runtime_error {
 public:
  explicit EpisodeAbortError(const std::string& what)
      : std::runtime_error(what) {}
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from (seed, index). Used wherever work
/// is split across cells/trials/ticks so results do not depend on evaluation
/// order.
inline uint64_t mix_seed(uint64_t seed, uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x51ed270b7a1fca5dULL));
}

/// Shortest-round-trip decimal formatting; keeps text outputs byte-stable
/// across runs and exact under parse-back.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Wraps an angle into [0, 2*pi).
inline double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a;
}

}  // namespace viewplan
