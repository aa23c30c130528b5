#pragma once

#include <string>
#include <vector>

#include "viewplan/pesdf.hpp"
#include "viewplan/poseerrnet.hpp"

namespace viewplan {

/// Axis-aligned box obstacle, full extents.
struct ObstacleBox {
  Vec3 center = Vec3::Zero();
  Vec3 extent = Vec3::Ones();
};

/// Vertical cylinder obstacle standing on the ground.
struct ObstacleColumn {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.3;
  double height = 3.0;
};

/// Subject script sample: root position/heading plus a named preset pose and
/// the gait phase rate. Values are interpolated between keyframes.
struct Keyframe {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double gait_rate = 0.0;  // rad/s of gait phase
  std::string pose = "walk";
};

/// One simulation setup: environment, subject script, detector, grid and
/// timing. Loaded from the line-oriented scenario text format (see
/// load_scenario).
struct Scenario {
  std::string name = "scenario";
  double duration = 10.0;
  double tick_rate = 15.0;
  Vec3 bounds_min = Vec3(-10, -10, 0);
  Vec3 bounds_max = Vec3(10, 10, 5);
  double resolution = 0.25;
  bool ground = true;
  Vec3 drone_start = Vec3(4, 0, 2);
  DetectorParams detector;
  double subject_height = 1.75;
  int n_az = 24;
  int n_el = 8;
  double view_radius = 4.0;
  double focal_px = 500.0;
  int image_w = 640;
  int image_h = 480;
  std::vector<ObstacleBox> boxes;
  std::vector<ObstacleColumn> columns;
  std::vector<Keyframe> keyframes;
  uint64_t seed = 1;

  int ticks() const { return static_cast<int>(duration * tick_rate); }
};

/// Parses the scenario text format: one `key: values` entry per line, `#`
/// comments, repeated `box:` / `column:` / `keyframe:` lines for the nested
/// lists. Throws std::invalid_argument on malformed input or broken scenario
/// invariants.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(std::istream& in, const std::string& name_hint);

/// Checks the scenario invariants (positive duration, increasing keyframe
/// times, subject path inside bounds); throws std::invalid_argument.
void validate_scenario(const Scenario& sc);

/// Voxelizes the environment: boxes, columns, and (when enabled) one ground
/// layer at z = 0.
OccupancyGrid build_occupancy(const Scenario& sc);

/// Subject pose at time t: keyframe-interpolated root and preset angles with
/// the gait phase integrated from the rate channel.
PoseParams subject_at(const Scenario& sc, double t);

}  // namespace viewplan
