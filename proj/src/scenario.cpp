#include "viewplan/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace viewplan {

namespace {

std::vector<double> parse_numbers(const std::string& s, size_t expect,
                                  const std::string& key) {
  std::istringstream ss(s);
  std::vector<double> out;
  double v;
  while (ss >> v) out.push_back(v);
  if (out.size() != expect) {
    throw std::invalid_argument("scenario: '" + key + "' expects " +
                                std::to_string(expect) + " values");
  }
  return out;
}

PoseParams lerp_pose(const PoseParams& a, const PoseParams& b, double f) {
  PoseParams p;
  p.shoulder_pitch_l = a.shoulder_pitch_l + f * (b.shoulder_pitch_l - a.shoulder_pitch_l);
  p.shoulder_pitch_r = a.shoulder_pitch_r + f * (b.shoulder_pitch_r - a.shoulder_pitch_r);
  p.shoulder_abduct_l = a.shoulder_abduct_l + f * (b.shoulder_abduct_l - a.shoulder_abduct_l);
  p.shoulder_abduct_r = a.shoulder_abduct_r + f * (b.shoulder_abduct_r - a.shoulder_abduct_r);
  p.elbow_l = a.elbow_l + f * (b.elbow_l - a.elbow_l);
  p.elbow_r = a.elbow_r + f * (b.elbow_r - a.elbow_r);
  p.hip_pitch_l = a.hip_pitch_l + f * (b.hip_pitch_l - a.hip_pitch_l);
  p.hip_pitch_r = a.hip_pitch_r + f * (b.hip_pitch_r - a.hip_pitch_r);
  p.knee_l = a.knee_l + f * (b.knee_l - a.knee_l);
  p.knee_r = a.knee_r + f * (b.knee_r - a.knee_r);
  return p;
}

}  // namespace

Scenario parse_scenario(std::istream& in, const std::string& name_hint) {
  Scenario sc;
  sc.name = name_hint;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);

    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("scenario line " + std::to_string(lineno) +
                                  ": missing ':'");
    }
    const std::string key = line.substr(0, colon);
    std::string rest = line.substr(colon + 1);
    const auto rf = rest.find_first_not_of(" \t");
    rest = rf == std::string::npos ? "" : rest.substr(rf);

    if (key == "name") {
      sc.name = rest;
    } else if (key == "duration") {
      sc.duration = parse_numbers(rest, 1, key)[0];
    } else if (key == "tick_rate") {
      sc.tick_rate = parse_numbers(rest, 1, key)[0];
    } else if (key == "seed") {
      sc.seed = static_cast<uint64_t>(parse_numbers(rest, 1, key)[0]);
    } else if (key == "bounds") {
      const auto v = parse_numbers(rest, 6, key);
      sc.bounds_min = Vec3(v[0], v[1], v[2]);
      sc.bounds_max = Vec3(v[3], v[4], v[5]);
    } else if (key == "resolution") {
      sc.resolution = parse_numbers(rest, 1, key)[0];
    } else if (key == "ground") {
      sc.ground = parse_numbers(rest, 1, key)[0] != 0.0;
    } else if (key == "drone_start") {
      const auto v = parse_numbers(rest, 3, key);
      sc.drone_start = Vec3(v[0], v[1], v[2]);
    } else if (key == "detector") {
      const auto v = parse_numbers(rest, 3, key);
      sc.detector.sigma_base = v[0];
      sc.detector.sigma_occluded = v[1];
      sc.detector.drop_prob = v[2];
    } else if (key == "subject_height") {
      sc.subject_height = parse_numbers(rest, 1, key)[0];
    } else if (key == "grid") {
      const auto v = parse_numbers(rest, 3, key);
      sc.n_az = static_cast<int>(v[0]);
      sc.n_el = static_cast<int>(v[1]);
      sc.view_radius = v[2];
    } else if (key == "camera") {
      const auto v = parse_numbers(rest, 3, key);
      sc.focal_px = v[0];
      sc.image_w = static_cast<int>(v[1]);
      sc.image_h = static_cast<int>(v[2]);
    } else if (key == "box") {
      const auto v = parse_numbers(rest, 6, key);
      sc.boxes.push_back({Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])});
    } else if (key == "column") {
      const auto v = parse_numbers(rest, 4, key);
      sc.columns.push_back({v[0], v[1], v[2], v[3]});
    } else if (key == "keyframe") {
      std::istringstream ss(rest);
      Keyframe kf;
      if (!(ss >> kf.t >> kf.x >> kf.y >> kf.heading >> kf.gait_rate >>
            kf.pose)) {
        throw std::invalid_argument(
            "scenario: keyframe expects 't x y heading gait_rate pose'");
      }
      preset_pose(kf.pose);  // validates the name
      sc.keyframes.push_back(kf);
    } else {
      throw std::invalid_argument("scenario: unknown key '" + key + "'");
    }
  }
  validate_scenario(sc);
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_scenario: cannot open " + path);
  // default name: file stem
  std::string name = path;
  const auto slash = name.find_last_of('/');
  if (slash != std::string::npos) name = name.substr(slash + 1);
  const auto dot = name.find_last_of('.');
  if (dot != std::string::npos) name = name.substr(0, dot);
  return parse_scenario(in, name);
}

void validate_scenario(const Scenario& sc) {
  if (!(sc.duration > 0.0)) {
    throw std::invalid_argument("scenario: duration must be positive");
  }
  if (!(sc.tick_rate > 0.0) || !(sc.resolution > 0.0)) {
    throw std::invalid_argument("scenario: bad timing or resolution");
  }
  if ((sc.bounds_max - sc.bounds_min).minCoeff() <= 0.0) {
    throw std::invalid_argument("scenario: empty bounds");
  }
  if (sc.keyframes.empty()) {
    throw std::invalid_argument("scenario: needs at least one keyframe");
  }
  for (size_t i = 1; i < sc.keyframes.size(); ++i) {
    if (!(sc.keyframes[i].t > sc.keyframes[i - 1].t)) {
      throw std::invalid_argument(
          "scenario: keyframe times must be strictly increasing");
    }
  }
  for (const Keyframe& kf : sc.keyframes) {
    if (kf.x <= sc.bounds_min.x() || kf.x >= sc.bounds_max.x() ||
        kf.y <= sc.bounds_min.y() || kf.y >= sc.bounds_max.y()) {
      throw std::invalid_argument("scenario: subject path leaves bounds");
    }
  }
  if (1.05 * sc.subject_height >= sc.bounds_max.z()) {
    throw std::invalid_argument("scenario: bounds too low for the subject");
  }
  for (int a = 0; a < 3; ++a) {
    if (sc.drone_start[a] <= sc.bounds_min[a] ||
        sc.drone_start[a] >= sc.bounds_max[a]) {
      throw std::invalid_argument("scenario: drone start outside bounds");
    }
  }
  if (sc.n_az < 4 || sc.n_el < 2 || !(sc.view_radius > 0.0)) {
    throw std::invalid_argument("scenario: bad view grid");
  }
}

OccupancyGrid build_occupancy(const Scenario& sc) {
  Vec3i dims;
  for (int a = 0; a < 3; ++a) {
    dims[a] = std::max(
        1, static_cast<int>(
               std::ceil((sc.bounds_max[a] - sc.bounds_min[a]) / sc.resolution -
                         1e-9)));
  }
  OccupancyGrid g = make_occupancy(sc.bounds_min, sc.resolution, dims);
  for (int i = 0; i < dims.x(); ++i) {
    for (int j = 0; j < dims.y(); ++j) {
      for (int k = 0; k < dims.z(); ++k) {
        const Vec3 c = g.center_of(i, j, k);
        bool occ = sc.ground && k == 0;
        for (const ObstacleBox& b : sc.boxes) {
          if (occ) break;
          occ = (c - b.center).cwiseAbs().x() <= 0.5 * b.extent.x() &&
                (c - b.center).cwiseAbs().y() <= 0.5 * b.extent.y() &&
                (c - b.center).cwiseAbs().z() <= 0.5 * b.extent.z();
        }
        for (const ObstacleColumn& col : sc.columns) {
          if (occ) break;
          occ = std::hypot(c.x() - col.x, c.y() - col.y) <= col.radius &&
                c.z() <= col.height;
        }
        if (occ) g.set(i, j, k, true);
      }
    }
  }
  return g;
}

PoseParams subject_at(const Scenario& sc, double t) {
  const auto& kfs = sc.keyframes;
  PoseParams p;

  // Gait phase: integrate the (piecewise-linear) rate channel up to t.
  double phase = 0.0;
  double root_h = standing_root_height(sc.subject_height);
  if (t <= kfs.front().t) {
    p = preset_pose(kfs.front().pose);
    p.root_position = Vec3(kfs.front().x, kfs.front().y, root_h);
    p.root_heading = kfs.front().heading;
    p.gait_phase = 0.0;
    return p;
  }
  size_t seg = 0;
  for (size_t i = 0; i + 1 < kfs.size(); ++i) {
    const double t0 = kfs[i].t, t1 = kfs[i + 1].t;
    if (t >= t1) {
      phase += 0.5 * (kfs[i].gait_rate + kfs[i + 1].gait_rate) * (t1 - t0);
      seg = i + 1;
    } else {
      const double f = (t - t0) / (t1 - t0);
      const double rate_t =
          kfs[i].gait_rate + f * (kfs[i + 1].gait_rate - kfs[i].gait_rate);
      phase += 0.5 * (kfs[i].gait_rate + rate_t) * (t - t0);
      seg = i;
      p = lerp_pose(preset_pose(kfs[i].pose), preset_pose(kfs[i + 1].pose), f);
      p.root_position = Vec3(kfs[i].x + f * (kfs[i + 1].x - kfs[i].x),
                             kfs[i].y + f * (kfs[i + 1].y - kfs[i].y), root_h);
      double dh = std::remainder(kfs[i + 1].heading - kfs[i].heading, kTwoPi);
      p.root_heading = kfs[i].heading + f * dh;
      p.gait_phase = wrap_angle(phase);
      return p;
    }
  }
  // Past the last keyframe: hold it.
  p = preset_pose(kfs[seg].pose);
  p.root_position = Vec3(kfs[seg].x, kfs[seg].y, root_h);
  p.root_heading = kfs[seg].heading;
  p.gait_phase = wrap_angle(phase);
  return p;
}

}  // namespace viewplan
