#include "viewplan/viewsphere.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace viewplan {

CameraView ViewGrid::view_at(int el, int az, const Vec3& center,
                             double heading) const {
  CameraView cam = views[index(el, az)];
  cam.azimuth = wrap_angle(heading + azimuth_center(az));
  cam.look_at = center;
  return cam;
}

ViewGrid make_grid(int n_az, int n_el, double radius_m) {
  if (n_az < 4 || n_el < 2 || !(radius_m > 0.0)) {
    throw std::invalid_argument("make_grid: degenerate grid");
  }
  ViewGrid g;
  g.n_az = n_az;
  g.n_el = n_el;
  g.radius = radius_m;
  g.views.reserve(g.cells());
  for (int i = 0; i < n_el; ++i) {
    for (int j = 0; j < n_az; ++j) {
      CameraView cam;
      cam.azimuth = g.azimuth_center(j);
      cam.elevation = g.elevation_center(i);
      cam.radius = radius_m;
      cam.look_at = Vec3::Zero();
      g.views.push_back(cam);
    }
  }
  return g;
}

namespace {

// Shared accumulation for view_error / view_error_stats.
ViewErrorStats accumulate_view_error(const Skeleton3D& s,
                                     const CameraView& cam,
                                     const DetectorParams& det, int trials,
                                     uint64_t seed, double miss_penalty) {
  if (trials < 1) throw std::invalid_argument("view_error: trials < 1");

  const auto neck_px = project_point(s.joints[kNeck], cam);
  const auto hip_px = project_point(s.joints[kMidHip], cam);
  if (!neck_px || !hip_px) {
    return {miss_penalty, 0.0};
  }
  const double spine_px = (*neck_px - *hip_px).norm();
  if (spine_px < 1e-9) {
    return {miss_penalty, 0.0};
  }

  const Keypoints2D truth = project(s, cam);
  int n_truth = 0;
  for (bool v : truth.visible) n_truth += v ? 1 : 0;
  if (n_truth == 0) {
    return {miss_penalty, 0.0};
  }

  double sum = 0.0, sum2 = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Keypoints2D obs = detect(s, cam, det, mix_seed(seed, t));
    double err = 0.0;
    for (int i = 0; i < kJointCount; ++i) {
      if (!truth.visible[i]) continue;
      if (!obs.visible[i]) {
        err += miss_penalty;
      } else {
        const double d = (obs.px[i] - truth.px[i]).norm() / spine_px;
        err += std::min(d, miss_penalty);
      }
    }
    err /= n_truth;
    sum += err;
    sum2 += err * err;
  }
  ViewErrorStats stats;
  stats.mean = sum / trials;
  if (trials > 1) {
    const double var =
        std::max(0.0, (sum2 - sum * sum / trials) / (trials - 1));
    stats.stddev = std::sqrt(var);
  }
  return stats;
}

}  // namespace

double view_error(const Skeleton3D& s, const CameraView& cam,
                  const DetectorParams& det, int trials, uint64_t seed,
                  double miss_penalty) {
  return accumulate_view_error(s, cam, det, trials, seed, miss_penalty).mean;
}

ViewErrorStats view_error_stats(const Skeleton3D& s, const CameraView& cam,
                                const DetectorParams& det, int trials,
                                uint64_t seed, double miss_penalty) {
  return accumulate_view_error(s, cam, det, trials, seed, miss_penalty);
}

ErrorField compute_field(const Skeleton3D& s, const ViewGrid& g,
                         const DetectorParams& det, int trials, uint64_t seed,
                         double miss_penalty) {
  ErrorField f;
  f.n_az = g.n_az;
  f.n_el = g.n_el;
  f.radius = g.radius;
  f.values.resize(g.n_el, g.n_az);
  const Vec3 center = subject_center(s);
  const double heading = subject_heading(s);
  for (int i = 0; i < g.n_el; ++i) {
    for (int j = 0; j < g.n_az; ++j) {
      const CameraView cam = g.view_at(i, j, center, heading);
      f.values(i, j) = view_error(s, cam, det, trials,
                                  mix_seed(seed, g.index(i, j)), miss_penalty);
    }
  }
  return f;
}

std::vector<ViewRank> best_views(const ErrorField& f, int k) {
  const int cells = f.n_az * f.n_el;
  if (k < 1 || k > cells) {
    throw std::invalid_argument("best_views: k out of range");
  }
  std::vector<ViewRank> all;
  all.reserve(cells);
  for (int i = 0; i < f.n_el; ++i) {
    for (int j = 0; j < f.n_az; ++j) {
      all.push_back({i, j, f.values(i, j)});
    }
  }
  std::sort(all.begin(), all.end(), [](const ViewRank& a, const ViewRank& b) {
    if (a.error != b.error) return a.error < b.error;
    if (a.el != b.el) return a.el < b.el;
    return a.az < b.az;
  });
  all.resize(k);
  return all;
}

Eigen::MatrixXi quantize_bins(const ErrorField& f, int bins) {
  if (bins < 2) throw std::invalid_argument("quantize_bins: bins < 2");
  const double lo = f.min_value();
  const double hi = f.max_value();
  Eigen::MatrixXi out(f.n_el, f.n_az);
  if (hi - lo <= 0.0) {
    out.setZero();
    return out;
  }
  const double scale = bins / (hi - lo);
  for (int i = 0; i < f.n_el; ++i) {
    for (int j = 0; j < f.n_az; ++j) {
      const int b = static_cast<int>((f.values(i, j) - lo) * scale);
      out(i, j) = std::clamp(b, 0, bins - 1);
    }
  }
  return out;
}

void save_field_csv(const std::string& path, const ErrorField& f) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_field_csv: cannot open " + path);
  out << f.n_az << ',' << f.n_el << ',' << fmt_double(f.radius) << '\n';
  for (int i = 0; i < f.n_el; ++i) {
    for (int j = 0; j < f.n_az; ++j) {
      if (j) out << ',';
      out << fmt_double(f.values(i, j));
    }
    out << '\n';
  }
}

ErrorField load_field_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_field_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_field_csv: empty file");
  }
  ErrorField f;
  {
    std::istringstream ss(line);
    char c;
    if (!(ss >> f.n_az >> c >> f.n_el >> c >> f.radius)) {
      throw std::runtime_error("load_field_csv: malformed header");
    }
  }
  if (f.n_az < 1 || f.n_el < 1) {
    throw std::runtime_error("load_field_csv: bad grid shape");
  }
  f.values.resize(f.n_el, f.n_az);
  for (int i = 0; i < f.n_el; ++i) {
    if (!std::getline(in, line)) {
      throw std::runtime_error("load_field_csv: truncated file");
    }
    std::istringstream ss(line);
    for (int j = 0; j < f.n_az; ++j) {
      std::string cell;
      if (!std::getline(ss, cell, ',')) {
        throw std::runtime_error("load_field_csv: short row");
      }
      f.values(i, j) = std::stod(cell);
    }
  }
  return f;
}

}  // namespace viewplan
