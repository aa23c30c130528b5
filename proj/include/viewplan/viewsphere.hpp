#pragma once

#include <string>
#include <utility>
#include <vector>

#include "viewplan/skeleton.hpp"

namespace viewplan {

/// Discretization of the hemispherical view space around a subject. Azimuth
/// bin centers sit at 2*pi*(j+0.5)/n_az, elevation centers at
/// (pi/2)*(i+0.5)/n_el; views are stored elevation-major.
struct ViewGrid {
  int n_az = 24;
  int n_el = 8;
  double radius = 4.0;
  std::vector<CameraView> views;  // index = i * n_az + j, looking at origin

  int cells() const { return n_az * n_el; }
  int index(int el, int az) const { return el * n_az + az; }
  double azimuth_center(int az) const { return kTwoPi * (az + 0.5) / n_az; }
  double elevation_center(int el) const {
    return (kPi / 2.0) * (el + 0.5) / n_el;
  }

  /// The cell's camera anchored at a concrete subject: azimuth is measured
  /// relative to the subject's heading, the look-at point is its center.
  CameraView view_at(int el, int az, const Vec3& center,
                     double heading) const;
};

ViewGrid make_grid(int n_az, int n_el, double radius_m);

/// The per-view pose-error map over a ViewGrid: one nonnegative scalar per
/// (elevation, azimuth) cell, in projected-spine-length units.
struct ErrorField {
  int n_az = 0;
  int n_el = 0;
  double radius = 0.0;
  Eigen::MatrixXd values;  // n_el rows x n_az cols

  double min_value() const { return values.minCoeff(); }
  double max_value() const { return values.maxCoeff(); }
};

/// Penalty assigned to a joint the detector failed to report, and the upper
/// bound of every per-joint error term (spine-length units).
inline constexpr double kMissPenalty = 5.0;

/// Monte-Carlo estimate of the detector error seen from one camera: the mean
/// over `trials` detector draws of the per-joint pixel distance between
/// detect() and project(), divided by the projected spine length. Joints the
/// detector drops contribute miss_penalty; every per-joint term is clamped at
/// miss_penalty. Returns miss_penalty outright when the spine cannot be
/// projected.
double view_error(const Skeleton3D& s, const CameraView& cam,
                  const DetectorParams& det, int trials, uint64_t seed,
                  double miss_penalty = kMissPenalty);

/// Same estimate plus the sample standard deviation over trials (for
/// Monte-Carlo error bars).
struct ViewErrorStats {
  double mean = 0.0;
  double stddev = 0.0;
};
ViewErrorStats view_error_stats(const Skeleton3D& s, const CameraView& cam,
                                const DetectorParams& det, int trials,
                                uint64_t seed,
                                double miss_penalty = kMissPenalty);

/// Oracle error field: view_error evaluated on every grid cell, with the
/// grid anchored at the subject's center and heading. Each cell draws from
/// its own (seed, cell)-derived stream, so results are independent of
/// evaluation order.
ErrorField compute_field(const Skeleton3D& s, const ViewGrid& g,
                         const DetectorParams& det, int trials, uint64_t seed,
                         double miss_penalty = kMissPenalty);

/// One entry of a best-view ranking.
struct ViewRank {
  int el = 0;
  int az = 0;
  double error = 0.0;
};

/// The k smallest-error cells, ascending; ties broken by smaller elevation
/// index, then smaller azimuth index.
std::vector<ViewRank> best_views(const ErrorField& f, int k);

/// Linear quantization of [min(f), max(f)] into `bins` equal-width intervals;
/// the maximum maps to bin bins-1, a constant field to all zeros.
Eigen::MatrixXi quantize_bins(const ErrorField& f, int bins);

/// CSV serialization: one header row with the n_az, n_el and radius values,
/// then n_el rows of n_az comma-separated decimals.
void save_field_csv(const std::string& path, const ErrorField& f);
ErrorField load_field_csv(const std::string& path);

}  // namespace viewplan
