#pragma once

#include <limits>
#include <string>
#include <vector>

#include "viewplan/viewsphere.hpp"

namespace viewplan {

/// Axis-aligned voxel occupancy map. Voxels are indexed x-major:
/// (ix * ny + iy) * nz + iz; voxel (i,j,k) spans
/// [origin + (i,j,k)*res, origin + (i+1,j+1,k+1)*res).
struct OccupancyGrid {
  Vec3 origin = Vec3::Zero();
  double resolution = 0.25;
  Vec3i dims = Vec3i::Zero();
  std::vector<uint8_t> occ;

  int index(int i, int j, int k) const {
    return (i * dims.y() + j) * dims.z() + k;
  }
  bool occupied(int i, int j, int k) const { return occ[index(i, j, k)] != 0; }
  bool in_bounds(const Vec3& p) const;
  Vec3i voxel_of(const Vec3& p) const;
  Vec3 center_of(int i, int j, int k) const {
    return origin + resolution * Vec3(i + 0.5, j + 0.5, k + 0.5);
  }
  void set(int i, int j, int k, bool v) { occ[index(i, j, k)] = v ? 1 : 0; }
};

OccupancyGrid make_occupancy(const Vec3& origin, double resolution,
                             const Vec3i& dims);

/// Trilinear sample of a scalar voxel field: the interpolated value, its
/// analytic gradient, and whether the query point lay inside the lattice
/// (queries outside are clamped to the boundary cell band).
struct FieldSample {
  double value = 0.0;
  Vec3 gradient = Vec3::Zero();
  bool inside = true;
};

/// Scalar values on a voxel lattice with trilinear interpolation between
/// voxel centers. Shared by the distance field, the error volume, and the
/// merged field.
struct ScalarField {
  Vec3 origin = Vec3::Zero();
  double resolution = 0.25;
  Vec3i dims = Vec3i::Zero();
  std::vector<double> values;

  int index(int i, int j, int k) const {
    return (i * dims.y() + j) * dims.z() + k;
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  double& at(int i, int j, int k) { return values[index(i, j, k)]; }
  Vec3 center_of(int i, int j, int k) const {
    return origin + resolution * Vec3(i + 0.5, j + 0.5, k + 0.5);
  }

  FieldSample sample(const Vec3& p) const;

  /// Strict variant: throws OutOfBoundsError (carrying the clamped boundary
  /// value) when p is outside the lattice.
  FieldSample sample_checked(const Vec3& p) const;
};

/// Unsigned Euclidean distance field: per-voxel distance in meters to the
/// nearest occupied voxel center, clamped at d_max.
struct Esdf {
  ScalarField field;
  double d_max = 10.0;
};

/// Exact Euclidean distance transform (separable squared-distance passes).
/// With no occupied voxel every distance equals d_max; in that case d_max
/// must be finite or the call is invalid.
Esdf esdf_from_occupancy(const OccupancyGrid& g,
                         double d_max = 10.0);

/// Viewing-goodness volume: the error field projected into the workspace.
/// Values are in [0, xi_max]; higher means a better viewing position.
struct ErrorVolume {
  ScalarField field;
  double xi_max = 5.0;
};

/// Lattice and conversion parameters for error_to_volume.
struct VolumeSpec {
  Vec3 origin = Vec3::Zero();
  double resolution = 0.2;
  Vec3i dims = Vec3i::Zero();
  double xi_max = 5.0;
  double e_cap = kMissPenalty;  // errors at/above this map to goodness 0
  double band_inner = 0.5;      // radial band, fractions of the field radius
  double band_outer = 1.5;
};

/// The default workspace lattice: a 10 x 10 m area centered on the vehicle at
/// 0.2 m resolution, from the ground up to the hemisphere radius.
VolumeSpec vehicle_volume_spec(const Vec3& vehicle_pos, double field_radius,
                               double resolution = 0.2);

/// Projects the per-angle error field into the workspace: each voxel samples
/// the field at its azimuth/elevation in the subject's heading frame
/// (bilinear, azimuth wraps, elevation clamps) and converts error e to
/// goodness xi_max * (1 - min(e, e_cap)/e_cap). Voxels below the ground plane
/// or outside the radial band get goodness 0.
ErrorVolume error_to_volume(const ErrorField& f, const Vec3& subject_pos,
                            double subject_heading, const VolumeSpec& spec);

/// The merged field driving the pose penalty: per voxel
/// lambda * goodness + (1 - lambda) * rescaled obstacle distance, with the
/// distance rescaled to min(d, d_safe)/d_safe * xi_max so both operands share
/// units.
struct Pesdf {
  ScalarField field;
  double lambda = 0.5;
  double xi_max = 5.0;
};

Pesdf merge(const ErrorVolume& ev, const Esdf& e, double lambda,
            double d_safe = 2.0);

/// Flat binary export: magic "PESD", origin and resolution as 64-bit floats,
/// dims as 32-bit counts, then the row-major 64-bit float payload.
void save_field_bin(const std::string& path, const ScalarField& f);
ScalarField load_field_bin(const std::string& path);

/// CSV slice at one z index (rows = x, cols = y) for plotting.
void save_slice_csv(const std::string& path, const ScalarField& f, int k);

}  // namespace viewplan
