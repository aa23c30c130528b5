#include "viewplan/pesdf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace viewplan {

bool OccupancyGrid::in_bounds(const Vec3& p) const {
  const Vec3 rel = p - origin;
  for (int a = 0; a < 3; ++a) {
    if (rel[a] < 0.0 || rel[a] >= dims[a] * resolution) return false;
  }
  return true;
}

Vec3i OccupancyGrid::voxel_of(const Vec3& p) const {
  const Vec3 rel = (p - origin) / resolution;
  Vec3i v;
  for (int a = 0; a < 3; ++a) {
    v[a] = std::clamp(static_cast<int>(std::floor(rel[a])), 0, dims[a] - 1);
  }
  return v;
}

OccupancyGrid make_occupancy(const Vec3& origin, double resolution,
                             const Vec3i& dims) {
  if (!(resolution > 0.0) || dims.minCoeff() < 1) {
    throw std::invalid_argument("make_occupancy: bad lattice");
  }
  OccupancyGrid g;
  g.origin = origin;
  g.resolution = resolution;
  g.dims = dims;
  g.occ.assign(static_cast<size_t>(dims.x()) * dims.y() * dims.z(), 0);
  return g;
}

namespace {

constexpr double kInf = 1e18;

// 1D squared-distance transform (lower envelope of parabolas). Inputs and
// outputs are integer-valued so the final distances are exact.
void dt1d(const std::vector<double>& f, std::vector<double>& d, int n,
          std::vector<int>& v, std::vector<double>& z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) /
               (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) /
          (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
  }
}

}  // namespace

Esdf esdf_from_occupancy(const OccupancyGrid& g, double d_max) {
  if (g.occ.empty()) {
    throw std::invalid_argument("esdf_from_occupancy: empty grid");
  }
  if (!(d_max > 0.0)) {
    throw std::invalid_argument("esdf_from_occupancy: d_max must be positive");
  }
  const bool any_occupied =
      std::any_of(g.occ.begin(), g.occ.end(), [](uint8_t v) { return v != 0; });
  if (!any_occupied && !std::isfinite(d_max)) {
    throw std::invalid_argument(
        "esdf_from_occupancy: no occupied voxel and no free-space cap");
  }

  const int nx = g.dims.x(), ny = g.dims.y(), nz = g.dims.z();
  std::vector<double> d2(g.occ.size());
  for (size_t i = 0; i < g.occ.size(); ++i) {
    d2[i] = g.occ[i] ? 0.0 : kInf;
  }

  const int nmax = std::max({nx, ny, nz});
  std::vector<double> f(nmax), out(nmax), z(nmax + 1);
  std::vector<int> v(nmax);

  // z-axis pass
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      const int base = (i * ny + j) * nz;
      for (int k = 0; k < nz; ++k) f[k] = d2[base + k];
      dt1d(f, out, nz, v, z);
      for (int k = 0; k < nz; ++k) d2[base + k] = out[k];
    }
  }
  // y-axis pass
  for (int i = 0; i < nx; ++i) {
    for (int k = 0; k < nz; ++k) {
      for (int j = 0; j < ny; ++j) f[j] = d2[(i * ny + j) * nz + k];
      dt1d(f, out, ny, v, z);
      for (int j = 0; j < ny; ++j) d2[(i * ny + j) * nz + k] = out[j];
    }
  }
  // x-axis pass
  for (int j = 0; j < ny; ++j) {
    for (int k = 0; k < nz; ++k) {
      for (int i = 0; i < nx; ++i) f[i] = d2[(i * ny + j) * nz + k];
      dt1d(f, out, nx, v, z);
      for (int i = 0; i < nx; ++i) d2[(i * ny + j) * nz + k] = out[i];
    }
  }

  Esdf e;
  e.d_max = d_max;
  e.field.origin = g.origin;
  e.field.resolution = g.resolution;
  e.field.dims = g.dims;
  e.field.values.resize(d2.size());
  for (size_t i = 0; i < d2.size(); ++i) {
    const double dist =
        d2[i] >= kInf ? d_max : g.resolution * std::sqrt(d2[i]);
    e.field.values[i] = std::min(dist, d_max);
  }
  return e;
}

FieldSample ScalarField::sample(const Vec3& p) const {
  FieldSample s;
  // Coordinates in voxel-center space.
  Eigen::Vector3d u = (p - origin) / resolution - Vec3(0.5, 0.5, 0.5);
  for (int a = 0; a < 3; ++a) {
    const double box = (p[a] - origin[a]) / resolution;
    if (box < 0.0 || box >= dims[a]) s.inside = false;
  }
  int i0[3];
  double frac[3];
  bool clamped[3];
  for (int a = 0; a < 3; ++a) {
    clamped[a] = false;
    if (dims[a] == 1) {
      i0[a] = 0;
      frac[a] = 0.0;
      clamped[a] = true;
      continue;
    }
    double ua = u[a];
    if (ua <= 0.0) {
      ua = 0.0;
      clamped[a] = true;
    } else if (ua >= dims[a] - 1) {
      ua = dims[a] - 1;
      clamped[a] = true;
    }
    i0[a] = std::min(static_cast<int>(std::floor(ua)), dims[a] - 2);
    frac[a] = ua - i0[a];
  }

  auto corner = [&](int di, int dj, int dk) {
    const int i = std::min(i0[0] + di, dims.x() - 1);
    const int j = std::min(i0[1] + dj, dims.y() - 1);
    const int k = std::min(i0[2] + dk, dims.z() - 1);
    return at(i, j, k);
  };

  const double fx = frac[0], fy = frac[1], fz = frac[2];
  double value = 0.0;
  Vec3 grad = Vec3::Zero();
  for (int di = 0; di < 2; ++di) {
    for (int dj = 0; dj < 2; ++dj) {
      for (int dk = 0; dk < 2; ++dk) {
        const double c = corner(di, dj, dk);
        const double wx = di ? fx : 1.0 - fx;
        const double wy = dj ? fy : 1.0 - fy;
        const double wz = dk ? fz : 1.0 - fz;
        value += c * wx * wy * wz;
        grad.x() += c * (di ? 1.0 : -1.0) * wy * wz;
        grad.y() += c * wx * (dj ? 1.0 : -1.0) * wz;
        grad.z() += c * wx * wy * (dk ? 1.0 : -1.0);
      }
    }
  }
  s.value = value;
  s.gradient = grad / resolution;
  for (int a = 0; a < 3; ++a) {
    if (clamped[a]) s.gradient[a] = 0.0;
  }
  return s;
}

FieldSample ScalarField::sample_checked(const Vec3& p) const {
  FieldSample s = sample(p);
  if (!s.inside) {
    throw OutOfBoundsError("ScalarField: query outside lattice", s.value);
  }
  return s;
}

VolumeSpec vehicle_volume_spec(const Vec3& vehicle_pos, double field_radius,
                               double resolution) {
  VolumeSpec spec;
  spec.resolution = resolution;
  const int nxy = std::max(2, static_cast<int>(std::lround(10.0 / resolution)));
  const int nz =
      std::max(2, static_cast<int>(std::lround(field_radius / resolution)));
  spec.dims = Vec3i(nxy, nxy, nz);
  spec.origin = Vec3(vehicle_pos.x() - 0.5 * nxy * resolution,
                     vehicle_pos.y() - 0.5 * nxy * resolution, 0.0);
  return spec;
}

ErrorVolume error_to_volume(const ErrorField& f, const Vec3& subject_pos,
                            double subject_heading, const VolumeSpec& spec) {
  if (!std::isfinite(subject_heading) || !subject_pos.allFinite()) {
    throw std::invalid_argument("error_to_volume: non-finite subject pose");
  }
  if (spec.dims.minCoeff() < 1 || !(spec.resolution > 0.0)) {
    throw std::invalid_argument("error_to_volume: bad lattice spec");
  }
  if (f.n_az < 2 || f.n_el < 2) {
    throw std::invalid_argument("error_to_volume: field grid too small");
  }
  ErrorVolume ev;
  ev.xi_max = spec.xi_max;
  ev.field.origin = spec.origin;
  ev.field.resolution = spec.resolution;
  ev.field.dims = spec.dims;
  ev.field.values.assign(
      static_cast<size_t>(spec.dims.x()) * spec.dims.y() * spec.dims.z(), 0.0);

  const double r_lo = spec.band_inner * f.radius;
  const double r_hi = spec.band_outer * f.radius;
  const double el_step = (kPi / 2.0) / f.n_el;
  const double az_step = kTwoPi / f.n_az;

  for (int i = 0; i < spec.dims.x(); ++i) {
    for (int j = 0; j < spec.dims.y(); ++j) {
      for (int k = 0; k < spec.dims.z(); ++k) {
        const Vec3 c = ev.field.center_of(i, j, k);
        if (c.z() < 0.0) continue;  // below the ground plane
        const Vec3 rel = c - subject_pos;
        const double dist = rel.norm();
        if (dist < r_lo || dist > r_hi) continue;
        const double az = wrap_angle(std::atan2(rel.y(), rel.x()) -
                                     subject_heading);
        const double el =
            std::atan2(rel.z(), std::hypot(rel.x(), rel.y()));

        // Bilinear sample: azimuth wraps, elevation clamps to the row band.
        double ja = az / az_step - 0.5;
        if (ja < 0.0) ja += f.n_az;
        const int j0 = static_cast<int>(std::floor(ja)) % f.n_az;
        const int j1 = (j0 + 1) % f.n_az;
        const double fa = ja - std::floor(ja);
        double ie = std::clamp(el / el_step - 0.5, 0.0,
                               static_cast<double>(f.n_el - 1));
        const int i0 = std::min(static_cast<int>(std::floor(ie)), f.n_el - 2);
        const int i1 = i0 + 1;
        const double fe = std::clamp(ie - i0, 0.0, 1.0);

        const double e =
            (1 - fe) * ((1 - fa) * f.values(i0, j0) + fa * f.values(i0, j1)) +
            fe * ((1 - fa) * f.values(i1, j0) + fa * f.values(i1, j1));
        const double clipped = std::min(e, spec.e_cap);
        ev.field.at(i, j, k) = spec.xi_max * (1.0 - clipped / spec.e_cap);
      }
    }
  }
  return ev;
}

Pesdf merge(const ErrorVolume& ev, const Esdf& e, double lambda,
            double d_safe) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("merge: lambda must be in [0,1]");
  }
  if (!(d_safe > 0.0)) {
    throw std::invalid_argument("merge: d_safe must be positive");
  }
  if (ev.field.values.empty() || e.field.values.empty()) {
    throw std::invalid_argument("merge: empty operand lattice");
  }
  Pesdf p;
  p.lambda = lambda;
  p.xi_max = ev.xi_max;
  p.field.origin = ev.field.origin;
  p.field.resolution = ev.field.resolution;
  p.field.dims = ev.field.dims;
  p.field.values.resize(ev.field.values.size());
  for (int i = 0; i < ev.field.dims.x(); ++i) {
    for (int j = 0; j < ev.field.dims.y(); ++j) {
      for (int k = 0; k < ev.field.dims.z(); ++k) {
        const Vec3 c = ev.field.center_of(i, j, k);
        const double d = e.field.sample(c).value;  // resampled trilinearly
        const double rescaled =
            std::min(d, d_safe) / d_safe * ev.xi_max;
        p.field.at(i, j, k) =
            lambda * ev.field.at(i, j, k) + (1.0 - lambda) * rescaled;
      }
    }
  }
  return p;
}

namespace {
constexpr char kFieldMagic[4] = {'P', 'E', 'S', 'D'};
}

void save_field_bin(const std::string& path, const ScalarField& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_field_bin: cannot open " + path);
  out.write(kFieldMagic, 4);
  for (int a = 0; a < 3; ++a) {
    const double v = f.origin[a];
    out.write(reinterpret_cast<const char*>(&v), 8);
  }
  out.write(reinterpret_cast<const char*>(&f.resolution), 8);
  for (int a = 0; a < 3; ++a) {
    const uint32_t v = static_cast<uint32_t>(f.dims[a]);
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  out.write(reinterpret_cast<const char*>(f.values.data()),
            static_cast<std::streamsize>(f.values.size() * 8));
}

ScalarField load_field_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_field_bin: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFieldMagic, 4) != 0) {
    throw std::runtime_error("load_field_bin: bad magic");
  }
  ScalarField f;
  for (int a = 0; a < 3; ++a) in.read(reinterpret_cast<char*>(&f.origin[a]), 8);
  in.read(reinterpret_cast<char*>(&f.resolution), 8);
  for (int a = 0; a < 3; ++a) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    f.dims[a] = static_cast<int>(v);
  }
  if (!in || f.dims.minCoeff() < 1) {
    throw std::runtime_error("load_field_bin: bad header");
  }
  f.values.resize(static_cast<size_t>(f.dims.x()) * f.dims.y() * f.dims.z());
  in.read(reinterpret_cast<char*>(f.values.data()),
          static_cast<std::streamsize>(f.values.size() * 8));
  if (!in) throw std::runtime_error("load_field_bin: truncated payload");
  return f;
}

void save_slice_csv(const std::string& path, const ScalarField& f, int k) {
  if (k < 0 || k >= f.dims.z()) {
    throw std::invalid_argument("save_slice_csv: z index out of range");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_slice_csv: cannot open " + path);
  for (int i = 0; i < f.dims.x(); ++i) {
    for (int j = 0; j < f.dims.y(); ++j) {
      if (j) out << ',';
      out << fmt_double(f.at(i, j, k));
    }
    out << '\n';
  }
}

}  // namespace viewplan
