#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "viewplan/pesdf.hpp"

using namespace viewplan;

namespace {

// O(occupied * voxels) reference: exact integer squared distances.
std::vector<double> brute_force_esdf(const OccupancyGrid& g, double d_max) {
  std::vector<Vec3i> occupied;
  for (int i = 0; i < g.dims.x(); ++i) {
    for (int j = 0; j < g.dims.y(); ++j) {
      for (int k = 0; k < g.dims.z(); ++k) {
        if (g.occupied(i, j, k)) occupied.push_back({i, j, k});
      }
    }
  }
  std::vector<double> out(g.occ.size(), d_max);
  for (int i = 0; i < g.dims.x(); ++i) {
    for (int j = 0; j < g.dims.y(); ++j) {
      for (int k = 0; k < g.dims.z(); ++k) {
        if (occupied.empty()) continue;
        long best = std::numeric_limits<long>::max();
        for (const Vec3i& o : occupied) {
          const long di = i - o.x(), dj = j - o.y(), dk = k - o.z();
          best = std::min(best, di * di + dj * dj + dk * dk);
        }
        out[g.index(i, j, k)] =
            std::min(g.resolution * std::sqrt(static_cast<double>(best)), d_max);
      }
    }
  }
  return out;
}

OccupancyGrid random_grid(int n, double density, uint64_t seed) {
  OccupancyGrid g = make_occupancy(Vec3(-1, -2, 0), 0.5, Vec3i(n, n, n));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : g.occ) v = u(rng) < density ? 1 : 0;
  return g;
}

ScalarField random_field(const Vec3i& dims, uint64_t seed) {
  ScalarField f;
  f.origin = Vec3(0, 0, 0);
  f.resolution = 0.5;
  f.dims = dims;
  f.values.resize(static_cast<size_t>(dims.x()) * dims.y() * dims.z());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (auto& v : f.values) v = u(rng);
  return f;
}

}  // namespace

TEST_CASE("distance transform closed forms") {
  SUBCASE("single occupied voxel in a 9^3 grid") {
    OccupancyGrid g = make_occupancy(Vec3::Zero(), 1.0, Vec3i(9, 9, 9));
    g.set(4, 4, 4, true);
    const Esdf e = esdf_from_occupancy(g, 100.0);
    CHECK(e.field.at(4, 4, 4) == 0.0);
    CHECK(e.field.at(0, 0, 0) == doctest::Approx(std::sqrt(48.0)).epsilon(1e-12));
    CHECK(e.field.at(4, 4, 0) == doctest::Approx(4.0));
  }

  SUBCASE("fully occupied grid is all zeros") {
    OccupancyGrid g = make_occupancy(Vec3::Zero(), 0.3, Vec3i(5, 6, 7));
    for (auto& v : g.occ) v = 1;
    const Esdf e = esdf_from_occupancy(g);
    for (double v : e.field.values) CHECK(v == 0.0);
  }

  SUBCASE("no occupied voxels yields the cap everywhere") {
    OccupancyGrid g = make_occupancy(Vec3::Zero(), 0.5, Vec3i(4, 4, 4));
    const Esdf e = esdf_from_occupancy(g, 7.5);
    for (double v : e.field.values) CHECK(v == 7.5);
    CHECK_THROWS_AS(
        esdf_from_occupancy(g, std::numeric_limits<double>::infinity()),
        std::invalid_argument);
  }
}

TEST_CASE("distance transform matches brute force exactly") {
  for (int trial = 0; trial < 6; ++trial) {
    const double density = trial % 2 == 0 ? 0.02 : 0.10;
    OccupancyGrid g = random_grid(16, density, 500 + trial);
    const Esdf e = esdf_from_occupancy(g, 10.0);
    const auto ref = brute_force_esdf(g, 10.0);
    for (size_t i = 0; i < ref.size(); ++i) {
      CHECK(e.field.values[i] == ref[i]);
    }
  }
}

TEST_CASE("distance field is 1-Lipschitz across neighbors") {
  OccupancyGrid g = random_grid(12, 0.05, 9);
  const Esdf e = esdf_from_occupancy(g, 10.0);
  for (int i = 0; i + 1 < 12; ++i) {
    for (int j = 0; j < 12; ++j) {
      for (int k = 0; k < 12; ++k) {
        CHECK(std::abs(e.field.at(i, j, k) - e.field.at(i + 1, j, k)) <=
              g.resolution + 1e-12);
      }
    }
  }
}

TEST_CASE("trilinear sampling") {
  SUBCASE("voxel centers reproduce stored values exactly") {
    const ScalarField f = random_field(Vec3i(5, 4, 6), 3);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 4; ++j) {
        for (int k = 0; k < 6; ++k) {
          const FieldSample s = f.sample(f.center_of(i, j, k));
          CHECK(s.value == f.at(i, j, k));
          CHECK(s.inside);
        }
      }
    }
  }

  SUBCASE("linear fields are reproduced with exact gradients") {
    ScalarField f;
    f.origin = Vec3(1, 2, 3);
    f.resolution = 0.4;
    f.dims = Vec3i(6, 6, 6);
    const Vec3 a(0.7, -1.3, 2.1);
    const double b = 4.0;
    f.values.resize(216);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        for (int k = 0; k < 6; ++k) {
          f.at(i, j, k) = a.dot(f.center_of(i, j, k)) + b;
        }
      }
    }
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      // stay inside the voxel-center hull where interpolation is exact
      const Vec3 p = f.origin + Vec3(0.2 + u(rng) * 2.0, 0.2 + u(rng) * 2.0,
                                     0.2 + u(rng) * 2.0);
      const FieldSample s = f.sample(p);
      CHECK(s.value == doctest::Approx(a.dot(p) + b).epsilon(1e-12));
      CHECK((s.gradient - a).norm() < 1e-9);
    }
  }

  SUBCASE("gradient matches central differences") {
    const ScalarField f = random_field(Vec3i(8, 8, 8), 21);
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(0.3, 3.4);
    const double h = 1e-4;
    for (int trial = 0; trial < 200; ++trial) {
      const Vec3 p(u(rng), u(rng), u(rng));
      const FieldSample s = f.sample(p);
      for (int ax = 0; ax < 3; ++ax) {
        // skip probes that straddle a cell boundary
        const double cell = (p[ax] - f.origin[ax]) / f.resolution - 0.5;
        const double frac = cell - std::floor(cell);
        if (frac < 2 * h / f.resolution || frac > 1 - 2 * h / f.resolution) {
          continue;
        }
        Vec3 up = p, down = p;
        up[ax] += h;
        down[ax] -= h;
        const double numeric =
            (f.sample(up).value - f.sample(down).value) / (2 * h);
        const double denom =
            std::max({std::abs(numeric), std::abs(s.gradient[ax]), 1e-9});
        CHECK(std::abs(numeric - s.gradient[ax]) / denom < 1e-6);
      }
    }
  }

  SUBCASE("value is continuous across cell boundaries") {
    const ScalarField f = random_field(Vec3i(6, 6, 6), 33);
    const double eps = 1e-10;
    for (int i = 1; i < 5; ++i) {
      const double boundary = f.origin.x() + (i + 0.5) * f.resolution;
      const Vec3 p(boundary, 1.1, 1.7);
      const double lo = f.sample(p - Vec3(eps, 0, 0)).value;
      const double hi = f.sample(p + Vec3(eps, 0, 0)).value;
      CHECK(std::abs(lo - hi) < 1e-8);
    }
  }

  SUBCASE("out-of-lattice queries clamp and report, strict queries throw") {
    const ScalarField f = random_field(Vec3i(4, 4, 4), 44);
    const Vec3 outside = f.origin - Vec3(1, 1, 1);
    const FieldSample s = f.sample(outside);
    CHECK_FALSE(s.inside);
    CHECK(s.value == f.at(0, 0, 0));
    CHECK(s.gradient.norm() == 0.0);
    try {
      f.sample_checked(outside);
      FAIL("expected OutOfBoundsError");
    } catch (const OutOfBoundsError& e) {
      CHECK(e.clamped_value == f.at(0, 0, 0));
    }
  }
}

TEST_CASE("error volume projection") {
  ErrorField field;
  field.n_az = 8;
  field.n_el = 4;
  field.radius = 3.0;
  field.values = Eigen::MatrixXd::Zero(4, 8);

  const Vec3 subject(5.0, 5.0, 1.2);
  VolumeSpec spec = vehicle_volume_spec(subject, field.radius, 0.25);

  SUBCASE("zero error maps to full goodness inside the band") {
    const ErrorVolume ev = error_to_volume(field, subject, 0.0, spec);
    int in_band = 0;
    for (int i = 0; i < spec.dims.x(); ++i) {
      for (int j = 0; j < spec.dims.y(); ++j) {
        for (int k = 0; k < spec.dims.z(); ++k) {
          const Vec3 c = ev.field.center_of(i, j, k);
          const double d = (c - subject).norm();
          if (c.z() >= 0.0 && d >= 0.5 * 3.0 && d <= 1.5 * 3.0) {
            CHECK(ev.field.at(i, j, k) == spec.xi_max);
            ++in_band;
          } else {
            CHECK(ev.field.at(i, j, k) == 0.0);
          }
        }
      }
    }
    CHECK(in_band > 100);
  }

  SUBCASE("heading rotation rotates the sampled content") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 8; ++j) field.values(i, j) = u(rng);
    }
    const ErrorVolume base = error_to_volume(field, subject, 0.0, spec);
    const double dtheta = kPi / 2.0;  // exact quarter turn of the lattice
    const ErrorVolume turned = error_to_volume(field, subject, dtheta, spec);
    const int n = spec.dims.x();
    REQUIRE(spec.dims.y() == n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < spec.dims.z(); ++k) {
          // rotating the subject by +90 deg moves content from (i,j) to the
          // voxel rotated by +90 deg about the subject: (n-1-j, i)
          CHECK(turned.field.at(n - 1 - j, i, k) ==
                doctest::Approx(base.field.at(i, j, k)).epsilon(1e-9));
        }
      }
    }
  }

  SUBCASE("best field cell aligns with the volume argmax direction") {
    field.values = Eigen::MatrixXd::Constant(4, 8, 4.0);
    const int best_el = 1, best_az = 5;
    field.values(best_el, best_az) = 0.0;
    const ErrorVolume ev = error_to_volume(field, subject, 0.3, spec);
    double best = -1.0;
    Vec3 best_c = Vec3::Zero();
    for (int i = 0; i < spec.dims.x(); ++i) {
      for (int j = 0; j < spec.dims.y(); ++j) {
        for (int k = 0; k < spec.dims.z(); ++k) {
          if (ev.field.at(i, j, k) > best) {
            best = ev.field.at(i, j, k);
            best_c = ev.field.center_of(i, j, k);
          }
        }
      }
    }
    const Vec3 rel = best_c - subject;
    const double az = wrap_angle(std::atan2(rel.y(), rel.x()) - 0.3);
    const double el = std::atan2(rel.z(), std::hypot(rel.x(), rel.y()));
    const double az_center = kTwoPi * (best_az + 0.5) / 8;
    const double el_center = (kPi / 2) * (best_el + 0.5) / 4;
    CHECK(std::abs(std::remainder(az - az_center, kTwoPi)) < kTwoPi / 8);
    CHECK(std::abs(el - el_center) < (kPi / 2) / 4);
  }

  SUBCASE("translation invariance") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 8; ++j) field.values(i, j) = u(rng);
    }
    const ErrorVolume a = error_to_volume(field, subject, 0.7, spec);
    const Vec3 shift(3.0, -2.0, 0.0);
    VolumeSpec moved = spec;
    moved.origin += shift;
    const ErrorVolume b = error_to_volume(field, subject + shift, 0.7, moved);
    for (size_t i = 0; i < a.field.values.size(); ++i) {
      CHECK(a.field.values[i] == b.field.values[i]);
    }
  }
}

TEST_CASE("merge endpoints and arithmetic") {
  ErrorVolume ev;
  ev.xi_max = 5.0;
  ev.field.origin = Vec3::Zero();
  ev.field.resolution = 1.0;
  ev.field.dims = Vec3i(1, 1, 1);
  ev.field.values = {4.0};

  OccupancyGrid g = make_occupancy(Vec3(-5, -5, -5), 1.0, Vec3i(11, 11, 11));
  // occupied shell far away so the distance at the volume voxel is known
  g.set(0, 5, 5, true);
  const Esdf esdf = esdf_from_occupancy(g, 100.0);

  SUBCASE("lambda 1 returns the error volume") {
    const Pesdf p = merge(ev, esdf, 1.0, 2.0);
    CHECK(p.field.values[0] == 4.0);
  }

  SUBCASE("lambda 0 returns the rescaled distance") {
    const Pesdf p = merge(ev, esdf, 0.0, 2.0);
    const double d = esdf.field.sample(ev.field.center_of(0, 0, 0)).value;
    CHECK(p.field.values[0] ==
          doctest::Approx(std::min(d, 2.0) / 2.0 * 5.0).epsilon(1e-12));
  }

  SUBCASE("an even blend averages matched units") {
    // pick d_safe so the rescaled distance is exactly 2
    const double d = esdf.field.sample(ev.field.center_of(0, 0, 0)).value;
    REQUIRE(d > 2.0);
    const double d_safe = d / 0.4;  // min(d,d_safe)/d_safe * 5 = 2
    const Pesdf p = merge(ev, esdf, 0.5, d_safe);
    CHECK(p.field.values[0] == doctest::Approx(3.0).epsilon(1e-12));
  }

  SUBCASE("invalid lambda rejected") {
    CHECK_THROWS_AS(merge(ev, esdf, 1.5, 2.0), std::invalid_argument);
  }
}

TEST_CASE("merge is a per-voxel convex combination") {
  ErrorVolume ev;
  ev.xi_max = 5.0;
  ev.field = random_field(Vec3i(6, 6, 4), 71);
  OccupancyGrid g = make_occupancy(Vec3(-1, -1, -1), 0.5, Vec3i(12, 12, 10));
  std::mt19937_64 rng(72);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : g.occ) v = u(rng) < 0.05 ? 1 : 0;
  const Esdf esdf = esdf_from_occupancy(g, 10.0);
  const double lambda = 0.37;
  const Pesdf p = merge(ev, esdf, lambda, 2.0);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      for (int k = 0; k < 4; ++k) {
        const double a = ev.field.at(i, j, k);
        const double d = esdf.field.sample(ev.field.center_of(i, j, k)).value;
        const double b = std::min(d, 2.0) / 2.0 * 5.0;
        const double lo = std::min(a, b), hi = std::max(a, b);
        CHECK(p.field.at(i, j, k) >= lo - 1e-12);
        CHECK(p.field.at(i, j, k) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("binary field files round-trip") {
  const ScalarField f = random_field(Vec3i(7, 3, 5), 81);
  const std::string path = "test_field.bin";
  save_field_bin(path, f);
  const ScalarField g = load_field_bin(path);
  CHECK((g.origin - f.origin).norm() == 0.0);
  CHECK(g.resolution == f.resolution);
  CHECK((g.dims - f.dims).norm() == 0);
  REQUIRE(g.values.size() == f.values.size());
  for (size_t i = 0; i < f.values.size(); ++i) {
    CHECK(g.values[i] == f.values[i]);
  }
  std::remove(path.c_str());

  save_slice_csv("test_slice.csv", f, 2);
  std::remove("test_slice.csv");
  CHECK_THROWS_AS(save_slice_csv("x.csv", f, 9), std::invalid_argument);
}
