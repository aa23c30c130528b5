#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "viewplan/skeleton.hpp"

using namespace viewplan;

namespace {

PoseParams random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PoseParams p;
  p.shoulder_pitch_l = kShoulderPitchLimit * (2 * u(rng) - 1);
  p.shoulder_pitch_r = kShoulderPitchLimit * (2 * u(rng) - 1);
  p.shoulder_abduct_l = kShoulderAbductMin + u(rng) * (kShoulderAbductMax - kShoulderAbductMin);
  p.shoulder_abduct_r = kShoulderAbductMin + u(rng) * (kShoulderAbductMax - kShoulderAbductMin);
  p.elbow_l = u(rng) * kElbowMax;
  p.elbow_r = u(rng) * kElbowMax;
  p.hip_pitch_l = kHipPitchLimit * (2 * u(rng) - 1);
  p.hip_pitch_r = kHipPitchLimit * (2 * u(rng) - 1);
  p.knee_l = u(rng) * kKneeMax;
  p.knee_r = u(rng) * kKneeMax;
  p.gait_phase = u(rng) * kTwoPi;
  p.root_position = Vec3(4 * (u(rng) - 0.5), 4 * (u(rng) - 0.5), 2 * u(rng));
  p.root_heading = u(rng) * kTwoPi;
  return p;
}

// Independent of segment_hits_capsule: dense sampling along the segment with
// convex 1D refinement (the point-to-capsule distance is convex along a line).
bool capsule_hit_oracle(const Vec3& a, const Vec3& b, const Vec3& c0,
                        const Vec3& c1, double radius) {
  auto point_dist = [&](double t) {
    const Vec3 p = a + t * (b - a);
    const Vec3 ab = c1 - c0;
    const double len2 = ab.squaredNorm();
    double s = len2 > 0 ? (p - c0).dot(ab) / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    return (p - (c0 + s * ab)).norm();
  };
  double best_t = 0.0, best = point_dist(0.0);
  const int samples = 1000;
  for (int i = 1; i <= samples; ++i) {
    const double t = static_cast<double>(i) / samples;
    const double d = point_dist(t);
    if (d < best) {
      best = d;
      best_t = t;
    }
  }
  // Ternary-search refinement around the sampled minimum.
  double lo = std::max(0.0, best_t - 1.0 / samples);
  double hi = std::min(1.0, best_t + 1.0 / samples);
  for (int it = 0; it < 100; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (point_dist(m1) < point_dist(m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  return point_dist(0.5 * (lo + hi)) < radius;
}

}  // namespace

TEST_CASE("canonical skeleton proportions") {
  const Skeleton3D s = build_canonical_skeleton(1.8);
  CHECK((s.joints[kNeck] - s.joints[kMidHip]).norm() == doctest::Approx(0.54).epsilon(1e-12));
  CHECK(s.joints[kMidHip].norm() == doctest::Approx(0.0));
  // neck directly above mid-hip
  CHECK(s.joints[kNeck].x() == doctest::Approx(0.0));
  CHECK(s.joints[kNeck].y() == doctest::Approx(0.0));
  CHECK(s.joints[kNeck].z() > 0.0);
  // bilateral mirror symmetry about the sagittal (x-z) plane
  CHECK(s.joints[kLShoulder].y() == doctest::Approx(-s.joints[kRShoulder].y()));
  CHECK(s.joints[kLShoulder].x() == doctest::Approx(s.joints[kRShoulder].x()));
  CHECK(s.joints[kLShoulder].z() == doctest::Approx(s.joints[kRShoulder].z()));
  // ankle-to-nose spans roughly the body height
  const double span = (s.joints[kNose] - s.joints[kLAnkle]).norm();
  CHECK(span == doctest::Approx(1.8).epsilon(0.02));

  CHECK_THROWS_AS(build_canonical_skeleton(0.9), std::invalid_argument);
  CHECK_THROWS_AS(build_canonical_skeleton(2.3), std::invalid_argument);
}

TEST_CASE("animate identity pose applies only the root transform") {
  const Skeleton3D base = build_canonical_skeleton(1.7);
  PoseParams p;
  p.root_position = Vec3(1.0, -2.0, 0.5);
  p.root_heading = 0.7;
  const Skeleton3D out = animate(base, p);
  const Eigen::Matrix3d rot =
      Eigen::AngleAxisd(0.7, Vec3::UnitZ()).toRotationMatrix();
  for (int i = 0; i < kJointCount; ++i) {
    const Vec3 expect = p.root_position + rot * base.joints[i];
    CHECK((out.joints[i] - expect).norm() < 1e-12);
  }
}

TEST_CASE("forward kinematics preserves bone lengths") {
  const Skeleton3D base = build_canonical_skeleton(1.75);
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 1000; ++trial) {
    const Skeleton3D out = animate(base, random_pose(rng));
    for (const Bone& b : base.bones) {
      const double before = (base.joints[b.child] - base.joints[b.parent]).norm();
      const double after = (out.joints[b.child] - out.joints[b.parent]).norm();
      CHECK(std::abs(before - after) < 1e-9);
    }
  }
}

TEST_CASE("raised right arm lifts the wrist above the shoulder") {
  const Skeleton3D base = build_canonical_skeleton(1.8);
  PoseParams p;
  p.shoulder_abduct_r = kPi / 2.0;
  const Skeleton3D out = animate(base, p);

  // Independent check: rotate the canonical 3-link arm chain by hand about
  // the x axis at the shoulder with angle -pi/2 (right side).
  const Vec3 sh = base.joints[kRShoulder];
  auto rot_x = [](double a, const Vec3& v) {
    return Vec3(v.x(), std::cos(a) * v.y() - std::sin(a) * v.z(),
                std::sin(a) * v.y() + std::cos(a) * v.z());
  };
  const Vec3 elbow_expect = sh + rot_x(-kPi / 2.0, base.joints[kRElbow] - sh);
  const Vec3 wrist_expect = sh + rot_x(-kPi / 2.0, base.joints[kRWrist] - sh);
  CHECK((out.joints[kRElbow] - elbow_expect).norm() < 1e-12);
  CHECK((out.joints[kRWrist] - wrist_expect).norm() < 1e-12);
  CHECK(out.joints[kRWrist].z() > out.joints[kRShoulder].z());
  CHECK(out.joints[kLWrist].z() == doctest::Approx(base.joints[kLWrist].z()));

  PoseParams bad;
  bad.knee_l = -0.1;
  CHECK_THROWS_AS(animate(base, bad), std::invalid_argument);
}

TEST_CASE("pinhole projection basics") {
  const Skeleton3D s = build_canonical_skeleton(1.8);
  CameraView cam;
  cam.azimuth = 0.0;
  cam.elevation = 0.0;
  cam.radius = 5.0;
  cam.look_at = subject_center(s);
  cam.focal_px = 500.0;
  cam.image_w = 640;
  cam.image_h = 480;

  SUBCASE("look-at point projects to the image center") {
    const auto px = project_point(cam.look_at, cam);
    REQUIRE(px.has_value());
    CHECK(std::abs((*px)[0] - 320.0) <= 0.5);
    CHECK(std::abs((*px)[1] - 240.0) <= 0.5);
  }

  SUBCASE("doubling the focal length doubles offsets from the center") {
    CameraView cam2 = cam;
    cam2.focal_px = 1000.0;
    for (int i : {kNose, kLWrist, kRAnkle}) {
      const auto a = project_point(s.joints[i], cam);
      const auto b = project_point(s.joints[i], cam2);
      REQUIRE(a.has_value());
      REQUIRE(b.has_value());
      CHECK(((*b) - Vec2(320, 240) - 2.0 * ((*a) - Vec2(320, 240))).norm() <
            1e-9);
    }
  }

  SUBCASE("neck pixel matches the closed-form value") {
    // Independently derived: camera at (5, 0, 0.27) looking at (0, 0, 0.27);
    // neck (0, 0, 0.54) sits 0.27 m above the axis at depth 5.
    const Keypoints2D kp = project(s, cam);
    REQUIRE(kp.visible[kNeck]);
    CHECK(kp.px[kNeck].x() == doctest::Approx(320.0).epsilon(1e-9));
    CHECK(kp.px[kNeck].y() == doctest::Approx(213.0).epsilon(1e-9));
  }

  SUBCASE("behind-camera joints are flagged invisible, not an error") {
    CameraView away = cam;
    away.look_at = subject_center(s) + Vec3(1000.0, 0.0, 0.0);
    const Keypoints2D kp = project(s, away);
    for (int i = 0; i < kJointCount; ++i) CHECK_FALSE(kp.visible[i]);
  }
}

TEST_CASE("projection is equivariant under yaw-plus-translation transforms") {
  const Skeleton3D base = build_canonical_skeleton(1.75);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    PoseParams p = random_pose(rng);
    const Skeleton3D s = animate(base, p);
    CameraView cam;
    cam.azimuth = u(rng) * kTwoPi;
    cam.elevation = u(rng) * 1.4;
    cam.radius = 3.0 + 3.0 * u(rng);
    cam.look_at = subject_center(s);
    const Keypoints2D before = project(s, cam);

    const double yaw = u(rng) * kTwoPi;
    const Vec3 shift(10 * (u(rng) - 0.5), 10 * (u(rng) - 0.5), 2 * u(rng));
    const Eigen::Matrix3d rot =
        Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    Skeleton3D moved = s;
    for (auto& j : moved.joints) j = rot * j + shift;
    CameraView cam2 = cam;
    cam2.azimuth = cam.azimuth + yaw;
    cam2.look_at = rot * cam.look_at + shift;

    const Keypoints2D after = project(moved, cam2);
    for (int i = 0; i < kJointCount; ++i) {
      CHECK(before.visible[i] == after.visible[i]);
      if (before.visible[i]) {
        CHECK((before.px[i] - after.px[i]).norm() < 1e-6);
      }
    }
  }
}

TEST_CASE("noiseless detection equals projection") {
  const Skeleton3D base = build_canonical_skeleton(1.75);
  DetectorParams det;
  det.sigma_base = 0.0;
  det.sigma_occluded = 0.0;
  det.drop_prob = 0.0;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Skeleton3D s = animate(base, random_pose(rng));
    CameraView cam;
    cam.azimuth = u(rng) * kTwoPi;
    cam.elevation = u(rng) * 1.4;
    cam.radius = 4.0;
    cam.look_at = subject_center(s);
    const Keypoints2D d = detect(s, cam, det, trial);
    const Keypoints2D p = project(s, cam);
    for (int i = 0; i < kJointCount; ++i) {
      CHECK(d.visible[i] == p.visible[i]);
      if (d.visible[i]) CHECK((d.px[i] - p.px[i]).norm() == 0.0);
    }
  }
}

TEST_CASE("face joints are occluded from behind the torso") {
  const Skeleton3D base = build_canonical_skeleton(1.8);
  PoseParams p;  // T-pose facing +x
  const Skeleton3D s = animate(base, p);
  CameraView cam;
  cam.azimuth = kPi;  // directly behind
  cam.elevation = 0.05;
  cam.radius = 4.0;
  cam.look_at = subject_center(s);
  const Vec3 cam_pos = cam.position();

  for (int joint : {kNose, kLEye, kREye}) {
    CHECK(joint_occluded(s, cam_pos, joint));
    // cross-check the torso capsule against the sampling oracle
    const Bone& torso = s.bones[0];
    REQUIRE(torso.parent == kMidHip);
    CHECK(capsule_hit_oracle(cam_pos, s.joints[joint], s.joints[torso.parent],
                             s.joints[torso.child], torso.radius));
  }
  // from the front the face is clear
  CameraView front = cam;
  front.azimuth = 0.0;
  CHECK_FALSE(joint_occluded(s, front.position(), kNose));
}

TEST_CASE("segment-capsule test agrees with the sampling oracle") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int hits = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Vec3 a(3 * u(rng), 3 * u(rng), 3 * u(rng));
    const Vec3 b(3 * u(rng), 3 * u(rng), 3 * u(rng));
    const Vec3 c0(u(rng), u(rng), u(rng));
    const Vec3 c1(u(rng), u(rng), u(rng));
    const double r = 0.05 + 0.3 * std::abs(u(rng));
    const bool fast = segment_hits_capsule(a, b, c0, c1, r);
    const bool slow = capsule_hit_oracle(a, b, c0, c1, r);
    CHECK(fast == slow);
    hits += fast ? 1 : 0;
  }
  CHECK(hits > 100);  // the sample actually exercises both branches
  CHECK(hits < 9900);
}

TEST_CASE("detection is deterministic per seed") {
  const Skeleton3D base = build_canonical_skeleton(1.7);
  std::mt19937_64 rng(3);
  const Skeleton3D s = animate(base, random_pose(rng));
  CameraView cam;
  cam.azimuth = 1.0;
  cam.elevation = 0.4;
  cam.radius = 4.0;
  cam.look_at = subject_center(s);
  DetectorParams det;
  const Keypoints2D a = detect(s, cam, det, 1234);
  const Keypoints2D b = detect(s, cam, det, 1234);
  const Keypoints2D c = detect(s, cam, det, 1235);
  bool differs = false;
  for (int i = 0; i < kJointCount; ++i) {
    CHECK(a.visible[i] == b.visible[i]);
    CHECK(a.px[i].x() == b.px[i].x());
    CHECK(a.px[i].y() == b.px[i].y());
    if (a.visible[i] != c.visible[i] || (a.px[i] - c.px[i]).norm() > 0.0) {
      differs = true;
    }
  }
  CHECK(differs);
}

TEST_CASE("pose frame files round-trip") {
  const Skeleton3D base = build_canonical_skeleton(1.75);
  std::mt19937_64 rng(5);
  std::vector<Skeleton3D> frames;
  for (int i = 0; i < 4; ++i) frames.push_back(animate(base, random_pose(rng)));
  const std::string path = "test_frames.txt";
  save_pose_frames(path, frames);
  const auto loaded = load_pose_frames(path);
  REQUIRE(loaded.size() == frames.size());
  for (size_t f = 0; f < frames.size(); ++f) {
    for (int i = 0; i < kJointCount; ++i) {
      CHECK((loaded[f].joints[i] - frames[f].joints[i]).norm() == 0.0);
    }
  }
  std::remove(path.c_str());
}
