#include "viewplan/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <Eigen/Geometry>

namespace viewplan {

namespace {

constexpr double kTorsoRadius = 0.14;
constexpr double kHeadRadius = 0.10;
constexpr double kLimbRadius = 0.05;

// Gait swing amplitudes (radians). All contributions vanish at phase 0 so a
// zero-phase pose is exactly the named-angle pose.
constexpr double kGaitHipAmp = 0.5;
constexpr double kGaitKneeAmp = 0.7;
constexpr double kGaitArmAmp = 0.35;

const char* kJointNames[kJointCount] = {
    "nose",    "neck",    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
    "l_wrist", "r_wrist", "l_hip",      "r_hip",      "l_knee",  "r_knee",
    "l_ankle", "r_ankle", "mid_hip",    "l_eye",      "r_eye"};

std::vector<Bone> canonical_bones() {
  return {
      {kMidHip, kNeck, kTorsoRadius},   {kNeck, kNose, kHeadRadius},
      {kNose, kLEye, kLimbRadius},      {kNose, kREye, kLimbRadius},
      {kNeck, kLShoulder, kLimbRadius}, {kNeck, kRShoulder, kLimbRadius},
      {kLShoulder, kLElbow, kLimbRadius}, {kLElbow, kLWrist, kLimbRadius},
      {kRShoulder, kRElbow, kLimbRadius}, {kRElbow, kRWrist, kLimbRadius},
      {kMidHip, kLHip, kLimbRadius},    {kLHip, kLKnee, kLimbRadius},
      {kLKnee, kLAnkle, kLimbRadius},   {kMidHip, kRHip, kLimbRadius},
      {kRHip, kRKnee, kLimbRadius},     {kRKnee, kRAnkle, kLimbRadius},
  };
}

Eigen::Matrix3d rot_x(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix();
}
Eigen::Matrix3d rot_y(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
}
Eigen::Matrix3d rot_z(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
}

void check_limit(double v, double lo, double hi, const char* what) {
  if (!(v >= lo && v <= hi)) {
    throw std::invalid_argument(std::string("PoseParams: ") + what +
                                " out of limits");
  }
}

struct CameraBasis {
  Vec3 pos;
  Vec3 fwd;
  Vec3 right;
  Vec3 up;
};

CameraBasis camera_basis(const CameraView& cam) {
  CameraBasis b;
  b.pos = cam.position();
  b.fwd = (cam.look_at - b.pos).normalized();
  Vec3 world_up = Vec3::UnitZ();
  if (b.fwd.cross(world_up).norm() < 1e-9) {
    // Zenith view: pick a deterministic up axis from the azimuth.
    world_up = Vec3(std::cos(cam.azimuth), std::sin(cam.azimuth), 0.0);
  }
  b.right = b.fwd.cross(world_up).normalized();
  b.up = b.right.cross(b.fwd);
  return b;
}

// Closest squared distance between segments [p0,p1] and [q0,q1].
double segment_segment_dist2(const Vec3& p0, const Vec3& p1, const Vec3& q0,
                             const Vec3& q1) {
  const Vec3 d1 = p1 - p0;
  const Vec3 d2 = q1 - q0;
  const Vec3 r = p0 - q0;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-18 && e <= 1e-18) {
    return r.squaredNorm();
  }
  if (a <= 1e-18) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-18) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      if (denom > 1e-18) {
        s = std::clamp((b * f - c * e) / denom, 0.0, 1.0);
      }
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  const Vec3 cp = p0 + s * d1;
  const Vec3 cq = q0 + t * d2;
  return (cp - cq).squaredNorm();
}

double point_segment_dist(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 1e-18) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace

const char* joint_name(int index) { return kJointNames[index]; }

Skeleton3D build_canonical_skeleton(double height_m) {
  if (!(height_m >= 1.0 && height_m <= 2.2)) {
    throw std::invalid_argument("build_canonical_skeleton: height out of range");
  }
  const double h = height_m;
  Skeleton3D s;
  s.bones = canonical_bones();
  auto& j = s.joints;
  j[kMidHip] = Vec3(0, 0, 0);
  j[kNeck] = Vec3(0, 0, 0.30 * h);  // spine length 0.30 * height by definition
  j[kNose] = Vec3(0.02 * h, 0, 0.40 * h);
  j[kLEye] = j[kNose] + Vec3(-0.01 * h, 0.033 * h, 0.025 * h);
  j[kREye] = j[kNose] + Vec3(-0.01 * h, -0.033 * h, 0.025 * h);
  j[kLShoulder] = Vec3(0, 0.13 * h, 0.29 * h);
  j[kRShoulder] = Vec3(0, -0.13 * h, 0.29 * h);
  j[kLElbow] = Vec3(0, 0.29 * h, 0.29 * h);
  j[kRElbow] = Vec3(0, -0.29 * h, 0.29 * h);
  j[kLWrist] = Vec3(0, 0.44 * h, 0.29 * h);
  j[kRWrist] = Vec3(0, -0.44 * h, 0.29 * h);
  j[kLHip] = Vec3(0, 0.06 * h, 0);
  j[kRHip] = Vec3(0, -0.06 * h, 0);
  j[kLKnee] = Vec3(0, 0.06 * h, -0.30 * h);
  j[kRKnee] = Vec3(0, -0.06 * h, -0.30 * h);
  j[kLAnkle] = Vec3(0, 0.06 * h, -0.60 * h);
  j[kRAnkle] = Vec3(0, -0.06 * h, -0.60 * h);
  return s;
}

double standing_root_height(double height_m) { return 0.60 * height_m; }

Skeleton3D animate(const Skeleton3D& base, const PoseParams& params) {
  check_limit(params.shoulder_pitch_l, -kShoulderPitchLimit,
              kShoulderPitchLimit, "shoulder_pitch_l");
  check_limit(params.shoulder_pitch_r, -kShoulderPitchLimit,
              kShoulderPitchLimit, "shoulder_pitch_r");
  check_limit(params.shoulder_abduct_l, kShoulderAbductMin, kShoulderAbductMax,
              "shoulder_abduct_l");
  check_limit(params.shoulder_abduct_r, kShoulderAbductMin, kShoulderAbductMax,
              "shoulder_abduct_r");
  check_limit(params.elbow_l, 0.0, kElbowMax, "elbow_l");
  check_limit(params.elbow_r, 0.0, kElbowMax, "elbow_r");
  check_limit(params.hip_pitch_l, -kHipPitchLimit, kHipPitchLimit,
              "hip_pitch_l");
  check_limit(params.hip_pitch_r, -kHipPitchLimit, kHipPitchLimit,
              "hip_pitch_r");
  check_limit(params.knee_l, 0.0, kKneeMax, "knee_l");
  check_limit(params.knee_r, 0.0, kKneeMax, "knee_r");
  if (!params.root_position.allFinite() || !std::isfinite(params.root_heading)) {
    throw std::invalid_argument("PoseParams: non-finite root transform");
  }

  const double phase = wrap_angle(params.gait_phase);
  const double swing = std::sin(phase);
  const double hip_l = params.hip_pitch_l + kGaitHipAmp * swing;
  const double hip_r = params.hip_pitch_r - kGaitHipAmp * swing;
  const double knee_l = params.knee_l + kGaitKneeAmp * std::max(0.0, swing);
  const double knee_r = params.knee_r + kGaitKneeAmp * std::max(0.0, -swing);
  const double sh_l = params.shoulder_pitch_l - kGaitArmAmp * swing;
  const double sh_r = params.shoulder_pitch_r + kGaitArmAmp * swing;

  // Rotation applied at each joint, affecting its descendants only.
  std::array<Eigen::Matrix3d, kJointCount> joint_rot;
  joint_rot.fill(Eigen::Matrix3d::Identity());
  joint_rot[kLShoulder] = rot_y(-sh_l) * rot_x(params.shoulder_abduct_l);
  joint_rot[kRShoulder] = rot_y(-sh_r) * rot_x(-params.shoulder_abduct_r);
  joint_rot[kLElbow] = rot_z(-params.elbow_l);
  joint_rot[kRElbow] = rot_z(params.elbow_r);
  joint_rot[kLHip] = rot_y(-hip_l);
  joint_rot[kRHip] = rot_y(-hip_r);
  joint_rot[kLKnee] = rot_y(knee_l);
  joint_rot[kRKnee] = rot_y(knee_r);

  std::array<int, kJointCount> parent;
  parent.fill(-1);
  for (const Bone& b : base.bones) parent[b.child] = b.parent;

  const Eigen::Matrix3d root_rot = rot_z(params.root_heading);

  Skeleton3D out;
  out.bones = base.bones;
  std::array<Eigen::Matrix3d, kJointCount> acc;
  std::array<bool, kJointCount> done;
  done.fill(false);
  acc[kMidHip] = root_rot * joint_rot[kMidHip];
  out.joints[kMidHip] = params.root_position;
  done[kMidHip] = true;

  // Bones are listed parent-before-child.
  for (const Bone& b : base.bones) {
    const Vec3 offset = base.joints[b.child] - base.joints[b.parent];
    out.joints[b.child] = out.joints[b.parent] + acc[b.parent] * offset;
    acc[b.child] = acc[b.parent] * joint_rot[b.child];
    done[b.child] = true;
  }
  for (bool d : done) {
    if (!d) throw std::invalid_argument("animate: bone graph is not a tree");
  }
  return out;
}

std::optional<Vec2> project_point(const Vec3& p, const CameraView& cam) {
  const CameraBasis b = camera_basis(cam);
  const Vec3 d = p - b.pos;
  const double depth = d.dot(b.fwd);
  if (depth <= 1e-9) return std::nullopt;
  const double u = 0.5 * cam.image_w + cam.focal_px * d.dot(b.right) / depth;
  const double v = 0.5 * cam.image_h - cam.focal_px * d.dot(b.up) / depth;
  return Vec2(u, v);
}

Keypoints2D project(const Skeleton3D& s, const CameraView& cam) {
  Keypoints2D kp;
  for (int i = 0; i < kJointCount; ++i) {
    const auto px = project_point(s.joints[i], cam);
    if (!px) continue;
    if ((*px)[0] < 0.0 || (*px)[0] >= cam.image_w || (*px)[1] < 0.0 ||
        (*px)[1] >= cam.image_h) {
      continue;
    }
    kp.px[i] = *px;
    kp.visible[i] = true;
  }
  return kp;
}

bool segment_hits_capsule(const Vec3& a, const Vec3& b, const Vec3& c0,
                          const Vec3& c1, double radius) {
  return segment_segment_dist2(a, b, c0, c1) < radius * radius;
}

bool joint_occluded(const Skeleton3D& s, const Vec3& cam_pos, int joint) {
  const Vec3& target = s.joints[joint];
  for (const Bone& b : s.bones) {
    if (b.parent == joint || b.child == joint) continue;
    // A capsule that contains the target joint itself (eyes sitting inside
    // the head capsule, say) cannot meaningfully occlude it.
    if (point_segment_dist(target, s.joints[b.parent], s.joints[b.child]) <=
        b.radius + 1e-9) {
      continue;
    }
    if (segment_hits_capsule(cam_pos, target, s.joints[b.parent],
                             s.joints[b.child], b.radius)) {
      return true;
    }
  }
  return false;
}

Detection detect_with_occluder(const Skeleton3D& s, const CameraView& cam,
                               const DetectorParams& det, uint64_t seed,
                               const OccluderFn& occluder) {
  Detection result;
  const Keypoints2D truth = project(s, cam);
  const Vec3 cam_pos = cam.position();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int i = 0; i < kJointCount; ++i) {
    if (!truth.visible[i]) continue;
    bool occluded = joint_occluded(s, cam_pos, i);
    if (!occluded && occluder && occluder(cam_pos, s.joints[i])) {
      occluded = true;
    }
    if (occluded) {
      ++result.occluded_joints;
      if (uni(rng) < det.drop_prob) continue;  // dropped
    }
    const double sigma = occluded ? det.sigma_occluded : det.sigma_base;
    const Vec2 noise(sigma * gauss(rng), sigma * gauss(rng));
    const Vec2 px = truth.px[i] + noise;
    if (px[0] < 0.0 || px[0] >= cam.image_w || px[1] < 0.0 ||
        px[1] >= cam.image_h) {
      continue;  // pushed out of frame
    }
    result.keypoints.px[i] = px;
    result.keypoints.visible[i] = true;
  }
  return result;
}

Keypoints2D detect(const Skeleton3D& s, const CameraView& cam,
                   const DetectorParams& det, uint64_t seed) {
  return detect_with_occluder(s, cam, det, seed, nullptr).keypoints;
}

Vec3 subject_center(const Skeleton3D& s) {
  return 0.5 * (s.joints[kNeck] + s.joints[kMidHip]);
}

double subject_heading(const Skeleton3D& s) {
  const Vec3 hip_line = s.joints[kLHip] - s.joints[kRHip];
  const Vec3 fwd = hip_line.cross(Vec3::UnitZ());
  return std::atan2(fwd.y(), fwd.x());
}

void save_pose_frames(const std::string& path,
                      const std::vector<Skeleton3D>& frames) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_pose_frames: cannot open " + path);
  out << "# joints:";
  for (int i = 0; i < kJointCount; ++i) out << ' ' << kJointNames[i];
  out << '\n';
  for (const Skeleton3D& s : frames) {
    for (int i = 0; i < kJointCount; ++i) {
      if (i) out << ' ';
      out << fmt_double(s.joints[i].x()) << ' ' << fmt_double(s.joints[i].y())
          << ' ' << fmt_double(s.joints[i].z());
    }
    out << '\n';
  }
}

std::vector<Skeleton3D> load_pose_frames(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_pose_frames: cannot open " + path);
  std::vector<Skeleton3D> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Skeleton3D s;
    s.bones = canonical_bones();
    for (int i = 0; i < kJointCount; ++i) {
      if (!(ss >> s.joints[i].x() >> s.joints[i].y() >> s.joints[i].z())) {
        throw std::runtime_error("load_pose_frames: malformed frame line");
      }
    }
    frames.push_back(std::move(s));
  }
  return frames;
}

}  // namespace viewplan
