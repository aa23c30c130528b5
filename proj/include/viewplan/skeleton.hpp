#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "viewplan/common.hpp"

namespace viewplan {

inline constexpr int kJointCount = 17;

/// Fixed joint order shared by every module that handles keypoint vectors.
enum Joint : int {
  kNose = 0,
  kNeck,
  kLShoulder,
  kRShoulder,
  kLElbow,
  kRElbow,
  kLWrist,
  kRWrist,
  kLHip,
  kRHip,
  kLKnee,
  kRKnee,
  kLAnkle,
  kRAnkle,
  kMidHip,
  kLEye,
  kREye,
};

const char* joint_name(int index);

/// One rigid link of the body model: a capsule of the given radius swept
/// between the parent and child joints. Used for self-occlusion tests.
struct Bone {
  int parent;
  int child;
  double radius;
};

/// Articulated human model in world coordinates. Joints are meters; the bone
/// list forms a tree rooted at the mid-hip.
struct Skeleton3D {
  std::array<Vec3, kJointCount> joints;
  std::vector<Bone> bones;
};

/// Joint-angle pose driving forward kinematics. Angles are radians and must
/// stay within the limits below; the gait phase wraps modulo 2*pi and adds a
/// sinusoidal walk swing on top of the named angles.
struct PoseParams {
  double shoulder_pitch_l = 0.0;
  double shoulder_pitch_r = 0.0;
  double shoulder_abduct_l = 0.0;  // positive raises the arm sideways
  double shoulder_abduct_r = 0.0;
  double elbow_l = 0.0;  // flexion, 0 = straight
  double elbow_r = 0.0;
  double hip_pitch_l = 0.0;  // positive swings the leg forward
  double hip_pitch_r = 0.0;
  double knee_l = 0.0;  // flexion, 0 = straight
  double knee_r = 0.0;
  double gait_phase = 0.0;
  Vec3 root_position{0.0, 0.0, 0.0};
  double root_heading = 0.0;
};

// Per-joint angle limits (radians).
inline constexpr double kShoulderPitchLimit = kPi;
inline constexpr double kShoulderAbductMin = -1.6;
inline constexpr double kShoulderAbductMax = kPi;
inline constexpr double kElbowMax = 2.8;
inline constexpr double kHipPitchLimit = 1.3;
inline constexpr double kKneeMax = 2.6;

/// One cell of the hemispherical view space: the camera sits at
/// look_at + r*(cos(el)cos(az), cos(el)sin(az), sin(el)) and its principal
/// axis points at look_at. Elevation pi/2 is the zenith.
struct CameraView {
  double azimuth = 0.0;
  double elevation = 0.0;
  double radius = 4.0;
  Vec3 look_at{0.0, 0.0, 0.0};
  double focal_px = 500.0;
  int image_w = 640;
  int image_h = 480;

  Vec3 position() const {
    return look_at + radius * Vec3(std::cos(elevation) * std::cos(azimuth),
                                   std::cos(elevation) * std::sin(azimuth),
                                   std::sin(elevation));
  }
};

/// Per-joint pixel coordinates with a visibility flag. Invisible joints hold
/// the sentinel (-1, -1).
struct Keypoints2D {
  std::array<Vec2, kJointCount> px;
  std::array<bool, kJointCount> visible;

  Keypoints2D() {
    px.fill(Vec2(-1.0, -1.0));
    visible.fill(false);
  }
};

/// Simulated detector noise model. Stand-in for the error statistics of a
/// real 2D pose network.
struct DetectorParams {
  double sigma_base = 2.0;      // px, unoccluded joints
  double sigma_occluded = 15.0; // px, occluded-but-detected joints
  double drop_prob = 0.5;       // chance an occluded joint is dropped
};

/// Builds an upright T-pose skeleton facing +x with the mid-hip at the
/// origin, scaled so the ankle-to-nose distance is about `height_m` and the
/// neck-to-mid-hip spine is exactly 0.30 * height_m.
/// Throws std::invalid_argument outside [1.0, 2.2] m.
Skeleton3D build_canonical_skeleton(double height_m);

/// Forward kinematics: applies `params` to `base` along the bone tree. Bone
/// lengths are preserved exactly; the root is placed at params.root_position
/// with yaw params.root_heading. Throws std::invalid_argument on angle-limit
/// violations.
Skeleton3D animate(const Skeleton3D& base, const PoseParams& params);

/// Raw pinhole projection of a single world point; empty when the point is
/// not in front of the camera. Does not apply image-bounds clipping.
std::optional<Vec2> project_point(const Vec3& p, const CameraView& cam);

/// Ground-truth pinhole projection of every joint. Joints behind the camera
/// or outside the image rectangle are flagged invisible. No occlusion.
Keypoints2D project(const Skeleton3D& s, const CameraView& cam);

/// Exact closest-distance test between segment [a,b] and the capsule swept
/// from c0 to c1 with the given radius.
bool segment_hits_capsule(const Vec3& a, const Vec3& b, const Vec3& c0,
                          const Vec3& c1, double radius);

/// True when the camera-to-joint segment intersects any bone capsule not
/// adjacent to that joint.
bool joint_occluded(const Skeleton3D& s, const Vec3& cam_pos, int joint);

/// Extra occlusion predicate (e.g. environment raycast) layered on top of the
/// body-capsule test: called with the camera position and the joint position.
using OccluderFn = std::function<bool(const Vec3& cam_pos, const Vec3& joint)>;

/// Detection with per-joint occlusion counting; `occluder` may be null.
struct Detection {
  Keypoints2D keypoints;
  int occluded_joints = 0;
};
Detection detect_with_occluder(const Skeleton3D& s, const CameraView& cam,
                               const DetectorParams& det, uint64_t seed,
                               const OccluderFn& occluder);

/// Simulated imperfect detector: projects each joint, tests self-occlusion
/// against the bone capsules, drops occluded joints with probability
/// det.drop_prob, and perturbs the rest with Gaussian pixel noise
/// (sigma_occluded when occluded, sigma_base otherwise). Joints pushed
/// outside the image become invisible. Deterministic for a fixed seed.
Keypoints2D detect(const Skeleton3D& s, const CameraView& cam,
                   const DetectorParams& det, uint64_t seed);

/// Spine midpoint: halfway between neck and mid-hip.
Vec3 subject_center(const Skeleton3D& s);

/// Facing direction derived from the hip line, (l_hip - r_hip) x z,
/// returned as a yaw angle.
double subject_heading(const Skeleton3D& s);

/// Mid-hip height above the ankles for a straight-legged skeleton of the
/// given height; place the root at this z to stand the subject on z = 0.
double standing_root_height(double height_m);

/// Line-oriented text serialization of pose sequences: a header naming the
/// joint order, then one frame per line of 17 whitespace-separated
/// coordinate triples.
void save_pose_frames(const std::string& path,
                      const std::vector<Skeleton3D>& frames);
std::vector<Skeleton3D> load_pose_frames(const std::string& path);

}  // namespace viewplan
