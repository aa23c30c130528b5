#include "viewplan/normalize.hpp"

namespace viewplan {

namespace {
constexpr double kMinSpinePx = 1.0;
}

SpineAnchor spine_anchor(const Keypoints2D& kp) {
  if (!kp.visible[kNeck]) {
    throw NormalizationError("spine_anchor: neck not visible");
  }
  Vec2 hip_point;
  if (kp.visible[kLHip] && kp.visible[kRHip]) {
    hip_point = 0.5 * (kp.px[kLHip] + kp.px[kRHip]);
  } else if (kp.visible[kLHip]) {
    hip_point = kp.px[kLHip];
  } else if (kp.visible[kRHip]) {
    hip_point = kp.px[kRHip];
  } else {
    throw NormalizationError("spine_anchor: both hips invisible");
  }
  const Vec2 spine = kp.px[kNeck] - hip_point;
  const double length = spine.norm();
  if (length < kMinSpinePx) {
    throw NormalizationError("spine_anchor: degenerate spine");
  }
  SpineAnchor anchor;
  anchor.midpoint = 0.5 * (kp.px[kNeck] + hip_point);
  anchor.direction = spine / length;
  anchor.length = length;
  return anchor;
}

NormalizedPose normalize_keypoints(const Keypoints2D& kp) {
  const SpineAnchor anchor = spine_anchor(kp);

  // Proper rotation taking the pixel-space spine direction d onto +y. With
  // pixel y growing downward an upright spine has d = (0, -1), so R is the
  // half-turn; the normalized frame ends up y-up.
  const double dx = anchor.direction.x();
  const double dy = anchor.direction.y();
  Eigen::Matrix2d rot;
  rot << dy, -dx, dx, dy;  // R*d = (0,1), det = +1

  NormalizedPose out;
  out.coords = Eigen::VectorXd::Zero(2 * kJointCount);
  out.mask = Eigen::VectorXd::Zero(kJointCount);
  for (int i = 0; i < kJointCount; ++i) {
    if (!kp.visible[i]) continue;
    const Vec2 p = rot * (kp.px[i] - anchor.midpoint) / anchor.length;
    out.coords[2 * i] = p.x();
    out.coords[2 * i + 1] = p.y();
    out.mask[i] = 1.0;
  }
  return out;
}

}  // namespace viewplan
