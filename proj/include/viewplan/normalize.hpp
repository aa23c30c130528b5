#pragma once

#include "viewplan/skeleton.hpp"

namespace viewplan {

/// Spine-normalized 2D keypoints: the spine midpoint maps to the origin, the
/// hip-to-neck direction to +y, and the spine length to exactly 1. Invisible
/// joints are encoded as (0, 0) with mask 0 so the vector keeps fixed arity.
struct NormalizedPose {
  Eigen::VectorXd coords;  // 2*J, interleaved (x, y) per joint
  Eigen::VectorXd mask;    // J entries of 0/1

  /// Network input layout: coordinates followed by the mask (3*J values).
  Eigen::VectorXd to_input() const {
    Eigen::VectorXd v(coords.size() + mask.size());
    v << coords, mask;
    return v;
  }
};

/// The spine segment recovered from detected keypoints: neck to the midpoint
/// of the visible hips (a single hip when only one is visible).
struct SpineAnchor {
  Vec2 midpoint;   // of the spine segment, pixels
  Vec2 direction;  // unit, hip point -> neck (pixel coordinates, y down)
  double length;   // pixels
};

/// Throws NormalizationError when the neck or both hips are invisible, or
/// the spine is shorter than 1 px.
SpineAnchor spine_anchor(const Keypoints2D& kp);

/// Maps each visible joint p to R * (p - midpoint) / length, where R is the
/// proper rotation taking the spine direction to +y. The result is invariant
/// to translation, rotation, and positive scaling of the input.
NormalizedPose normalize_keypoints(const Keypoints2D& kp);

}  // namespace viewplan
