#pragma once

#include <optional>
#include <vector>

#include "viewplan/pesdf.hpp"

namespace viewplan {

/// Waypoint trajectory at a uniform timestep. The first waypoint is fixed
/// during optimization; interior and end waypoints are free.
struct Trajectory {
  std::vector<Vec3> waypoints;  // M + 1 points
  double dt = 0.2;              // seconds per segment

  int segments() const { return static_cast<int>(waypoints.size()) - 1; }
  double duration() const { return segments() * dt; }
  double max_speed() const;
  Vec3 position_at(double t) const;  // linear interpolation, clamped
};

/// Evenly spaced straight line from start to goal.
Trajectory straight_line_trajectory(const Vec3& start, const Vec3& goal,
                                    int segments, double dt);

struct PlannerConfig {
  double pose_weight = 1.0;      // lambda_p
  double rho = 2.5;              // pose-penalty activation threshold
  double smooth_weight = 1.0;    // lambda_s
  double collide_weight = 10.0;  // lambda_c
  double d_col = 1.0;            // collision clearance, m
  double v_max = 3.0;            // m/s
  int max_iterations = 60;
  double step_size = 0.4;        // initial line-search step
  double tolerance = 1e-4;       // gradient-norm stop
  double hysteresis = 0.5;       // viewpoint switching margin, field units
  int k_candidates = 8;
};

struct CostResult {
  double value = 0.0;
  std::vector<Vec3> gradient;  // one entry per waypoint
};

/// Pose penalty: lambda_p * sum_k c(Xi(p_k)) with the hinge
/// c(Xi) = (Xi - rho)^2 / (2 rho) active when Xi <= rho. Waypoints outside
/// the lattice use the boundary-clamped sample.
CostResult cost_pose(const Trajectory& t, const Pesdf& p,
                     const PlannerConfig& cfg);

/// Smoothness: lambda_s * sum of squared second differences.
CostResult cost_smooth(const Trajectory& t, const PlannerConfig& cfg);

/// Collision penalty: the same hinge applied to obstacle distance with
/// threshold d_col.
CostResult cost_collide(const Trajectory& t, const Esdf& e,
                        const PlannerConfig& cfg);

struct OptimizeResult {
  Trajectory trajectory;
  std::vector<double> cost_history;  // initial cost plus each accepted step
  int iterations = 0;
};

/// Gradient descent with backtracking line search over the free waypoints
/// (everything but the start). Null fields or zero weights disable the
/// corresponding term entirely. After convergence the timestep is stretched
/// if any segment exceeds v_max. Throws DivergenceError on non-finite cost.
OptimizeResult optimize(const Trajectory& t0, const Pesdf* p, const Esdf* e,
                        const PlannerConfig& cfg);

/// Voxel traversal from a to b; false iff any traversed voxel is occupied.
/// Throws std::invalid_argument when an endpoint is out of bounds.
bool line_of_sight(const Vec3& a, const Vec3& b, const OccupancyGrid& g);

struct ViewChoice {
  CameraView view;
  int rank = 0;  // 1 = best
  int el = 0;
  int az = 0;
  double error = 0.0;
};

/// Walks the k_candidates best cells of the field in rank order and returns
/// the first feasible one: the candidate position must have line of sight to
/// the subject's head and obstacle clearance of at least d_col. A feasible
/// current choice is kept unless the winner beats it by at least the
/// hysteresis margin. Throws NoViewpointError when nothing is feasible.
ViewChoice select_viewpoint(const ErrorField& f, const Vec3& subject_pos,
                            double subject_heading, const Vec3& head_pos,
                            const OccupancyGrid& g, const Esdf& e,
                            const PlannerConfig& cfg,
                            const std::optional<ViewChoice>& current);

}  // namespace viewplan
