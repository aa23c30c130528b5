#include "viewplan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace viewplan {

double Trajectory::max_speed() const {
  double worst = 0.0;
  for (int k = 0; k + 1 < static_cast<int>(waypoints.size()); ++k) {
    worst = std::max(worst, (waypoints[k + 1] - waypoints[k]).norm() / dt);
  }
  return worst;
}

Vec3 Trajectory::position_at(double t) const {
  if (waypoints.empty()) return Vec3::Zero();
  if (t <= 0.0) return waypoints.front();
  const double s = t / dt;
  const int k = static_cast<int>(std::floor(s));
  if (k >= segments()) return waypoints.back();
  const double f = s - k;
  return (1.0 - f) * waypoints[k] + f * waypoints[k + 1];
}

Trajectory straight_line_trajectory(const Vec3& start, const Vec3& goal,
                                    int segments, double dt) {
  if (segments < 2) {
    throw std::invalid_argument("straight_line_trajectory: need M >= 2");
  }
  Trajectory t;
  t.dt = dt;
  t.waypoints.reserve(segments + 1);
  for (int k = 0; k <= segments; ++k) {
    const double f = static_cast<double>(k) / segments;
    t.waypoints.push_back((1.0 - f) * start + f * goal);
  }
  return t;
}

namespace {

// Piecewise-quadratic hinge shared by the pose and collision penalties:
// phi(v) = (v - threshold)^2 / (2 threshold) for v <= threshold, else 0.
inline double hinge(double v, double threshold) {
  if (v > threshold) return 0.0;
  const double d = v - threshold;
  return d * d / (2.0 * threshold);
}

inline double hinge_deriv(double v, double threshold) {
  if (v > threshold) return 0.0;
  return (v - threshold) / threshold;
}

CostResult field_penalty(const Trajectory& t, const ScalarField& field,
                         double weight, double threshold) {
  CostResult r;
  r.gradient.assign(t.waypoints.size(), Vec3::Zero());
  for (size_t k = 0; k < t.waypoints.size(); ++k) {
    const FieldSample s = field.sample(t.waypoints[k]);
    r.value += weight * hinge(s.value, threshold);
    r.gradient[k] = weight * hinge_deriv(s.value, threshold) * s.gradient;
  }
  return r;
}

}  // namespace

CostResult cost_pose(const Trajectory& t, const Pesdf& p,
                     const PlannerConfig& cfg) {
  if (!(cfg.rho > 0.0)) throw std::invalid_argument("cost_pose: rho <= 0");
  return field_penalty(t, p.field, cfg.pose_weight, cfg.rho);
}

CostResult cost_collide(const Trajectory& t, const Esdf& e,
                        const PlannerConfig& cfg) {
  if (!(cfg.d_col > 0.0)) {
    throw std::invalid_argument("cost_collide: d_col <= 0");
  }
  return field_penalty(t, e.field, cfg.collide_weight, cfg.d_col);
}

CostResult cost_smooth(const Trajectory& t, const PlannerConfig& cfg) {
  const int m = t.segments();
  if (m < 2) throw std::invalid_argument("cost_smooth: need M >= 2");
  CostResult r;
  r.gradient.assign(t.waypoints.size(), Vec3::Zero());
  const double w = cfg.smooth_weight;
  for (int k = 1; k < m; ++k) {
    const Vec3 d =
        t.waypoints[k + 1] - 2.0 * t.waypoints[k] + t.waypoints[k - 1];
    r.value += w * d.squaredNorm();
    r.gradient[k + 1] += 2.0 * w * d;
    r.gradient[k] -= 4.0 * w * d;
    r.gradient[k - 1] += 2.0 * w * d;
  }
  return r;
}

OptimizeResult optimize(const Trajectory& t0, const Pesdf* p, const Esdf* e,
                        const PlannerConfig& cfg) {
  if (t0.segments() < 2) {
    throw std::invalid_argument("optimize: need M >= 2");
  }
  const bool use_pose = p != nullptr && cfg.pose_weight > 0.0;
  const bool use_collide = e != nullptr && cfg.collide_weight > 0.0;

  Trajectory traj = t0;
  const size_t n = traj.waypoints.size();

  auto total_cost = [&](const Trajectory& t, std::vector<Vec3>* grad) {
    double j = 0.0;
    if (grad) grad->assign(n, Vec3::Zero());
    auto add = [&](const CostResult& c) {
      j += c.value;
      if (grad) {
        for (size_t k = 0; k < n; ++k) (*grad)[k] += c.gradient[k];
      }
    };
    add(cost_smooth(t, cfg));
    if (use_pose) add(cost_pose(t, *p, cfg));
    if (use_collide) add(cost_collide(t, *e, cfg));
    return j;
  };

  OptimizeResult result;
  std::vector<Vec3> grad;
  double j = total_cost(traj, &grad);
  if (!std::isfinite(j)) throw DivergenceError("optimize: non-finite cost", 0);
  result.cost_history.push_back(j);

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    grad[0] = Vec3::Zero();  // start waypoint is fixed
    double gn2 = 0.0;
    for (const Vec3& g : grad) gn2 += g.squaredNorm();
    if (std::sqrt(gn2) < cfg.tolerance) break;

    // Backtracking line search (Armijo).
    double alpha = cfg.step_size;
    bool accepted = false;
    Trajectory trial = traj;
    while (alpha > 1e-12) {
      for (size_t k = 1; k < n; ++k) {
        trial.waypoints[k] = traj.waypoints[k] - alpha * grad[k];
      }
      const double jt = total_cost(trial, nullptr);
      if (std::isfinite(jt) && jt <= j - 1e-4 * alpha * gn2) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;

    traj.waypoints = trial.waypoints;
    j = total_cost(traj, &grad);
    if (!std::isfinite(j)) {
      throw DivergenceError("optimize: non-finite cost", iter + 1);
    }
    result.cost_history.push_back(j);
    result.iterations = iter + 1;
  }

  // Uniform time reparameterization to respect the speed limit.
  const double vmax = traj.max_speed();
  if (cfg.v_max > 0.0 && vmax > cfg.v_max) {
    traj.dt *= vmax / cfg.v_max;
  }
  result.trajectory = std::move(traj);
  return result;
}

bool line_of_sight(const Vec3& a, const Vec3& b, const OccupancyGrid& g) {
  if (!g.in_bounds(a) || !g.in_bounds(b)) {
    throw std::invalid_argument("line_of_sight: endpoint out of bounds");
  }
  Vec3i cur = g.voxel_of(a);
  const Vec3i end = g.voxel_of(b);
  if (g.occupied(cur.x(), cur.y(), cur.z())) return false;

  const Vec3 dir = b - a;
  Vec3i step;
  Vec3 t_max, t_delta;
  for (int ax = 0; ax < 3; ++ax) {
    if (dir[ax] > 0.0) {
      step[ax] = 1;
      const double boundary = g.origin[ax] + (cur[ax] + 1) * g.resolution;
      t_max[ax] = (boundary - a[ax]) / dir[ax];
      t_delta[ax] = g.resolution / dir[ax];
    } else if (dir[ax] < 0.0) {
      step[ax] = -1;
      const double boundary = g.origin[ax] + cur[ax] * g.resolution;
      t_max[ax] = (boundary - a[ax]) / dir[ax];
      t_delta[ax] = -g.resolution / dir[ax];
    } else {
      step[ax] = 0;
      t_max[ax] = std::numeric_limits<double>::infinity();
      t_delta[ax] = std::numeric_limits<double>::infinity();
    }
  }

  const int max_steps = (end - cur).cwiseAbs().sum() + 3;
  for (int i = 0; i < max_steps && cur != end; ++i) {
    int ax = 0;
    if (t_max[1] < t_max[ax]) ax = 1;
    if (t_max[2] < t_max[ax]) ax = 2;
    cur[ax] += step[ax];
    t_max[ax] += t_delta[ax];
    if (cur[ax] < 0 || cur[ax] >= g.dims[ax]) break;  // numeric guard
    if (g.occupied(cur.x(), cur.y(), cur.z())) return false;
  }
  return true;
}

ViewChoice select_viewpoint(const ErrorField& f, const Vec3& subject_pos,
                            double subject_heading, const Vec3& head_pos,
                            const OccupancyGrid& g, const Esdf& e,
                            const PlannerConfig& cfg,
                            const std::optional<ViewChoice>& current) {
  if (!g.in_bounds(head_pos)) {
    throw std::invalid_argument("select_viewpoint: subject head out of bounds");
  }
  const int cells = f.n_az * f.n_el;
  const std::vector<ViewRank> order = best_views(f, cells);
  const int k = std::min(cfg.k_candidates, cells);

  auto make_view = [&](int el, int az) {
    CameraView cam;
    cam.azimuth = wrap_angle(subject_heading + kTwoPi * (az + 0.5) / f.n_az);
    cam.elevation = (kPi / 2.0) * (el + 0.5) / f.n_el;
    cam.radius = f.radius;
    cam.look_at = subject_pos;
    return cam;
  };
  auto feasible = [&](const CameraView& cam) {
    const Vec3 pos = cam.position();
    if (!g.in_bounds(pos)) return false;
    if (e.field.sample(pos).value < cfg.d_col) return false;
    return line_of_sight(pos, head_pos, g);
  };

  std::optional<ViewChoice> winner;
  for (int r = 0; r < k; ++r) {
    const CameraView cam = make_view(order[r].el, order[r].az);
    if (feasible(cam)) {
      winner = ViewChoice{cam, r + 1, order[r].el, order[r].az, order[r].error};
      break;
    }
  }
  if (!winner) {
    throw NoViewpointError("select_viewpoint: no feasible candidate");
  }

  if (current) {
    const CameraView cam = make_view(current->el, current->az);
    if (feasible(cam)) {
      const double cur_error = f.values(current->el, current->az);
      if (cur_error - winner->error < cfg.hysteresis) {
        int rank = 1;
        for (int r = 0; r < cells; ++r) {
          if (order[r].el == current->el && order[r].az == current->az) {
            rank = r + 1;
            break;
          }
        }
        return ViewChoice{cam, rank, current->el, current->az, cur_error};
      }
    }
  }
  return *winner;
}

}  // namespace viewplan
