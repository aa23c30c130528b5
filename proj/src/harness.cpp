#include "viewplan/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace viewplan {

namespace {

constexpr double kPckAlpha = 0.2;
constexpr double kMergeLambda = 0.5;
constexpr double kMergeDSafe = 2.0;
constexpr int kTrajSegments = 15;
constexpr double kTrajDt = 0.2;
constexpr int kMaxFieldReuse = 10;

struct TickScore {
  double pck = 0.0;
  double mse = std::numeric_limits<double>::quiet_NaN();
};

// PCK at 0.2 * projected spine length over ground-truth-visible joints;
// MSE over joints visible in both.
TickScore score_detection(const Skeleton3D& skel, const CameraView& cam,
                          const Keypoints2D& detection) {
  TickScore score;
  const auto neck = project_point(skel.joints[kNeck], cam);
  const auto hip = project_point(skel.joints[kMidHip], cam);
  if (!neck || !hip) return score;
  const double spine_px = (*neck - *hip).norm();
  if (spine_px < 1e-9) return score;
  const double thresh = kPckAlpha * spine_px;

  const Keypoints2D truth = project(skel, cam);
  int gt_visible = 0, correct = 0, matched = 0;
  double se_sum = 0.0;
  for (int i = 0; i < kJointCount; ++i) {
    if (!truth.visible[i]) continue;
    ++gt_visible;
    if (!detection.visible[i]) continue;
    const double d = (detection.px[i] - truth.px[i]).norm();
    if (d <= thresh) ++correct;
    se_sum += d * d;
    ++matched;
  }
  if (gt_visible > 0) {
    score.pck = static_cast<double>(correct) / gt_visible;
  }
  if (matched > 0) score.mse = se_sum / matched;
  return score;
}

CameraView camera_at(const Vec3& drone_pos, const Vec3& center,
                     const Scenario& sc) {
  const Vec3 rel = drone_pos - center;
  CameraView cam;
  cam.radius = std::max(rel.norm(), 1e-6);
  cam.azimuth = std::atan2(rel.y(), rel.x());
  cam.elevation =
      std::clamp(std::asin(std::clamp(rel.z() / cam.radius, -1.0, 1.0)), 0.0,
                 kPi / 2.0);
  cam.look_at = center;
  cam.focal_px = sc.focal_px;
  cam.image_w = sc.image_w;
  cam.image_h = sc.image_h;
  return cam;
}

OccluderFn environment_occluder(const OccupancyGrid& g) {
  return [&g](const Vec3& cam_pos, const Vec3& joint) {
    if (!g.in_bounds(cam_pos) || !g.in_bounds(joint)) return false;
    return !line_of_sight(cam_pos, joint, g);
  };
}

void finish_metrics(EpisodeMetrics& m) {
  m.ticks = static_cast<int>(m.pck_per_tick.size());
  double pck_sum = 0.0, mse_sum = 0.0;
  int mse_n = 0;
  for (double v : m.pck_per_tick) pck_sum += v;
  for (double v : m.mse_per_tick) {
    if (std::isfinite(v)) {
      mse_sum += v;
      ++mse_n;
    }
  }
  m.mean_pck = m.ticks > 0 ? pck_sum / m.ticks : 0.0;
  m.mean_mse = mse_n > 0 ? mse_sum / mse_n : 0.0;
}

}  // namespace

FieldSource net_field_source(const PerceptionNet& net) {
  return [net](const Keypoints2D& detection,
               const Skeleton3D&) -> std::optional<ErrorField> {
    try {
      return forward(net, normalize_keypoints(detection));
    } catch (const NormalizationError&) {
      return std::nullopt;
    }
  };
}

FieldSource oracle_field_source(const ViewGrid& grid,
                                const DetectorParams& det, int trials,
                                uint64_t seed) {
  return [grid, det, trials, seed](
             const Keypoints2D&,
             const Skeleton3D& truth) -> std::optional<ErrorField> {
    return compute_field(truth, grid, det, trials, seed);
  };
}

EpisodeResult run_episode(const Scenario& sc, const FieldSource& source,
                          const PlannerConfig& cfg) {
  validate_scenario(sc);
  const Skeleton3D base = build_canonical_skeleton(sc.subject_height);
  const OccupancyGrid env = build_occupancy(sc);
  const Esdf esdf = esdf_from_occupancy(env);
  const OccluderFn env_occ = environment_occluder(env);
  const uint64_t episode_seed = mix_seed(sc.seed, 0xE715);

  EpisodeResult result;
  Vec3 drone = sc.drone_start;
  std::optional<ViewChoice> current;
  std::optional<ErrorField> last_field;
  int ticks_without_field = 0;
  const double dt_tick = 1.0 / sc.tick_rate;

  for (int tick = 0; tick < sc.ticks(); ++tick) {
    const Skeleton3D skel = animate(base, subject_at(sc, tick * dt_tick));
    const Vec3 center = subject_center(skel);
    const double heading = subject_heading(skel);
    const CameraView cam = camera_at(drone, center, sc);

    const Detection det =
        detect_with_occluder(skel, cam, sc.detector,
                             mix_seed(episode_seed, tick), env_occ);
    const TickScore score = score_detection(skel, cam, det.keypoints);

    TickRecord rec;
    rec.tick = tick;
    rec.subject_pos = center;
    rec.pck = score.pck;
    rec.mse = score.mse;
    if (det.occluded_joints > 0) ++result.metrics.occluded_ticks;

    std::optional<ErrorField> field = source(det.keypoints, skel);
    if (field) {
      last_field = field;
      ticks_without_field = 0;
    } else if (last_field && ticks_without_field < kMaxFieldReuse) {
      field = last_field;
      ++ticks_without_field;
    } else {
      ++ticks_without_field;
    }

    if (field) {
      try {
        current = select_viewpoint(*field, center, heading,
                                   skel.joints[kNose], env, esdf, cfg, current);
      } catch (const NoViewpointError&) {
        current.reset();
      }
    } else {
      current.reset();
    }

    if (current && field) {
      rec.view_rank = current->rank;
      rec.view_az = current->view.azimuth;
      rec.view_el = current->view.elevation;
      const ErrorVolume volume = error_to_volume(
          *field, center, heading,
          vehicle_volume_spec(drone, field->radius));
      const Pesdf pesdf = merge(volume, esdf, kMergeLambda, kMergeDSafe);
      const Trajectory t0 = straight_line_trajectory(
          drone, current->view.position(), kTrajSegments, kTrajDt);
      const OptimizeResult opt = optimize(t0, &pesdf, &esdf, cfg);
      rec.iterations = opt.iterations;
      rec.j_smooth = cost_smooth(opt.trajectory, cfg).value;
      rec.j_collide = cost_collide(opt.trajectory, esdf, cfg).value;
      rec.j_pose = cost_pose(opt.trajectory, pesdf, cfg).value;
      drone = opt.trajectory.position_at(dt_tick);
    }
    rec.drone_pos = drone;

    if (!env.in_bounds(drone)) {
      throw EpisodeAbortError("run_episode: drone left environment bounds");
    }
    const Vec3i vox = env.voxel_of(drone);
    if (env.occupied(vox.x(), vox.y(), vox.z())) {
      ++result.metrics.collision_count;
    }
    result.metrics.min_clearance =
        std::min(result.metrics.min_clearance, esdf.field.sample(drone).value);
    result.metrics.pck_per_tick.push_back(score.pck);
    result.metrics.mse_per_tick.push_back(score.mse);
    result.log.push_back(rec);
  }
  finish_metrics(result.metrics);
  return result;
}

EpisodeResult run_episode(const Scenario& sc, const PerceptionNet& net,
                          const PlannerConfig& cfg) {
  if (net.n_az != sc.n_az || net.n_el != sc.n_el) {
    throw std::invalid_argument("run_episode: net grid does not match scenario");
  }
  return run_episode(sc, net_field_source(net), cfg);
}

EpisodeResult run_baseline(const Scenario& sc, BaselineMode mode) {
  validate_scenario(sc);
  const Skeleton3D base = build_canonical_skeleton(sc.subject_height);
  const OccupancyGrid env = build_occupancy(sc);
  const Esdf esdf = esdf_from_occupancy(env);
  const OccluderFn env_occ = environment_occluder(env);
  const uint64_t episode_seed = mix_seed(sc.seed, 0xBA5E);

  double bearing_offset = 0.0;
  switch (mode) {
    case BaselineMode::front: bearing_offset = 0.0; break;
    case BaselineMode::side: bearing_offset = kPi / 2.0; break;
    case BaselineMode::back: bearing_offset = kPi; break;
  }
  const double elevation = (kPi / 2.0) * 0.5 / sc.n_el;  // lowest grid row
  constexpr double kClearance = 1.0;

  EpisodeResult result;
  Vec3 drone = sc.drone_start;
  const double dt_tick = 1.0 / sc.tick_rate;

  for (int tick = 0; tick < sc.ticks(); ++tick) {
    const Skeleton3D skel = animate(base, subject_at(sc, tick * dt_tick));
    const Vec3 center = subject_center(skel);
    const double heading = subject_heading(skel);

    // Ideal bearing position; fall back to the nearest feasible azimuth
    // offset so the baseline never parks inside an obstacle.
    auto bearing_pos = [&](double extra) {
      const double az = heading + bearing_offset + extra;
      return center + sc.view_radius * Vec3(std::cos(elevation) * std::cos(az),
                                            std::cos(elevation) * std::sin(az),
                                            std::sin(elevation));
    };
    bool placed = false;
    for (int step = 0; step <= 12 && !placed; ++step) {
      for (const double sign : {1.0, -1.0}) {
        const Vec3 pos = bearing_pos(sign * step * 5.0 * kPi / 180.0);
        if (env.in_bounds(pos) && esdf.field.sample(pos).value >= kClearance) {
          drone = pos;
          placed = true;
          break;
        }
        if (step == 0) break;  // offset 0 has no sign
      }
    }
    // otherwise hold the previous position

    const CameraView cam = camera_at(drone, center, sc);
    const Detection det =
        detect_with_occluder(skel, cam, sc.detector,
                             mix_seed(episode_seed, tick), env_occ);
    const TickScore score = score_detection(skel, cam, det.keypoints);
    if (det.occluded_joints > 0) ++result.metrics.occluded_ticks;

    const Vec3i vox = env.voxel_of(drone);
    if (env.occupied(vox.x(), vox.y(), vox.z())) {
      ++result.metrics.collision_count;
    }
    result.metrics.min_clearance =
        std::min(result.metrics.min_clearance, esdf.field.sample(drone).value);

    TickRecord rec;
    rec.tick = tick;
    rec.subject_pos = center;
    rec.drone_pos = drone;
    rec.pck = score.pck;
    rec.mse = score.mse;
    result.metrics.pck_per_tick.push_back(score.pck);
    result.metrics.mse_per_tick.push_back(score.mse);
    result.log.push_back(rec);
  }
  finish_metrics(result.metrics);
  return result;
}

SuiteResult evaluate_suite(const std::vector<Scenario>& scenarios,
                           const PerceptionNet& net,
                           const PlannerConfig& cfg) {
  if (scenarios.empty()) {
    throw std::invalid_argument("evaluate_suite: no scenarios");
  }
  SuiteResult suite;
  for (const Scenario& sc : scenarios) suite.scenario_names.push_back(sc.name);

  struct Accum {
    std::vector<EpisodeMetrics> per_scenario;
  };
  const std::vector<std::string> methods = {"front", "side", "back", "ours"};
  std::vector<Accum> accums(methods.size());

  for (const Scenario& sc : scenarios) {
    accums[0].per_scenario.push_back(
        run_baseline(sc, BaselineMode::front).metrics);
    accums[1].per_scenario.push_back(
        run_baseline(sc, BaselineMode::side).metrics);
    accums[2].per_scenario.push_back(
        run_baseline(sc, BaselineMode::back).metrics);
    EpisodeResult ours = run_episode(sc, net, cfg);
    accums[3].per_scenario.push_back(ours.metrics);
    suite.our_episodes.push_back(std::move(ours));
  }

  for (size_t m = 0; m < methods.size(); ++m) {
    SuiteRow row;
    row.method = methods[m];
    double pck_sum = 0.0, mse_sum = 0.0;
    long pck_n = 0, mse_n = 0;
    for (const EpisodeMetrics& em : accums[m].per_scenario) {
      row.pck.push_back(em.mean_pck);
      row.mse.push_back(em.mean_mse);
      pck_sum += em.mean_pck * em.ticks;
      pck_n += em.ticks;
      for (double v : em.mse_per_tick) {
        if (std::isfinite(v)) {
          mse_sum += v;
          ++mse_n;
        }
      }
    }
    row.pck.push_back(pck_n > 0 ? pck_sum / pck_n : 0.0);
    row.mse.push_back(mse_n > 0 ? mse_sum / mse_n : 0.0);
    suite.rows.push_back(std::move(row));
  }
  return suite;
}

void save_suite_csv(const std::string& path, const SuiteResult& suite) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_suite_csv: cannot open " + path);
  out << "method";
  for (const std::string& name : suite.scenario_names) {
    out << ',' << name << "_pck," << name << "_mse";
  }
  out << ",all_pck,all_mse\n";
  for (const SuiteRow& row : suite.rows) {
    out << row.method;
    for (size_t i = 0; i < row.pck.size(); ++i) {
      out << ',' << fmt_double(row.pck[i]) << ',' << fmt_double(row.mse[i]);
    }
    out << '\n';
  }
}

SuiteResult load_suite_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_suite_csv: cannot open " + path);
  SuiteResult suite;
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_suite_csv: empty file");
  }
  {
    std::istringstream ss(line);
    std::string col;
    std::getline(ss, col, ',');  // "method"
    std::vector<std::string> cols;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    // columns come in pck/mse pairs; the last pair is the aggregate
    for (size_t i = 0; i + 2 < cols.size(); i += 2) {
      std::string name = cols[i];
      const auto pos = name.rfind("_pck");
      if (pos != std::string::npos) name = name.substr(0, pos);
      suite.scenario_names.push_back(name);
    }
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    SuiteRow row;
    std::string cell;
    std::getline(ss, row.method, ',');
    while (std::getline(ss, cell, ',')) {
      row.pck.push_back(std::stod(cell));
      if (!std::getline(ss, cell, ',')) {
        throw std::runtime_error("load_suite_csv: odd column count");
      }
      row.mse.push_back(std::stod(cell));
    }
    suite.rows.push_back(std::move(row));
  }
  return suite;
}

std::string format_suite(const SuiteResult& suite) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "method";
  for (const std::string& name : suite.scenario_names) {
    out << std::setw(22) << (name + " (PCK / MSE)");
  }
  out << std::setw(22) << "all (PCK / MSE)" << '\n';
  out << std::fixed << std::setprecision(3);
  for (const SuiteRow& row : suite.rows) {
    out << std::setw(8) << row.method;
    for (size_t i = 0; i < row.pck.size(); ++i) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(3) << row.pck[i] << " / "
           << std::setprecision(2) << row.mse[i];
      out << std::setw(22) << cell.str();
    }
    out << '\n';
  }
  return out.str();
}

void save_tick_log(const std::string& path,
                   const std::vector<TickRecord>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_tick_log: cannot open " + path);
  out << "tick,subject_x,subject_y,subject_z,view_rank,view_az,view_el,"
         "drone_x,drone_y,drone_z,j_smooth,j_collide,j_pose,iterations,"
         "pck,mse\n";
  for (const TickRecord& r : log) {
    out << r.tick << ',' << fmt_double(r.subject_pos.x()) << ','
        << fmt_double(r.subject_pos.y()) << ','
        << fmt_double(r.subject_pos.z()) << ',' << r.view_rank << ','
        << fmt_double(r.view_az) << ',' << fmt_double(r.view_el) << ','
        << fmt_double(r.drone_pos.x()) << ',' << fmt_double(r.drone_pos.y())
        << ',' << fmt_double(r.drone_pos.z()) << ',' << fmt_double(r.j_smooth)
        << ',' << fmt_double(r.j_collide) << ',' << fmt_double(r.j_pose) << ','
        << r.iterations << ',' << fmt_double(r.pck) << ',' << fmt_double(r.mse)
        << '\n';
  }
}

void save_metrics_csv(const std::string& path, const EpisodeMetrics& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_metrics_csv: cannot open " + path);
  out << "# mean_pck=" << fmt_double(m.mean_pck)
      << " mean_mse=" << fmt_double(m.mean_mse)
      << " occluded_ticks=" << m.occluded_ticks
      << " collisions=" << m.collision_count
      << " min_clearance=" << fmt_double(m.min_clearance) << '\n';
  out << "tick,pck,mse\n";
  for (int i = 0; i < m.ticks; ++i) {
    out << i << ',' << fmt_double(m.pck_per_tick[i]) << ','
        << fmt_double(m.mse_per_tick[i]) << '\n';
  }
}

}  // namespace viewplan
