#pragma once

#include <functional>
#include <optional>

#include "viewplan/planner.hpp"
#include "viewplan/scenario.hpp"

namespace viewplan {

/// Per-episode scoring. PCK uses threshold 0.2 * projected spine length;
/// MSE is the mean squared pixel error over joints visible in both the
/// ground-truth projection and the detection.
struct EpisodeMetrics {
  std::vector<double> pck_per_tick;
  std::vector<double> mse_per_tick;  // NaN on ticks with no matched joint
  double mean_pck = 0.0;
  double mean_mse = 0.0;
  int occluded_ticks = 0;
  int collision_count = 0;
  double min_clearance = std::numeric_limits<double>::infinity();
  int ticks = 0;
};

/// One line of the planner tick log.
struct TickRecord {
  int tick = 0;
  Vec3 subject_pos = Vec3::Zero();
  int view_rank = 0;          // 0 when no viewpoint was available
  double view_az = 0.0;
  double view_el = 0.0;
  Vec3 drone_pos = Vec3::Zero();
  double j_smooth = 0.0;
  double j_collide = 0.0;
  double j_pose = 0.0;
  int iterations = 0;
  double pck = 0.0;
  double mse = 0.0;
};

struct EpisodeResult {
  EpisodeMetrics metrics;
  std::vector<TickRecord> log;
};

/// Produces the guidance field for one tick from the current detection (and,
/// for oracle sources, the ground-truth skeleton). Returns nullopt when no
/// field can be built this tick (e.g. normalization failure).
using FieldSource = std::function<std::optional<ErrorField>(
    const Keypoints2D& detection, const Skeleton3D& truth)>;

FieldSource net_field_source(const PerceptionNet& net);
FieldSource oracle_field_source(const ViewGrid& grid, const DetectorParams& det,
                                int trials, uint64_t seed);

/// Runs the full perception-planning loop: detect -> normalize -> field ->
/// P-ESDF -> viewpoint selection -> trajectory optimization -> advance one
/// tick, scoring each tick against the ground-truth projection. Deterministic
/// per scenario seed. Throws EpisodeAbortError if the drone leaves the
/// environment bounds.
EpisodeResult run_episode(const Scenario& sc, const FieldSource& source,
                          const PlannerConfig& cfg);
EpisodeResult run_episode(const Scenario& sc, const PerceptionNet& net,
                          const PlannerConfig& cfg);

enum class BaselineMode { front, side, back };

/// Fixed-bearing tracker baseline: the drone holds the given bearing relative
/// to the subject heading at the scenario view radius, with the same scoring.
/// Unreachable bearing positions fall back to the nearest feasible azimuth
/// offset, else the drone holds its previous position.
EpisodeResult run_baseline(const Scenario& sc, BaselineMode mode);

/// Comparison table over scenarios: rows front/side/back/ours, per-scenario
/// PCK and MSE plus a tick-weighted "All" aggregate.
struct SuiteRow {
  std::string method;
  std::vector<double> pck;  // per scenario, then the aggregate
  std::vector<double> mse;
};
struct SuiteResult {
  std::vector<std::string> scenario_names;
  std::vector<SuiteRow> rows;
  std::vector<EpisodeResult> our_episodes;  // one per scenario
};

SuiteResult evaluate_suite(const std::vector<Scenario>& scenarios,
                           const PerceptionNet& net, const PlannerConfig& cfg);

/// CSV/text serialization of the comparison table and tick logs.
void save_suite_csv(const std::string& path, const SuiteResult& suite);
SuiteResult load_suite_csv(const std::string& path);
std::string format_suite(const SuiteResult& suite);
void save_tick_log(const std::string& path,
                   const std::vector<TickRecord>& log);
void save_metrics_csv(const std::string& path, const EpisodeMetrics& m);

}  // namespace viewplan
