// Command-line front end: data generation, training, robustness evaluation,
// single-shot planning, scenario simulation, and the full comparison suite.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "viewplan/harness.hpp"

namespace vp = viewplan;

namespace {

// Output paths are taken relative to $VIEWPLAN_OUT_DIR when set.
std::string out_path(const std::string& name) {
  if (name.empty() || name.front() == '/') return name;
  const char* dir = std::getenv("VIEWPLAN_OUT_DIR");
  if (!dir || !*dir) return name;
  std::filesystem::create_directories(dir);
  return std::string(dir) + "/" + name;
}

struct GridArgs {
  int n_az = 24;
  int n_el = 8;
  double radius = 4.0;
};

void add_grid_args(CLI::App* cmd, GridArgs& g) {
  cmd->add_option("--grid-az", g.n_az, "azimuth bins");
  cmd->add_option("--grid-el", g.n_el, "elevation bins");
  cmd->add_option("--radius", g.radius, "hemisphere radius, m");
}

void add_detector_args(CLI::App* cmd, vp::DetectorParams& det) {
  cmd->add_option("--sigma0", det.sigma_base, "unoccluded noise, px");
  cmd->add_option("--sigma1", det.sigma_occluded, "occluded noise, px");
  cmd->add_option("--drop", det.drop_prob, "occluded drop probability");
}

std::vector<vp::Keypoints2D> synthesize_frames(int count, uint64_t seed,
                                               const vp::DetectorParams& det) {
  // Emulated hand-held video: a camera following a walking subject.
  const vp::Skeleton3D base = vp::build_canonical_skeleton(1.75);
  std::vector<vp::Keypoints2D> frames;
  frames.reserve(count);
  for (int i = 0; i < count; ++i) {
    vp::PoseParams p = vp::preset_pose("walk");
    p.gait_phase = 0.25 * i;
    p.root_heading = 0.1 * std::sin(0.05 * i);
    p.root_position = vp::Vec3(0, 0, vp::standing_root_height(1.75));
    const vp::Skeleton3D s = vp::animate(base, p);
    vp::CameraView cam;
    cam.azimuth = 0.3 * std::sin(0.08 * i);
    cam.elevation = 0.15;
    cam.radius = 4.0;
    cam.look_at = vp::subject_center(s);
    frames.push_back(vp::detect(s, cam, det, vp::mix_seed(seed, i)));
  }
  return frames;
}

int run(int argc, char** argv) {
  CLI::App app{"viewplan: perception-aware viewpoint selection simulator"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data",
                                 "generate training pairs from gait poses");
  int gen_poses = 500;
  int gen_trials = 40;
  uint64_t gen_seed = 1;
  double gen_height = 1.75;
  std::string gen_out = "dataset.txt";
  GridArgs gen_grid;
  vp::DetectorParams gen_det;
  gen->add_option("--poses", gen_poses, "number of poses");
  gen->add_option("--trials", gen_trials, "oracle trials per view");
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--height", gen_height, "subject height, m");
  gen->add_option("--out", gen_out, "output dataset file");
  add_grid_args(gen, gen_grid);
  add_detector_args(gen, gen_det);

  // train
  auto* tr = app.add_subcommand("train", "train the error-field predictor");
  std::string tr_data = "dataset.txt";
  std::string tr_out = "net.bin";
  std::string tr_history = "history.csv";
  vp::TrainConfig tr_cfg;
  tr->add_option("--data", tr_data, "dataset file");
  tr->add_option("--out", tr_out, "output weights file");
  tr->add_option("--history", tr_history, "loss history CSV");
  tr->add_option("--lr", tr_cfg.learning_rate, "learning rate");
  tr->add_option("--batch", tr_cfg.batch_size, "batch size");
  tr->add_option("--epochs", tr_cfg.epochs, "epoch count");
  tr->add_option("--seed", tr_cfg.seed, "random seed");
  tr->add_option("--split", tr_cfg.train_fraction, "train fraction");
  tr->add_option("--l2", tr_cfg.l2, "L2 weight penalty");

  // eval-robustness
  auto* rob = app.add_subcommand("eval-robustness",
                                 "perturbation robustness of the predictor");
  std::string rob_net = "net.bin";
  std::string rob_out = "robustness.csv";
  int rob_frames = 146;
  int rob_bins = 21;
  uint64_t rob_seed = 5;
  GridArgs rob_grid;
  vp::DetectorParams rob_det;
  rob->add_option("--net", rob_net, "weights file");
  rob->add_option("--out", rob_out, "output CSV");
  rob->add_option("--frames", rob_frames, "number of emulated frames");
  rob->add_option("--bins", rob_bins, "quantization bins");
  rob->add_option("--seed", rob_seed, "random seed");
  add_grid_args(rob, rob_grid);
  add_detector_args(rob, rob_det);

  // plan
  auto* plan = app.add_subcommand("plan", "single-field planning demo");
  std::string plan_pose = "raise-arm";
  std::string plan_field;
  std::string plan_scenario;
  std::string plan_prefix = "plan";
  int plan_trials = 60;
  uint64_t plan_seed = 1;
  std::vector<double> plan_start;
  GridArgs plan_grid;
  vp::DetectorParams plan_det;
  plan->add_option("--pose", plan_pose, "preset pose for the oracle field");
  plan->add_option("--field", plan_field, "load the field from CSV instead");
  plan->add_option("--scenario", plan_scenario, "environment scenario file");
  plan->add_option("--out-prefix", plan_prefix, "output file prefix");
  plan->add_option("--trials", plan_trials, "oracle trials");
  plan->add_option("--seed", plan_seed, "random seed");
  plan->add_option("--start", plan_start, "drone start x y z")->expected(3);
  add_grid_args(plan, plan_grid);
  add_detector_args(plan, plan_det);

  // simulate
  auto* sim = app.add_subcommand("simulate", "run one scenario episode");
  std::string sim_scenario;
  std::string sim_net = "net.bin";
  std::string sim_prefix = "sim";
  bool sim_oracle = false;
  int sim_trials = 30;
  uint64_t sim_seed = 0;
  sim->add_option("scenario", sim_scenario, "scenario file")->required();
  sim->add_option("--net", sim_net, "weights file");
  sim->add_flag("--oracle", sim_oracle,
                "use the oracle field instead of the net");
  sim->add_option("--trials", sim_trials, "oracle trials (with --oracle)");
  sim->add_option("--out-prefix", sim_prefix, "output file prefix");
  auto* sim_seed_opt =
      sim->add_option("--seed", sim_seed, "override the scenario seed");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "baselines-vs-ours comparison");
  std::vector<std::string> ev_scenarios;
  std::string ev_net = "net.bin";
  std::string ev_out = "comparison.csv";
  ev->add_option("--scenarios", ev_scenarios, "scenario files")->required();
  ev->add_option("--net", ev_net, "weights file");
  ev->add_option("--out", ev_out, "comparison CSV");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    const vp::ViewGrid grid =
        vp::make_grid(gen_grid.n_az, gen_grid.n_el, gen_grid.radius);
    const vp::Skeleton3D base = vp::build_canonical_skeleton(gen_height);
    const auto poses =
        vp::sample_training_poses(gen_poses, vp::mix_seed(gen_seed, 11));
    const vp::GenerateResult res =
        vp::generate_dataset(poses, base, grid, gen_det, {}, gen_trials,
                             gen_seed);
    vp::save_dataset(out_path(gen_out), res.data);
    std::cout << "wrote " << res.data.pairs.size() << " pairs ("
              << res.skipped << " skipped) to " << out_path(gen_out) << "\n";
  } else if (tr->parsed()) {
    const vp::Dataset data = vp::load_dataset(tr_data);
    auto [net, history] = vp::train(data, tr_cfg);
    vp::save_net(out_path(tr_out), net);
    {
      std::ofstream h(out_path(tr_history));
      h << "epoch,train_loss,val_loss\n";
      h << "0,," << vp::fmt_double(history.val_loss[0]) << "\n";
      for (size_t e = 0; e < history.train_loss.size(); ++e) {
        h << (e + 1) << ',' << vp::fmt_double(history.train_loss[e]) << ','
          << vp::fmt_double(history.val_loss[e + 1]) << "\n";
      }
    }
    std::cout << "best epoch " << history.best_epoch << ", val loss "
              << history.val_loss[history.best_epoch] << " (initial "
              << history.val_loss[0] << ")\n";
  } else if (rob->parsed()) {
    const vp::PerceptionNet net =
        vp::load_net(rob_net, rob_grid.n_az, rob_grid.n_el, rob_grid.radius);
    const auto frames = synthesize_frames(rob_frames, rob_seed, rob_det);
    std::ofstream out(out_path(rob_out));
    out << "level,mode,per_joint,percent_changed,frames_used,frames_excluded\n";
    const char* level_names[] = {"T1", "T2", "T3"};
    const char* mode_names[] = {"translation", "rotation", "scale", "all"};
    for (int per_joint = 0; per_joint <= 1; ++per_joint) {
      for (int li = 0; li < 3; ++li) {
        for (int mi = 0; mi < 4; ++mi) {
          const auto r = vp::perturb_robustness(
              net, frames, static_cast<vp::PerturbLevel>(li), rob_bins,
              vp::mix_seed(rob_seed, li * 8 + mi + (per_joint ? 100 : 0)),
              static_cast<vp::PerturbMode>(mi), per_joint != 0);
          out << level_names[li] << ',' << mode_names[mi] << ',' << per_joint
              << ',' << vp::fmt_double(r.percent_changed) << ','
              << r.frames_used << ',' << r.frames_excluded << "\n";
          std::cout << level_names[li] << " " << mode_names[mi]
                    << (per_joint ? " (per-joint)" : " (global)") << ": "
                    << r.percent_changed << "% changed\n";
        }
      }
    }
  } else if (plan->parsed()) {
    vp::Scenario sc;
    if (!plan_scenario.empty()) {
      sc = vp::load_scenario(plan_scenario);
    } else {
      sc.keyframes.push_back({0.0, 0.0, 0.0, 0.0, 0.0, plan_pose});
      vp::validate_scenario(sc);
    }
    const vp::Skeleton3D base =
        vp::build_canonical_skeleton(sc.subject_height);
    const vp::Skeleton3D skel = vp::animate(base, vp::subject_at(sc, 0.0));

    vp::ErrorField field;
    if (!plan_field.empty()) {
      field = vp::load_field_csv(plan_field);
    } else {
      const vp::ViewGrid grid =
          vp::make_grid(plan_grid.n_az, plan_grid.n_el, plan_grid.radius);
      field = vp::compute_field(skel, grid, plan_det, plan_trials, plan_seed);
    }
    vp::save_field_csv(out_path(plan_prefix + "_field.csv"), field);

    const vp::OccupancyGrid env = vp::build_occupancy(sc);
    const vp::Esdf esdf = vp::esdf_from_occupancy(env);
    vp::PlannerConfig cfg;
    const vp::Vec3 start =
        plan_start.size() == 3
            ? vp::Vec3(plan_start[0], plan_start[1], plan_start[2])
            : sc.drone_start;
    const vp::Vec3 center = vp::subject_center(skel);
    const double heading = vp::subject_heading(skel);
    const auto choice = vp::select_viewpoint(
        field, center, heading, skel.joints[vp::kNose], env, esdf, cfg, {});
    const vp::ErrorVolume volume = vp::error_to_volume(
        field, center, heading, vp::vehicle_volume_spec(start, field.radius));
    const vp::Pesdf pesdf = vp::merge(volume, esdf, 0.5);
    const vp::Trajectory t0 =
        vp::straight_line_trajectory(start, choice.view.position(), 15, 0.2);
    const vp::OptimizeResult opt = vp::optimize(t0, &pesdf, &esdf, cfg);

    {
      std::ofstream out(out_path(plan_prefix + "_trajectory.csv"));
      out << "t,x,y,z\n";
      for (size_t k = 0; k < opt.trajectory.waypoints.size(); ++k) {
        out << vp::fmt_double(k * opt.trajectory.dt) << ','
            << vp::fmt_double(opt.trajectory.waypoints[k].x()) << ','
            << vp::fmt_double(opt.trajectory.waypoints[k].y()) << ','
            << vp::fmt_double(opt.trajectory.waypoints[k].z()) << "\n";
      }
    }
    const int slice_k = std::min(
        pesdf.field.dims.z() - 1,
        std::max(0, static_cast<int>((start.z() - pesdf.field.origin.z()) /
                                     pesdf.field.resolution)));
    vp::save_slice_csv(out_path(plan_prefix + "_pesdf_slice.csv"), pesdf.field,
                       slice_k);
    std::cout << "chose view rank " << choice.rank << " (az "
              << choice.view.azimuth << ", el " << choice.view.elevation
              << "), " << opt.iterations << " iterations\n";
  } else if (sim->parsed()) {
    vp::Scenario sc = vp::load_scenario(sim_scenario);
    if (sim_seed_opt->count() > 0) sc.seed = sim_seed;
    vp::PlannerConfig cfg;
    vp::EpisodeResult res;
    if (sim_oracle) {
      const vp::ViewGrid grid =
          vp::make_grid(sc.n_az, sc.n_el, sc.view_radius);
      res = vp::run_episode(
          sc,
          vp::oracle_field_source(grid, sc.detector, sim_trials,
                                  vp::mix_seed(sc.seed, 0x0AC1E)),
          cfg);
    } else {
      const vp::PerceptionNet net =
          vp::load_net(sim_net, sc.n_az, sc.n_el, sc.view_radius);
      res = vp::run_episode(sc, net, cfg);
    }
    vp::save_tick_log(out_path(sim_prefix + "_ticklog.csv"), res.log);
    vp::save_metrics_csv(out_path(sim_prefix + "_metrics.csv"), res.metrics);
    std::cout << "episode '" << sc.name << "': PCK " << res.metrics.mean_pck
              << ", MSE " << res.metrics.mean_mse << ", collisions "
              << res.metrics.collision_count << "\n";
  } else if (ev->parsed()) {
    std::vector<vp::Scenario> scenarios;
    for (const std::string& path : ev_scenarios) {
      scenarios.push_back(vp::load_scenario(path));
    }
    const vp::PerceptionNet net = vp::load_net(
        ev_net, scenarios[0].n_az, scenarios[0].n_el, scenarios[0].view_radius);
    vp::PlannerConfig cfg;
    const vp::SuiteResult suite = vp::evaluate_suite(scenarios, net, cfg);
    vp::save_suite_csv(out_path(ev_out), suite);
    std::cout << vp::format_suite(suite);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const vp::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const vp::NoViewpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const vp::EpisodeAbortError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const vp::NormalizationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
