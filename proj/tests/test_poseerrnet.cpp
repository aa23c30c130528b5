#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "viewplan/poseerrnet.hpp"

using namespace viewplan;

namespace {

double softplus_ref(double z) { return std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0); }

PerceptionNet random_net(const std::vector<int>& sizes, uint64_t seed) {
  return make_net(sizes, sizes.back(), 1, 4.0, seed);
}

std::vector<DatasetPair> random_batch(const PerceptionNet& net, int count,
                                      uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<DatasetPair> batch(count);
  for (auto& pair : batch) {
    pair.input.resize(net.input_dim());
    pair.target.resize(net.output_dim());
    for (int i = 0; i < pair.input.size(); ++i) pair.input[i] = u(rng);
    for (int i = 0; i < pair.target.size(); ++i) pair.target[i] = 1.0 + u(rng);
  }
  return batch;
}

// Central finite differences over every weight and bias.
double max_grad_rel_error(PerceptionNet net, const std::vector<DatasetPair>& batch,
                          double l2, double step) {
  const auto [loss, grad] = loss_and_grad(net, batch, l2);
  (void)loss;
  double worst = 0.0;
  auto probe = [&](double& w, double analytic) {
    const double keep = w;
    w = keep + step;
    const double up = loss_and_grad(net, batch, l2).first;
    w = keep - step;
    const double down = loss_and_grad(net, batch, l2).first;
    w = keep;
    const double numeric = (up - down) / (2 * step);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };
  for (int l = 0; l < net.layer_count(); ++l) {
    for (int r = 0; r < net.weights[l].rows(); ++r) {
      for (int c = 0; c < net.weights[l].cols(); ++c) {
        probe(net.weights[l](r, c), grad.dw[l](r, c));
      }
      probe(net.biases[l][r], grad.db[l][r]);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("forward with zero weights is a constant softplus(0) field") {
  PerceptionNet net = make_net(default_layer_sizes(51, 192), 24, 8, 4.0, 1);
  for (auto& w : net.weights) w.setZero();
  for (auto& b : net.biases) b.setZero();
  NormalizedPose pose;
  pose.coords = Eigen::VectorXd::Zero(34);
  pose.mask = Eigen::VectorXd::Zero(17);
  const ErrorField f = forward(net, pose);
  CHECK(f.n_az == 24);
  CHECK(f.n_el == 8);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 24; ++j) {
      CHECK(f.values(i, j) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward outputs are nonnegative") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  PerceptionNet net = random_net({7, 9, 5}, 77);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd x(7);
    for (int i = 0; i < 7; ++i) x[i] = u(rng);
    const Eigen::VectorXd y = forward_raw(net, x);
    CHECK(y.minCoeff() >= 0.0);
  }
}

TEST_CASE("single-layer net computes softplus(w x + b)") {
  PerceptionNet net = make_net({1, 1}, 1, 1, 4.0, 1);
  net.weights[0](0, 0) = 2.0;
  net.biases[0][0] = 1.0;
  Eigen::VectorXd x(1);
  x[0] = 3.0;
  const Eigen::VectorXd y = forward_raw(net, x);
  CHECK(y[0] == doctest::Approx(softplus_ref(7.0)).epsilon(1e-12));
}

TEST_CASE("forward rejects dimension mismatches") {
  PerceptionNet net = random_net({4, 6, 3}, 3);
  Eigen::VectorXd x(5);
  x.setZero();
  CHECK_THROWS_AS(forward_raw(net, x), std::invalid_argument);
}

TEST_CASE("loss is zero when predictions equal targets") {
  PerceptionNet net = random_net({6, 8, 4}, 11);
  std::vector<DatasetPair> batch = random_batch(net, 3, 21);
  for (auto& pair : batch) pair.target = forward_raw(net, pair.input);
  const auto [loss, grad] = loss_and_grad(net, batch, 0.0);
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-15));
  for (const auto& dw : grad.dw) CHECK(dw.cwiseAbs().maxCoeff() < 1e-12);
  for (const auto& db : grad.db) CHECK(db.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a single off-by-delta output cell costs delta squared") {
  PerceptionNet net = random_net({3, 5, 1}, 13);
  std::vector<DatasetPair> batch = random_batch(net, 1, 23);
  const double delta = 0.37;
  batch[0].target = forward_raw(net, batch[0].input);
  batch[0].target[0] -= delta;
  const auto [loss, grad] = loss_and_grad(net, batch, 0.0);
  CHECK(loss == doctest::Approx(delta * delta).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 rng(31);
  const std::vector<std::vector<int>> shapes = {
      {3, 5, 4, 2}, {6, 4, 3}, {2, 8, 8, 5}, {5, 3, 3, 3, 4}};
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto& sizes = shapes[trial % shapes.size()];
    PerceptionNet net = random_net(sizes, 100 + trial);
    const auto batch = random_batch(net, 1 + trial % 4, 200 + trial);
    const double l2 = (trial % 3 == 0) ? 0.01 : 0.0;
    CHECK(max_grad_rel_error(net, batch, l2, 1e-5) < 1e-4);
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("training fits a constant target") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Dataset data;
  data.n_az = 4;
  data.n_el = 2;
  data.radius = 4.0;
  for (int i = 0; i < 40; ++i) {
    DatasetPair pair;
    pair.input.resize(51);
    for (int k = 0; k < 51; ++k) pair.input[k] = u(rng);
    pair.target = Eigen::VectorXd::Constant(8, 1.25);
    data.pairs.push_back(std::move(pair));
  }
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 8;
  cfg.seed = 7;
  const auto [net, history] = train(data, cfg);
  CHECK(*std::min_element(history.val_loss.begin(), history.val_loss.end()) <
        1e-3);
  CHECK(history.val_loss[history.best_epoch] ==
        *std::min_element(history.val_loss.begin(), history.val_loss.end()));
}

TEST_CASE("training is deterministic per seed") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Dataset data;
  data.n_az = 4;
  data.n_el = 2;
  for (int i = 0; i < 24; ++i) {
    DatasetPair pair;
    pair.input.resize(51);
    for (int k = 0; k < 51; ++k) pair.input[k] = u(rng);
    pair.target.resize(8);
    for (int k = 0; k < 8; ++k) pair.target[k] = 0.5 + 0.5 * u(rng);
    data.pairs.push_back(std::move(pair));
  }
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 99;
  const auto [net1, hist1] = train(data, cfg);
  const auto [net2, hist2] = train(data, cfg);
  REQUIRE(hist1.val_loss.size() == hist2.val_loss.size());
  for (size_t i = 0; i < hist1.val_loss.size(); ++i) {
    CHECK(hist1.val_loss[i] == hist2.val_loss[i]);
  }
  for (int l = 0; l < net1.layer_count(); ++l) {
    CHECK((net1.weights[l] - net2.weights[l]).norm() == 0.0);
  }
  CHECK_THROWS_AS(train(Dataset{}, cfg), std::invalid_argument);
}

TEST_CASE("generate_dataset pairs noiseless observations with oracle targets") {
  const Skeleton3D base = build_canonical_skeleton(1.75);
  const ViewGrid g = make_grid(6, 2, 4.0);
  DetectorParams det{0.0, 0.0, 0.0};
  std::vector<PoseParams> poses = {preset_pose("walk")};
  ObsViewPolicy policy;
  policy.mode = ObsViewPolicy::Mode::fixed;
  policy.el = 0;
  policy.az = 0;
  const GenerateResult res =
      generate_dataset(poses, base, g, det, policy, 4, 17);
  REQUIRE(res.data.pairs.size() == 1);
  CHECK(res.skipped == 0);

  // with a noiseless detector the input equals the normalized ground truth
  const Skeleton3D s = animate(base, poses[0]);
  const CameraView cam =
      g.view_at(0, 0, subject_center(s), subject_heading(s));
  const NormalizedPose expect = normalize_keypoints(project(s, cam));
  CHECK((res.data.pairs[0].input - expect.to_input()).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("generate_dataset produces one pair per walking pose") {
  const Skeleton3D base = build_canonical_skeleton(1.75);
  const ViewGrid g = make_grid(6, 2, 4.0);
  DetectorParams det;
  const auto poses = sample_training_poses(100, 3);
  const GenerateResult res = generate_dataset(poses, base, g, det, {}, 2, 29);
  CHECK(res.data.pairs.size() + res.skipped == 100);
  CHECK(res.skipped == 0);

  CHECK_THROWS_AS(generate_dataset({}, base, g, det, {}, 2, 1),
                  std::invalid_argument);
}

TEST_CASE("dataset files are byte-identical for the same seed") {
  const Skeleton3D base = build_canonical_skeleton(1.75);
  const ViewGrid g = make_grid(4, 2, 4.0);
  DetectorParams det;
  const auto poses = sample_training_poses(5, 8);
  auto dump = [&](const std::string& path) {
    const GenerateResult res = generate_dataset(poses, base, g, det, {}, 3, 91);
    save_dataset(path, res.data);
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string a = dump("test_ds_a.txt");
  const std::string b = dump("test_ds_b.txt");
  CHECK(a == b);
  CHECK(!a.empty());

  const Dataset loaded = load_dataset("test_ds_a.txt");
  REQUIRE(loaded.pairs.size() == 5);
  CHECK(loaded.n_az == 4);
  CHECK(loaded.n_el == 2);
  std::remove("test_ds_a.txt");
  std::remove("test_ds_b.txt");
}

TEST_CASE("net weight files round-trip") {
  PerceptionNet net = make_net(default_layer_sizes(51, 48), 12, 4, 3.5, 5);
  const std::string path = "test_net.bin";
  save_net(path, net);
  const PerceptionNet loaded = load_net(path, 12, 4, 3.5);
  REQUIRE(loaded.layer_sizes == net.layer_sizes);
  for (int l = 0; l < net.layer_count(); ++l) {
    CHECK((loaded.weights[l] - net.weights[l]).norm() == 0.0);
    CHECK((loaded.biases[l] - net.biases[l]).norm() == 0.0);
  }
  CHECK_THROWS(load_net(path, 24, 8, 4.0));  // grid mismatch
  std::remove(path.c_str());
}

TEST_CASE("global similarity perturbations never change quantized output") {
  PerceptionNet net = make_net(default_layer_sizes(51, 32), 8, 4, 4.0, 3);
  const Skeleton3D base = build_canonical_skeleton(1.75);
  std::vector<Keypoints2D> frames;
  DetectorParams det{0.0, 0.0, 0.0};
  for (int i = 0; i < 30; ++i) {
    PoseParams p = preset_pose("walk");
    p.gait_phase = 0.2 * i;
    const Skeleton3D s = animate(base, p);
    CameraView cam;
    cam.azimuth = 0.15 * i;
    cam.elevation = 0.3;
    cam.radius = 4.0;
    cam.look_at = subject_center(s);
    frames.push_back(detect(s, cam, det, i));
  }
  for (const PerturbMode mode :
       {PerturbMode::translation, PerturbMode::rotation, PerturbMode::scale,
        PerturbMode::all}) {
    const RobustnessResult r =
        perturb_robustness(net, frames, PerturbLevel::T3, 21, 4, mode, false);
    CHECK(r.percent_changed == 0.0);
    CHECK(r.frames_used == 30);
  }
}

TEST_CASE("per-joint jitter changes grow with the perturbation level") {
  PerceptionNet net = make_net(default_layer_sizes(51, 32), 8, 4, 4.0, 13);
  const Skeleton3D base = build_canonical_skeleton(1.75);
  std::vector<Keypoints2D> frames;
  DetectorParams det{1.0, 4.0, 0.0};
  for (int i = 0; i < 146; ++i) {
    PoseParams p = preset_pose("walk");
    p.gait_phase = 0.25 * i;
    const Skeleton3D s = animate(base, p);
    CameraView cam;
    cam.azimuth = 0.3 * std::sin(0.08 * i);
    cam.elevation = 0.2;
    cam.radius = 4.0;
    cam.look_at = subject_center(s);
    frames.push_back(detect(s, cam, det, 1000 + i));
  }
  const double t1 = perturb_robustness(net, frames, PerturbLevel::T1, 21, 6,
                                       PerturbMode::all, true)
                        .percent_changed;
  const double t2 = perturb_robustness(net, frames, PerturbLevel::T2, 21, 6,
                                       PerturbMode::all, true)
                        .percent_changed;
  const double t3 = perturb_robustness(net, frames, PerturbLevel::T3, 21, 6,
                                       PerturbMode::all, true)
                        .percent_changed;
  CHECK(t1 <= t2);
  CHECK(t2 <= t3);
  CHECK(t3 > 0.0);
}
