#include "viewplan/poseerrnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace viewplan {

namespace {

double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct ForwardCache {
  std::vector<Eigen::MatrixXd> h;  // h[0] = input, h[l] = activation of layer l
  std::vector<Eigen::MatrixXd> z;  // pre-activations
};

// Batch forward pass; rows are samples.
const Eigen::MatrixXd& forward_batch(const PerceptionNet& net,
                                     const Eigen::MatrixXd& x,
                                     ForwardCache& cache) {
  const int layers = net.layer_count();
  cache.h.assign(layers + 1, {});
  cache.z.assign(layers, {});
  cache.h[0] = x;
  for (int l = 0; l < layers; ++l) {
    cache.z[l] = (cache.h[l] * net.weights[l].transpose()).rowwise() +
                 net.biases[l].transpose();
    if (l + 1 < layers) {
      cache.h[l + 1] = cache.z[l].array().tanh();
    } else {
      cache.h[l + 1] =
          cache.z[l].unaryExpr([](double v) { return softplus(v); });
    }
  }
  return cache.h[layers];
}

double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  return (pred - target).squaredNorm() / (pred.rows() * pred.cols());
}

std::pair<double, NetGrad> backward_batch(const PerceptionNet& net,
                                          const ForwardCache& cache,
                                          const Eigen::MatrixXd& y,
                                          double l2) {
  const int layers = net.layer_count();
  const auto& pred = cache.h[layers];
  const double n = static_cast<double>(pred.rows()) * pred.cols();

  double loss = (pred - y).squaredNorm() / n;
  NetGrad grad;
  grad.dw.resize(layers);
  grad.db.resize(layers);

  Eigen::MatrixXd dh = 2.0 / n * (pred - y);
  for (int l = layers - 1; l >= 0; --l) {
    Eigen::MatrixXd dz;
    if (l == layers - 1) {
      dz = dh.array() *
           cache.z[l].unaryExpr([](double v) { return sigmoid(v); }).array();
    } else {
      dz = dh.array() * (1.0 - cache.h[l + 1].array().square());
    }
    grad.dw[l] = dz.transpose() * cache.h[l];
    grad.db[l] = dz.colwise().sum().transpose();
    if (l2 > 0.0) grad.dw[l] += 2.0 * l2 * net.weights[l];
    if (l > 0) dh = dz * net.weights[l];
  }
  if (l2 > 0.0) {
    for (const auto& w : net.weights) loss += l2 * w.squaredNorm();
  }
  return {loss, std::move(grad)};
}

void to_matrices(const std::vector<DatasetPair>& pairs, Eigen::MatrixXd& x,
                 Eigen::MatrixXd& y) {
  const int b = static_cast<int>(pairs.size());
  x.resize(b, pairs[0].input.size());
  y.resize(b, pairs[0].target.size());
  for (int i = 0; i < b; ++i) {
    x.row(i) = pairs[i].input.transpose();
    y.row(i) = pairs[i].target.transpose();
  }
}

}  // namespace

std::vector<int> default_layer_sizes(int input_dim, int output_dim) {
  return {input_dim, 64, 32, 16, 32, 64, 128, output_dim};
}

PerceptionNet make_net(const std::vector<int>& layer_sizes, int n_az, int n_el,
                       double radius, uint64_t seed) {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("make_net: need at least two layer sizes");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("make_net: layer size < 1");
  }
  if (layer_sizes.back() != n_az * n_el) {
    throw std::invalid_argument("make_net: output dim must equal n_az * n_el");
  }
  PerceptionNet net;
  net.layer_sizes = layer_sizes;
  net.n_az = n_az;
  net.n_el = n_el;
  net.radius = radius;
  std::mt19937_64 rng(seed);
  for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int in = layer_sizes[l];
    const int out = layer_sizes[l + 1];
    const double a = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uni(-a, a);
    Eigen::MatrixXd w(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) w(r, c) = uni(rng);
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(out));
  }
  return net;
}

Eigen::VectorXd forward_raw(const PerceptionNet& net,
                            const Eigen::VectorXd& x) {
  if (x.size() != net.input_dim()) {
    throw std::invalid_argument("forward: input dimension mismatch");
  }
  ForwardCache cache;
  return forward_batch(net, x.transpose(), cache).row(0).transpose();
}

ErrorField forward(const PerceptionNet& net, const NormalizedPose& pose) {
  const Eigen::VectorXd y = forward_raw(net, pose.to_input());
  ErrorField f;
  f.n_az = net.n_az;
  f.n_el = net.n_el;
  f.radius = net.radius;
  f.values.resize(f.n_el, f.n_az);
  for (int i = 0; i < f.n_el; ++i) {
    for (int j = 0; j < f.n_az; ++j) f.values(i, j) = y[i * f.n_az + j];
  }
  return f;
}

std::pair<double, NetGrad> loss_and_grad(const PerceptionNet& net,
                                         const std::vector<DatasetPair>& batch,
                                         double l2) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  for (const auto& p : batch) {
    if (p.input.size() != net.input_dim() ||
        p.target.size() != net.output_dim()) {
      throw std::invalid_argument("loss_and_grad: dimension mismatch");
    }
  }
  Eigen::MatrixXd x, y;
  to_matrices(batch, x, y);
  ForwardCache cache;
  forward_batch(net, x, cache);
  return backward_batch(net, cache, y, l2);
}

std::pair<PerceptionNet, TrainHistory> train(const Dataset& data,
                                             const TrainConfig& cfg) {
  const int n = static_cast<int>(data.pairs.size());
  if (n < 10) throw std::invalid_argument("train: need at least 10 pairs");
  if (!(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("train: learning rate must be positive");
  }
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw std::invalid_argument("train: split fraction must be in (0,1)");
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0));
  std::shuffle(order.begin(), order.end(), rng);
  int n_train = std::clamp(static_cast<int>(std::lround(cfg.train_fraction * n)),
                           1, n - 1);

  const int in_dim = static_cast<int>(data.pairs[0].input.size());
  const int out_dim = static_cast<int>(data.pairs[0].target.size());
  Eigen::MatrixXd train_x(n_train, in_dim), train_y(n_train, out_dim);
  Eigen::MatrixXd val_x(n - n_train, in_dim), val_y(n - n_train, out_dim);
  for (int i = 0; i < n_train; ++i) {
    train_x.row(i) = data.pairs[order[i]].input.transpose();
    train_y.row(i) = data.pairs[order[i]].target.transpose();
  }
  for (int i = n_train; i < n; ++i) {
    val_x.row(i - n_train) = data.pairs[order[i]].input.transpose();
    val_y.row(i - n_train) = data.pairs[order[i]].target.transpose();
  }

  PerceptionNet net = make_net(default_layer_sizes(in_dim, out_dim), data.n_az,
                               data.n_el, data.radius, mix_seed(cfg.seed, 1));
  NetGrad velocity;
  for (int l = 0; l < net.layer_count(); ++l) {
    velocity.dw.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                                net.weights[l].cols()));
    velocity.db.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  constexpr double kMomentum = 0.9;

  TrainHistory history;
  ForwardCache cache;
  auto val_loss = [&]() {
    return mse(forward_batch(net, val_x, cache), val_y);
  };
  double best_val = val_loss();
  history.val_loss.push_back(best_val);
  history.best_epoch = 0;
  PerceptionNet best_net = net;

  const int batch = std::max(1, cfg.batch_size);
  std::vector<int> idx(n_train);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 epoch_rng(mix_seed(cfg.seed, 2));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), epoch_rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n_train; start += batch) {
      const int b = std::min(batch, n_train - start);
      Eigen::MatrixXd bx(b, in_dim), by(b, out_dim);
      for (int i = 0; i < b; ++i) {
        bx.row(i) = train_x.row(idx[start + i]);
        by.row(i) = train_y.row(idx[start + i]);
      }
      forward_batch(net, bx, cache);
      auto [loss, grad] = backward_batch(net, cache, by, cfg.l2);
      if (!std::isfinite(loss)) {
        throw DivergenceError(
            "train: non-finite loss at epoch " + std::to_string(epoch), epoch);
      }
      for (int l = 0; l < net.layer_count(); ++l) {
        velocity.dw[l] = kMomentum * velocity.dw[l] -
                         cfg.learning_rate * grad.dw[l];
        velocity.db[l] = kMomentum * velocity.db[l] -
                         cfg.learning_rate * grad.db[l];
        net.weights[l] += velocity.dw[l];
        net.biases[l] += velocity.db[l];
      }
      epoch_loss += loss;
      ++batches;
    }
    history.train_loss.push_back(epoch_loss / batches);
    const double v = val_loss();
    if (!std::isfinite(v)) {
      throw DivergenceError(
          "train: non-finite validation loss at epoch " + std::to_string(epoch),
          epoch);
    }
    history.val_loss.push_back(v);
    if (v < best_val) {
      best_val = v;
      best_net = net;
      history.best_epoch = epoch;
    }
  }
  return {std::move(best_net), std::move(history)};
}

GenerateResult generate_dataset(const std::vector<PoseParams>& poses,
                                const Skeleton3D& base, const ViewGrid& g,
                                const DetectorParams& det,
                                const ObsViewPolicy& policy, int trials,
                                uint64_t seed) {
  if (poses.empty()) {
    throw std::invalid_argument("generate_dataset: empty pose list");
  }
  GenerateResult result;
  result.data.n_az = g.n_az;
  result.data.n_el = g.n_el;
  result.data.radius = g.radius;

  const int cells = g.cells();
  for (size_t p = 0; p < poses.size(); ++p) {
    const uint64_t pose_seed = mix_seed(seed, p);
    const Skeleton3D s = animate(base, poses[p]);
    const ErrorField field =
        compute_field(s, g, det, trials, mix_seed(pose_seed, 2));

    // Observation cells to try: the policy's choice first, then a seeded
    // permutation of the rest.
    std::vector<int> attempts(cells);
    std::iota(attempts.begin(), attempts.end(), 0);
    std::mt19937_64 rng(mix_seed(pose_seed, 1));
    std::shuffle(attempts.begin(), attempts.end(), rng);
    int first = attempts[0];
    if (policy.mode == ObsViewPolicy::Mode::fixed) {
      first = g.index(policy.el, policy.az);
    }
    auto it = std::find(attempts.begin(), attempts.end(), first);
    std::rotate(attempts.begin(), it, it + 1);

    const Vec3 center = subject_center(s);
    const double heading = subject_heading(s);
    bool produced = false;
    for (int a = 0; a < cells && !produced; ++a) {
      const int cell = attempts[a];
      const CameraView cam =
          g.view_at(cell / g.n_az, cell % g.n_az, center, heading);
      const Keypoints2D obs = detect(s, cam, det, mix_seed(pose_seed, 100 + a));
      try {
        const NormalizedPose norm = normalize_keypoints(obs);
        DatasetPair pair;
        pair.input = norm.to_input();
        pair.target.resize(cells);
        for (int i = 0; i < g.n_el; ++i) {
          for (int j = 0; j < g.n_az; ++j) {
            pair.target[g.index(i, j)] = field.values(i, j);
          }
        }
        result.data.pairs.push_back(std::move(pair));
        produced = true;
      } catch (const NormalizationError&) {
        // try the next view
      }
    }
    if (!produced) ++result.skipped;
  }
  return result;
}

RobustnessResult perturb_robustness(const PerceptionNet& net,
                                    const std::vector<Keypoints2D>& frames,
                                    PerturbLevel level, int bins,
                                    uint64_t seed, PerturbMode mode,
                                    bool per_joint) {
  if (frames.empty()) {
    throw std::invalid_argument("perturb_robustness: no frames");
  }
  double trans_max = 0.0, rot_max_deg = 0.0, scale_max = 1.0;
  switch (level) {
    case PerturbLevel::T1: trans_max = 5.0; rot_max_deg = 5.0; scale_max = 1.05; break;
    case PerturbLevel::T2: trans_max = 10.0; rot_max_deg = 10.0; scale_max = 1.10; break;
    case PerturbLevel::T3: trans_max = 20.0; rot_max_deg = 20.0; scale_max = 1.15; break;
  }
  const bool use_t = mode == PerturbMode::translation || mode == PerturbMode::all;
  const bool use_r = mode == PerturbMode::rotation || mode == PerturbMode::all;
  const bool use_s = mode == PerturbMode::scale || mode == PerturbMode::all;

  RobustnessResult result;
  long changed = 0, total = 0;
  for (size_t fidx = 0; fidx < frames.size(); ++fidx) {
    const Keypoints2D& frame = frames[fidx];
    std::mt19937_64 rng(mix_seed(seed, fidx));
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    // Rotation/scale center: centroid of the visible keypoints.
    Vec2 centroid = Vec2::Zero();
    int visible = 0;
    for (int i = 0; i < kJointCount; ++i) {
      if (frame.visible[i]) {
        centroid += frame.px[i];
        ++visible;
      }
    }
    if (visible == 0) {
      ++result.frames_excluded;
      continue;
    }
    centroid /= visible;

    auto draw = [&]() {
      const double mag = uni(rng) * trans_max;
      const double dir = uni(rng) * kTwoPi;
      const double ang = (uni(rng) < 0.5 ? -1.0 : 1.0) * uni(rng) *
                         rot_max_deg * kPi / 180.0;
      const double sc = 1.0 + uni(rng) * (scale_max - 1.0);
      Vec2 t = use_t ? Vec2(mag * std::cos(dir), mag * std::sin(dir))
                     : Vec2::Zero();
      const double a = use_r ? ang : 0.0;
      const double s = use_s ? sc : 1.0;
      Eigen::Matrix2d rot;
      rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
      return std::make_pair(Eigen::Matrix2d(s * rot), t);
    };

    Keypoints2D perturbed = frame;
    auto global = draw();
    for (int i = 0; i < kJointCount; ++i) {
      if (!frame.visible[i]) continue;
      const auto& [m, t] = per_joint ? draw() : global;
      perturbed.px[i] = m * (frame.px[i] - centroid) + centroid + t;
    }

    try {
      const Eigen::MatrixXi base_bins =
          quantize_bins(forward(net, normalize_keypoints(frame)), bins);
      const Eigen::MatrixXi new_bins =
          quantize_bins(forward(net, normalize_keypoints(perturbed)), bins);
      changed += (base_bins.array() != new_bins.array()).count();
      total += base_bins.size();
      ++result.frames_used;
    } catch (const NormalizationError&) {
      ++result.frames_excluded;
    }
  }
  if (total > 0) {
    result.percent_changed = 100.0 * static_cast<double>(changed) / total;
  }
  return result;
}

namespace {
constexpr char kNetMagic[5] = {'P', 'E', 'N', 'v', '1'};
}

void save_net(const std::string& path, const PerceptionNet& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_net: cannot open " + path);
  out.write(kNetMagic, 5);
  const uint32_t count = static_cast<uint32_t>(net.layer_sizes.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (int s : net.layer_sizes) {
    const uint32_t v = static_cast<uint32_t>(s);
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  for (int l = 0; l < net.layer_count(); ++l) {
    // row-major weight matrix, then the bias vector
    for (int r = 0; r < net.weights[l].rows(); ++r) {
      for (int c = 0; c < net.weights[l].cols(); ++c) {
        const double v = net.weights[l](r, c);
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
    }
    for (int r = 0; r < net.biases[l].size(); ++r) {
      const double v = net.biases[l][r];
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  }
}

PerceptionNet load_net(const std::string& path, int n_az, int n_el,
                       double radius) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_net: cannot open " + path);
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kNetMagic, 5) != 0) {
    throw std::runtime_error("load_net: bad magic");
  }
  uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  if (!in || count < 2 || count > 64) {
    throw std::runtime_error("load_net: bad layer count");
  }
  std::vector<int> sizes(count);
  for (auto& s : sizes) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    s = static_cast<int>(v);
  }
  PerceptionNet net;
  net.layer_sizes = sizes;
  net.n_az = n_az;
  net.n_el = n_el;
  net.radius = radius;
  if (net.output_dim() != n_az * n_el) {
    throw std::runtime_error("load_net: grid shape does not match output dim");
  }
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
    for (int r = 0; r < w.rows(); ++r) {
      for (int c = 0; c < w.cols(); ++c) {
        in.read(reinterpret_cast<char*>(&w(r, c)), 8);
      }
    }
    Eigen::VectorXd b(sizes[l + 1]);
    for (int r = 0; r < b.size(); ++r) {
      in.read(reinterpret_cast<char*>(&b[r]), 8);
    }
    if (!in) throw std::runtime_error("load_net: truncated file");
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  out << data.n_az << ' ' << data.n_el << ' ' << fmt_double(data.radius)
      << '\n';
  for (const auto& pair : data.pairs) {
    for (int i = 0; i < pair.input.size(); ++i) {
      if (i) out << ' ';
      out << fmt_double(pair.input[i]);
    }
    for (int i = 0; i < pair.target.size(); ++i) {
      out << ' ' << fmt_double(pair.target[i]);
    }
    out << '\n';
  }
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  Dataset data;
  if (!(in >> data.n_az >> data.n_el >> data.radius)) {
    throw std::runtime_error("load_dataset: malformed header");
  }
  const int in_dim = 3 * kJointCount;
  const int out_dim = data.n_az * data.n_el;
  while (true) {
    DatasetPair pair;
    pair.input.resize(in_dim);
    pair.target.resize(out_dim);
    if (!(in >> pair.input[0])) break;
    for (int i = 1; i < in_dim; ++i) {
      if (!(in >> pair.input[i])) {
        throw std::runtime_error("load_dataset: truncated record");
      }
    }
    for (int i = 0; i < out_dim; ++i) {
      if (!(in >> pair.target[i])) {
        throw std::runtime_error("load_dataset: truncated record");
      }
    }
    data.pairs.push_back(std::move(pair));
  }
  return data;
}

PoseParams preset_pose(const std::string& name) {
  PoseParams p;
  if (name == "tpose") return p;
  if (name == "walk") {
    p.shoulder_abduct_l = -1.35;
    p.shoulder_abduct_r = -1.35;
    p.elbow_l = 0.5;
    p.elbow_r = 0.5;
    return p;
  }
  if (name == "raise-arm") {
    p.shoulder_abduct_l = -1.35;
    p.elbow_l = 0.4;
    p.shoulder_abduct_r = 1.25;
    p.elbow_r = 1.1;
    return p;
  }
  throw std::invalid_argument("preset_pose: unknown pose '" + name + "'");
}

std::vector<PoseParams> sample_training_poses(int count, uint64_t seed) {
  std::vector<PoseParams> poses;
  poses.reserve(count);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < count; ++i) {
    const double kind = uni(rng);
    PoseParams p;
    if (kind < 0.70) {
      p = preset_pose("walk");
      p.gait_phase = uni(rng) * kTwoPi;
      p.elbow_l += 0.3 * uni(rng);
      p.elbow_r += 0.3 * uni(rng);
    } else if (kind < 0.85) {
      p = preset_pose("raise-arm");
      p.shoulder_abduct_r += 0.2 * (uni(rng) - 0.5);
      p.elbow_r += 0.4 * (uni(rng) - 0.5);
      p.gait_phase = uni(rng) < 0.5 ? 0.0 : uni(rng) * kTwoPi;
    } else {
      p.shoulder_abduct_l = -1.4 + 1.2 * uni(rng);
      p.shoulder_abduct_r = -1.4 + 1.2 * uni(rng);
      p.shoulder_pitch_l = 0.8 * (uni(rng) - 0.5);
      p.shoulder_pitch_r = 0.8 * (uni(rng) - 0.5);
      p.elbow_l = 1.2 * uni(rng);
      p.elbow_r = 1.2 * uni(rng);
      p.hip_pitch_l = 0.6 * (uni(rng) - 0.5);
      p.hip_pitch_r = 0.6 * (uni(rng) - 0.5);
      p.knee_l = 0.8 * uni(rng);
      p.knee_r = 0.8 * uni(rng);
    }
    p.root_heading = uni(rng) * kTwoPi;
    p.root_position = Vec3(0.0, 0.0, standing_root_height(1.75));
    poses.push_back(p);
  }
  return poses;
}

}  // namespace viewplan
