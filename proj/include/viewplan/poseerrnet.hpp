#pragma once

#include <string>
#include <utility>
#include <vector>

#include "viewplan/normalize.hpp"
#include "viewplan/viewsphere.hpp"

namespace viewplan {

/// Dense autoencoder mapping a normalized keypoint vector to a flattened
/// error field. Hidden layers use tanh; the output layer uses softplus so
/// predictions stay nonnegative. The grid binding (n_az, n_el, radius) fixes
/// how the output vector folds back into an ErrorField.
struct PerceptionNet {
  std::vector<int> layer_sizes;  // e.g. {51, 64, 32, 16, 32, 64, 128, 192}
  std::vector<Eigen::MatrixXd> weights;  // out x in per layer
  std::vector<Eigen::VectorXd> biases;
  int n_az = 24;
  int n_el = 8;
  double radius = 4.0;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int layer_count() const { return static_cast<int>(weights.size()); }
};

/// Default hidden widths for the 4+4-layer autoencoder; input and output
/// sizes come from the keypoint count and the grid.
std::vector<int> default_layer_sizes(int input_dim, int output_dim);

/// Fresh net with fan-in-scaled symmetric uniform weights, deterministic per
/// seed.
PerceptionNet make_net(const std::vector<int>& layer_sizes, int n_az, int n_el,
                       double radius, uint64_t seed);

/// Dense forward pass on a raw input vector.
Eigen::VectorXd forward_raw(const PerceptionNet& net, const Eigen::VectorXd& x);

/// Forward pass folding the output into the net's grid shape.
ErrorField forward(const PerceptionNet& net, const NormalizedPose& pose);

/// One training record: network input paired with the flattened oracle field.
struct DatasetPair {
  Eigen::VectorXd input;   // 3*J
  Eigen::VectorXd target;  // n_el * n_az, nonnegative
};

/// A dataset plus the grid shape its targets were computed on.
struct Dataset {
  int n_az = 24;
  int n_el = 8;
  double radius = 4.0;
  std::vector<DatasetPair> pairs;
};

/// How the observation view is picked when generating a training pair.
struct ObsViewPolicy {
  enum class Mode { uniform_random, fixed };
  Mode mode = Mode::uniform_random;
  int el = 0;
  int az = 0;
};

struct GenerateResult {
  Dataset data;
  int skipped = 0;  // poses whose every observation attempt failed to normalize
};

/// Builds (normalized observation, oracle field) pairs: for each pose the
/// target is the oracle field and the input comes from detect() + normalize()
/// at the policy's observation cell. On normalization failure the observation
/// is resampled from another view, up to one attempt per grid cell.
GenerateResult generate_dataset(const std::vector<PoseParams>& poses,
                                const Skeleton3D& base, const ViewGrid& g,
                                const DetectorParams& det,
                                const ObsViewPolicy& policy, int trials,
                                uint64_t seed);

/// Gradient with the same shape as the net's parameters.
struct NetGrad {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;
};

/// Mean squared error over batch entries and output cells, plus l2 times the
/// squared weight norm; gradient by reverse-mode accumulation.
std::pair<double, NetGrad> loss_and_grad(
    const PerceptionNet& net, const std::vector<DatasetPair>& batch,
    double l2 = 0.0);

struct TrainConfig {
  double learning_rate = 0.05;
  int batch_size = 32;
  int epochs = 300;
  uint64_t seed = 1;
  double train_fraction = 0.8;  // remainder is the validation split
  double l2 = 0.0;
};

struct TrainHistory {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch; entry 0 is the initial net
  int best_epoch = 0;
};

/// Mini-batch SGD with momentum 0.9; deterministic per cfg.seed; returns the
/// net with the best validation loss. Throws DivergenceError (naming the
/// epoch) if the loss goes non-finite.
std::pair<PerceptionNet, TrainHistory> train(const Dataset& data,
                                             const TrainConfig& cfg);

enum class PerturbLevel { T1, T2, T3 };
enum class PerturbMode { translation, rotation, scale, all };

/// Perturbation robustness: the percentage of quantized field cells that
/// change when the input keypoints are perturbed at the given level. With
/// per_joint false the same random similarity transform is applied to every
/// keypoint of a frame; with true each joint is jittered independently.
/// Frames that fail to normalize are excluded (count reported).
struct RobustnessResult {
  double percent_changed = 0.0;
  int frames_used = 0;
  int frames_excluded = 0;
};
RobustnessResult perturb_robustness(const PerceptionNet& net,
                                    const std::vector<Keypoints2D>& frames,
                                    PerturbLevel level, int bins,
                                    uint64_t seed, PerturbMode mode,
                                    bool per_joint);

/// Versioned binary weight file: magic "PENv1", little-endian 32-bit layer
/// sizes, then row-major 64-bit floats (weights then bias per layer). The
/// grid binding is not stored; supply it on load.
void save_net(const std::string& path, const PerceptionNet& net);
PerceptionNet load_net(const std::string& path, int n_az, int n_el,
                       double radius);

/// Dataset files: a header line "n_az n_el radius", then one record per line
/// holding the input vector followed by the flattened target.
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

/// Deterministic mix of walking-gait and raised-arm poses used for training
/// and for emulated video frames.
std::vector<PoseParams> sample_training_poses(int count, uint64_t seed);

/// Named preset poses: "tpose", "walk", "raise-arm".
PoseParams preset_pose(const std::string& name);

}  // namespace viewplan
