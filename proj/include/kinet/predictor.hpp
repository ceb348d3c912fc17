#pragma once

// Configuration-prediction networks: a 6-50-50-k tanh MLP trained through the
// differentiable kinematics (chassis and whole-body predictors) or by plain
// regression on witness labels.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kinet/dataio.hpp"
#include "kinet/evalbench.hpp"
#include "kinet/losses.hpp"
#include "kinet/rng.hpp"

namespace kinet {

enum class ModelKind : std::uint8_t {
  cmp,     // chassis pose through analytic IK
  fmp,     // chassis pose and joints through FK
  nnreg3,  // chassis pose regressed on witness labels
  nnreg9,  // chassis pose and joints regressed on witness labels
};

const char* model_name(ModelKind k);
std::optional<ModelKind> parse_model(const std::string& name);
int output_size(ModelKind k);
/// True for the two kinds whose output includes joints.
bool whole_body(ModelKind k);

using LayerSizes = std::array<int, 4>;

std::size_t parameter_count(const LayerSizes& sizes);

/// Flat parameter vector, layer by layer: weights row-major [out][in], then biases.
struct MLPParams {
  LayerSizes sizes{6, 50, 50, 3};
  std::vector<double> theta;
};

/// Xavier-uniform weights, zero biases.
MLPParams init_params(std::uint64_t seed, const LayerSizes& sizes);

struct DropoutSpec {
  double rate = 0.05;
  bool active_in_training = true;
  bool active_in_inference = true;

  /// Rate in [0, 1); a positive rate on an active layer must lie in [0.02, 0.15].
  void validate() const;
  bool active(bool training) const { return rate > 0.0 && (training ? active_in_training : active_in_inference); }
};

/// Inverted dropout multipliers for one hidden layer: 0 or 1/(1-rate).
std::vector<double> dropout_mask(const DropoutSpec& d, bool training, int width, Rng& rng);

/// Input and output scaling. Positions enter divided by input_scale; the
/// chassis x/y heads are the target x/y plus a fixed prior offset plus
/// offset_scale times a linear output; angles pass through pi*tanh.
/// The prior places an untrained network's chassis inside the reach ring
/// rather than under the target, where the shoulder solution does not exist.
struct HeadSpec {
  double input_scale = 3.5;
  double offset_scale = 1.3;
  double prior_x = -0.7;
  double prior_y = 0.0;
};

/// Network input for a target pose: wrapped angles over pi, positions over the scale.
std::array<double, 6> network_input(const Pose6& target, const HeadSpec& heads);

/// Raw MLP outputs before the heads. `mask` is empty or has sizes[1] entries.
template <class T>
std::vector<T> mlp_forward(std::span<const T> theta, const LayerSizes& sizes, std::span<const double> input,
                           std::span<const double> mask);

/// Applies the output heads: [psi, x, y] and, for whole-body kinds, q1..q6.
template <class T>
std::vector<T> apply_heads(ModelKind kind, std::span<const T> raw, const Pose6& target, const HeadSpec& heads);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t t = 0;
};

/// Thrown when a gradient or loss turns non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bias-corrected Adam update in place. Throws DivergenceError when a
/// gradient entry is non-finite; parameters are left untouched in that case.
void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg,
               double lr_scale = 1.0);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  ModelKind kind = ModelKind::cmp;
  int stochasticity_case = 2;
  int epochs = 1000;
  int batch_size = 32;
  AdamConfig adam{3e-5};
  /// Learning rate multiplier at the last epoch; the schedule is cosine from 1.
  double lr_final_factor = 0.1;
  /// Rescales the batch gradient to this global L2 norm when larger; 0 disables.
  double grad_clip = 0.0;
  std::uint64_t seed = 1;
  LossWeights weights;
  DropoutSpec dropout;
  HeadSpec heads;
  LayerSizes hidden{6, 50, 50, 0};  // output width is set from the kind
  /// Position threshold used inside the whole-body loss during training.
  double train_position_threshold = kPositionTolerance;
  /// Evaluate train/validation ACC every this many epochs (and at the last).
  int eval_every = 1;

  /// Applies the dropout flags and epoch count of stochasticity case 1, 2 or 3.
  void apply_case(int c);
  LayerSizes sizes() const;
  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  LossBreakdown<double> loss;
  double train_acc = -1.0;  // -1 when not evaluated this epoch
  double val_acc = -1.0;
  double wall_ms = 0.0;
};

struct Checkpoint {
  static constexpr int kVersion = 1;
  ModelKind kind = ModelKind::cmp;
  MLPParams params;
  std::string dh_hash;
  HomTransform mount = MountTransform{}.transform;
  Annulus reach;
  LossWeights weights;
  DropoutSpec dropout;
  HeadSpec heads;
  std::uint64_t seed = 0;
  int epochs_run = 0;
  double final_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

/// Trains the model selected by cfg.kind. Throws DivergenceError when the
/// loss or a gradient becomes non-finite.
TrainResult train(const std::vector<DatasetRecord>& train_set, const std::vector<DatasetRecord>& val_set,
                  const TrainConfig& cfg, const RobotModel& robot, const EpochCallback& on_epoch = {});

TrainResult train_cmp(const std::vector<DatasetRecord>& train_set, const std::vector<DatasetRecord>& val_set,
                      TrainConfig cfg, const RobotModel& robot, const EpochCallback& on_epoch = {});
TrainResult train_fmp(const std::vector<DatasetRecord>& train_set, const std::vector<DatasetRecord>& val_set,
                      TrainConfig cfg, const RobotModel& robot, const EpochCallback& on_epoch = {});
/// Regression on witness labels with 3 (chassis) or 9 (chassis + joints) outputs.
TrainResult nn_regression_train(const std::vector<DatasetRecord>& train_set,
                                const std::vector<DatasetRecord>& val_set, TrainConfig cfg, const RobotModel& robot,
                                int outputs = 3, const EpochCallback& on_epoch = {});

/// Loss of one sample as a graph over `theta`, exactly as used in training.
Var sample_loss(const Checkpoint& model, std::span<const Var> theta, const DatasetRecord& record,
                std::span<const double> mask, const RobotModel& robot, double train_position_threshold);

// ---------------------------------------------------------------------------
// Inference

/// One forward pass. Dropout is drawn from rng when active for inference.
FullConfig predict_once(const Checkpoint& ckpt, const Pose6& target, Rng& rng);

/// Validity of a prediction under the oracle matching the model kind.
FeasibilityVerdict verdict_for(const Checkpoint& ckpt, const FullConfig& config, const Pose6& target,
                               const RobotModel& robot);

struct PredictResult {
  bool success = false;
  FullConfig config;  // the accepted prediction, joints filled from the witness for chassis models
  int attempts = 0;
  /// Inference is deterministic and the first attempt failed, so no retry was made.
  bool deterministic_failure = false;
  std::vector<FullConfig> rejected;
  Reason last_reason = Reason::ok;
};

PredictResult predict_with_resampling(const Checkpoint& ckpt, const Pose6& target, int max_attempts, Rng& rng,
                                      const RobotModel& robot);

/// Single-attempt accuracy over records; rng drives dropout masks.
AccuracyReport evaluate_single(const Checkpoint& ckpt, const std::vector<DatasetRecord>& records,
                               const RobotModel& robot, std::uint64_t seed);

struct ResamplingReport {
  AccuracyReport final;  // verdict of the last attempt per task
  double mean_attempts = 0.0;
  int max_attempts_used = 0;
};

ResamplingReport evaluate_resampling(const Checkpoint& ckpt, const std::vector<DatasetRecord>& records,
                                     const RobotModel& robot, int max_attempts, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoint files

void write_checkpoint(std::ostream& os, const Checkpoint& c);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
/// Throws DataError on malformed input, version mismatch, or when the DH hash
/// or architecture differs from the expectation.
Checkpoint read_checkpoint(std::istream& is, const DHTable& table,
                           std::optional<ModelKind> expected_kind = std::nullopt);
Checkpoint load_checkpoint(const std::filesystem::path& path, const DHTable& table,
                           std::optional<ModelKind> expected_kind = std::nullopt);

/// Training log CSV: epoch, component losses, total, train_acc, val_acc, wall_ms.
void write_training_log(std::ostream& os, const std::vector<EpochLog>& log);

// ---------------------------------------------------------------------------
// Random search

struct SearchResult {
  TrainConfig best;
  double best_val_acc = -1.0;
  std::vector<std::pair<TrainConfig, double>> trials;
};

/// Samples learning rate (log-uniform 1e-5..3e-4) and dropout rate (0.02..0.15),
/// trains each trial for cfg.epochs, keeps the best validation ACC.
SearchResult random_search(const std::vector<DatasetRecord>& train_set, const std::vector<DatasetRecord>& val_set,
                           const TrainConfig& base, const RobotModel& robot, int trials, std::uint64_t seed);

}  // namespace kinet
