#include "kinet/predictor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace kinet {

const char* model_name(ModelKind k) {
  switch (k) {
    case ModelKind::cmp: return "cmp";
    case ModelKind::fmp: return "fmp";
    case ModelKind::nnreg3: return "nnreg3";
    case ModelKind::nnreg9: return "nnreg9";
  }
  return "?";
}

std::optional<ModelKind> parse_model(const std::string& name) {
  for (ModelKind k : {ModelKind::cmp, ModelKind::fmp, ModelKind::nnreg3, ModelKind::nnreg9})
    if (name == model_name(k)) return k;
  return std::nullopt;
}

int output_size(ModelKind k) { return whole_body(k) ? 9 : 3; }
bool whole_body(ModelKind k) { return k == ModelKind::fmp || k == ModelKind::nnreg9; }

std::size_t parameter_count(const LayerSizes& s) {
  std::size_t n = 0;
  for (int l = 0; l < 3; ++l) n += static_cast<std::size_t>(s[l] * s[l + 1] + s[l + 1]);
  return n;
}

MLPParams init_params(std::uint64_t seed, const LayerSizes& sizes) {
  for (int s : sizes)
    if (s <= 0) throw std::invalid_argument("layer sizes must be positive");
  MLPParams p;
  p.sizes = sizes;
  p.theta.reserve(parameter_count(sizes));
  Rng rng(seed, Stream::Init);
  for (int l = 0; l < 3; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(sizes[l] + sizes[l + 1]));
    for (int k = 0; k < sizes[l] * sizes[l + 1]; ++k) p.theta.push_back(rng.uniform(-bound, bound));
    p.theta.insert(p.theta.end(), static_cast<std::size_t>(sizes[l + 1]), 0.0);
  }
  return p;
}

void DropoutSpec::validate() const {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (rate > 0.0 && (active_in_training || active_in_inference) && (rate < 0.02 || rate > 0.15))
    throw std::invalid_argument("active dropout rate must lie in [0.02, 0.15]");
}

std::vector<double> dropout_mask(const DropoutSpec& d, bool training, int width, Rng& rng) {
  if (!d.active(training)) return {};
  std::vector<double> mask(static_cast<std::size_t>(width));
  const double keep = 1.0 / (1.0 - d.rate);
  for (double& m : mask) m = rng.uniform() < d.rate ? 0.0 : keep;
  return mask;
}

std::array<double, 6> network_input(const Pose6& t, const HeadSpec& heads) {
  return {wrap_angle(t.phi) / kPi,     wrap_angle(t.theta) / kPi,  wrap_angle(t.psi) / kPi,
          t.x / heads.input_scale, t.y / heads.input_scale, t.z / heads.input_scale};
}

namespace {

Var affine(std::span<const Var> w, std::span<const double> x, const Var& b) { return ad::lincomb(w, x) + b; }
Var affine(std::span<const Var> w, std::span<const Var> x, const Var& b) { return ad::dot(w, x) + b; }
double affine(std::span<const double> w, std::span<const double> x, double b) { return ad::dot(w, x) + b; }

template <class T, class X>
std::vector<T> dense(std::span<const T> theta, std::size_t& offset, int n_in, int n_out, std::span<const X> x) {
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(n_out));
  const std::size_t bias = offset + static_cast<std::size_t>(n_in * n_out);
  for (int j = 0; j < n_out; ++j)
    out.push_back(affine(theta.subspan(offset + static_cast<std::size_t>(j * n_in), static_cast<std::size_t>(n_in)),
                         x, theta[bias + static_cast<std::size_t>(j)]));
  offset = bias + static_cast<std::size_t>(n_out);
  return out;
}

}  // namespace

template <class T>
std::vector<T> mlp_forward(std::span<const T> theta, const LayerSizes& sizes, std::span<const double> input,
                           std::span<const double> mask) {
  using std::tanh;
  if (theta.size() != parameter_count(sizes)) throw std::invalid_argument("parameter vector does not match sizes");
  if (input.size() != static_cast<std::size_t>(sizes[0])) throw std::invalid_argument("input width mismatch");
  if (!mask.empty() && mask.size() != static_cast<std::size_t>(sizes[1]))
    throw std::invalid_argument("dropout mask width mismatch");
  std::size_t off = 0;
  std::vector<T> h1 = dense<T, double>(theta, off, sizes[0], sizes[1], input);
  for (std::size_t j = 0; j < h1.size(); ++j) {
    h1[j] = tanh(h1[j]);
    if (!mask.empty()) h1[j] = h1[j] * mask[j];
  }
  std::vector<T> h2 = dense<T, T>(theta, off, sizes[1], sizes[2], h1);
  for (T& v : h2) v = tanh(v);
  return dense<T, T>(theta, off, sizes[2], sizes[3], h2);
}

// Largest double below pi: a saturated tanh must not reach -pi.
const double kAngleScale = std::nextafter(kPi, 0.0);

template <class T>
std::vector<T> apply_heads(ModelKind kind, std::span<const T> raw, const Pose6& target, const HeadSpec& heads) {
  using std::tanh;
  if (raw.size() != static_cast<std::size_t>(output_size(kind))) throw std::invalid_argument("output width mismatch");
  std::vector<T> out(raw.size());
  out[0] = kAngleScale * tanh(raw[0]);
  out[1] = target.x + heads.prior_x + heads.offset_scale * raw[1];
  out[2] = target.y + heads.prior_y + heads.offset_scale * raw[2];
  for (std::size_t j = 3; j < raw.size(); ++j) out[j] = kAngleScale * tanh(raw[j]);
  return out;
}

template std::vector<double> mlp_forward(std::span<const double>, const LayerSizes&, std::span<const double>,
                                         std::span<const double>);
template std::vector<Var> mlp_forward(std::span<const Var>, const LayerSizes&, std::span<const double>,
                                      std::span<const double>);
template std::vector<double> apply_heads(ModelKind, std::span<const double>, const Pose6&, const HeadSpec&);
template std::vector<Var> apply_heads(ModelKind, std::span<const Var>, const Pose6&, const HeadSpec&);

// ---------------------------------------------------------------------------
// Optimizer

void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& s, const AdamConfig& cfg,
               double lr_scale) {
  if (grads.size() != params.size()) throw std::invalid_argument("gradient size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw DivergenceError("non-finite gradient at parameter " + std::to_string(i));
  if (s.m.size() != params.size()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
    s.t = 0;
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
  const double lr = cfg.lr * lr_scale;
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * grads[i];
    s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mh = s.m[i] / c1;
    const double vh = s.v[i] / c2;
    params[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
  }
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::apply_case(int c) {
  switch (c) {
    case 1:
      dropout.active_in_training = false;
      dropout.active_in_inference = false;
      epochs = 400;
      break;
    case 2:
      dropout.active_in_training = true;
      dropout.active_in_inference = true;
      epochs = 1000;
      break;
    case 3:
      dropout.active_in_training = false;
      dropout.active_in_inference = true;
      epochs = 400;
      break;
    default:
      throw std::invalid_argument("stochasticity case must be 1, 2 or 3");
  }
  stochasticity_case = c;
}

LayerSizes TrainConfig::sizes() const { return {hidden[0], hidden[1], hidden[2], output_size(kind)}; }

void TrainConfig::validate() const {
  if (stochasticity_case < 1 || stochasticity_case > 3) throw std::invalid_argument("stochasticity case must be 1-3");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (!(adam.lr > 0.0) || !(adam.eps > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw std::invalid_argument("invalid Adam settings");
  if (!(lr_final_factor > 0.0 && lr_final_factor <= 1.0))
    throw std::invalid_argument("lr_final_factor must lie in (0, 1]");
  if (!(train_position_threshold > 0.0)) throw std::invalid_argument("train position threshold must be positive");
  if (hidden[0] != 6) throw std::invalid_argument("the input layer has 6 units");
  if (hidden[1] < 1 || hidden[2] < 1) throw std::invalid_argument("hidden layers must be nonempty");
  if (!(heads.input_scale > 0.0) || !(heads.offset_scale > 0.0)) throw std::invalid_argument("head scales must be positive");
  if (!std::isfinite(heads.prior_x) || !std::isfinite(heads.prior_y))
    throw std::invalid_argument("head prior offset must be finite");
  if (!(grad_clip >= 0.0)) throw std::invalid_argument("grad_clip must be nonnegative");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be at least 1");
  weights.validate();
  dropout.validate();
}

namespace {

LossBreakdown<Var> sample_breakdown(const Checkpoint& model, std::span<const Var> theta, const DatasetRecord& r,
                                    std::span<const double> mask, const RobotModel& robot, double threshold) {
  const std::array<double, 6> x = network_input(r.target, model.heads);
  const std::vector<Var> raw = mlp_forward<Var>(theta, model.params.sizes, x, mask);
  const std::vector<Var> out = apply_heads<Var>(model.kind, raw, r.target, model.heads);
  const ChassisPoseT<Var> c{out[0], out[1], out[2]};
  MountTransform mount{model.mount};
  switch (model.kind) {
    case ModelKind::cmp: {
      const Transform<Var> h_rel = relative_target(chassis_to_base(c, mount), pose_to_hom(r.target));
      return cmp_sample_loss(analytic_ik(h_rel, robot.table, robot.ik), model.weights);
    }
    case ModelKind::fmp: {
      const JointsT<Var> q{out[3], out[4], out[5], out[6], out[7], out[8]};
      FmpLossSettings s;
      s.position_threshold = threshold;
      s.reach = model.reach;
      s.mount = mount;
      return fmp_sample_loss(c, q, r.target, pose_to_hom(r.target), robot.table, s, model.weights);
    }
    case ModelKind::nnreg3:
    case ModelKind::nnreg9: {
      std::vector<double> label = {r.witness_chassis.psi, r.witness_chassis.x, r.witness_chassis.y};
      if (model.kind == ModelKind::nnreg9) label.insert(label.end(), r.witness_joints.begin(), r.witness_joints.end());
      Var s(0.0);
      for (std::size_t k = 0; k < out.size(); ++k) s = s + ad::square(out[k] - label[k]);
      LossBreakdown<Var> b;
      b.total = s / static_cast<double>(out.size());
      return b;
    }
  }
  throw std::logic_error("unknown model kind");
}

Checkpoint blank_checkpoint(const TrainConfig& cfg, const RobotModel& robot) {
  Checkpoint c;
  c.kind = cfg.kind;
  c.params = init_params(cfg.seed, cfg.sizes());
  c.dh_hash = robot.table.hash_hex();
  c.mount = robot.mount.transform;
  c.reach = robot.reach;
  c.weights = cfg.weights;
  c.dropout = cfg.dropout;
  c.heads = cfg.heads;
  c.seed = cfg.seed;
  return c;
}

void add_values(LossBreakdown<double>& acc, const LossBreakdown<Var>& b, double scale) {
  acc.illroot += scale * b.illroot.value();
  acc.outdom += scale * b.outdom.value();
  acc.illsolu += scale * b.illsolu.value();
  acc.idesolu += scale * b.idesolu.value();
  acc.pre_error += scale * b.pre_error.value();
  acc.distance += scale * b.distance.value();
  acc.orien += scale * b.orien.value();
  acc.total += scale * b.total.value();
}

}  // namespace

Var sample_loss(const Checkpoint& model, std::span<const Var> theta, const DatasetRecord& record,
                std::span<const double> mask, const RobotModel& robot, double train_position_threshold) {
  return sample_breakdown(model, theta, record, mask, robot, train_position_threshold).total;
}

TrainResult train(const std::vector<DatasetRecord>& train_set, const std::vector<DatasetRecord>& val_set,
                  const TrainConfig& cfg, const RobotModel& robot, const EpochCallback& on_epoch) {
  cfg.validate();
  robot.table.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck = blank_checkpoint(cfg, robot);
  std::vector<double>& theta = ck.params.theta;
  const std::size_t n_params = theta.size();
  const int width = ck.params.sizes[1];

  AdamState adam;
  ad::Tape tape;
  std::vector<double> grads(n_params);
  std::vector<std::size_t> order(train_set.size());
  std::vector<Var> totals;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(cfg.seed, Stream::Shuffle, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    Rng drop(cfg.seed, Stream::Dropout, static_cast<std::uint64_t>(epoch));

    double lr_scale = 1.0;
    if (cfg.epochs > 1 && cfg.lr_final_factor < 1.0) {
      const double progress = static_cast<double>(epoch - 1) / static_cast<double>(cfg.epochs - 1);
      lr_scale = cfg.lr_final_factor + (1.0 - cfg.lr_final_factor) * 0.5 * (1.0 + std::cos(kPi * progress));
    }

    EpochLog log;
    log.epoch = epoch;
    const double per_sample = 1.0 / static_cast<double>(train_set.size());
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      tape.clear();
      const std::vector<Var> leaves = tape.leaves(theta);
      totals.clear();
      for (std::size_t i = start; i < end; ++i) {
        const std::vector<double> mask = dropout_mask(ck.dropout, true, width, drop);
        const LossBreakdown<Var> b =
            sample_breakdown(ck, leaves, train_set[order[i]], mask, robot, cfg.train_position_threshold);
        add_values(log.loss, b, per_sample);
        totals.push_back(b.total);
      }
      const Var root = ad::sum(totals) / static_cast<double>(end - start);
      if (!std::isfinite(root.value()))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
      if (root.is_constant()) continue;  // zero loss on every sample: nothing to update
      tape.backward(root);
      for (std::size_t k = 0; k < n_params; ++k) grads[k] = leaves[k].grad();
      if (cfg.grad_clip > 0.0) {
        double n2 = 0.0;
        for (double g : grads) n2 += g * g;
        const double norm = std::sqrt(n2);
        if (norm > cfg.grad_clip)
          for (double& g : grads) g *= cfg.grad_clip / norm;
      }
      try {
        adam_step(theta, grads, adam, cfg.adam, lr_scale);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
    }
    if (!std::isfinite(log.loss.total)) throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));

    ck.epochs_run = epoch;
    ck.final_loss = log.loss.total;
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      const std::uint64_t eval_seed = derive_seed(cfg.seed, Stream::Dropout, 0x8000000000000000ull + epoch);
      log.train_acc = evaluate_single(ck, train_set, robot, eval_seed).acc;
      if (!val_set.empty()) log.val_acc = evaluate_single(ck, val_set, robot, eval_seed).acc;
    }
    log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

TrainResult train_cmp(const std::vector<DatasetRecord>& train_set, const std::vector<DatasetRecord>& val_set,
                      TrainConfig cfg, const RobotModel& robot, const EpochCallback& on_epoch) {
  cfg.kind = ModelKind::cmp;
  return train(train_set, val_set, cfg, robot, on_epoch);
}

TrainResult train_fmp(const std::vector<DatasetRecord>& train_set, const std::vector<DatasetRecord>& val_set,
                      TrainConfig cfg, const RobotModel& robot, const EpochCallback& on_epoch) {
  cfg.kind = ModelKind::fmp;
  return train(train_set, val_set, cfg, robot, on_epoch);
}

TrainResult nn_regression_train(const std::vector<DatasetRecord>& train_set,
                                const std::vector<DatasetRecord>& val_set, TrainConfig cfg, const RobotModel& robot,
                                int outputs, const EpochCallback& on_epoch) {
  if (outputs != 3 && outputs != 9) throw std::invalid_argument("regression outputs must be 3 or 9");
  cfg.kind = outputs == 3 ? ModelKind::nnreg3 : ModelKind::nnreg9;
  return train(train_set, val_set, cfg, robot, on_epoch);
}

// ---------------------------------------------------------------------------
// Inference

FullConfig predict_once(const Checkpoint& ckpt, const Pose6& target, Rng& rng) {
  const std::array<double, 6> x = network_input(target, ckpt.heads);
  const std::vector<double> mask = dropout_mask(ckpt.dropout, false, ckpt.params.sizes[1], rng);
  const std::vector<double> raw = mlp_forward<double>(ckpt.params.theta, ckpt.params.sizes, x, mask);
  const std::vector<double> out = apply_heads<double>(ckpt.kind, raw, target, ckpt.heads);
  FullConfig c;
  c.chassis = {out[0], out[1], out[2]};
  if (whole_body(ckpt.kind))
    for (std::size_t j = 0; j < 6; ++j) c.joints[j] = out[3 + j];
  return c;
}

FeasibilityVerdict verdict_for(const Checkpoint& ckpt, const FullConfig& config, const Pose6& target,
                               const RobotModel& robot) {
  return whole_body(ckpt.kind) ? fmp_verdict(config, target, robot) : chassis_verdict(config.chassis, target, robot);
}

PredictResult predict_with_resampling(const Checkpoint& ckpt, const Pose6& target, int max_attempts, Rng& rng,
                                      const RobotModel& robot) {
  if (max_attempts < 1) throw std::invalid_argument("max_attempts must be at least 1");
  PredictResult r;
  const bool stochastic = ckpt.dropout.active(false);
  for (int a = 1; a <= max_attempts; ++a) {
    FullConfig c = predict_once(ckpt, target, rng);
    const FeasibilityVerdict v = verdict_for(ckpt, c, target, robot);
    r.attempts = a;
    r.last_reason = v.reason;
    if (v.valid) {
      if (!whole_body(ckpt.kind)) c.joints = *v.witness;
      r.success = true;
      r.config = c;
      return r;
    }
    r.rejected.push_back(c);
    if (!stochastic) {
      r.deterministic_failure = true;
      break;
    }
  }
  return r;
}

AccuracyReport evaluate_single(const Checkpoint& ckpt, const std::vector<DatasetRecord>& records,
                               const RobotModel& robot, std::uint64_t seed) {
  std::vector<FeasibilityVerdict> v;
  v.reserve(records.size());
  for (const DatasetRecord& r : records) {
    Rng rng(seed, Stream::Dropout, r.task_id);
    v.push_back(verdict_for(ckpt, predict_once(ckpt, r.target, rng), r.target, robot));
  }
  return accuracy(v);
}

ResamplingReport evaluate_resampling(const Checkpoint& ckpt, const std::vector<DatasetRecord>& records,
                                     const RobotModel& robot, int max_attempts, std::uint64_t seed) {
  std::vector<FeasibilityVerdict> v;
  ResamplingReport rep;
  double attempts = 0.0;
  for (const DatasetRecord& r : records) {
    Rng rng(seed, Stream::Dropout, r.task_id);
    const PredictResult p = predict_with_resampling(ckpt, r.target, max_attempts, rng, robot);
    FeasibilityVerdict fv;
    fv.valid = p.success;
    fv.reason = p.success ? Reason::ok : p.last_reason;
    v.push_back(fv);
    attempts += p.attempts;
    rep.max_attempts_used = std::max(rep.max_attempts_used, p.attempts);
  }
  rep.final = accuracy(v);
  rep.mean_attempts = attempts / static_cast<double>(records.size());
  return rep;
}

// ---------------------------------------------------------------------------
// Checkpoint files

namespace {

constexpr const char* kCheckpointMagic = "kinet-checkpoint v";

std::string join(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

std::vector<double> parse_list(const std::string& text, std::size_t expected, std::size_t line) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw DataError("malformed number '" + cell + "'", line);
    }
  }
  if (out.size() != expected)
    throw DataError("expected " + std::to_string(expected) + " values, found " + std::to_string(out.size()), line);
  return out;
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  os << kCheckpointMagic << Checkpoint::kVersion << "\n";
  os << "kind=" << model_name(c.kind) << "\n";
  os << "sizes=" << c.params.sizes[0] << "," << c.params.sizes[1] << "," << c.params.sizes[2] << ","
     << c.params.sizes[3] << "\n";
  os << "dh_hash=" << c.dh_hash << "\n";
  std::vector<double> mount(c.mount.R.begin(), c.mount.R.end());
  mount.insert(mount.end(), c.mount.p.begin(), c.mount.p.end());
  os << "mount=" << join(mount) << "\n";
  os << "annulus=" << format_double(c.reach.r_min) << "," << format_double(c.reach.r_max) << "\n";
  const LossWeights& w = c.weights;
  const std::vector<double> wv = {w.illroot, w.outdom, w.illsolu, w.idesolu, w.pre_error, w.distance, w.orien,
                                  w.U ? 1.0 : 0.0};
  os << "weights=" << join(wv) << "\n";
  os << "dropout=" << format_double(c.dropout.rate) << "," << (c.dropout.active_in_training ? 1 : 0) << ","
     << (c.dropout.active_in_inference ? 1 : 0) << "\n";
  os << "heads=" << format_double(c.heads.input_scale) << "," << format_double(c.heads.offset_scale) << ","
     << format_double(c.heads.prior_x) << "," << format_double(c.heads.prior_y) << "\n";
  os << "seed=" << c.seed << "\n";
  os << "epochs=" << c.epochs_run << "\n";
  os << "final_loss=" << format_double(c.final_loss) << "\n";
  os << "params=" << c.params.theta.size() << "\n";
  for (double v : c.params.theta) os << format_double(v) << "\n";
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, c);
  if (!os) throw DataError("write failed for " + path.string());
}

Checkpoint read_checkpoint(std::istream& is, const DHTable& table, std::optional<ModelKind> expected_kind) {
  Checkpoint c;
  std::string text;
  std::size_t line = 0;
  auto field = [&](const std::string& key) {
    if (!std::getline(is, text)) throw DataError("unexpected end of file, expected " + key, line + 1);
    ++line;
    const std::string prefix = key + "=";
    if (text.rfind(prefix, 0) != 0) throw DataError("expected field '" + key + "'", line);
    return text.substr(prefix.size());
  };

  if (!std::getline(is, text)) throw DataError("empty checkpoint", 1);
  ++line;
  if (text.rfind(kCheckpointMagic, 0) != 0) throw DataError("not a kinet checkpoint", line);
  if (text != std::string(kCheckpointMagic) + std::to_string(Checkpoint::kVersion))
    throw DataError("unsupported checkpoint version", line);

  const std::string kind = field("kind");
  const auto k = parse_model(kind);
  if (!k) throw DataError("unknown model kind '" + kind + "'", line);
  c.kind = *k;
  if (expected_kind && *expected_kind != c.kind)
    throw DataError(std::string("checkpoint holds a ") + model_name(c.kind) + " model, expected " +
                        model_name(*expected_kind),
                    line);

  const auto sizes = parse_list(field("sizes"), 4, line);
  for (int i = 0; i < 4; ++i) c.params.sizes[i] = static_cast<int>(sizes[i]);
  const LayerSizes expected{6, c.params.sizes[1], c.params.sizes[2], output_size(c.kind)};
  if (c.params.sizes[0] != 6 || c.params.sizes[3] != expected[3] || c.params.sizes[1] < 1 || c.params.sizes[2] < 1)
    throw DataError("architecture does not match a " + kind + " model", line);

  c.dh_hash = field("dh_hash");
  if (c.dh_hash != table.hash_hex())
    throw DataError("checkpoint DH hash " + c.dh_hash + " does not match the robot table " + table.hash_hex(), line);

  const auto m = parse_list(field("mount"), 12, line);
  for (int i = 0; i < 9; ++i) c.mount.R[i] = m[i];
  for (int i = 0; i < 3; ++i) c.mount.p[i] = m[9 + i];
  const auto a = parse_list(field("annulus"), 2, line);
  c.reach = {a[0], a[1]};
  const auto w = parse_list(field("weights"), 8, line);
  c.weights = {w[0], w[1], w[2], w[3], w[4], w[5], w[6], w[7] != 0.0};
  const auto d = parse_list(field("dropout"), 3, line);
  c.dropout = {d[0], d[1] != 0.0, d[2] != 0.0};
  const auto h = parse_list(field("heads"), 4, line);
  c.heads = {h[0], h[1], h[2], h[3]};
  try {
    c.seed = std::stoull(field("seed"));
    c.epochs_run = std::stoi(field("epochs"));
  } catch (const std::logic_error&) {
    throw DataError("malformed integer field", line);
  }
  c.final_loss = parse_list(field("final_loss"), 1, line)[0];
  std::size_t n = 0;
  try {
    n = std::stoull(field("params"));
  } catch (const std::logic_error&) {
    throw DataError("malformed parameter count", line);
  }
  if (n != parameter_count(c.params.sizes)) throw DataError("parameter count does not match the architecture", line);
  c.params.theta.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(is, text)) throw DataError("unexpected end of file in parameter block", line + 1);
    ++line;
    c.params.theta.push_back(parse_list(text, 1, line)[0]);
  }
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const DHTable& table,
                           std::optional<ModelKind> expected_kind) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  return read_checkpoint(is, table, expected_kind);
}

void write_training_log(std::ostream& os, const std::vector<EpochLog>& log) {
  os << "epoch,illroot,outdom,illsolu,idesolu,pre_error,distance,orien,total,train_acc,val_acc,wall_ms\n";
  for (const EpochLog& e : log) {
    const auto& l = e.loss;
    os << e.epoch;
    for (double v : {l.illroot, l.outdom, l.illsolu, l.idesolu, l.pre_error, l.distance, l.orien, l.total,
                     e.train_acc, e.val_acc})
      os << "," << format_double(v);
    char ms[32];
    std::snprintf(ms, sizeof ms, "%.3f", e.wall_ms);
    os << "," << ms << "\n";
  }
}

// ---------------------------------------------------------------------------
// Random search

SearchResult random_search(const std::vector<DatasetRecord>& train_set, const std::vector<DatasetRecord>& val_set,
                           const TrainConfig& base, const RobotModel& robot, int trials, std::uint64_t seed) {
  if (trials < 1 || trials > 30) throw std::invalid_argument("random search runs 1 to 30 trials");
  if (val_set.empty()) throw std::invalid_argument("random search needs a validation set");
  SearchResult out;
  Rng rng(seed, Stream::Search);
  for (int t = 0; t < trials; ++t) {
    TrainConfig cfg = base;
    cfg.adam.lr = std::exp(rng.uniform(std::log(1e-5), std::log(3e-4)));
    cfg.dropout.rate = rng.uniform(0.02, 0.15);
    cfg.eval_every = cfg.epochs;
    const TrainResult r = train(train_set, val_set, cfg, robot);
    const double acc = r.log.back().val_acc;
    out.trials.emplace_back(cfg, acc);
    if (acc > out.best_val_acc) {
      out.best_val_acc = acc;
      out.best = cfg;
    }
  }
  return out;
}

}  // namespace kinet
