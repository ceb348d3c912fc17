#include "kinet/baselines.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace kinet {

void SamplerConfig::validate() const {
  bounds.validate();
  if (!(ebs_sigma > 0.0) || !std::isfinite(ebs_sigma)) throw std::invalid_argument("EBS sigma must be positive");
  if (!(ebs_heading_sigma >= 0.0)) throw std::invalid_argument("EBS heading sigma must be nonnegative");
  if (!(ebs_mean_factor > 0.0)) throw std::invalid_argument("EBS mean factor must be positive");
}

ChassisPose random_sample_chassis(const SamplerConfig& cfg, const Pose6& target, Rng& rng) {
  ChassisPose c;
  c.x = target.x + rng.uniform(cfg.bounds.x_min, cfg.bounds.x_max);
  c.y = target.y + rng.uniform(cfg.bounds.y_min, cfg.bounds.y_max);
  if (cfg.rs_heading == HeadingPolicy::face_target)
    c.psi = std::atan2(target.y - c.y, target.x - c.x);
  else
    c.psi = wrap_angle(rng.uniform(-kPi, kPi));
  return c;
}

ChassisPose biased_sample_chassis(const SamplerConfig& cfg, const Pose6& target, double r_max, Rng& rng) {
  const double r = cfg.ebs_mean_factor * r_max + cfg.ebs_sigma * rng.normal();
  const double a = rng.uniform(-kPi, kPi);
  ChassisPose c;
  c.x = target.x + r * std::cos(a);
  c.y = target.y + r * std::sin(a);
  // Facing the target from the sampled point; a negative radius flips the side.
  c.psi = wrap_angle(std::atan2(target.y - c.y, target.x - c.x) + cfg.ebs_heading_sigma * rng.normal());
  return c;
}

void DLSConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("DLS damping must be positive");
  if (max_iterations < 1) throw std::invalid_argument("DLS needs at least one iteration");
  if (!(position_tolerance > 0.0) || !(rotation_tolerance > 0.0))
    throw std::invalid_argument("DLS tolerances must be positive");
  if (!(fd_step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
}

std::array<double, 3> rotation_log(const std::array<double, 9>& R) {
  const double tr = R[0] + R[4] + R[8];
  const double c = std::clamp((tr - 1.0) * 0.5, -1.0, 1.0);
  const double angle = std::acos(c);
  const std::array<double, 3> vee = {R[7] - R[5], R[2] - R[6], R[3] - R[1]};
  if (angle < 1e-9) return {0.5 * vee[0], 0.5 * vee[1], 0.5 * vee[2]};
  if (kPi - angle < 1e-6) {
    // Near a half turn the skew part vanishes; read the axis off the diagonal.
    std::array<double, 3> axis{};
    int k = 0;
    for (int i = 1; i < 3; ++i)
      if (R[4 * i] > R[4 * k]) k = i;
    axis[k] = std::sqrt(std::max(0.0, (R[4 * k] + 1.0) * 0.5));
    for (int i = 0; i < 3; ++i)
      if (i != k) axis[i] = (R[3 * i + k] + R[3 * k + i]) / (4.0 * axis[k]);
    double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    // Sign of the axis from the residual skew part, when there is one.
    if (axis[0] * vee[0] + axis[1] * vee[1] + axis[2] * vee[2] < 0.0) n = -n;
    return {angle * axis[0] / n, angle * axis[1] / n, angle * axis[2] / n};
  }
  const double f = angle / (2.0 * std::sin(angle));
  return {f * vee[0], f * vee[1], f * vee[2]};
}

namespace {

using Mat6 = std::array<std::array<double, 6>, 6>;
using Vec6 = std::array<double, 6>;

// R_a * R_b^T
std::array<double, 9> mul_transpose(const std::array<double, 9>& a, const std::array<double, 9>& b) {
  std::array<double, 9> out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[3 * i + k] * b[3 * j + k];
      out[3 * i + j] = s;
    }
  return out;
}

Vec6 pose_error(const HomTransform& target, const HomTransform& h) {
  const std::array<double, 3> w = rotation_log(mul_transpose(target.R, h.R));
  return {target.p[0] - h.p[0], target.p[1] - h.p[1], target.p[2] - h.p[2], w[0], w[1], w[2]};
}

// Cholesky solve of a symmetric positive definite system; false when it breaks down.
bool spd_solve(Mat6 a, Vec6& b) {
  for (int j = 0; j < 6; ++j) {
    double d = a[j][j];
    for (int k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
    if (!(d > 0.0)) return false;
    a[j][j] = std::sqrt(d);
    for (int i = j + 1; i < 6; ++i) {
      double s = a[i][j];
      for (int k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      a[i][j] = s / a[j][j];
    }
  }
  for (int i = 0; i < 6; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= a[i][k] * b[k];
    b[i] = s / a[i][i];
  }
  for (int i = 5; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < 6; ++k) s -= a[k][i] * b[k];
    b[i] = s / a[i][i];
  }
  return true;
}

}  // namespace

std::optional<JointVector> jacobian_dls_ik(const HomTransform& target, const JointVector& seed, const DLSConfig& cfg,
                                           const DHTable& table, DLSInfo* info) {
  cfg.validate();
  DLSInfo local;
  DLSInfo& out = info ? *info : local;
  out = {};
  JointVector q = seed;
  for (double v : q)
    if (!std::isfinite(v)) return std::nullopt;
  const double h = cfg.fd_step;
  const double l2 = cfg.lambda * cfg.lambda;

  for (int it = 0;; ++it) {
    const HomTransform now = fk_chain(q, table);
    const Vec6 e = pose_error(target, now);
    out.iterations = it;
    out.position_error = std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
    out.rotation_error = std::sqrt(e[3] * e[3] + e[4] * e[4] + e[5] * e[5]);
    if (!std::isfinite(out.position_error) || !std::isfinite(out.rotation_error)) return std::nullopt;
    if (out.position_error < cfg.position_tolerance && out.rotation_error < cfg.rotation_tolerance) {
      out.converged = true;
      break;
    }
    if (it == cfg.max_iterations) return std::nullopt;

    // J[:, j] by central differences: position delta and the spatial rotation vector.
    Mat6 J{};
    for (int j = 0; j < 6; ++j) {
      JointVector qp = q, qm = q;
      qp[j] += h;
      qm[j] -= h;
      const HomTransform fp = fk_chain(qp, table);
      const HomTransform fm = fk_chain(qm, table);
      const std::array<double, 3> w = rotation_log(mul_transpose(fp.R, fm.R));
      for (int i = 0; i < 3; ++i) {
        J[i][j] = (fp.p[i] - fm.p[i]) / (2.0 * h);
        J[3 + i][j] = w[i] / (2.0 * h);
      }
    }
    Mat6 A{};
    for (int i = 0; i < 6; ++i)
      for (int k = 0; k < 6; ++k) {
        double s = 0.0;
        for (int j = 0; j < 6; ++j) s += J[i][j] * J[k][j];
        A[i][k] = s + (i == k ? l2 : 0.0);
      }
    Vec6 y = e;
    if (!spd_solve(A, y)) return std::nullopt;
    for (int j = 0; j < 6; ++j) {
      double s = 0.0;
      for (int i = 0; i < 6; ++i) s += J[i][j] * y[i];
      q[j] += s;
    }
  }
  for (double& v : q) v = wrap_angle(v);
  if (!joints_legal(q)) return std::nullopt;
  return q;
}

// ---------------------------------------------------------------------------
// Pipelines

const char* method_name(Method m) {
  switch (m) {
    case Method::rs: return "RS";
    case Method::ebs: return "EBS";
    case Method::nnreg: return "NNreg";
    case Method::cmp: return "CMP";
    case Method::rs_wb: return "RS_WB";
    case Method::rs_dls: return "RS+DLS";
    case Method::ebs_dls: return "EBS+DLS";
    case Method::fmp: return "FMP";
  }
  return "?";
}

std::optional<Method> parse_method(const std::string& name) {
  for (std::size_t i = 0; i < kMethodCount; ++i) {
    const auto m = static_cast<Method>(i);
    if (name == method_name(m)) return m;
  }
  return std::nullopt;
}

bool method_whole_body(Method m) {
  return m == Method::rs_wb || m == Method::rs_dls || m == Method::ebs_dls || m == Method::fmp;
}

bool method_learned(Method m) { return m == Method::nnreg || m == Method::cmp || m == Method::fmp; }

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

const Checkpoint& checkpoint_for(Method m, const PipelineContext& ctx) {
  const Checkpoint* c = m == Method::cmp ? ctx.cmp : m == Method::nnreg ? ctx.nnreg : ctx.fmp;
  if (!c) throw std::invalid_argument(std::string("method ") + method_name(m) + " needs a checkpoint");
  return *c;
}

}  // namespace

PipelineResult run_pipeline(Method m, const Pose6& target, const PipelineContext& ctx, Rng& rng) {
  PipelineResult r;
  r.method = m;
  const HomTransform h_tar = pose_to_hom(target);
  const bool learned = method_learned(m);
  const Checkpoint* ckpt = learned ? &checkpoint_for(m, ctx) : nullptr;
  const std::uint64_t cap = learned ? static_cast<std::uint64_t>(ctx.learned_max_attempts) : ctx.sampling_max_attempts;
  const bool stochastic = learned && ckpt->dropout.active(false);

  const auto start = Clock::now();
  while (r.attempts < cap) {
    ++r.attempts;
    const auto t0 = Clock::now();
    FullConfig c;
    switch (m) {
      case Method::rs:
      case Method::rs_dls:
        c.chassis = random_sample_chassis(ctx.sampler, target, rng);
        break;
      case Method::ebs:
      case Method::ebs_dls:
        c.chassis = biased_sample_chassis(ctx.sampler, target, ctx.robot.reach.r_max, rng);
        break;
      case Method::rs_wb:
        c.chassis = random_sample_chassis(ctx.sampler, target, rng);
        for (double& q : c.joints) q = rng.uniform(-kPi, kPi);
        break;
      case Method::nnreg:
      case Method::cmp:
      case Method::fmp:
        c = predict_once(*ckpt, target, rng);
        break;
    }
    JointVector seed{};
    if ((m == Method::rs_dls || m == Method::ebs_dls) && ctx.dls.seed_policy == SeedPolicy::uniform)
      for (double& q : seed) q = rng.uniform(-kPi, kPi);
    const auto t1 = Clock::now();

    FeasibilityVerdict v;
    if (m == Method::rs_dls || m == Method::ebs_dls) {
      const auto q = jacobian_dls_ik(relative_target(chassis_to_base(c.chassis, ctx.robot.mount), h_tar), seed,
                                     ctx.dls, ctx.robot.table);
      if (q) {
        c.joints = *q;
        v = fmp_verdict(c, target, ctx.robot);
      } else {
        v.reason = Reason::no_ik_solution;
      }
    } else if (method_whole_body(m)) {
      v = fmp_verdict(c, target, ctx.robot);
    } else {
      v = chassis_verdict(c.chassis, target, ctx.robot);
    }
    const auto t2 = Clock::now();
    r.sample_ms += ms_between(t0, t1);
    r.check_ms += ms_between(t1, t2);
    r.reason = v.reason;

    if (v.valid) {
      if (!method_whole_body(m)) c.joints = *v.witness;
      r.config = c;
      r.valid = true;
      break;
    }
    if (learned && !stochastic) break;  // the same prediction would come back
    if (ms_between(start, t2) >= ctx.time_cap_ms) {
      r.capped = true;
      break;
    }
  }
  r.total_ms = ms_between(start, Clock::now());
  return r;
}

}  // namespace kinet
