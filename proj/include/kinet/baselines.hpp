#pragma once

// Comparison methods: random and biased chassis sampling, damped
// least-squares IK, and the sample/check pipelines used by the benchmark.

#include <cstdint>
#include <optional>
#include <string>

#include "kinet/dataio.hpp"
#include "kinet/evalbench.hpp"
#include "kinet/predictor.hpp"
#include "kinet/rng.hpp"

namespace kinet {

enum class HeadingPolicy : std::uint8_t { uniform, face_target };

struct SamplerConfig {
  /// Random-sampling rectangle, as offsets from the target x/y (m).
  Bounds2 bounds{-5.0, 5.0, -5.0, 5.0};
  HeadingPolicy rs_heading = HeadingPolicy::uniform;
  /// Biased sampling: radial mean = ebs_mean_factor * r_max, spread ebs_sigma (m).
  double ebs_mean_factor = 0.75;
  double ebs_sigma = 0.23;
  double ebs_heading_sigma = 15.0 * kPi / 180.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// (x, y) uniform in the rectangle around the target, heading per policy.
ChassisPose random_sample_chassis(const SamplerConfig& cfg, const Pose6& target, Rng& rng);

/// Radial distance Normal(mean, sigma) around the target at a uniform angle;
/// the heading faces the target plus Normal(0, heading_sigma).
ChassisPose biased_sample_chassis(const SamplerConfig& cfg, const Pose6& target, double r_max, Rng& rng);

/// Joint seed drawn by the pipelines for each DLS run.
enum class SeedPolicy : std::uint8_t { zero, uniform };

struct DLSConfig {
  double lambda = 0.05;
  double position_tolerance = 1e-4;  // m
  double rotation_tolerance = 1e-3;  // rad
  int max_iterations = 500;
  double fd_step = 1e-6;
  SeedPolicy seed_policy = SeedPolicy::uniform;

  void validate() const;
};

struct DLSInfo {
  bool converged = false;
  int iterations = 0;
  double position_error = 0.0;
  double rotation_error = 0.0;
};

/// Rotation vector of R (axis times angle, angle in [0, pi]).
std::array<double, 3> rotation_log(const std::array<double, 9>& R);

/// q <- q + J^T (J J^T + lambda^2 I)^-1 e with J by central differences of
/// fk_chain. Returns wrapped joints on convergence, nullopt otherwise.
std::optional<JointVector> jacobian_dls_ik(const HomTransform& target_in_base, const JointVector& seed,
                                           const DLSConfig& cfg, const DHTable& table, DLSInfo* info = nullptr);

// ---------------------------------------------------------------------------
// Pipelines

enum class Method : std::uint8_t { rs, ebs, nnreg, cmp, rs_wb, rs_dls, ebs_dls, fmp };
inline constexpr std::size_t kMethodCount = 8;

const char* method_name(Method m);
std::optional<Method> parse_method(const std::string& name);
bool method_whole_body(Method m);
bool method_learned(Method m);

struct PipelineContext {
  RobotModel robot;
  SamplerConfig sampler;
  DLSConfig dls;
  const Checkpoint* cmp = nullptr;
  const Checkpoint* nnreg = nullptr;
  const Checkpoint* fmp = nullptr;
  int learned_max_attempts = 20;
  /// Large enough that the time cap ends a failing sampling search first.
  std::uint64_t sampling_max_attempts = 1000000000;
  double time_cap_ms = 30000.0;
};

struct PipelineResult {
  Method method = Method::rs;
  FullConfig config;
  bool valid = false;
  Reason reason = Reason::no_ik_solution;
  std::uint64_t attempts = 0;
  bool capped = false;  // stopped by the time cap
  double sample_ms = 0.0;
  double check_ms = 0.0;
  double total_ms = 0.0;
};

/// Samples and checks until the oracle accepts or a cap is reached. Chassis
/// methods are checked with chassis_verdict, whole-body methods with
/// fmp_verdict. Throws std::invalid_argument when a learned method has no
/// checkpoint.
PipelineResult run_pipeline(Method m, const Pose6& target, const PipelineContext& ctx, Rng& rng);

}  // namespace kinet
