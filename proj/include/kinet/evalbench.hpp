#pragma once

// Ground-truth feasibility oracles and the accuracy metric.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "kinet/kinematics.hpp"
#include "kinet/losses.hpp"

namespace kinet {

/// Everything the oracles need to know about the robot.
struct RobotModel {
  DHTable table = DHTable::ur10e();
  MountTransform mount;
  Annulus reach;
  IkOptions ik;
};

struct AnnulusOptions {
  std::size_t samples = 1000000;
  double margin = 0.02;  // m, applied inwards on both bounds
  std::uint64_t seed = 0x6b696e6574ull;
};

/// Monte-Carlo planar reach of the flange around the joint-1 axis: r_max is
/// the largest sampled radius minus the margin, r_min the smallest radius of
/// an IK-feasible sample plus the margin. Results are cached per table hash,
/// mount and options.
Annulus derive_annulus(const DHTable& table, const MountTransform& mount = {}, const AnnulusOptions& options = {});

/// Model with the annulus filled in by derive_annulus.
RobotModel default_robot(const DHTable& table = DHTable::ur10e(), const MountTransform& mount = {});

enum class Reason : std::uint8_t {
  ok,
  no_ik_solution,
  joint_illegal,
  out_of_workspace,
  fk_error_exceeds,
  orientation_exceeds,
};
inline constexpr std::size_t kReasonCount = 6;

const char* reason_name(Reason r);
std::optional<Reason> parse_reason(const std::string& name);

struct FeasibilityVerdict {
  bool valid = false;
  Reason reason = Reason::no_ik_solution;
  std::optional<JointVector> witness;
};

/// Planar distance from the arm base of chassis pose c to the target.
double base_to_target_radius(const ChassisPose& c, const Pose6& target, const MountTransform& mount);

/// Target expressed in the arm base frame of chassis pose c.
HomTransform target_in_base(const ChassisPose& c, const Pose6& target, const MountTransform& mount);

/// Valid iff some analytic branch is event free, joint legal and reproduces
/// the target.
FeasibilityVerdict chassis_verdict(const ChassisPose& c, const Pose6& target, const RobotModel& robot);

/// Chassis pose plus six joints, in that order.
struct FullConfig {
  ChassisPose chassis;
  JointVector joints{};
};

struct FmpCheck {
  double position_error = 0.0;          // m
  std::array<double, 3> orientation{};  // roll, pitch, yaw of the residual rotation
};

FmpCheck fmp_errors(const FullConfig& config, const Pose6& target, const RobotModel& robot);

/// Valid iff the target is inside the annulus, the joints are legal, the
/// flange lands within 1 mm and every residual angle is below 0.1 rad.
FeasibilityVerdict fmp_verdict(const FullConfig& config, const Pose6& target, const RobotModel& robot);

struct AccuracyReport {
  std::size_t n = 0;
  std::size_t successes = 0;
  double acc = 0.0;
  std::array<std::size_t, kReasonCount> counts{};  // indexed by Reason
};

/// Throws std::invalid_argument on an empty set.
AccuracyReport accuracy(std::span<const FeasibilityVerdict> verdicts);

}  // namespace kinet
