#include "kinet/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

#include "kinet/rng.hpp"

namespace kinet {

namespace {

using AnnulusKey = std::tuple<std::uint64_t, std::array<double, 12>, std::size_t, double, std::uint64_t>;

std::mutex annulus_mutex;
std::map<AnnulusKey, Annulus> annulus_cache;

Annulus monte_carlo_annulus(const DHTable& table, const AnnulusOptions& options) {
  Rng rng(options.seed, Stream::Annulus);
  double r_max = 0.0;
  double r_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < options.samples; ++i) {
    JointVector q;
    for (double& v : q) v = rng.uniform(-kPi, kPi);
    const HomTransform h = fk_chain(q, table);
    const double r = std::hypot(h.p[0], h.p[1]);
    r_max = std::max(r_max, r);
    if (r < r_min && ik_feasible(h, table)) r_min = r;
  }
  return {r_min + options.margin, r_max - options.margin};
}

}  // namespace

Annulus derive_annulus(const DHTable& table, const MountTransform& mount, const AnnulusOptions& options) {
  table.validate();
  AnnulusKey key{table.hash(), {}, options.samples, options.margin, options.seed};
  for (int k = 0; k < 9; ++k) std::get<1>(key)[k] = mount.transform.R[k];
  for (int k = 0; k < 3; ++k) std::get<1>(key)[9 + k] = mount.transform.p[k];
  {
    std::lock_guard<std::mutex> lock(annulus_mutex);
    auto it = annulus_cache.find(key);
    if (it != annulus_cache.end()) return it->second;
  }
  // The planar radius is measured in the arm base frame, so the mount does
  // not change the bounds; it only enters the cache key.
  const Annulus a = monte_carlo_annulus(table, options);
  std::lock_guard<std::mutex> lock(annulus_mutex);
  annulus_cache.emplace(key, a);
  return a;
}

RobotModel default_robot(const DHTable& table, const MountTransform& mount) {
  RobotModel m;
  m.table = table;
  m.mount = mount;
  m.reach = derive_annulus(table, mount);
  return m;
}

const char* reason_name(Reason r) {
  switch (r) {
    case Reason::ok: return "ok";
    case Reason::no_ik_solution: return "no_ik_solution";
    case Reason::joint_illegal: return "joint_illegal";
    case Reason::out_of_workspace: return "out_of_workspace";
    case Reason::fk_error_exceeds: return "fk_error_exceeds";
    case Reason::orientation_exceeds: return "orientation_exceeds";
  }
  return "?";
}

std::optional<Reason> parse_reason(const std::string& name) {
  for (std::size_t i = 0; i < kReasonCount; ++i) {
    const auto r = static_cast<Reason>(i);
    if (name == reason_name(r)) return r;
  }
  return std::nullopt;
}

HomTransform target_in_base(const ChassisPose& c, const Pose6& target, const MountTransform& mount) {
  return relative_target(chassis_to_base(c, mount), pose_to_hom(target));
}

double base_to_target_radius(const ChassisPose& c, const Pose6& target, const MountTransform& mount) {
  const HomTransform base = chassis_to_base(c, mount);
  return std::hypot(target.x - base.p[0], target.y - base.p[1]);
}

FeasibilityVerdict chassis_verdict(const ChassisPose& c, const Pose6& target, const RobotModel& robot) {
  FeasibilityVerdict v;
  const HomTransform h = target_in_base(c, target, robot.mount);
  if (auto sol = ik_feasible(h, robot.table, robot.ik)) {
    v.valid = true;
    v.reason = Reason::ok;
    v.witness = sol->joints;
    return v;
  }
  if (!robot.reach.contains(base_to_target_radius(c, target, robot.mount))) {
    v.reason = Reason::out_of_workspace;
    return v;
  }
  const IkDiagnosis d = diagnose_ik(h, robot.table, robot.ik);
  v.reason = d.any_event_free && !d.any_ideal ? Reason::joint_illegal : Reason::no_ik_solution;
  return v;
}

FmpCheck fmp_errors(const FullConfig& config, const Pose6& target, const RobotModel& robot) {
  const HomTransform h_tar = pose_to_hom(target);
  const HomTransform h_fk = world_fk(config.chassis, config.joints, robot.mount, robot.table);
  FmpCheck c;
  c.position_error = std::hypot(h_fk.p[0] - h_tar.p[0], h_fk.p[1] - h_tar.p[1], h_fk.p[2] - h_tar.p[2]);
  c.orientation = orientation_error(h_fk, h_tar);
  return c;
}

FeasibilityVerdict fmp_verdict(const FullConfig& config, const Pose6& target, const RobotModel& robot) {
  FeasibilityVerdict v;
  if (!robot.reach.contains(base_to_target_radius(config.chassis, target, robot.mount))) {
    v.reason = Reason::out_of_workspace;
    return v;
  }
  if (!joints_legal(config.joints)) {
    v.reason = Reason::joint_illegal;
    return v;
  }
  const FmpCheck e = fmp_errors(config, target, robot);
  if (!(e.position_error < kPositionTolerance)) {
    v.reason = Reason::fk_error_exceeds;
    return v;
  }
  for (double a : e.orientation) {
    if (!(std::fabs(a) < kOrientationTolerance)) {
      v.reason = Reason::orientation_exceeds;
      return v;
    }
  }
  v.valid = true;
  v.reason = Reason::ok;
  v.witness = config.joints;
  return v;
}

AccuracyReport accuracy(std::span<const FeasibilityVerdict> verdicts) {
  if (verdicts.empty()) throw std::invalid_argument("accuracy over an empty set");
  AccuracyReport r;
  r.n = verdicts.size();
  for (const auto& v : verdicts) {
    r.counts[static_cast<std::size_t>(v.reason)] += 1;
    if (v.valid) ++r.successes;
  }
  r.acc = static_cast<double>(r.successes) / static_cast<double>(r.n);
  return r;
}

}  // namespace kinet
