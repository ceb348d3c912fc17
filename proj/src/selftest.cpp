#include "kinet/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "kinet/dataio.hpp"
#include "kinet/predictor.hpp"

namespace kinet {

bool SelftestReport::passed() const {
  for (const SelftestCase& c : cases)
    if (!c.passed) return false;
  return !cases.empty();
}

void SelftestReport::print(std::ostream& os) const {
  std::map<std::string, std::pair<int, int>> per;
  std::vector<std::string> order;
  for (const SelftestCase& c : cases) {
    if (!per.count(c.suite)) order.push_back(c.suite);
    auto& [ok, total] = per[c.suite];
    ok += c.passed;
    ++total;
  }
  for (const std::string& s : order) os << s << " " << per[s].first << "/" << per[s].second << "\n";
  for (const SelftestCase& c : cases)
    if (!c.passed) os << "FAIL " << c.suite << "/" << c.name << ": " << c.detail << "\n";
}

std::vector<std::string> gradient_case_names() {
  return {"sqrt_guarded", "atan2_diff", "acos_extended", "acos_extended_band", "analytic_ik", "loss_cmp", "loss_fmp"};
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

constexpr double kGradTolerance = 1e-4;

SelftestCase gradient_case(const std::string& name, const ad::ScalarFunction& f, const std::vector<double>& point,
                           const std::string& inject) {
  SelftestCase c{"gradients", name, false, ""};
  ad::GradCheckReport r = ad::grad_check(f, point);
  if (inject == name && !r.autodiff.empty()) {
    r.autodiff[0] += 1e-2;
    r.rel_error[0] = std::fabs(r.autodiff[0] - r.numeric[0]) / std::max(1.0, std::fabs(r.numeric[0]));
    r.max_rel_error = std::max(r.max_rel_error, r.rel_error[0]);
  }
  c.passed = r.all_finite() && r.max_rel_error <= kGradTolerance;
  c.detail = "max relative error " + fmt("%.3g", r.max_rel_error) + " over " + std::to_string(point.size()) +
             " coordinates";
  return c;
}

Checkpoint small_model(ModelKind kind, const RobotModel& robot, std::uint64_t seed) {
  Checkpoint ck;
  ck.kind = kind;
  ck.params = init_params(seed, {6, 50, 50, output_size(kind)});
  ck.dh_hash = robot.table.hash_hex();
  ck.mount = robot.mount.transform;
  ck.reach = robot.reach;
  ck.seed = seed;
  return ck;
}

void gradient_suite(SelftestReport& rep, const SelftestOptions& opt, const RobotModel& robot,
                    const DatasetRecord& rec) {
  const std::string& inj = opt.inject_fault;
  rep.cases.push_back(gradient_case(
      "sqrt_guarded", [](std::span<const Var> x) { return ad::sqrt_guarded(x[0] * x[0] + x[1]); }, {0.7, 0.2}, inj));
  rep.cases.push_back(gradient_case(
      "atan2_diff", [](std::span<const Var> x) { return ad::atan2_diff(x[0], x[1]); }, {0.3, -0.8}, inj));
  rep.cases.push_back(gradient_case(
      "acos_extended", [](std::span<const Var> x) { return ad::acos_extended(x[0] * 0.5); }, {0.6}, inj));
  rep.cases.push_back(gradient_case(
      "acos_extended_band", [](std::span<const Var> x) { return ad::acos_extended(x[0]); }, {1.2}, inj));

  const HomTransform h_tar = pose_to_hom(rec.target);
  const MountTransform mount = robot.mount;
  const DHTable table = robot.table;
  const ChassisPose w = rec.witness_chassis;
  rep.cases.push_back(gradient_case(
      "analytic_ik",
      [&](std::span<const Var> x) {
        const ChassisPoseT<Var> c{x[0], x[1], x[2]};
        const SolutionSet<Var> s = analytic_ik(relative_target(chassis_to_base(c, mount), h_tar), table);
        Var total(0.0);
        for (int b = 0; b < kBranches; ++b)
          for (std::size_t j = 0; j < 6; ++j) total = total + s.raw[b][j] * (0.1 * static_cast<double>(j + 1));
        return total;
      },
      {w.psi + 0.05, w.x + 0.03, w.y - 0.02}, inj));

  for (ModelKind kind : {ModelKind::cmp, ModelKind::fmp}) {
    const Checkpoint ck = small_model(kind, robot, opt.seed);
    const double threshold = kPositionTolerance;
    rep.cases.push_back(gradient_case(
        kind == ModelKind::cmp ? "loss_cmp" : "loss_fmp",
        [&](std::span<const Var> theta) { return sample_loss(ck, theta, rec, {}, robot, threshold); },
        ck.params.theta, inj));
  }
}

void round_trip_suite(SelftestReport& rep, const SelftestOptions& opt, const RobotModel& robot) {
  Rng rng(opt.seed, Stream::Data, 0xf00d);
  int recovered = 0, tried = 0, bad_valid = 0;
  while (tried < opt.round_trips) {
    JointVector q;
    for (double& v : q) v = rng.uniform(-kPi + 0.2, kPi - 0.2);
    if (near_singular(q, robot.table)) continue;
    ++tried;
    const HomTransform h = fk_chain(q, robot.table);
    const SolutionSet<double> s = analytic_ik(h, robot.table);
    bool found = false;
    for (int b = 0; b < kBranches; ++b) {
      if (!s.branch_valid[b]) continue;
      if (max_abs_diff(fk_chain(s.wrapped[b], robot.table), h) > 1e-6) ++bad_valid;
      double d = 0.0;
      for (std::size_t j = 0; j < 6; ++j) d = std::max(d, std::fabs(wrap_angle(s.wrapped[b][j] - q[j])));
      found = found || d < 1e-6;
    }
    recovered += found;
  }
  rep.cases.push_back({"fk_ik", "recovery", recovered * 1000 >= tried * 999,
                       std::to_string(recovered) + "/" + std::to_string(tried) + " recovered"});
  rep.cases.push_back({"fk_ik", "valid_branches_reproduce", bad_valid == 0,
                       std::to_string(bad_valid) + " valid branches off by more than 1e-6"});
}

void loss_suite(SelftestReport& rep) {
  auto near = [](double a, double b) { return std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(b)); };
  auto add = [&](const char* name, double got, double want) {
    rep.cases.push_back({"loss_branches", name, near(got, want), "got " + fmt("%.17g", got) + ", want " + fmt("%.17g", want)});
  };
  const HomTransform id = HomTransform::identity();
  add("pre_error_offset", loss_pre_error(HomTransform::translation(0.1, 0.0, 0.0), id, kPositionTolerance), 0.01 / 12.0);
  add("pre_error_below_threshold", loss_pre_error(HomTransform::translation(5e-4, 0.0, 0.0), id, kPositionTolerance), 0.0);
  add("orien_all_inside", loss_orien(0.05, -0.05, 0.09, kOrientationTolerance), 0.0);
  add("orien_one_outside", loss_orien(0.2, 0.0, -0.05, kOrientationTolerance), 0.25);

  SolutionSet<double> s;
  s.raw[3][1] = 4.0;
  add("illsolu_one_joint", loss_illsolu(s), 4.0 - kPi);
  add("idesolu_other_branch_legal", loss_idesolu(s), 0.0);
  for (auto& b : s.raw) b[0] = -3.5;
  add("idesolu_none_legal", loss_idesolu(s), loss_illsolu(s));

  const Annulus ring{0.3, 1.2};
  const Pose6 target{0.0, 0.0, 0.0, 1.5, 0.0, 0.5};
  add("distance_inside", loss_distance(ChassisPose{0.0, 1.0, 0.0}, target, ring, MountTransform{}), 0.0);
  add("distance_outside", loss_distance(ChassisPose{0.0, 0.2, 0.0}, target, ring, MountTransform{}), 0.01);

  SolutionSet<double> ev;
  ev.events.push_back({ad::EventKind::OutDom, 0.25, 0, -1});
  LossWeights on, off;
  off.U = false;
  add("u_gate_on", cmp_sample_loss(ev, on).total, 0.25);
  add("u_gate_off", cmp_sample_loss(ev, off).total, 0.0);
}

}  // namespace

SelftestReport run_selftest(const SelftestOptions& opt) {
  if (!opt.inject_fault.empty()) {
    const auto names = gradient_case_names();
    if (std::find(names.begin(), names.end(), opt.inject_fault) == names.end())
      throw std::invalid_argument("unknown gradient case " + opt.inject_fault);
  }
  SelftestReport rep;
  const RobotModel robot = default_robot();
  const DatasetRecord rec = generate_record(0, opt.seed, DataGenConfig{}, robot);
  gradient_suite(rep, opt, robot, rec);
  round_trip_suite(rep, opt, robot);
  loss_suite(rep);
  return rep;
}

}  // namespace kinet
