#include <doctest.h>

#include <cmath>

#include "kinet/kinematics.hpp"
#include "kinet/rng.hpp"

using namespace kinet;

namespace {

// Values printed by tests/oracles/fk_oracle.py (numpy, 4x4 products).
struct FkOracle {
  JointVector q;
  std::array<double, 12> top;  // row-major 3x4
};

const FkOracle kOracles[] = {
    {{0, 0, 0, 0, 0, 0},
     {1.0, 0.0, 0.0, -1.18425, 0.0, 6.123233995736766e-17, -1.0, -0.2907, 0.0, 1.0, 6.123233995736766e-17,
      0.06085000000000001}},
    {{0.3, -1.2, 1.5, -0.4, 1.1, 0.7},
     {0.5926568356971731, -0.37448968561550927, -0.7131026226771369, -0.776813742059332, -0.5301701775177836,
      0.48512987867400037, -0.6953909574394187, -0.4779266684985407, 0.6063641298528268, 0.7901939484616082,
      0.08897227569573299, 0.47397424337859717}},
    {{-2.0, -0.5, -1.0, 2.5, -0.6, 3.0},
     {-0.2751575024893396, -0.3929380461759635, -0.8774326416832494, -0.06200269547329235, 0.7420260730557858,
      -0.6671087690986559, 0.06605450096008436, 0.5141549945276669, -0.6112983361086783, -0.6329025059668295,
      0.4751302581520869, 1.0351834873256718}},
};

double top_entry(const HomTransform& h, int k) { return k % 4 == 3 ? h.p[k / 4] : h.r(k / 4, k % 4); }

HomTransform random_transform(Rng& rng) {
  Pose6 p{rng.uniform(-kPi, kPi), rng.uniform(-1.5, 1.5), rng.uniform(-kPi, kPi),
          rng.uniform(-2, 2),     rng.uniform(-2, 2),     rng.uniform(-2, 2)};
  return pose_to_hom(p);
}

double identity_residual(const HomTransform& h) { return max_abs_diff(h, HomTransform::identity()); }

JointVector random_joints(Rng& rng, double margin) {
  JointVector q;
  for (double& v : q) v = rng.uniform(-kPi + margin, kPi - margin);
  return q;
}

}  // namespace

TEST_CASE("UR10e table passes the structure check") {
  const DHTable t = DHTable::ur10e();
  CHECK(t.analytic_solvable());
  CHECK_NOTHROW(t.validate());
  CHECK(t[1].a == -0.6127);
  CHECK(t[3].d == 0.17415);
  CHECK(t.cos_alpha(0) == 0.0);
  CHECK(t.sin_alpha(4) == -1.0);
}

TEST_CASE("tables without the offset-wrist twist pattern are refused") {
  auto rows = DHTable::ur10e().rows();
  rows[3].alpha = 0.0;
  const DHTable bad(rows);
  std::string why;
  CHECK_FALSE(bad.analytic_solvable(&why));
  CHECK_FALSE(why.empty());
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(analytic_ik(HomTransform::identity(), bad), std::invalid_argument);
  rows = DHTable::ur10e().rows();
  rows[0].d = std::nan("");
  CHECK_THROWS_AS(DHTable(rows).validate(), std::invalid_argument);
}

TEST_CASE("DH hash is stable and sensitive") {
  const DHTable t = DHTable::ur10e();
  CHECK(t.hash() == DHTable::ur10e().hash());
  CHECK(t.hash_hex().size() == 16);
  auto rows = t.rows();
  rows[5].d += 1e-12;
  CHECK(DHTable(rows).hash() != t.hash());
}

TEST_CASE("dh_link_transform") {
  SUBCASE("all zero gives identity") {
    const DHTable t({DHRow{}, DHRow{}, DHRow{}, DHRow{}, DHRow{}, DHRow{}});
    CHECK(identity_residual(dh_link_transform(0.0, t, 0)) == 0.0);
  }
  SUBCASE("quarter turn with unit link") {
    const DHTable t({DHRow{1.0, 0.0, 0.0, 0.0}, DHRow{}, DHRow{}, DHRow{}, DHRow{}, DHRow{}});
    const HomTransform h = dh_link_transform(kPi / 2, t, 0);
    CHECK(h.p[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(h.p[1] == doctest::Approx(1.0));
    CHECK(h.p[2] == 0.0);
    CHECK(max_abs_diff(HomTransform{h.R, {0, 0, 0}}, rot_z(kPi / 2)) < 1e-15);
  }
  SUBCASE("entries differentiate correctly in theta") {
    const DHTable t = DHTable::ur10e();
    for (std::size_t j = 0; j < 6; ++j) {
      for (int k = 0; k < 12; ++k) {
        auto r = ad::grad_check(
            [&](std::span<const Var> x) {
              const auto h = dh_link_transform(x[0], t, j);
              return k % 4 == 3 ? h.p[k / 4] : h.r(k / 4, k % 4);
            },
            std::vector<double>{0.37 + 0.2 * static_cast<double>(j)});
        CHECK(r.max_rel_error <= 1e-6);
      }
    }
  }
}

TEST_CASE("fk_chain matches the independent oracle") {
  const DHTable t = DHTable::ur10e();
  for (const FkOracle& o : kOracles) {
    const HomTransform h = fk_chain(o.q, t);
    for (int k = 0; k < 12; ++k) {
      CAPTURE(k);
      CHECK(top_entry(h, k) == doctest::Approx(o.top[k]).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("fk_chain rotations stay orthonormal") {
  Rng rng(21);
  const DHTable t = DHTable::ur10e();
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) worst = std::max(worst, orthonormality_residual(fk_chain(random_joints(rng, 0.0), t)));
  CHECK(worst <= 1e-9);
}

TEST_CASE("fk_chain position gradient matches finite differences") {
  Rng rng(4);
  const DHTable t = DHTable::ur10e();
  for (int i = 0; i < 20; ++i) {
    const JointVector q = random_joints(rng, 0.0);
    for (int c = 0; c < 3; ++c) {
      auto r = ad::grad_check(
          [&](std::span<const Var> x) {
            JointsT<Var> qv{x[0], x[1], x[2], x[3], x[4], x[5]};
            return fk_chain(qv, t).p[c];
          },
          std::vector<double>(q.begin(), q.end()));
      CHECK(r.max_rel_error <= 1e-5);
    }
  }
}

TEST_CASE("graph evaluation matches plain evaluation bit for bit") {
  Rng rng(8);
  const DHTable t = DHTable::ur10e();
  for (int i = 0; i < 50; ++i) {
    const JointVector q = random_joints(rng, 0.2);
    const HomTransform h = fk_chain(q, t);
    ad::Tape tape;
    const auto leaves = tape.leaves(std::vector<double>(q.begin(), q.end()));
    JointsT<Var> qv{leaves[0], leaves[1], leaves[2], leaves[3], leaves[4], leaves[5]};
    const HomTransform hv = fk_chain(qv, t).values();
    CHECK(hv.R == h.R);
    CHECK(hv.p == h.p);

    const SolutionSet<double> s = analytic_ik(h, t);
    ad::Tape tape2;
    Transform<Var> hg;
    for (int k = 0; k < 9; ++k) hg.R[k] = tape2.leaf(h.R[k]);
    for (int k = 0; k < 3; ++k) hg.p[k] = tape2.leaf(h.p[k]);
    const SolutionSet<Var> sv = analytic_ik(hg, t);
    for (int b = 0; b < kBranches; ++b) {
      CHECK(sv.raw_values(b) == s.raw_values(b));
      CHECK(sv.branch_valid[b] == s.branch_valid[b]);
    }
  }
}

TEST_CASE("pose conversions") {
  SUBCASE("zero pose") { CHECK(identity_residual(pose_to_hom(Pose6{})) == 0.0); }
  SUBCASE("yaw only") {
    const HomTransform h = pose_to_hom(Pose6{0, 0, kPi / 2, 0, 0, 0});
    CHECK(max_abs_diff(h, rot_z(kPi / 2)) < 1e-15);
  }
  SUBCASE("round trip on random non-degenerate poses") {
    Rng rng(12);
    for (int i = 0; i < 1000; ++i) {
      const Pose6 p{rng.uniform(-kPi, kPi), rng.uniform(-1.5, 1.5), rng.uniform(-kPi, kPi),
                    rng.uniform(-3, 3),     rng.uniform(-3, 3),     rng.uniform(-3, 3)};
      const PoseExtraction<double> e = hom_to_pose(pose_to_hom(p));
      CHECK_FALSE(e.gimbal_degenerate);
      const auto a = p.values(), b = e.pose.values();
      for (int k = 0; k < 6; ++k) CHECK(std::fabs(wrap_angle(a[k] - b[k])) <= 1e-9);
    }
  }
  SUBCASE("gimbal lock is flagged and roll fixed to zero") {
    const Pose6 p{0.4, kPi / 2, 0.3, 1, 2, 3};
    const PoseExtraction<double> e = hom_to_pose(pose_to_hom(p));
    CHECK(e.gimbal_degenerate);
    CHECK(e.pose.phi == 0.0);
    CHECK(max_abs_diff(pose_to_hom(e.pose), pose_to_hom(p)) < 1e-9);
  }
  SUBCASE("normalized wraps into (-pi, pi]") {
    const Pose6 n = normalized(Pose6{2 * kPi + 0.2, -kPi, 3 * kPi, 1, 2, 3});
    CHECK(n.phi == doctest::Approx(0.2));
    CHECK(n.theta == doctest::Approx(kPi));
    CHECK(n.psi == doctest::Approx(kPi));
    CHECK(wrap_angle(-kPi) == kPi);
  }
}

TEST_CASE("se3_inverse") {
  CHECK(identity_residual(se3_inverse(HomTransform::identity())) == 0.0);
  const HomTransform t = se3_inverse(HomTransform::translation(1, 2, 3));
  CHECK(t.p == std::array<double, 3>{-1, -2, -3});
  Rng rng(31);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const HomTransform h = random_transform(rng);
    worst = std::max(worst, identity_residual(compose(h, se3_inverse(h))));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("relative_target identities") {
  Rng rng(32);
  for (int i = 0; i < 200; ++i) {
    const HomTransform a = random_transform(rng), b = random_transform(rng);
    CHECK(identity_residual(relative_target(a, a)) <= 1e-9);
    CHECK(max_abs_diff(relative_target(HomTransform::identity(), a), a) <= 1e-15);
    CHECK(max_abs_diff(relative_target(a, compose(a, b)), b) <= 1e-9);
  }
}

TEST_CASE("chassis_to_base") {
  const HomTransform h0 = chassis_to_base(ChassisPose{0, 0, 0}, MountTransform::at_height(0.5));
  CHECK(max_abs_diff(h0, HomTransform::translation(0, 0, 0.5)) == 0.0);
  const HomTransform h1 = chassis_to_base(ChassisPose{kPi / 2, 1, 0}, MountTransform{});
  CHECK(h1.r(0, 0) == doctest::Approx(0.0).scale(1.0));
  CHECK(h1.r(1, 0) == doctest::Approx(1.0));
  CHECK(h1.p[0] == 1.0);
  CHECK(h1.p[2] == 0.4);
  for (int k = 0; k < 12; ++k) {
    auto r = ad::grad_check(
        [k](std::span<const Var> x) {
          const auto h = chassis_to_base(ChassisPoseT<Var>{x[0], x[1], x[2]}, MountTransform{});
          return k % 4 == 3 ? h.p[k / 4] : h.r(k / 4, k % 4);
        },
        std::vector<double>{0.8, 0.3, -0.2});
    CHECK(r.max_rel_error <= 1e-6);
  }
}

TEST_CASE("world_fk composes chassis, mount and arm") {
  const ChassisPose c{0.3, 1.0, -0.5};
  const JointVector q{0.3, -1.2, 1.5, -0.4, 1.1, 0.7};
  const MountTransform m;
  const HomTransform h = world_fk(c, q, m, DHTable::ur10e());
  CHECK(max_abs_diff(h, compose(chassis_to_base(c, m), fk_chain(q, DHTable::ur10e()))) <= 1e-15);
}

TEST_CASE("analytic_ik round trip over non-singular joints") {
  Rng rng(41);
  const DHTable t = DHTable::ur10e();
  int tried = 0, recovered = 0, bad = 0, valid = 0;
  while (tried < 10000) {
    const JointVector q = random_joints(rng, 0.2);
    if (near_singular(q, t)) continue;
    ++tried;
    const HomTransform h = fk_chain(q, t);
    const SolutionSet<double> s = analytic_ik(h, t);
    bool found = false;
    for (int b = 0; b < kBranches; ++b) {
      if (!s.branch_valid[b]) continue;
      ++valid;
      if (max_abs_diff(fk_chain(s.wrapped[b], t), h) > 1e-6) ++bad;
      double d = 0.0;
      for (int j = 0; j < 6; ++j) d = std::max(d, std::fabs(wrap_angle(s.wrapped[b][j] - q[j])));
      found = found || d <= 1e-6;
    }
    recovered += found;
  }
  CHECK(recovered * 1000 >= tried * 999);
  CHECK(bad == 0);
  CHECK(valid >= tried);
}

TEST_CASE("valid branches never carry events") {
  Rng rng(42);
  const DHTable t = DHTable::ur10e();
  for (int i = 0; i < 500; ++i) {
    const HomTransform h = random_transform(rng);
    const SolutionSet<double> s = analytic_ik(h, t);
    std::array<bool, kBranches> has_event{};
    for (const auto& e : s.events) {
      REQUIRE(e.branch >= 0);
      REQUIRE(e.branch < kBranches);
      CHECK(e.magnitude >= 0.0);
      has_event[e.branch] = true;
    }
    for (int b = 0; b < kBranches; ++b) CHECK(s.branch_valid[b] == !has_event[b]);
  }
}

TEST_CASE("analytic_ik outside reach") {
  const HomTransform h = HomTransform::translation(3.0, 0.0, 0.0);
  const SolutionSet<double> s = analytic_ik(h, DHTable::ur10e());
  CHECK_FALSE(s.events.empty());
  CHECK(s.valid_count() == 0);
  CHECK_FALSE(ik_feasible(h, DHTable::ur10e()).has_value());
}

TEST_CASE("analytic_ik near the zero configuration") {
  const DHTable t = DHTable::ur10e();
  const JointVector q{0.1, -0.3, 0.4, -0.2, 0.5, 0.1};
  const SolutionSet<double> s = analytic_ik(fk_chain(q, t), t);
  for (int b = 0; b < kBranches; ++b)
    for (double v : s.raw_values(b)) CHECK(std::isfinite(v));
  CHECK(s.valid_count() >= 1);
  const auto f = ik_feasible(fk_chain(q, t), t);
  REQUIRE(f.has_value());
  CHECK(max_abs_diff(fk_chain(f->joints, t), fk_chain(q, t)) < 1e-6);
  CHECK(joints_legal(f->joints));
}

TEST_CASE("ik_feasible rejects poses whose only solutions violate the joint range") {
  // Same geometry with a 2-pi joint offset on joint 1: every branch needs
  // |q1| beyond pi once the offset is folded into the raw angle.
  auto rows = DHTable::ur10e().rows();
  rows[0].theta_offset = 2.0 * kPi;
  const DHTable shifted(rows);
  REQUIRE(shifted.analytic_solvable());
  const JointVector q{0.1, -0.3, 0.4, -0.2, 0.5, 0.1};
  const HomTransform h = fk_chain(q, DHTable::ur10e());
  const SolutionSet<double> s = analytic_ik(h, shifted);
  int event_free = 0;
  for (int b = 0; b < kBranches; ++b) {
    event_free += s.branch_valid[b];
    CHECK_FALSE(s.joints_legal(b));
  }
  CHECK(event_free >= 1);
  CHECK_FALSE(ik_feasible(h, shifted).has_value());
  const IkDiagnosis d = diagnose_ik(h, shifted);
  CHECK(d.any_event_free);
  CHECK_FALSE(d.any_ideal);
}

TEST_CASE("singularity margins") {
  const DHTable t = DHTable::ur10e();
  JointVector q{0.2, -1.0, 1.0, 0.3, 0.0, 0.4};
  CHECK(singularity_margins(q, t).wrist == doctest::Approx(0.0).scale(1.0));
  CHECK(near_singular(q, t));
  q[4] = 1.0;
  q[2] = 0.0;
  CHECK(singularity_margins(q, t).elbow == doctest::Approx(0.0).scale(1.0));
  CHECK(near_singular(q, t));
  q[2] = 1.3;
  CHECK(singularity_margins(q, t).wrist == doctest::Approx(std::sin(1.0)));
}

TEST_CASE("wrist singular pose falls back to q6 = 0") {
  const DHTable t = DHTable::ur10e();
  const JointVector q{0.2, -1.0, 1.0, 0.3, 0.0, 0.0};
  const HomTransform h = fk_chain(q, t);
  // With the default margin q5 lands on the tangent extension and the
  // branch carries a band event instead.
  const SolutionSet<double> banded = analytic_ik(h, t);
  CHECK_FALSE(banded.events.empty());
  IkOptions tight;
  tight.domain_margin = 1e-15;
  const SolutionSet<double> s = analytic_ik(h, t, tight);
  int flagged = 0;
  for (int b = 0; b < kBranches; ++b) {
    if (!s.wrist_singular[b]) continue;
    ++flagged;
    CHECK(s.raw[b][5] == 0.0);
    const JointVector r = s.raw_values(b);
    if (std::fabs(wrap_angle(r[0] - q[0])) < 1e-6 && std::fabs(wrap_angle(r[2] - q[2])) < 1e-6)
      CHECK(max_abs_diff(fk_chain(r, t), h) < 1e-6);
  }
  CHECK(flagged > 0);
}
