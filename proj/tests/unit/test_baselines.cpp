#include <doctest.h>

#include <cmath>

#include "kinet/baselines.hpp"

using namespace kinet;

namespace {

const RobotModel& robot() {
  static const RobotModel r = default_robot();
  return r;
}

// Upper 1% points of the chi-square distribution.
constexpr double kChi2_99 = 134.642;  // 99 degrees of freedom
constexpr double kChi2_19 = 36.191;   // 19 degrees of freedom

double chi_square(const std::vector<int>& counts, double expected) {
  double s = 0.0;
  for (int c : counts) s += (c - expected) * (c - expected) / expected;
  return s;
}

}  // namespace

TEST_CASE("random sampling is uniform over the rectangle around the target") {
  SamplerConfig cfg;
  cfg.bounds = {-2.0, 2.0, -1.0, 3.0};
  const Pose6 target{0, 0, 0, 0.5, -0.25, 0.7};
  Rng rng(cfg.seed, Stream::Sampler);
  const int n = 100000;
  std::vector<int> cells(100, 0), heading(20, 0);
  for (int i = 0; i < n; ++i) {
    const ChassisPose c = random_sample_chassis(cfg, target, rng);
    const double u = (c.x - target.x - cfg.bounds.x_min) / 4.0, v = (c.y - target.y - cfg.bounds.y_min) / 4.0;
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
    REQUIRE(c.psi > -kPi);
    REQUIRE(c.psi <= kPi);
    ++cells[static_cast<int>(u * 10) * 10 + static_cast<int>(v * 10)];
    ++heading[std::min(19, static_cast<int>((c.psi + kPi) / (2 * kPi) * 20))];
  }
  CHECK(chi_square(cells, n / 100.0) < kChi2_99);
  CHECK(chi_square(heading, n / 20.0) < kChi2_19);
}

TEST_CASE("sampling is seeded") {
  SamplerConfig cfg;
  const Pose6 target{0, 0, 0, 1, 1, 0.5};
  Rng a(3), b(3);
  for (int i = 0; i < 100; ++i) {
    const ChassisPose p = random_sample_chassis(cfg, target, a), q = random_sample_chassis(cfg, target, b);
    CHECK(p.x == q.x);
    CHECK(p.psi == q.psi);
    const ChassisPose r = biased_sample_chassis(cfg, target, 1.3, a), s = biased_sample_chassis(cfg, target, 1.3, b);
    CHECK(r.y == s.y);
  }
}

TEST_CASE("facing heading points at the target") {
  SamplerConfig cfg;
  cfg.rs_heading = HeadingPolicy::face_target;
  const Pose6 target{0, 0, 0, 1, -2, 0.5};
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const ChassisPose c = random_sample_chassis(cfg, target, rng);
    CHECK(std::cos(c.psi) * (target.x - c.x) + std::sin(c.psi) * (target.y - c.y) > 0.0);
  }
}

TEST_CASE("biased sampling") {
  SamplerConfig cfg;
  cfg.ebs_sigma = 0.2;
  const Pose6 target{0, 0, 0, -1, 2, 0.5};
  const double r_max = 1.3, mu = cfg.ebs_mean_factor * r_max;
  Rng rng(5);
  const int n = 50000;
  double mean = 0.0, var = 0.0;
  for (int i = 0; i < n; ++i) {
    const ChassisPose c = biased_sample_chassis(cfg, target, r_max, rng);
    const double r = std::hypot(c.x - target.x, c.y - target.y);
    mean += r / n;
    var += (r - mu) * (r - mu) / n;
  }
  CHECK(mean == doctest::Approx(mu).epsilon(0.01));
  CHECK(std::sqrt(var) == doctest::Approx(0.2).epsilon(0.03));

  SUBCASE("tiny sigma collapses to the circle and heading jitter off faces the target") {
    cfg.ebs_sigma = 1e-12;
    cfg.ebs_heading_sigma = 0.0;
    for (int i = 0; i < 100; ++i) {
      const ChassisPose c = biased_sample_chassis(cfg, target, r_max, rng);
      CHECK(std::hypot(c.x - target.x, c.y - target.y) == doctest::Approx(mu).epsilon(1e-9));
      CHECK(std::cos(c.psi) * (target.x - c.x) + std::sin(c.psi) * (target.y - c.y) == doctest::Approx(mu));
    }
  }
}

TEST_CASE("sampler and DLS validation") {
  SamplerConfig s;
  CHECK_NOTHROW(s.validate());
  s.ebs_sigma = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = SamplerConfig{};
  s.bounds.x_max = s.bounds.x_min;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  DLSConfig d;
  CHECK_NOTHROW(d.validate());
  d.lambda = 0.0;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d = DLSConfig{};
  d.max_iterations = 0;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}

TEST_CASE("rotation_log") {
  SUBCASE("identity") {
    const auto w = rotation_log(HomTransform::identity().R);
    CHECK(w == std::array<double, 3>{0, 0, 0});
  }
  SUBCASE("random rotations round trip through the angle") {
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
      const Pose6 p{rng.uniform(-kPi, kPi), rng.uniform(-1.5, 1.5), rng.uniform(-kPi, kPi), 0, 0, 0};
      const HomTransform h = pose_to_hom(p);
      const auto w = rotation_log(h.R);
      const double angle = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
      const double tr = h.R[0] + h.R[4] + h.R[8];
      CHECK(std::cos(angle) == doctest::Approx((tr - 1) / 2).epsilon(1e-9).scale(1.0));
      // R w = w for the rotation axis
      for (int r = 0; r < 3; ++r)
        CHECK(h.R[3 * r] * w[0] + h.R[3 * r + 1] * w[1] + h.R[3 * r + 2] * w[2] ==
              doctest::Approx(w[r]).epsilon(1e-7).scale(1.0));
    }
  }
  SUBCASE("half turn") {
    const auto w = rotation_log(rot_z(kPi).R);
    CHECK(std::fabs(w[2]) == doctest::Approx(kPi));
    CHECK(w[0] == doctest::Approx(0.0).scale(1.0));
  }
}

TEST_CASE("DLS converges from a perturbed seed") {
  const DHTable t = DHTable::ur10e();
  Rng rng(13);
  DLSConfig cfg;
  int converged = 0, tried = 0;
  while (tried < 100) {
    JointVector q;
    for (double& v : q) v = rng.uniform(-kPi + 0.3, kPi - 0.3);
    if (near_singular(q, t, 0.1)) continue;
    ++tried;
    JointVector seed = q;
    for (double& v : seed) v += rng.uniform(-0.05, 0.05);
    const HomTransform h = fk_chain(q, t);
    DLSInfo info;
    const auto sol = jacobian_dls_ik(h, seed, cfg, t, &info);
    if (!sol) continue;
    ++converged;
    CHECK(info.converged);
    CHECK(info.position_error < cfg.position_tolerance);
    const HomTransform g = fk_chain(*sol, t);
    CHECK(std::hypot(g.p[0] - h.p[0], g.p[1] - h.p[1], g.p[2] - h.p[2]) < cfg.position_tolerance);
    CHECK(joints_legal(*sol));
  }
  CHECK(converged >= 97);
}

TEST_CASE("DLS misses an unreachable target") {
  DLSConfig cfg;
  cfg.max_iterations = 200;
  DLSInfo info;
  const auto sol = jacobian_dls_ik(HomTransform::translation(3, 0, 0), JointVector{}, cfg, DHTable::ur10e(), &info);
  CHECK_FALSE(sol.has_value());
  CHECK_FALSE(info.converged);
  CHECK(info.iterations == 200);
}

TEST_CASE("DLS with heavy damping stays finite") {
  DLSConfig cfg;
  cfg.lambda = 1e6;
  cfg.max_iterations = 20;
  DLSInfo info;
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    JointVector seed;
    for (double& v : seed) v = rng.uniform(-kPi, kPi);
    const auto sol = jacobian_dls_ik(HomTransform::translation(0.5, 0.3, 0.4), seed, cfg, DHTable::ur10e(), &info);
    CHECK(std::isfinite(info.position_error));
    CHECK(std::isfinite(info.rotation_error));
    CHECK_FALSE(sol.has_value());
  }
}

TEST_CASE("method names") {
  for (std::size_t i = 0; i < kMethodCount; ++i) {
    const Method m = static_cast<Method>(i);
    CHECK(parse_method(method_name(m)) == m);
  }
  CHECK(std::string(method_name(Method::rs_dls)) == "RS+DLS");
  CHECK_FALSE(parse_method("DDPG").has_value());
  CHECK(method_whole_body(Method::fmp));
  CHECK_FALSE(method_whole_body(Method::cmp));
  CHECK(method_learned(Method::nnreg));
  CHECK_FALSE(method_learned(Method::ebs));
}

TEST_CASE("pipelines only return oracle-approved configurations") {
  PipelineContext ctx;
  ctx.robot = robot();
  ctx.time_cap_ms = 5000.0;
  const DatasetFile data = generate_dataset(10, 3, DataGenConfig{}, robot());
  for (Method m : {Method::rs, Method::ebs, Method::rs_dls, Method::ebs_dls}) {
    for (const DatasetRecord& r : data.records) {
      Rng rng(1, Stream::Bench, r.task_id);
      const PipelineResult p = run_pipeline(m, r.target, ctx, rng);
      CAPTURE(method_name(m));
      CHECK(p.method == m);
      CHECK(p.attempts >= 1);
      CHECK(p.total_ms >= 0.0);
      if (!p.valid) continue;
      CHECK(p.reason == Reason::ok);
      if (method_whole_body(m))
        CHECK(fmp_verdict(p.config, r.target, robot()).valid);
      else
        CHECK(chassis_verdict(p.config.chassis, r.target, robot()).valid);
    }
  }
}

TEST_CASE("pipelines stop at their caps") {
  PipelineContext ctx;
  ctx.robot = robot();
  ctx.sampling_max_attempts = 50;
  const Pose6 far{0, 0, 0, 0, 0, 9.0};
  Rng rng(1);
  const PipelineResult p = run_pipeline(Method::rs, far, ctx, rng);
  CHECK_FALSE(p.valid);
  CHECK(p.attempts == 50);
  CHECK_FALSE(p.capped);

  ctx.sampling_max_attempts = 10000000;
  ctx.time_cap_ms = 50.0;
  const PipelineResult q = run_pipeline(Method::rs_wb, far, ctx, rng);
  CHECK_FALSE(q.valid);
  CHECK(q.capped);
  CHECK(q.total_ms >= 50.0);
}

TEST_CASE("learned pipelines need their checkpoint") {
  PipelineContext ctx;
  ctx.robot = robot();
  Rng rng(1);
  CHECK_THROWS_AS(run_pipeline(Method::cmp, Pose6{}, ctx, rng), std::invalid_argument);
  CHECK_THROWS_AS(run_pipeline(Method::fmp, Pose6{}, ctx, rng), std::invalid_argument);
}
