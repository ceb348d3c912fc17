#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "kinet/autodiff.hpp"
#include "kinet/rng.hpp"

using namespace kinet;
using ad::Tape;
using ad::Var;

namespace {

double fd(double (*f)(double), double x, double h = 1e-6) { return (f(x + h) - f(x - h)) / (2 * h); }

}  // namespace

TEST_CASE("mul product rule") {
  Tape t;
  Var a = t.leaf(3.0), b = t.leaf(4.0);
  Var c = a * b;
  CHECK(c.value() == 12.0);
  t.backward(c);
  CHECK(a.grad() == 4.0);
  CHECK(b.grad() == 3.0);
  CHECK(c.grad() == 1.0);
}

TEST_CASE("sin at zero") {
  Tape t;
  Var x = t.leaf(0.0);
  Var y = ad::sin(x);
  CHECK(y.value() == 0.0);
  t.backward(y);
  CHECK(x.grad() == 1.0);
}

TEST_CASE("abs slope and zero subgradient") {
  Tape t;
  Var x = t.leaf(-2.5);
  Var y = ad::abs(x);
  CHECK(y.value() == 2.5);
  t.backward(y);
  CHECK(x.grad() == -1.0);
  CHECK(fd([](double v) { return std::fabs(v); }, -2.5) == doctest::Approx(-1.0));

  Tape t0;
  Var z = t0.leaf(0.0);
  t0.backward(ad::abs(z));
  CHECK(z.grad() == 0.0);
}

TEST_CASE("remaining primitives match closed-form partials") {
  Tape t;
  Var a = t.leaf(0.7), b = t.leaf(-1.3);
  SUBCASE("sub") {
    t.backward(a - b);
    CHECK(a.grad() == 1.0);
    CHECK(b.grad() == -1.0);
  }
  SUBCASE("div") {
    Var q = a / b;
    CHECK(q.value() == doctest::Approx(0.7 / -1.3));
    t.backward(q);
    CHECK(a.grad() == doctest::Approx(1.0 / -1.3));
    CHECK(b.grad() == doctest::Approx(-0.7 / (1.3 * 1.3)));
  }
  SUBCASE("neg, cos, square") {
    t.backward(-ad::cos(a) + ad::square(b));
    CHECK(a.grad() == doctest::Approx(std::sin(0.7)));
    CHECK(b.grad() == doctest::Approx(-2.6));
  }
  SUBCASE("tanh") {
    t.backward(ad::tanh(a));
    const double th = std::tanh(0.7);
    CHECK(a.grad() == doctest::Approx(1 - th * th));
  }
}

TEST_CASE("constants fold without touching the tape") {
  Tape t;
  Var c = Var(2.0) * Var(3.0) + Var(1.0);
  CHECK(c.is_constant());
  CHECK(c.value() == 7.0);
  CHECK(t.size() == 0);
}

TEST_CASE("division by exact zero reports the divisor node") {
  Tape t;
  Var a = t.leaf(1.0), z = t.leaf(0.0);
  try {
    (void)(a / z);
    FAIL("expected DomainError");
  } catch (const ad::DomainError& e) {
    CHECK(e.node() == z.id());
  }
  CHECK_THROWS_AS((void)(a / Var(0.0)), ad::DomainError);
}

TEST_CASE("non-finite results are graph-integrity errors") {
  Tape t;
  Var big = t.leaf(1e200);
  CHECK_THROWS_AS((void)(big * big), ad::GraphIntegrityError);
  CHECK_THROWS_AS(t.leaf(std::nan("")), ad::GraphIntegrityError);
}

TEST_CASE("edges must point backwards") {
  Tape t;
  t.leaf(1.0);
  CHECK_THROWS_AS(t.push(2.0, ad::Op::Neg, {ad::Edge{5, -1.0}}), ad::GraphIntegrityError);
  CHECK_THROWS_AS(t.push(2.0, ad::Op::Neg, {ad::Edge{1, -1.0}}), ad::GraphIntegrityError);
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("nodes from different tapes cannot mix") {
  Tape t1, t2;
  Var a = t1.leaf(1.0), b = t2.leaf(2.0);
  CHECK_THROWS_AS((void)(a + b), ad::GraphIntegrityError);
}

TEST_CASE("sqrt_guarded") {
  SUBCASE("positive") {
    Tape t;
    Var x = t.leaf(4.0);
    Var y = ad::sqrt_guarded(x);
    CHECK(y.value() == 2.0);
    t.backward(y);
    CHECK(x.grad() == 0.25);
  }
  SUBCASE("negative input raises one event") {
    Tape t;
    ad::EventSink<Var> sink;
    Var x = t.leaf(-0.5);
    Var y = ad::sqrt_guarded(x, &sink);
    CHECK(y.value() == 0.0);
    REQUIRE(sink.events.size() == 1);
    CHECK(sink.events[0].kind == ad::EventKind::IllRoot);
    CHECK(sink.events[0].magnitude.value() == 0.5);
    // the magnitude is itself differentiable: d(-x)/dx = -1
    t.backward(sink.events[0].magnitude);
    CHECK(x.grad() == -1.0);
  }
  SUBCASE("tiny input has a clamped finite partial") {
    Tape t;
    Var x = t.leaf(1e-18);
    Var y = ad::sqrt_guarded(x);
    CHECK(y.value() == doctest::Approx(1e-9));
    t.backward(y);
    CHECK(std::isfinite(x.grad()));
    CHECK(x.grad() <= 0.5 / std::sqrt(1e-12));
  }
  SUBCASE("plain overload agrees") {
    ad::EventSink<double> sink;
    CHECK(ad::sqrt_guarded(-0.25, &sink) == 0.0);
    REQUIRE(sink.events.size() == 1);
    CHECK(sink.events[0].magnitude == 0.25);
  }
}

TEST_CASE("atan2_diff") {
  Tape t;
  SUBCASE("zero") { CHECK(ad::atan2_diff(t.leaf(0.0), t.leaf(1.0)).value() == 0.0); }
  SUBCASE("first quadrant") {
    Var y = t.leaf(1.0), x = t.leaf(1.0);
    Var r = ad::atan2_diff(y, x);
    CHECK(r.value() == doctest::Approx(std::numbers::pi / 4));
    t.backward(r);
    CHECK(y.grad() == doctest::Approx(0.5));
    CHECK(x.grad() == doctest::Approx(-0.5));
  }
  SUBCASE("second quadrant") {
    Var y = t.leaf(1.0), x = t.leaf(-1.0);
    Var r = ad::atan2_diff(y, x);
    CHECK(r.value() == doctest::Approx(3 * std::numbers::pi / 4));
    t.backward(r);
    const double gy = (std::atan2(1 + 1e-6, -1.0) - std::atan2(1 - 1e-6, -1.0)) / 2e-6;
    const double gx = (std::atan2(1.0, -1 + 1e-6) - std::atan2(1.0, -1 - 1e-6)) / 2e-6;
    CHECK(y.grad() == doctest::Approx(-0.5));
    CHECK(x.grad() == doctest::Approx(-0.5));
    CHECK(y.grad() == doctest::Approx(gy).epsilon(1e-6));
    CHECK(x.grad() == doctest::Approx(gx).epsilon(1e-6));
  }
  SUBCASE("origin is rejected") {
    CHECK_THROWS_AS(ad::atan2_diff(t.leaf(0.0), t.leaf(0.0)), ad::GraphIntegrityError);
    CHECK_THROWS_AS(ad::atan2_diff(0.0, 0.0), ad::GraphIntegrityError);
  }
}

TEST_CASE("acos_extended") {
  SUBCASE("interior") {
    Tape t;
    Var x = t.leaf(0.0);
    Var y = ad::acos_extended(x);
    CHECK(y.value() == doctest::Approx(std::numbers::pi / 2));
    t.backward(y);
    CHECK(x.grad() == doctest::Approx(-1.0));
  }
  SUBCASE("derivative matches across the junction") {
    const double d = 1e-4, b = 1 - d;
    const double slope = -1 / std::sqrt(1 - b * b);
    CHECK(slope == doctest::Approx(-70.71244595191452).epsilon(1e-12));
    CHECK(ad::detail::acos_extended_partial(b - 1e-12, d) == doctest::Approx(slope).epsilon(1e-6));
    CHECK(ad::detail::acos_extended_partial(b + 1e-12, d) == doctest::Approx(slope).epsilon(1e-12));
  }
  SUBCASE("tangent extension value, frozen from the oracle script") {
    CHECK(ad::acos_extended(2.0, 1e-4) == doctest::Approx(-70.7053749430322).epsilon(1e-12));
    CHECK(ad::acos_extended(-1.5, 1e-4) == doctest::Approx(38.49074462066473).epsilon(1e-12));
  }
  SUBCASE("band events") {
    ad::EventSink<double> sink;
    ad::acos_extended(0.5, 1e-4, &sink);
    CHECK(sink.events.empty());
    ad::acos_extended(1.2, 1e-4, &sink);
    ad::acos_extended(0.99995, 1e-4, &sink);
    ad::acos_extended(-1.5, 1e-4, &sink);
    REQUIRE(sink.events.size() == 3);
    CHECK(sink.events[0].magnitude == doctest::Approx(0.2));
    CHECK(sink.events[1].magnitude == 0.0);
    CHECK(sink.events[2].magnitude == doctest::Approx(0.5));
    for (const auto& e : sink.events) CHECK(e.kind == ad::EventKind::OutDom);
  }
  SUBCASE("margin must lie in (0, 0.5)") {
    CHECK_THROWS_AS(ad::acos_extended(0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(ad::acos_extended(0.0, 0.5), std::invalid_argument);
  }
}

TEST_CASE("acos_extended is C1 at both junctions") {
  for (double d : {1e-3, 1e-4, 1e-5}) {
    for (double sign : {1.0, -1.0}) {
      const double b = sign * (1 - d);
      const double left = ad::detail::acos_extended_partial(b - 1e-13, d);
      const double right = ad::detail::acos_extended_partial(b + 1e-13, d);
      CAPTURE(d);
      CAPTURE(sign);
      CHECK(std::fabs(left - right) < 1e-3);
    }
  }
}

TEST_CASE("graph and plain overloads give identical numbers") {
  kinet::Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-2, 2), y = rng.uniform(-2, 2);
    Tape t;
    CHECK(ad::acos_extended(t.leaf(x)).value() == ad::acos_extended(x));
    CHECK(ad::sqrt_guarded(t.leaf(x)).value() == ad::sqrt_guarded(x));
    CHECK(ad::atan2_diff(t.leaf(y), t.leaf(x)).value() == ad::atan2_diff(y, x));
  }
}

TEST_CASE("mat_mul") {
  SUBCASE("identity leaves the operand unchanged") {
    Tape t;
    std::vector<double> m(16);
    for (int i = 0; i < 16; ++i) m[i] = 0.1 * i - 0.7;
    auto M = ad::GraphMatrix::leaves(t, 4, 4, m);
    auto P = ad::mat_mul(ad::GraphMatrix::identity(4), M);
    CHECK(P.values() == m);
  }
  SUBCASE("row times column") {
    Tape t;
    std::vector<double> av{1, 2}, bv{3, 4};
    auto A = ad::GraphMatrix::leaves(t, 1, 2, av);
    auto B = ad::GraphMatrix::leaves(t, 2, 1, bv);
    auto C = ad::mat_mul(A, B);
    REQUIRE(C.rows() == 1);
    REQUIRE(C.cols() == 1);
    CHECK(C(0, 0).value() == 11.0);
    t.backward(C(0, 0));
    CHECK(A(0, 0).grad() == 3.0);
    CHECK(A(0, 1).grad() == 4.0);
    CHECK(B(0, 0).grad() == 1.0);
    CHECK(B(1, 0).grad() == 2.0);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(ad::mat_mul(ad::GraphMatrix(2, 3), ad::GraphMatrix(2, 3)), ad::DimensionError);
    CHECK_THROWS_AS(ad::GraphMatrix(2, 2, std::vector<Var>(3)), ad::DimensionError);
  }
  SUBCASE("chained product matches finite differences") {
    kinet::Rng rng(3);
    std::vector<double> p(27);
    for (double& v : p) v = rng.uniform(-1, 1);
    auto f = [](std::span<const Var> x) {
      ad::GraphMatrix A(3, 3, {x.begin(), x.begin() + 9});
      ad::GraphMatrix B(3, 3, {x.begin() + 9, x.begin() + 18});
      ad::GraphMatrix C(3, 3, {x.begin() + 18, x.end()});
      auto P = ad::mat_mul(ad::mat_mul(A, B), C);
      Var s(0.0);
      for (std::size_t i = 0; i < 9; ++i) s = s + P.entries()[i] * static_cast<double>(i + 1);
      return s;
    };
    CHECK(ad::grad_check(f, p).max_rel_error <= 1e-5);
  }
}

TEST_CASE("backward semantics") {
  Tape t;
  Var x = t.leaf(3.0);
  t.backward(x);
  CHECK(x.grad() == 1.0);
  t.zero_grads();
  Var y = x * x;
  t.backward(y);
  CHECK(x.grad() == 6.0);
  t.backward(y);
  CHECK(x.grad() == 12.0);  // accumulates
  t.zero_grads();
  CHECK(x.grad() == 0.0);
  CHECK(x.value() == 3.0);  // leaves keep their value
}

TEST_CASE("grad_check") {
  SUBCASE("square") {
    auto r = ad::grad_check([](std::span<const Var> x) { return x[0] * x[0]; }, std::vector<double>{1.0});
    CHECK(r.max_rel_error <= 1e-6);
  }
  SUBCASE("atan2 composite") {
    kinet::Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> p{rng.uniform(-2, 2), rng.uniform(-2, 2)};
      auto r = ad::grad_check(
          [](std::span<const Var> x) { return ad::atan2_diff(ad::sin(x[0]) * x[1], x[1] * x[1] + 0.3); }, p);
      CHECK(r.max_rel_error <= 1e-5);
    }
  }
  SUBCASE("non-finite evaluation is reported per coordinate") {
    auto r = ad::grad_check([](std::span<const Var> x) { return Var(1.0) / x[0] + x[1]; },
                            std::vector<double>{0.0, 1.0});
    CHECK_FALSE(r.all_finite());
    CHECK_FALSE(r.finite[0]);
    CHECK(std::isinf(r.max_rel_error));
  }
}

namespace {

// Random expression over the registered primitives, kept away from the
// points where a primitive has no derivative.
Var random_expr(kinet::Rng& rng, std::span<const Var> x, int depth) {
  if (depth == 0) return x[rng.below(x.size())];
  Var a = random_expr(rng, x, depth - 1);
  switch (rng.below(10)) {
    case 0: return a + random_expr(rng, x, depth - 1);
    case 1: return a - random_expr(rng, x, depth - 1);
    case 2: return a * random_expr(rng, x, depth - 1);
    case 3: return a / (ad::square(random_expr(rng, x, depth - 1)) + 1.0);
    case 4: return -a;
    case 5: return ad::sin(a);
    case 6: return ad::cos(a);
    case 7: return ad::square(a) * 0.5;
    case 8: return ad::sqrt_guarded(ad::square(a) + 0.5);
    default: return ad::atan2_diff(a, ad::square(random_expr(rng, x, depth - 1)) + 0.2);
  }
}

}  // namespace

TEST_CASE("chain rule over random compositions") {
  kinet::Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint64_t shape_seed = rng.next();
    std::vector<double> p{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
    auto f = [shape_seed](std::span<const Var> x) {
      kinet::Rng shape(shape_seed);
      return random_expr(shape, x, 4);
    };
    auto r = ad::grad_check(f, p);
    CAPTURE(trial);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("identical graphs give bit-identical values and gradients") {
  auto run = [] {
    Tape t;
    std::vector<double> p{0.3, -0.9, 1.7};
    auto x = t.leaves(p);
    Var y = ad::atan2_diff(ad::sin(x[0]) * x[1], x[2]) + ad::acos_extended(x[0] * x[1]);
    t.backward(y);
    return std::vector<double>{y.value(), x[0].grad(), x[1].grad(), x[2].grad()};
  };
  CHECK(run() == run());
}
