#include "kinet/autodiff.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

namespace kinet::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Scale: return "scale";
    case Op::Shift: return "shift";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Tanh: return "tanh";
    case Op::Square: return "square";
    case Op::Abs: return "abs";
    case Op::SqrtGuarded: return "sqrt_guarded";
    case Op::Atan2: return "atan2_diff";
    case Op::AcosExtended: return "acos_extended";
    case Op::Dot: return "dot";
    case Op::LinComb: return "lincomb";
    case Op::Sum: return "sum";
  }
  return "?";
}

namespace {

void require_finite(double v, Op op, std::int64_t node) {
  if (!std::isfinite(v)) {
    throw GraphIntegrityError(std::string(op_name(op)) + " produced a non-finite value" +
                                  (node >= 0 ? " at node " + std::to_string(node) : ""),
                              node);
  }
}

Tape* common_tape(const Var& a, const Var& b) {
  Tape* ta = a.tape();
  Tape* tb = b.tape();
  if (ta && tb && ta != tb) throw GraphIntegrityError("operands live on different tapes", b.id());
  return ta ? ta : tb;
}

Var constant_result(double v, Op op) {
  require_finite(v, op, -1);
  return Var(v);
}

// Node with a single parent x and local partial dx.
Var unary(const Var& x, double v, double dx, Op op) {
  if (x.is_constant()) return constant_result(v, op);
  return x.tape()->push(v, op, {Edge{x.index(), dx}});
}

Var binary(const Var& a, const Var& b, double v, double da, double db, Op op) {
  Tape* t = common_tape(a, b);
  if (!t) return constant_result(v, op);
  if (a.is_constant()) return t->push(v, op, {Edge{b.index(), db}});
  if (b.is_constant()) return t->push(v, op, {Edge{a.index(), da}});
  return t->push(v, op, {Edge{a.index(), da}, Edge{b.index(), db}});
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

Var Tape::leaf(double value) { return push(value, Op::Leaf, std::span<const Edge>{}); }

std::vector<Var> Tape::leaves(std::span<const double> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(leaf(v));
  return out;
}

Var Tape::push(double value, Op op, std::span<const Edge> edges) {
  const auto index = static_cast<std::uint32_t>(values_.size());
  require_finite(value, op, index);
  for (const Edge& e : edges) {
    if (e.parent >= index) throw GraphIntegrityError("edge breaks topological order", index);
    edge_parent_.push_back(e.parent);
    edge_partial_.push_back(e.partial);
  }
  values_.push_back(value);
  grads_.push_back(0.0);
  ops_.push_back(op);
  edge_begin_.push_back(static_cast<std::uint32_t>(edge_parent_.size()));
  return Var(this, index);
}

std::vector<Edge> Tape::parents(std::uint32_t i) const {
  std::vector<Edge> out;
  for (auto k = edge_begin_[i]; k < edge_begin_[i + 1]; ++k)
    out.push_back({edge_parent_[k], edge_partial_[k]});
  return out;
}

void Tape::backward(const Var& root) {
  if (root.is_constant()) return;
  if (root.tape() != this) throw GraphIntegrityError("backward root lives on another tape", root.id());
  const std::uint32_t r = root.index();
  adjoint_.assign(static_cast<std::size_t>(r) + 1, 0.0);
  adjoint_[r] = 1.0;
  for (std::uint32_t i = r + 1; i-- > 0;) {
    const double a = adjoint_[i];
    if (a == 0.0) continue;
    for (auto k = edge_begin_[i]; k < edge_begin_[i + 1]; ++k) {
      const auto p = edge_parent_[k];
      if (p >= i) throw GraphIntegrityError("cycle detected during backward", i);
      adjoint_[p] += a * edge_partial_[k];
    }
  }
  for (std::uint32_t i = 0; i <= r; ++i) grads_[i] += adjoint_[i];
}

void Tape::zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void Tape::clear() {
  values_.clear();
  grads_.clear();
  ops_.clear();
  edge_begin_.assign(1, 0);
  edge_parent_.clear();
  edge_partial_.clear();
}

void Tape::validate() const {
  for (std::uint32_t i = 0; i < values_.size(); ++i) {
    for (auto k = edge_begin_[i]; k < edge_begin_[i + 1]; ++k) {
      if (edge_parent_[k] >= i) throw GraphIntegrityError("edge breaks topological order", i);
    }
  }
}

// ---------------------------------------------------------------------------
// Primitives

Var operator+(const Var& a, const Var& b) {
  return binary(a, b, a.value() + b.value(), 1.0, 1.0, Op::Add);
}

Var operator-(const Var& a, const Var& b) {
  return binary(a, b, a.value() - b.value(), 1.0, -1.0, Op::Sub);
}

Var operator*(const Var& a, const Var& b) {
  const double av = a.value();
  const double bv = b.value();
  // A constant zero factor makes the product constant without changing any gradient.
  if ((a.is_constant() && av == 0.0) || (b.is_constant() && bv == 0.0)) return Var(av * bv);
  return binary(a, b, av * bv, bv, av, Op::Mul);
}

Var operator/(const Var& a, const Var& b) {
  const double bv = b.value();
  if (bv == 0.0) {
    throw DomainError("division by zero" + (b.is_constant() ? std::string() : " at node " + std::to_string(b.id())),
                      b.id());
  }
  const double v = a.value() / bv;
  return binary(a, b, v, 1.0 / bv, -v / bv, Op::Div);
}

Var operator-(const Var& a) { return unary(a, -a.value(), -1.0, Op::Neg); }

Var sin(const Var& x) {
  const double v = x.value();
  return unary(x, std::sin(v), std::cos(v), Op::Sin);
}

Var cos(const Var& x) {
  const double v = x.value();
  return unary(x, std::cos(v), -std::sin(v), Op::Cos);
}

Var tanh(const Var& x) {
  const double t = std::tanh(x.value());
  return unary(x, t, 1.0 - t * t, Op::Tanh);
}

Var square(const Var& x) {
  const double v = x.value();
  return unary(x, v * v, 2.0 * v, Op::Square);
}

Var abs(const Var& x) {
  const double v = x.value();
  const double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return unary(x, std::fabs(v), s, Op::Abs);
}

Var dot(std::span<const Var> a, std::span<const Var> b) {
  if (a.size() != b.size()) throw DimensionError("dot: operand lengths differ");
  Tape* t = nullptr;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i].value() * b[i].value();
    Tape* ti = common_tape(a[i], b[i]);
    if (ti && t && ti != t) throw GraphIntegrityError("dot operands live on different tapes", -1);
    if (ti) t = ti;
  }
  if (!t) return constant_result(s, Op::Dot);
  thread_local std::vector<Edge> edges;
  edges.clear();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_constant()) edges.push_back({a[i].index(), b[i].value()});
    if (!b[i].is_constant()) edges.push_back({b[i].index(), a[i].value()});
  }
  return t->push(s, Op::Dot, edges);
}

Var lincomb(std::span<const Var> x, std::span<const double> c, double c0) {
  if (x.size() != c.size()) throw DimensionError("lincomb: operand lengths differ");
  Tape* t = nullptr;
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += x[i].value() * c[i];
    if (Tape* ti = x[i].tape()) {
      if (t && ti != t) throw GraphIntegrityError("lincomb operands live on different tapes", x[i].id());
      t = ti;
    }
  }
  s += c0;
  if (!t) return constant_result(s, Op::LinComb);
  thread_local std::vector<Edge> edges;
  edges.clear();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!x[i].is_constant()) edges.push_back({x[i].index(), c[i]});
  return t->push(s, Op::LinComb, edges);
}

Var sum(std::span<const Var> x) {
  Tape* t = nullptr;
  double s = 0.0;
  for (const Var& v : x) {
    s += v.value();
    if (Tape* ti = v.tape()) {
      if (t && ti != t) throw GraphIntegrityError("sum operands live on different tapes", v.id());
      t = ti;
    }
  }
  if (!t) return constant_result(s, Op::Sum);
  thread_local std::vector<Edge> edges;
  edges.clear();
  for (const Var& v : x)
    if (!v.is_constant()) edges.push_back({v.index(), 1.0});
  return t->push(s, Op::Sum, edges);
}

// ---------------------------------------------------------------------------
// Guarded operators

namespace detail {

void check_acos_margin(double delta) {
  if (!(delta > 0.0 && delta < 0.5))
    throw std::invalid_argument("acos_extended: margin must lie in (0, 0.5)");
}

void check_atan2_args(double y, double x, std::int64_t node) {
  if (x == 0.0 && y == 0.0) {
    throw GraphIntegrityError(
        "atan2_diff evaluated at (0, 0)" + (node >= 0 ? " at node " + std::to_string(node) : ""), node);
  }
}

double acos_extended_value(double x, double delta) {
  const double lo = -1.0 + delta;
  const double hi = 1.0 - delta;
  if (x <= lo) return -(x - lo) / std::sqrt(1.0 - lo * lo) + std::acos(lo);
  if (x >= hi) return -(x - hi) / std::sqrt(1.0 - hi * hi) + std::acos(hi);
  return std::acos(x);
}

double acos_extended_partial(double x, double delta) {
  const double hi = 1.0 - delta;
  if (std::fabs(x) >= hi) return -1.0 / std::sqrt(1.0 - hi * hi);
  return -1.0 / std::sqrt(1.0 - x * x);
}

}  // namespace detail

Var sqrt_guarded(const Var& x, EventSink<Var>* sink) {
  const double v = x.value();
  if (v < 0.0) {
    if (sink) sink->emit(EventKind::IllRoot, -x, x.id());
    return Var(0.0);
  }
  return unary(x, detail::sqrt_value(v), detail::sqrt_partial(v), Op::SqrtGuarded);
}

Var atan2_diff(const Var& y, const Var& x) {
  const double yv = y.value();
  const double xv = x.value();
  detail::check_atan2_args(yv, xv, y.is_constant() ? x.id() : y.id());
  const double r2 = xv * xv + yv * yv;
  return binary(y, x, std::atan2(yv, xv), xv / r2, -yv / r2, Op::Atan2);
}

Var acos_extended(const Var& x, double delta, EventSink<Var>* sink) {
  detail::check_acos_margin(delta);
  const double v = x.value();
  if (sink && detail::acos_in_band(v, delta)) {
    const Var magnitude = std::fabs(v) > 1.0 ? abs(x) - 1.0 : Var(0.0);
    sink->emit(EventKind::OutDom, magnitude, x.id());
  }
  return unary(x, detail::acos_extended_value(v, delta), detail::acos_extended_partial(v, delta),
               Op::AcosExtended);
}

// ---------------------------------------------------------------------------
// GraphMatrix

GraphMatrix::GraphMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), entries_(rows * cols) {}

GraphMatrix::GraphMatrix(std::size_t rows, std::size_t cols, std::vector<Var> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (entries_.size() != rows * cols) throw DimensionError("GraphMatrix: entry count does not match shape");
}

GraphMatrix GraphMatrix::leaves(Tape& tape, std::size_t rows, std::size_t cols,
                                std::span<const double> values) {
  if (values.size() != rows * cols) throw DimensionError("GraphMatrix: value count does not match shape");
  return GraphMatrix(rows, cols, tape.leaves(values));
}

GraphMatrix GraphMatrix::constant(std::size_t rows, std::size_t cols, std::span<const double> values) {
  if (values.size() != rows * cols) throw DimensionError("GraphMatrix: value count does not match shape");
  return GraphMatrix(rows, cols, std::vector<Var>(values.begin(), values.end()));
}

GraphMatrix GraphMatrix::identity(std::size_t n) {
  GraphMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = Var(1.0);
  return m;
}

std::vector<double> GraphMatrix::values() const {
  std::vector<double> out;
  out.reserve(entries_.size());
  for (const Var& v : entries_) out.push_back(v.value());
  return out;
}

GraphMatrix mat_mul(const GraphMatrix& a, const GraphMatrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("mat_mul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  GraphMatrix out(a.rows(), b.cols());
  std::vector<Var> row(a.cols());
  std::vector<Var> col(a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) row[k] = a(i, k);
    for (std::size_t j = 0; j < b.cols(); ++j) {
      for (std::size_t k = 0; k < a.cols(); ++k) col[k] = b(k, j);
      out(i, j) = dot(row, col);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient check

bool GradCheckReport::all_finite() const {
  return std::all_of(finite.begin(), finite.end(), [](bool f) { return f; });
}

GradCheckReport grad_check(const ScalarFunction& f, std::span<const double> point, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  const std::size_t n = point.size();
  GradCheckReport report;
  report.autodiff.assign(n, 0.0);
  report.numeric.assign(n, 0.0);
  report.rel_error.assign(n, 0.0);
  report.finite.assign(n, true);

  bool ad_ok = true;
  try {
    Tape tape;
    std::vector<Var> x = tape.leaves(point);
    Var y = f(x);
    tape.backward(y);
    for (std::size_t i = 0; i < n; ++i) report.autodiff[i] = x[i].grad();
  } catch (const std::exception&) {
    ad_ok = false;
  }

  auto eval = [&](std::vector<Var>& x) -> double {
    try {
      return f(x).value();
    } catch (const std::exception&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  std::vector<Var> x(point.begin(), point.end());
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = Var(point[i] + h);
    const double fp = eval(x);
    x[i] = Var(point[i] - h);
    const double fm = eval(x);
    x[i] = Var(point[i]);
    const double fd = (fp - fm) / (2.0 * h);
    report.numeric[i] = fd;
    if (!ad_ok || !std::isfinite(fd) || !std::isfinite(report.autodiff[i])) {
      report.finite[i] = false;
      report.rel_error[i] = std::numeric_limits<double>::infinity();
    } else {
      report.rel_error[i] = std::fabs(report.autodiff[i] - fd) / std::max(1.0, std::fabs(fd));
    }
    report.max_rel_error = std::max(report.max_rel_error, report.rel_error[i]);
  }
  return report;
}

}  // namespace kinet::ad
