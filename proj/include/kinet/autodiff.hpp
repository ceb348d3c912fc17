#pragma once

// Scalar reverse-mode automatic differentiation on an append-only tape.
//
// A Var is either a constant (no tape, value stored inline) or a handle to a
// node on a Tape. Operations between constants fold to constants, so
// expressions written once as templates evaluate identically for `double`
// and `Var` inputs. Nodes record their parents together with the local
// partial derivative, and backward() sweeps the tape in reverse creation
// order.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kinet::ad {

class Tape;

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  Shift,
  Sin,
  Cos,
  Tanh,
  Square,
  Abs,
  SqrtGuarded,
  Atan2,
  AcosExtended,
  Dot,
  LinComb,
  Sum,
};

const char* op_name(Op op);

/// Thrown when a graph invariant is violated: non-finite values, an edge that
/// breaks topological order, mixing nodes from different tapes, or an
/// operator evaluated at a point where it has no defined value.
class GraphIntegrityError : public std::runtime_error {
 public:
  GraphIntegrityError(const std::string& what, std::int64_t node)
      : std::runtime_error(what), node_(node) {}
  std::int64_t node() const { return node_; }

 private:
  std::int64_t node_;
};

/// Division by an exact zero. Carries the id of the divisor node (-1 when the
/// divisor is a constant).
class DomainError : public std::runtime_error {
 public:
  DomainError(const std::string& what, std::int64_t node)
      : std::runtime_error(what), node_(node) {}
  std::int64_t node() const { return node_; }

 private:
  std::int64_t node_;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Var {
 public:
  static constexpr std::uint32_t kNoNode = 0xffffffffu;

  Var() = default;
  Var(double constant) : constant_(constant) {}  // NOLINT: implicit by intent

  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  /// Node index on the tape, or -1 for constants.
  std::int64_t id() const { return tape_ ? static_cast<std::int64_t>(index_) : -1; }
  std::uint32_t index() const { return index_; }

  double value() const;
  /// Accumulated adjoint. Constants always report 0.
  double grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = kNoNode;
  double constant_ = 0.0;
};

struct Edge {
  std::uint32_t parent;
  double partial;
};

class Tape {
 public:
  Tape() { edge_begin_.push_back(0); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Creates an input/parameter node.
  Var leaf(double value);
  std::vector<Var> leaves(std::span<const double> values);

  /// Appends a node. Parents must already live on this tape.
  Var push(double value, Op op, std::span<const Edge> edges);
  Var push(double value, Op op, std::initializer_list<Edge> edges) {
    return push(value, op, std::span<const Edge>(edges.begin(), edges.size()));
  }

  std::size_t size() const { return values_.size(); }
  std::size_t edge_count() const { return edge_parent_.size(); }

  double value(std::uint32_t i) const { return values_[i]; }
  double grad(std::uint32_t i) const { return grads_[i]; }
  Op op(std::uint32_t i) const { return ops_[i]; }
  std::vector<Edge> parents(std::uint32_t i) const;

  /// Adds d(root)/d(node) to every node's grad. Calling it twice without
  /// zero_grads() accumulates, so leaves end up with twice the gradient.
  void backward(const Var& root);
  void zero_grads();
  /// Drops every node. Outstanding Vars into this tape become dangling.
  void clear();

  /// Checks that every edge points strictly backwards.
  void validate() const;

 private:
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<Op> ops_;
  std::vector<std::uint32_t> edge_begin_;
  std::vector<std::uint32_t> edge_parent_;
  std::vector<double> edge_partial_;
  std::vector<double> adjoint_;
};

inline double Var::value() const { return tape_ ? tape_->value(index_) : constant_; }
inline double Var::grad() const { return tape_ ? tape_->grad(index_) : 0.0; }

// ---------------------------------------------------------------------------
// Primitive set.

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

Var sin(const Var& x);
Var cos(const Var& x);
Var tanh(const Var& x);
Var square(const Var& x);
/// Subgradient 0 at x = 0.
Var abs(const Var& x);

inline double square(double x) { return x * x; }

/// Sum of a[i] * b[i], accumulated left to right.
Var dot(std::span<const Var> a, std::span<const Var> b);
/// Sum of x[i] * c[i] + c0, accumulated left to right.
Var lincomb(std::span<const Var> x, std::span<const double> c, double c0 = 0.0);
Var sum(std::span<const Var> x);

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ---------------------------------------------------------------------------
// Branch events raised by the guarded operators.

enum class EventKind : std::uint8_t { IllRoot, OutDom };

template <class T>
struct BranchEvent {
  EventKind kind;
  T magnitude;  // always >= 0
  int branch;   // 0-based IK branch, -1 when raised outside IK
  std::int64_t node;
};

template <class T>
struct EventSink {
  std::vector<BranchEvent<T>> events;
  int branch = -1;

  void emit(EventKind kind, T magnitude, std::int64_t node) {
    events.push_back({kind, magnitude, branch, node});
  }
};

inline constexpr double kRootEpsilon = 1e-12;
inline constexpr double kDefaultDomainMargin = 1e-4;

namespace detail {
inline double sqrt_value(double x) { return x >= 0.0 ? std::sqrt(x) : 0.0; }
inline double sqrt_partial(double x) {
  return x >= 0.0 ? 0.5 / std::sqrt(x < kRootEpsilon ? kRootEpsilon : x) : 0.0;
}
double acos_extended_value(double x, double delta);
double acos_extended_partial(double x, double delta);
inline bool acos_in_band(double x, double delta) { return std::fabs(x) >= 1.0 - delta; }
inline double acos_outdom_magnitude(double x) {
  return std::fabs(x) > 1.0 ? std::fabs(x) - 1.0 : 0.0;
}
void check_acos_margin(double delta);
void check_atan2_args(double y, double x, std::int64_t node);
}  // namespace detail

/// sqrt that never fails: negative input yields 0 and an IllRoot event with
/// magnitude -x. The partial is clamped below kRootEpsilon.
Var sqrt_guarded(const Var& x, EventSink<Var>* sink = nullptr);
inline double sqrt_guarded(double x, EventSink<double>* sink = nullptr) {
  if (x < 0.0 && sink) sink->emit(EventKind::IllRoot, -x, -1);
  return detail::sqrt_value(x);
}

/// Four-quadrant arctangent with analytic partials x/(x²+y²), -y/(x²+y²).
Var atan2_diff(const Var& y, const Var& x);
inline double atan2_diff(double y, double x) {
  detail::check_atan2_args(y, x, -1);
  return std::atan2(y, x);
}

/// arccos extended by tangent lines outside (-1+delta, 1-delta). Calls with
/// |x| >= 1-delta raise one OutDom event.
Var acos_extended(const Var& x, double delta = kDefaultDomainMargin,
                  EventSink<Var>* sink = nullptr);
inline double acos_extended(double x, double delta = kDefaultDomainMargin,
                            EventSink<double>* sink = nullptr) {
  detail::check_acos_margin(delta);
  if (sink && detail::acos_in_band(x, delta))
    sink->emit(EventKind::OutDom, detail::acos_outdom_magnitude(x), -1);
  return detail::acos_extended_value(x, delta);
}

// ---------------------------------------------------------------------------
// Dense matrices of graph values.

class GraphMatrix {
 public:
  GraphMatrix() = default;
  GraphMatrix(std::size_t rows, std::size_t cols);
  GraphMatrix(std::size_t rows, std::size_t cols, std::vector<Var> entries);

  static GraphMatrix leaves(Tape& tape, std::size_t rows, std::size_t cols,
                            std::span<const double> values);
  static GraphMatrix constant(std::size_t rows, std::size_t cols,
                              std::span<const double> values);
  static GraphMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Var& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
  const Var& operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }
  std::span<const Var> entries() const { return entries_; }
  std::vector<double> values() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Var> entries_;
};

GraphMatrix mat_mul(const GraphMatrix& a, const GraphMatrix& b);

// ---------------------------------------------------------------------------
// Finite-difference verification.

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<double> autodiff;
  std::vector<double> numeric;
  std::vector<double> rel_error;
  std::vector<bool> finite;  // per coordinate; false when any evaluation was non-finite

  bool all_finite() const;
};

using ScalarFunction = std::function<Var(std::span<const Var>)>;

/// Compares reverse-mode gradients of f at `point` against central
/// differences with step h. Error per coordinate is
/// |ad - fd| / max(1, |fd|); non-finite coordinates report +inf.
GradCheckReport grad_check(const ScalarFunction& f, std::span<const double> point,
                           double h = 1e-6);

}  // namespace kinet::ad
