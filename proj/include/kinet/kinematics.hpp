#pragma once

// Denavit-Hartenberg kinematics of a six-axis offset-wrist arm carried by a
// planar chassis. Every geometric routine is a template over the scalar type
// so that the same code runs on plain doubles and on graph values.

#include <array>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "kinet/autodiff.hpp"

namespace kinet {

using ad::Var;

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

template <class A, class B>
using Common = std::conditional_t<std::is_same_v<A, Var> || std::is_same_v<B, Var>, Var, double>;

// ---------------------------------------------------------------------------
// DH table

struct DHRow {
  double a = 0.0;      // link length, m
  double d = 0.0;      // link offset, m
  double alpha = 0.0;  // link twist, rad
  double theta_offset = 0.0;
};

class DHTable {
 public:
  DHTable() = default;
  explicit DHTable(std::array<DHRow, 6> rows);

  /// UR10e published parameters.
  static DHTable ur10e();

  const DHRow& operator[](std::size_t i) const { return rows_[i]; }
  const std::array<DHRow, 6>& rows() const { return rows_; }

  /// True when the table has the offset-wrist structure the closed-form
  /// solver relies on.
  bool analytic_solvable(std::string* why = nullptr) const;
  /// Throws std::invalid_argument when any entry is non-finite or the
  /// structure check fails.
  void validate() const;
  /// FNV-1a over the 17-digit decimal text of all entries.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  // Twist trigonometry, snapped to exact 0/±1 for right-angle twists.
  double cos_alpha(std::size_t i) const { return cos_alpha_[i]; }
  double sin_alpha(std::size_t i) const { return sin_alpha_[i]; }

 private:
  std::array<DHRow, 6> rows_{};
  std::array<double, 6> cos_alpha_{};
  std::array<double, 6> sin_alpha_{};
};

// ---------------------------------------------------------------------------
// Rigid transforms

/// Homogeneous transform stored as its top 3x4 block; the bottom row is
/// implicitly [0, 0, 0, 1].
template <class T>
struct Transform {
  std::array<T, 9> R{};  // row-major rotation
  std::array<T, 3> p{};  // translation, m

  T& r(int i, int j) { return R[3 * i + j]; }
  const T& r(int i, int j) const { return R[3 * i + j]; }

  static Transform identity() {
    Transform t;
    t.R = {T(1.0), T(0.0), T(0.0), T(0.0), T(1.0), T(0.0), T(0.0), T(0.0), T(1.0)};
    t.p = {T(0.0), T(0.0), T(0.0)};
    return t;
  }
  static Transform translation(double x, double y, double z) {
    Transform t = identity();
    t.p = {T(x), T(y), T(z)};
    return t;
  }

  /// Full 4x4 row-major matrix of values.
  std::array<double, 16> matrix() const;
  Transform<double> values() const;
};

using HomTransform = Transform<double>;

template <class A, class B>
Transform<Common<A, B>> compose(const Transform<A>& a, const Transform<B>& b);

template <class A, class B>
Transform<Common<A, B>> operator*(const Transform<A>& a, const Transform<B>& b) {
  return compose(a, b);
}

/// [R^T, -R^T p].
template <class T>
Transform<T> se3_inverse(const Transform<T>& h);

/// se3_inverse(h_pred) * h_tar: the target expressed in the predicted frame.
template <class A, class B>
Transform<Common<A, B>> relative_target(const Transform<A>& h_pred, const Transform<B>& h_tar);

double orthonormality_residual(const HomTransform& h);
/// Max-abs entry difference over the 3x4 block.
double max_abs_diff(const HomTransform& a, const HomTransform& b);
HomTransform rot_z(double angle);

// ---------------------------------------------------------------------------
// Poses

/// End-effector pose: Z-Y-X Euler angles (yaw psi about z, pitch theta about
/// y, roll phi about x) and position.
template <class T>
struct PoseT {
  T phi{}, theta{}, psi{};
  T x{}, y{}, z{};

  std::array<double, 6> values() const {
    return {value_of(phi), value_of(theta), value_of(psi), value_of(x), value_of(y), value_of(z)};
  }
};

using Pose6 = PoseT<double>;

Pose6 pose_from_array(const std::array<double, 6>& v);
/// Angles wrapped into (-pi, pi].
Pose6 normalized(const Pose6& p);

template <class T>
struct ChassisPoseT {
  T psi{}, x{}, y{};
};
using ChassisPose = ChassisPoseT<double>;

template <class T>
using JointsT = std::array<T, 6>;
using JointVector = JointsT<double>;

/// All joints inside [-pi, pi].
bool joints_legal(const JointVector& q);

template <class T>
struct PoseExtraction {
  PoseT<T> pose;
  bool gimbal_degenerate = false;
};

template <class T>
Transform<T> pose_to_hom(const PoseT<T>& pose);

/// Inverse of pose_to_hom. When |cos theta| < 1e-8 the roll is fixed to 0 and
/// the result is flagged.
template <class T>
PoseExtraction<T> hom_to_pose(const Transform<T>& h);

// ---------------------------------------------------------------------------
// Chassis and mount

struct MountTransform {
  HomTransform transform = HomTransform::translation(0.0, 0.0, 0.4);

  static MountTransform at_height(double z) { return {HomTransform::translation(0.0, 0.0, z)}; }
  double height() const { return transform.p[2]; }
};

/// World -> arm base: planar (psi, x, y) composed with the mount.
template <class T>
Transform<T> chassis_to_base(const ChassisPoseT<T>& c, const MountTransform& mount);

// ---------------------------------------------------------------------------
// Forward kinematics

template <class T>
Transform<T> dh_link_transform(const T& q, const DHTable& table, std::size_t joint);

/// Base -> flange transform for the six joint values.
template <class T>
Transform<T> fk_chain(const JointsT<T>& q, const DHTable& table);

/// World -> flange for a chassis pose plus joints.
template <class C, class Q>
Transform<Common<C, Q>> world_fk(const ChassisPoseT<C>& c, const JointsT<Q>& q,
                                 const MountTransform& mount, const DHTable& table);

/// Distances from the three singular configurations of the offset-wrist arm.
struct SingularityMargins {
  double wrist = 0.0;     // |sin q5|
  double elbow = 0.0;     // |sin q3|
  double shoulder = 0.0;  // wrist-centre offset from the d4 cylinder around joint 1, m
};
SingularityMargins singularity_margins(const JointVector& q, const DHTable& table);
/// True when any margin is below `band` (unitless for wrist/elbow, metres for the shoulder).
bool near_singular(const JointVector& q, const DHTable& table, double band = 0.05);

// ---------------------------------------------------------------------------
// Inverse kinematics

struct IkOptions {
  double domain_margin = ad::kDefaultDomainMargin;
  double wrist_singular = 1e-6;     // |sin q5| below this fixes q6 := 0
  double shoulder_singular = 1e-9;  // wrist-centre distance to the q1 axis
};

inline constexpr int kBranches = 8;

/// Branch index bits: 4 = shoulder, 2 = wrist, 1 = elbow (set bit = minus sign).
template <class T>
struct SolutionSet {
  std::array<JointsT<T>, kBranches> raw{};   // values as produced by the closed form
  std::array<JointVector, kBranches> wrapped{};
  std::array<bool, kBranches> branch_valid{};
  std::vector<ad::BranchEvent<T>> events;
  bool shoulder_singular = false;
  std::array<bool, kBranches> wrist_singular{};

  JointVector raw_values(int branch) const;
  /// Raw joints inside [-pi, pi].
  bool joints_legal(int branch) const;
  /// Event free and joint legal.
  bool ideal(int branch) const { return branch_valid[branch] && joints_legal(branch); }
  bool any_ideal() const;
  int valid_count() const;
};

template <class T>
SolutionSet<T> analytic_ik(const Transform<T>& h, const DHTable& table, const IkOptions& options = {});

struct FeasibleSolution {
  JointVector joints{};
  int branch = -1;
};

/// Lowest-index branch that is event free, joint legal, and reproduces h
/// through fk_chain within 1e-6.
std::optional<FeasibleSolution> ik_feasible(const HomTransform& h, const DHTable& table,
                                            const IkOptions& options = {});

/// Summary of what blocks a pose: used for verdict reason codes.
struct IkDiagnosis {
  bool any_event_free = false;
  bool any_ideal = false;
};
IkDiagnosis diagnose_ik(const HomTransform& h, const DHTable& table, const IkOptions& options = {});

}  // namespace kinet
