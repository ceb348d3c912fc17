#include "kinet/kinematics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace kinet {

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * kPi;
  double y = std::fmod(a + kPi, two_pi);
  if (y < 0.0) y += two_pi;
  y -= kPi;
  return y == -kPi ? kPi : y;
}

// ---------------------------------------------------------------------------
// DHTable

namespace {

void snap_trig(double angle, double& c, double& s) {
  c = std::cos(angle);
  s = std::sin(angle);
  if (std::fabs(c) < 1e-12) {
    c = 0.0;
    s = s > 0.0 ? 1.0 : -1.0;
  } else if (std::fabs(s) < 1e-12) {
    s = 0.0;
    c = c > 0.0 ? 1.0 : -1.0;
  }
}

std::string decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

DHTable::DHTable(std::array<DHRow, 6> rows) : rows_(rows) {
  for (std::size_t i = 0; i < 6; ++i) snap_trig(rows_[i].alpha, cos_alpha_[i], sin_alpha_[i]);
}

DHTable DHTable::ur10e() {
  const double h = kPi / 2.0;
  return DHTable({DHRow{0.0, 0.1807, h, 0.0}, DHRow{-0.6127, 0.0, 0.0, 0.0}, DHRow{-0.57155, 0.0, 0.0, 0.0},
                  DHRow{0.0, 0.17415, h, 0.0}, DHRow{0.0, 0.11985, -h, 0.0}, DHRow{0.0, 0.11655, 0.0, 0.0}});
}

bool DHTable::analytic_solvable(std::string* why) const {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  static constexpr std::array<double, 6> twist = {kPi / 2, 0.0, 0.0, kPi / 2, -kPi / 2, 0.0};
  for (std::size_t i = 0; i < 6; ++i) {
    const DHRow& r = rows_[i];
    if (!std::isfinite(r.a) || !std::isfinite(r.d) || !std::isfinite(r.alpha) || !std::isfinite(r.theta_offset))
      return fail("row " + std::to_string(i + 1) + " has a non-finite entry");
    if (std::fabs(r.alpha - twist[i]) > 1e-9)
      return fail("row " + std::to_string(i + 1) + " twist does not follow [pi/2, 0, 0, pi/2, -pi/2, 0]");
  }
  for (std::size_t i : {0u, 3u, 4u, 5u})
    if (rows_[i].a != 0.0) return fail("link length a" + std::to_string(i + 1) + " must be 0");
  if (rows_[1].d != 0.0 || rows_[2].d != 0.0) return fail("offsets d2 and d3 must be 0");
  if (rows_[1].a == 0.0 || rows_[2].a == 0.0) return fail("a2 and a3 must be nonzero");
  if (rows_[5].d == 0.0) return fail("d6 must be nonzero");
  return true;
}

void DHTable::validate() const {
  std::string why;
  if (!analytic_solvable(&why)) throw std::invalid_argument("DH table: " + why);
}

std::uint64_t DHTable::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const DHRow& r : rows_) {
    for (double v : {r.a, r.d, r.alpha, r.theta_offset}) {
      for (char ch : decimal(v) + ",") {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

std::string DHTable::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

// ---------------------------------------------------------------------------
// Transforms

namespace {

double dot3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double s = 0.0;
  s += a[0] * b[0];
  s += a[1] * b[1];
  s += a[2] * b[2];
  return s;
}
Var dot3(const std::array<Var, 3>& a, const std::array<Var, 3>& b) { return ad::dot(a, b); }
Var dot3(const std::array<Var, 3>& a, const std::array<double, 3>& b) { return ad::lincomb(a, b); }
Var dot3(const std::array<double, 3>& a, const std::array<Var, 3>& b) { return ad::lincomb(b, a); }

template <class T>
std::array<T, 3> row(const Transform<T>& h, int i) {
  return {h.r(i, 0), h.r(i, 1), h.r(i, 2)};
}
template <class T>
std::array<T, 3> col(const Transform<T>& h, int j) {
  return {h.r(0, j), h.r(1, j), h.r(2, j)};
}

}  // namespace

template <class T>
std::array<double, 16> Transform<T>::matrix() const {
  std::array<double, 16> m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[4 * i + j] = value_of(r(i, j));
    m[4 * i + 3] = value_of(p[i]);
  }
  m[15] = 1.0;
  return m;
}

template <class T>
Transform<double> Transform<T>::values() const {
  Transform<double> out;
  for (int k = 0; k < 9; ++k) out.R[k] = value_of(R[k]);
  for (int k = 0; k < 3; ++k) out.p[k] = value_of(p[k]);
  return out;
}

template <class A, class B>
Transform<Common<A, B>> compose(const Transform<A>& a, const Transform<B>& b) {
  Transform<Common<A, B>> out;
  for (int i = 0; i < 3; ++i) {
    const auto ri = row(a, i);
    for (int j = 0; j < 3; ++j) out.r(i, j) = dot3(ri, col(b, j));
    out.p[i] = dot3(ri, b.p) + a.p[i];
  }
  return out;
}

template <class T>
Transform<T> se3_inverse(const Transform<T>& h) {
  Transform<T> out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.r(i, j) = h.r(j, i);
  for (int i = 0; i < 3; ++i) out.p[i] = -dot3(col(h, i), h.p);
  return out;
}

template <class A, class B>
Transform<Common<A, B>> relative_target(const Transform<A>& h_pred, const Transform<B>& h_tar) {
  return compose(se3_inverse(h_pred), h_tar);
}

double orthonormality_residual(const HomTransform& h) {
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double g = dot3(col(h, i), col(h, j));
      worst = std::max(worst, std::fabs(g - (i == j ? 1.0 : 0.0)));
    }
  }
  const double det = h.r(0, 0) * (h.r(1, 1) * h.r(2, 2) - h.r(1, 2) * h.r(2, 1)) -
                     h.r(0, 1) * (h.r(1, 0) * h.r(2, 2) - h.r(1, 2) * h.r(2, 0)) +
                     h.r(0, 2) * (h.r(1, 0) * h.r(2, 1) - h.r(1, 1) * h.r(2, 0));
  return std::max(worst, std::fabs(det - 1.0));
}

double max_abs_diff(const HomTransform& a, const HomTransform& b) {
  double worst = 0.0;
  for (int k = 0; k < 9; ++k) worst = std::max(worst, std::fabs(a.R[k] - b.R[k]));
  for (int k = 0; k < 3; ++k) worst = std::max(worst, std::fabs(a.p[k] - b.p[k]));
  return worst;
}

HomTransform rot_z(double angle) {
  HomTransform t = HomTransform::identity();
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  t.R = {c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0};
  return t;
}

// ---------------------------------------------------------------------------
// Poses

Pose6 pose_from_array(const std::array<double, 6>& v) { return {v[0], v[1], v[2], v[3], v[4], v[5]}; }

Pose6 normalized(const Pose6& p) {
  Pose6 out = p;
  out.phi = wrap_angle(p.phi);
  out.theta = wrap_angle(p.theta);
  out.psi = wrap_angle(p.psi);
  return out;
}

bool joints_legal(const JointVector& q) {
  for (double v : q)
    if (!(std::fabs(v) <= kPi)) return false;
  return true;
}

template <class T>
Transform<T> pose_to_hom(const PoseT<T>& pose) {
  using std::cos;
  using std::sin;
  const T cf = cos(pose.phi), sf = sin(pose.phi);
  const T ct = cos(pose.theta), st = sin(pose.theta);
  const T cp = cos(pose.psi), sp = sin(pose.psi);
  Transform<T> h;
  h.R = {cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf,
         sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf,
         -st,     ct * sf,                ct * cf};
  h.p = {pose.x, pose.y, pose.z};
  return h;
}

namespace {

template <class T>
T normalize_pi(const T& a) {
  return value_of(a) == -kPi ? a + 2.0 * kPi : a;
}

}  // namespace

template <class T>
PoseExtraction<T> hom_to_pose(const Transform<T>& h) {
  PoseExtraction<T> out;
  const T cos_theta = ad::sqrt_guarded(h.r(0, 0) * h.r(0, 0) + h.r(1, 0) * h.r(1, 0), nullptr);
  out.pose.theta = ad::atan2_diff(-h.r(2, 0), cos_theta);
  if (value_of(cos_theta) < 1e-8) {
    out.gimbal_degenerate = true;
    out.pose.phi = T(0.0);
    out.pose.psi = normalize_pi(ad::atan2_diff(-h.r(0, 1), h.r(1, 1)));
  } else {
    out.pose.psi = normalize_pi(ad::atan2_diff(h.r(1, 0), h.r(0, 0)));
    out.pose.phi = normalize_pi(ad::atan2_diff(h.r(2, 1), h.r(2, 2)));
  }
  out.pose.x = h.p[0];
  out.pose.y = h.p[1];
  out.pose.z = h.p[2];
  return out;
}

// ---------------------------------------------------------------------------
// Chassis

template <class T>
Transform<T> chassis_to_base(const ChassisPoseT<T>& c, const MountTransform& mount) {
  using std::cos;
  using std::sin;
  const T cp = cos(c.psi);
  const T sp = sin(c.psi);
  Transform<T> planar;
  planar.R = {cp, -sp, T(0.0), sp, cp, T(0.0), T(0.0), T(0.0), T(1.0)};
  planar.p = {c.x, c.y, T(0.0)};
  return compose(planar, mount.transform);
}

// ---------------------------------------------------------------------------
// Forward kinematics

namespace {

template <class T>
Transform<T> link_from_theta(const T& theta, const DHTable& table, std::size_t j) {
  using std::cos;
  using std::sin;
  const DHRow& row = table[j];
  const double ca = table.cos_alpha(j);
  const double sa = table.sin_alpha(j);
  const T c = cos(theta);
  const T s = sin(theta);
  Transform<T> h;
  h.R = {c, -s * ca, s * sa, s, c * ca, -c * sa, T(0.0), T(sa), T(ca)};
  h.p = {row.a * c, row.a * s, T(row.d)};
  return h;
}

}  // namespace

template <class T>
Transform<T> dh_link_transform(const T& q, const DHTable& table, std::size_t joint) {
  const double off = table[joint].theta_offset;
  return link_from_theta(off == 0.0 ? q : q + off, table, joint);
}

template <class T>
Transform<T> fk_chain(const JointsT<T>& q, const DHTable& table) {
  Transform<T> h = dh_link_transform(q[0], table, 0);
  for (std::size_t j = 1; j < 6; ++j) h = compose(h, dh_link_transform(q[j], table, j));
  return h;
}

template <class C, class Q>
Transform<Common<C, Q>> world_fk(const ChassisPoseT<C>& c, const JointsT<Q>& q, const MountTransform& mount,
                                 const DHTable& table) {
  return compose(chassis_to_base(c, mount), fk_chain(q, table));
}

SingularityMargins singularity_margins(const JointVector& q, const DHTable& table) {
  SingularityMargins m;
  m.wrist = std::fabs(std::sin(q[4] + table[4].theta_offset));
  m.elbow = std::fabs(std::sin(q[2] + table[2].theta_offset));
  const HomTransform h = fk_chain(q, table);
  const double d6 = table[5].d;
  const double d4 = table[3].d;
  const double wx = h.p[0] - d6 * h.r(0, 2);
  const double wy = h.p[1] - d6 * h.r(1, 2);
  m.shoulder = std::sqrt(std::max(0.0, wx * wx + wy * wy - d4 * d4));
  return m;
}

bool near_singular(const JointVector& q, const DHTable& table, double band) {
  const SingularityMargins m = singularity_margins(q, table);
  return m.wrist < band || m.elbow < band || m.shoulder < band;
}

// ---------------------------------------------------------------------------
// Inverse kinematics

template <class T>
JointVector SolutionSet<T>::raw_values(int branch) const {
  JointVector q{};
  for (int j = 0; j < 6; ++j) q[j] = value_of(raw[branch][j]);
  return q;
}

template <class T>
bool SolutionSet<T>::joints_legal(int branch) const {
  return kinet::joints_legal(raw_values(branch));
}

template <class T>
bool SolutionSet<T>::any_ideal() const {
  for (int b = 0; b < kBranches; ++b)
    if (ideal(b)) return true;
  return false;
}

template <class T>
int SolutionSet<T>::valid_count() const {
  int n = 0;
  for (bool v : branch_valid) n += v ? 1 : 0;
  return n;
}

template <class T>
SolutionSet<T> analytic_ik(const Transform<T>& h, const DHTable& table, const IkOptions& options) {
  using std::cos;
  using std::sin;
  std::string why;
  if (!table.analytic_solvable(&why)) throw std::invalid_argument("analytic_ik: " + why);

  const double a2 = table[1].a;
  const double a3 = table[2].a;
  const double d4 = table[3].d;
  const double d6 = table[5].d;
  const double delta = options.domain_margin;

  SolutionSet<T> out;
  ad::EventSink<T> sink;

  for (int b = 0; b < kBranches; ++b) {
    sink.branch = b;
    const double shoulder = (b & 4) ? -1.0 : 1.0;
    const double wrist = (b & 2) ? -1.0 : 1.0;
    const double elbow = (b & 1) ? -1.0 : 1.0;

    // Shoulder: the wrist centre must sit d4 off the first joint axis.
    const T p05x = h.p[0] - d6 * h.r(0, 2);
    const T p05y = h.p[1] - d6 * h.r(1, 2);
    const T rho = ad::sqrt_guarded(p05x * p05x + p05y * p05y, &sink);
    T ratio;
    T azimuth;
    if (value_of(rho) < options.shoulder_singular) {
      out.shoulder_singular = true;
      ratio = T(2.0);
      azimuth = T(0.0);
    } else {
      ratio = d4 / rho;
      azimuth = ad::atan2_diff(p05y, p05x);
    }
    const T th1 = azimuth + shoulder * ad::acos_extended(ratio, delta, &sink) + kPi / 2.0;
    const T s1 = sin(th1);
    const T c1 = cos(th1);

    // Wrist.
    const T arg5 = (h.p[0] * s1 - h.p[1] * c1 - d4) / d6;
    const T th5 = wrist * ad::acos_extended(arg5, delta, &sink);
    const T s5 = sin(th5);
    T th6;
    if (std::fabs(value_of(s5)) < options.wrist_singular) {
      out.wrist_singular[b] = true;
      th6 = T(0.0);
    } else {
      const double sg = value_of(s5) > 0.0 ? 1.0 : -1.0;
      const T y6 = -h.r(0, 1) * s1 + h.r(1, 1) * c1;
      const T x6 = h.r(0, 0) * s1 - h.r(1, 0) * c1;
      th6 = ad::atan2_diff(sg * y6, sg * x6);
    }

    // Planar 2R subchain between joints 2 and 4.
    const Transform<T> t14 = compose(compose(se3_inverse(link_from_theta(th1, table, 0)), h),
                                     se3_inverse(compose(link_from_theta(th5, table, 4),
                                                         link_from_theta(th6, table, 5))));
    const T px = t14.p[0];
    const T py = t14.p[1];
    const T reach2 = px * px + py * py;
    const T reach = ad::sqrt_guarded(reach2, &sink);
    const T c3 = (reach2 - (a2 * a2 + a3 * a3)) / (2.0 * a2 * a3);
    const T th3 = elbow * ad::acos_extended(c3, delta, &sink);
    T th2;
    if (value_of(reach) < 1e-12) {
      th2 = T(0.0);
    } else {
      const T u = (-a3) * sin(th3) / reach;
      const T asin_u = ad::atan2_diff(u, ad::sqrt_guarded(1.0 - u * u, &sink));
      th2 = ad::atan2_diff(-py, -px) - asin_u;
    }

    const Transform<T> t13 = compose(link_from_theta(th2, table, 1), link_from_theta(th3, table, 2));
    const Transform<T> t34 = compose(se3_inverse(t13), t14);
    const T th4 = ad::atan2_diff(t34.r(1, 0), t34.r(0, 0));

    const std::array<T, 6> theta = {th1, th2, th3, th4, th5, th6};
    for (int j = 0; j < 6; ++j) {
      const double off = table[j].theta_offset;
      out.raw[b][j] = off == 0.0 ? theta[j] : theta[j] - off;
      out.wrapped[b][j] = wrap_angle(value_of(out.raw[b][j]));
    }
  }

  out.branch_valid.fill(true);
  for (const auto& e : sink.events) out.branch_valid[e.branch] = false;
  out.events = std::move(sink.events);
  return out;
}

std::optional<FeasibleSolution> ik_feasible(const HomTransform& h, const DHTable& table, const IkOptions& options) {
  const SolutionSet<double> s = analytic_ik(h, table, options);
  for (int b = 0; b < kBranches; ++b) {
    if (!s.ideal(b)) continue;
    const JointVector q = s.raw_values(b);
    if (max_abs_diff(fk_chain(q, table), h) <= 1e-6) return FeasibleSolution{q, b};
  }
  return std::nullopt;
}

IkDiagnosis diagnose_ik(const HomTransform& h, const DHTable& table, const IkOptions& options) {
  const SolutionSet<double> s = analytic_ik(h, table, options);
  IkDiagnosis d;
  for (int b = 0; b < kBranches; ++b) {
    d.any_event_free = d.any_event_free || s.branch_valid[b];
    d.any_ideal = d.any_ideal || s.ideal(b);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Instantiations

template struct Transform<double>;
template struct Transform<Var>;
template struct SolutionSet<double>;
template struct SolutionSet<Var>;

template Transform<double> compose(const Transform<double>&, const Transform<double>&);
template Transform<Var> compose(const Transform<Var>&, const Transform<Var>&);
template Transform<Var> compose(const Transform<Var>&, const Transform<double>&);
template Transform<Var> compose(const Transform<double>&, const Transform<Var>&);

template Transform<double> se3_inverse(const Transform<double>&);
template Transform<Var> se3_inverse(const Transform<Var>&);

template Transform<double> relative_target(const Transform<double>&, const Transform<double>&);
template Transform<Var> relative_target(const Transform<Var>&, const Transform<Var>&);
template Transform<Var> relative_target(const Transform<Var>&, const Transform<double>&);
template Transform<Var> relative_target(const Transform<double>&, const Transform<Var>&);

template Transform<double> pose_to_hom(const PoseT<double>&);
template Transform<Var> pose_to_hom(const PoseT<Var>&);
template PoseExtraction<double> hom_to_pose(const Transform<double>&);
template PoseExtraction<Var> hom_to_pose(const Transform<Var>&);

template Transform<double> chassis_to_base(const ChassisPoseT<double>&, const MountTransform&);
template Transform<Var> chassis_to_base(const ChassisPoseT<Var>&, const MountTransform&);

template Transform<double> dh_link_transform(const double&, const DHTable&, std::size_t);
template Transform<Var> dh_link_transform(const Var&, const DHTable&, std::size_t);
template Transform<double> fk_chain(const JointsT<double>&, const DHTable&);
template Transform<Var> fk_chain(const JointsT<Var>&, const DHTable&);

template Transform<double> world_fk(const ChassisPoseT<double>&, const JointsT<double>&, const MountTransform&,
                                    const DHTable&);
template Transform<Var> world_fk(const ChassisPoseT<Var>&, const JointsT<Var>&, const MountTransform&,
                                 const DHTable&);
template Transform<Var> world_fk(const ChassisPoseT<double>&, const JointsT<Var>&, const MountTransform&,
                                 const DHTable&);

template SolutionSet<double> analytic_ik(const Transform<double>&, const DHTable&, const IkOptions&);
template SolutionSet<Var> analytic_ik(const Transform<Var>&, const DHTable&, const IkOptions&);

}  // namespace kinet
