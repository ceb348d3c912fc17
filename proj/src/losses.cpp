#include "kinet/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace kinet {

void LossWeights::validate() const {
  for (double v : {illroot, outdom, illsolu, idesolu, pre_error, distance, orien})
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("loss weights must be finite and nonnegative");
}

namespace {

template <class T>
T event_sum(std::span<const ad::BranchEvent<T>> events, ad::EventKind kind) {
  T s(0.0);
  for (const auto& e : events)
    if (e.kind == kind) s = s + e.magnitude;
  return s;
}

template <class T>
T excess_over_pi(const T& q) {
  using std::abs;
  const T m = abs(q);
  return value_of(m) > kPi ? m - kPi : T(0.0);
}

}  // namespace

template <class T>
T loss_illroot(std::span<const ad::BranchEvent<T>> events) {
  return event_sum(events, ad::EventKind::IllRoot);
}

template <class T>
T loss_outdom(std::span<const ad::BranchEvent<T>> events) {
  return event_sum(events, ad::EventKind::OutDom);
}

template <class T>
T loss_illsolu(const SolutionSet<T>& s) {
  T total(0.0);
  for (const auto& branch : s.raw)
    for (const T& q : branch)
      if (std::fabs(value_of(q)) > kPi) total = total + excess_over_pi(q);
  return total;
}

template <class T>
T loss_idesolu(const SolutionSet<T>& s) {
  for (int b = 0; b < kBranches; ++b)
    if (s.joints_legal(b)) return T(0.0);
  return loss_illsolu(s);
}

template <class T>
LossBreakdown<T> cmp_sample_loss(const SolutionSet<T>& s, const LossWeights& w) {
  LossBreakdown<T> out;
  const std::span<const ad::BranchEvent<T>> events(s.events);
  out.illroot = loss_illroot(events);
  out.outdom = loss_outdom(events);
  out.illsolu = loss_illsolu(s);
  out.idesolu = loss_idesolu(s);
  T total = w.illsolu * out.illsolu + w.idesolu * out.idesolu;
  if (w.U) total = w.illroot * out.illroot + w.outdom * out.outdom + total;
  out.total = total;
  return out;
}

template <class T>
LossBreakdown<T> mean_breakdown(std::span<const LossBreakdown<T>> samples) {
  if (samples.empty()) throw std::invalid_argument("loss over an empty batch");
  const double n = static_cast<double>(samples.size());
  LossBreakdown<T> m;
  T* fields[] = {&m.illroot, &m.outdom, &m.illsolu, &m.idesolu, &m.pre_error, &m.distance, &m.orien, &m.total};
  for (std::size_t k = 0; k < 8; ++k) {
    T s(0.0);
    for (const auto& b : samples) {
      const T* src[] = {&b.illroot, &b.outdom, &b.illsolu, &b.idesolu, &b.pre_error, &b.distance, &b.orien, &b.total};
      s = s + *src[k];
    }
    *fields[k] = s / n;
  }
  return m;
}

template <class T>
LossBreakdown<T> loss_cmp(std::span<const SolutionSet<T>> batch, const LossWeights& w) {
  std::vector<LossBreakdown<T>> per;
  per.reserve(batch.size());
  for (const auto& s : batch) per.push_back(cmp_sample_loss(s, w));
  return mean_breakdown<T>(per);
}

template <class T>
T loss_pre_error(const Transform<T>& h_fk, const HomTransform& h_tar, double threshold) {
  double e2 = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = value_of(h_fk.p[i]) - h_tar.p[i];
    e2 += d * d;
  }
  if (std::sqrt(e2) < threshold) return T(0.0);
  T s(0.0);
  for (int k = 0; k < 9; ++k) s = s + ad::square(h_fk.R[k] - h_tar.R[k]);
  for (int k = 0; k < 3; ++k) s = s + ad::square(h_fk.p[k] - h_tar.p[k]);
  return s / 12.0;
}

template <class T>
T loss_distance(const ChassisPoseT<T>& c, const Pose6& target, const Annulus& reach, const MountTransform& mount) {
  const Transform<T> base = chassis_to_base(c, mount);
  const T dx = target.x - base.p[0];
  const T dy = target.y - base.p[1];
  const T r = ad::sqrt_guarded(dx * dx + dy * dy, nullptr);
  const double rv = value_of(r);
  if (rv > reach.r_max) return ad::square(r - reach.r_max);
  if (rv < reach.r_min) return ad::square(reach.r_min - r);
  return T(0.0);
}

template <class T>
T loss_orien(const T& dx, const T& dy, const T& dz, double threshold) {
  using std::abs;
  using std::cos;
  using std::sin;
  std::array<T, 3> wrapped;
  const std::array<const T*, 3> in = {&dx, &dy, &dz};
  bool any = false;
  for (int i = 0; i < 3; ++i) {
    wrapped[i] = abs(ad::atan2_diff(sin(*in[i]), cos(*in[i])));
    any = any || value_of(wrapped[i]) >= threshold;
  }
  if (!any) return T(0.0);
  return wrapped[0] + wrapped[1] + wrapped[2];
}

template <class T>
std::array<T, 3> orientation_error(const Transform<T>& h_fk, const HomTransform& h_tar) {
  Transform<T> rel = relative_target(h_fk, h_tar);
  const PoseT<T> p = hom_to_pose(rel).pose;
  return {p.phi, p.theta, p.psi};
}

template <class T>
LossBreakdown<T> fmp_sample_loss(const ChassisPoseT<T>& c, const JointsT<T>& q, const Pose6& target,
                                 const HomTransform& h_tar, const DHTable& table, const FmpLossSettings& settings,
                                 const LossWeights& w) {
  LossBreakdown<T> out;
  const Transform<T> h_fk = world_fk(c, q, settings.mount, table);
  out.pre_error = loss_pre_error(h_fk, h_tar, settings.position_threshold);
  out.distance = loss_distance(c, target, settings.reach, settings.mount);
  const std::array<T, 3> d = orientation_error(h_fk, h_tar);
  out.orien = loss_orien(d[0], d[1], d[2], settings.orientation_threshold);
  out.total = w.pre_error * out.pre_error + w.distance * out.distance + w.orien * out.orien;
  return out;
}

#define KINET_LOSSES_INSTANTIATE(T)                                                                                \
  template T loss_illroot(std::span<const ad::BranchEvent<T>>);                                                    \
  template T loss_outdom(std::span<const ad::BranchEvent<T>>);                                                     \
  template T loss_illsolu(const SolutionSet<T>&);                                                                  \
  template T loss_idesolu(const SolutionSet<T>&);                                                                  \
  template LossBreakdown<T> cmp_sample_loss(const SolutionSet<T>&, const LossWeights&);                            \
  template LossBreakdown<T> loss_cmp(std::span<const SolutionSet<T>>, const LossWeights&);                         \
  template LossBreakdown<T> mean_breakdown(std::span<const LossBreakdown<T>>);                                     \
  template T loss_pre_error(const Transform<T>&, const HomTransform&, double);                                     \
  template T loss_distance(const ChassisPoseT<T>&, const Pose6&, const Annulus&, const MountTransform&);           \
  template T loss_orien(const T&, const T&, const T&, double);                                                     \
  template std::array<T, 3> orientation_error(const Transform<T>&, const HomTransform&);                          \
  template LossBreakdown<T> fmp_sample_loss(const ChassisPoseT<T>&, const JointsT<T>&, const Pose6&,               \
                                            const HomTransform&, const DHTable&, const FmpLossSettings&,          \
                                            const LossWeights&);

KINET_LOSSES_INSTANTIATE(double)
KINET_LOSSES_INSTANTIATE(Var)

#undef KINET_LOSSES_INSTANTIATE

}  // namespace kinet
