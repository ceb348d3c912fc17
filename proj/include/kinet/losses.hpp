#pragma once

// Constraint losses for the chassis predictor (IK branch events and joint
// legality) and the whole-body predictor (FK error, reach, orientation).

#include <span>
#include <vector>

#include "kinet/kinematics.hpp"

namespace kinet {

struct LossWeights {
  double illroot = 1.0;
  double outdom = 1.0;
  double illsolu = 1.0;
  double idesolu = 1.0;
  double pre_error = 1.0;
  double distance = 0.5;
  double orien = 0.5;
  bool U = true;  // gate on the two branch-event terms

  /// Throws std::invalid_argument on negative or non-finite weights.
  void validate() const;
};

/// Planar reach band of the arm around the joint-1 axis, metres.
struct Annulus {
  double r_min = 0.0;
  double r_max = 0.0;

  bool contains(double r) const { return r >= r_min && r <= r_max; }
};

inline constexpr double kPositionTolerance = 1e-3;     // m
inline constexpr double kOrientationTolerance = 0.1;   // rad

template <class T>
struct LossBreakdown {
  T illroot{}, outdom{}, illsolu{}, idesolu{};
  T pre_error{}, distance{}, orien{};
  T total{};

  LossBreakdown<double> values() const {
    return {value_of(illroot), value_of(outdom),   value_of(illsolu), value_of(idesolu),
            value_of(pre_error), value_of(distance), value_of(orien),   value_of(total)};
  }
};

template <class T>
T loss_illroot(std::span<const ad::BranchEvent<T>> events);
template <class T>
T loss_outdom(std::span<const ad::BranchEvent<T>> events);

/// Sum over all branches and joints of |q| - pi for raw values outside [-pi, pi].
template <class T>
T loss_illsolu(const SolutionSet<T>& s);
/// 0 when some branch is joint legal, otherwise loss_illsolu.
template <class T>
T loss_idesolu(const SolutionSet<T>& s);

/// One sample of the chassis-predictor loss.
template <class T>
LossBreakdown<T> cmp_sample_loss(const SolutionSet<T>& s, const LossWeights& w);

/// Batch mean of cmp_sample_loss. Throws std::invalid_argument on an empty batch.
template <class T>
LossBreakdown<T> loss_cmp(std::span<const SolutionSet<T>> batch, const LossWeights& w);

/// 0 when the position error is below `threshold`, otherwise the mean squared
/// difference over the 12 entries of the top 3x4 block.
template <class T>
T loss_pre_error(const Transform<T>& h_fk, const HomTransform& h_tar, double threshold = kPositionTolerance);

/// Squared violation of the nearest annulus bound by the planar distance from
/// the arm base to the target.
template <class T>
T loss_distance(const ChassisPoseT<T>& c, const Pose6& target, const Annulus& reach,
                const MountTransform& mount = {});

/// Sum of wrapped |dtheta_i| unless all three are below `threshold`, then 0.
template <class T>
T loss_orien(const T& dx, const T& dy, const T& dz, double threshold = kOrientationTolerance);

/// Roll/pitch/yaw of R_fk^T R_tar.
template <class T>
std::array<T, 3> orientation_error(const Transform<T>& h_fk, const HomTransform& h_tar);

struct FmpLossSettings {
  double position_threshold = kPositionTolerance;
  double orientation_threshold = kOrientationTolerance;
  Annulus reach;
  MountTransform mount;
};

/// One sample of the whole-body predictor loss.
template <class T>
LossBreakdown<T> fmp_sample_loss(const ChassisPoseT<T>& c, const JointsT<T>& q, const Pose6& target,
                                 const HomTransform& h_tar, const DHTable& table, const FmpLossSettings& settings,
                                 const LossWeights& w);

/// Component-wise batch mean; total is the mean of the per-sample totals.
/// Throws std::invalid_argument on an empty batch.
template <class T>
LossBreakdown<T> mean_breakdown(std::span<const LossBreakdown<T>> samples);

}  // namespace kinet
