#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wdl/oracle.hpp"
#include "wdl/schedules.hpp"
#include "wdl/weightings.hpp"

namespace wdl {

/// Outcome of one numerical identity check.
/// pass <=> rel_err <= tolerance, or abs_err <= tolerance when |lhs| < 1e-8.
struct IdentityReport {
  std::string name;
  double lhs = 0.0, rhs = 0.0;
  double abs_err = 0.0, rel_err = 0.0;
  bool pass = false;
  std::size_t grid_size = 0;
  double tolerance = 0.0;
};

IdentityReport make_report(std::string name, double lhs, double rhs, double tolerance, std::size_t grid_size);

/// Thrown when a check needs a monotonic weighting and gets one that increases
/// somewhere. Carries the first offending pair (lambda_lo < lambda_hi, w(lo) < w(hi)).
class NonMonotonicWeighting : public std::invalid_argument {
 public:
  NonMonotonicWeighting(const std::string& name, LogSnr lo, LogSnr hi);
  LogSnr lambda_lo() const { return lo_; }
  LogSnr lambda_hi() const { return hi_; }

 private:
  LogSnr lo_, hi_;
};

/// Central difference of L(t) against 1/2 (dlambda/dt) mse(lambda_t) at `points`
/// interior times; reports the worst point. Fails if L is not decreasing there.
/// Throws std::invalid_argument if the grid spacing is not larger than 2 * fd_step,
/// or the schedule is not truncated.
IdentityReport verify_time_derivative(const MixtureOracle& oracle, const NoiseSchedule& schedule,
                                      std::size_t points = 21, double fd_step = 1e-4, double tol = 1e-3);

/// lhs = int_0^1 -(dL/dt) w dt (from the mse), rhs = int_0^1 (d/dt w) L dt +
/// w(lambda_max) L(0) - w(lambda_min) L(1) (from L). Trapezoid rules with n
/// nodes, split at the weighting's kinks.
IdentityReport verify_integration_by_parts(const MixtureOracle& oracle, const NoiseSchedule& schedule,
                                           const Weighting& weighting, std::size_t n = 4001, double tol = 1e-4);

/// Probability distribution over t induced by a monotonic weighting, normalized
/// so that w(lambda_min) = 1: density d/dt w(lambda_t) on (0, 1] plus an atom of
/// mass w(lambda_max) at t = 0.
class PwDistribution {
 public:
  /// Throws NonMonotonicWeighting (checked on `check_points` times), and
  /// std::invalid_argument for an untruncated schedule or w(lambda_min) <= 0.
  PwDistribution(Weighting weighting, NoiseSchedule schedule, std::size_t check_points = 4001);

  double normalizer() const { return norm_; }  ///< w(lambda_min) before normalization
  double atom_mass() const { return atom_; }
  double atom_time() const { return 0.0; }
  double density(double t) const;
  /// Continuous part by composite Simpson with about n nodes, split at kinks.
  double continuous_mass(std::size_t n = 4001) const;
  double total_mass(std::size_t n = 4001) const { return atom_ + continuous_mass(n); }
  /// E_{p_w}[f(t)] = atom f(0) + int density f dt.
  double expectation(const std::function<double(double)>& f, std::size_t n = 4001) const;

  const Weighting& weighting() const { return weighting_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  /// Times at which the integrand may have a kink (in increasing order, excluding 0, 1).
  std::vector<double> breakpoints() const;

 private:
  Weighting weighting_;
  NoiseSchedule schedule_;
  double norm_, atom_;
};

PwDistribution build_pw(const Weighting& weighting, const NoiseSchedule& schedule);

/// True iff d/dt w(lambda_t) >= 0 on n grid times, up to finite-difference noise
/// (1e-9 of the largest |density|).
bool pw_density_nonnegative(const Weighting& weighting, const NoiseSchedule& schedule, std::size_t n = 4001);

/// Total mass of p_w against 1.
IdentityReport verify_pw_mass(const PwDistribution& pw, std::size_t n = 4001, double tol = 1e-8);

/// E_{p_w}[L(t)] - L(1) against L_w / w(lambda_min), with L_w the lhs of the
/// integration-by-parts check.
IdentityReport verify_pw_expectation(const MixtureOracle& oracle, const PwDistribution& pw, std::size_t n = 4001,
                                     double tol = 1e-4);

/// Riemann-Stieltjes sums on n matched times with midpoint tags:
/// w(lambda_min) L(1) + int_{t:1->0} w dL  vs  w(lambda_max) L(0) + int_{t:0->1} L dw.
/// Throws NonMonotonicWeighting for non-monotonic weightings.
IdentityReport verify_area_identity(const MixtureOracle& oracle, const NoiseSchedule& schedule,
                                    const Weighting& weighting, std::size_t n = 4001, double tol = 1e-3);

/// Central difference (in lambda) of the joint KL against 1/2 sigma^2 D_F with D_F
/// the Fisher divergence of the exact score; reports the worst point.
/// Throws std::invalid_argument when lambda +- fd_step leaves the schedule's range
/// or the step underflows.
IdentityReport verify_fisher(const MixtureOracle& oracle, std::span<const LogSnr> lambdas,
                             const NoiseSchedule& schedule, double fd_step = 1e-3, double tol = 1e-3);

/// L(t) on a grid of times, evaluated in parallel; identical to the serial loop.
std::vector<double> joint_kl_table(const MixtureOracle& oracle, const NoiseSchedule& schedule,
                                   std::span<const double> times);

/// The full suite: time derivative, integration by parts, p_w mass and
/// expectation, area identity and Fisher identity on the Gaussian and
/// two-component oracles under cosine and fm-ot schedules truncated to [-12, 12].
std::vector<IdentityReport> verify_all();

}  // namespace wdl
