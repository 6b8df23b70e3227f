#pragma once

#include <functional>
#include <span>
#include <vector>

#include "wdl/model.hpp"
#include "wdl/process.hpp"
#include "wdl/schedules.hpp"

namespace wdl {

inline constexpr std::size_t kOracleQuadratureNodes = 129;

/// Placement of the 2^n low-bit values on [-1, 1]: linspace including both
/// endpoints, or the centers of 2^n equal bins.
enum class LowBitGrid { kEndpoints, kBinCenters };

/// Univariate Gaussian-mixture data distribution with a shared component
/// standard deviation. Every quantity the diffusion objective depends on
/// (marginal score, optimal denoiser, denoising MSE, joint KL of the optimal
/// model) is available in closed form or by deterministic quadrature.
class MixtureOracle final : public DataSource, public Denoiser, public ScoreSource {
 public:
  /// Throws std::invalid_argument if weights are negative, do not sum to 1
  /// (tolerance 1e-9), sizes differ, or component_std < 0.
  MixtureOracle(std::vector<double> weights, std::vector<double> means, double component_std,
                ForwardProcess proc = ForwardProcess::vp());

  static MixtureOracle gaussian(double mean = 0.0, double std = 1.0, ForwardProcess proc = ForwardProcess::vp());
  /// Uniform over 2^bits point masses on [-1, 1]; bits = 0 is a point mass at 0.
  static MixtureOracle low_bit(int bits, ForwardProcess proc = ForwardProcess::vp(),
                               LowBitGrid grid = LowBitGrid::kEndpoints);
  /// Equal-weight components at +-separation with the given std.
  static MixtureOracle two_component(double separation = 1.0, double std = 0.5,
                                     ForwardProcess proc = ForwardProcess::vp());

  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& means() const { return means_; }
  double component_std() const { return std_; }
  const ForwardProcess& process() const { return proc_; }
  double data_mean() const;
  double data_variance() const;

  // DataSource / Denoiser / ScoreSource
  std::size_t dim() const override { return 1; }
  void sample(RandomStream& rng, std::span<double> x) const override;
  void predict_eps(std::span<const double> z, LogSnr lambda, std::span<double> eps_hat) const override;
  void score(std::span<const double> z, LogSnr lambda, std::span<double> out) const override;

  double log_marginal(double z, LogSnr lambda) const;
  /// grad_z log q_lambda(z), log-sum-exp stabilized.
  double exact_score(double z, LogSnr lambda) const;
  /// E[x | z_lambda = z].
  double posterior_mean(double z, LogSnr lambda) const;
  /// Posterior-mean predictor expressed in any parameterization.
  /// Throws std::domain_error when sigma_lambda == 0.
  double optimal_denoiser(double z, LogSnr lambda, PredictionKind kind,
                          double sigma_data = kDefaultSigmaData) const;

  /// E_{x, eps} (eps - eps_hat*(z))^2 by Gauss-Hermite quadrature per component.
  double mse(LogSnr lambda) const;
  std::vector<double> mse_curve(std::span<const LogSnr> grid) const;
  /// Same quantity by plain Monte Carlo; returns {mean, standard error}.
  std::pair<double, double> mse_monte_carlo(LogSnr lambda, std::size_t draws, std::uint64_t seed) const;

  /// I(x; z_lambda) in nats.
  double mutual_information(LogSnr lambda) const;
  /// KL(q(z_lambda_min) || p(z_1)) with p(z_1) the process prior.
  double prior_kl(LogSnr lambda_min) const;
  /// E_x KL(q(z_{t..1} | x) || p(z_{t..1})) of the optimal model, as a function of
  /// lambda_t. Computed from the mutual information, independent of mse().
  double joint_kl_at(LogSnr lambda, LogSnr lambda_min) const;

  /// E_x E_{q(z|x)} (grad log q(z|x) - model(z, x))^2, by tensor Gauss-Hermite
  /// quadrature over (component offset, noise). The default model is the exact
  /// marginal score.
  double fisher_divergence(LogSnr lambda, const std::function<double(double z, double x)>& model_score = {}) const;

 private:
  double marginal_variance(LogSnr lambda) const;

  std::vector<double> weights_, means_, log_weights_;
  double std_;
  ForwardProcess proc_;
};

/// L(t) for the optimal model under a (truncated) schedule.
/// Throws std::invalid_argument for non-finite endpoints or t outside [0, 1].
double joint_kl(const MixtureOracle& oracle, double t, const NoiseSchedule& schedule);

/// L(1) + integral of 1/2 mse over [lambda_min, lambda_t], trapezoid with n nodes.
double joint_kl_by_quadrature(const MixtureOracle& oracle, double t, const NoiseSchedule& schedule,
                              std::size_t n = 2001);

struct KlCurve {
  std::vector<LogSnr> lambda;
  std::vector<double> values;
};

struct LowBitCurves {
  std::vector<int> bits;
  std::vector<LogSnr> lambda;
  std::vector<KlCurve> kl;                ///< E_q(x)[L(lambda)] per n
  std::vector<KlCurve> dkl;               ///< dL/dlambda = 1/2 mse per n
  /// dkl[n] - dkl[n-1], always against the n-1 bit oracle. On the endpoint grid
  /// these dip below zero at moderate lambda because the data variance shrinks
  /// with n; on the bin-center grid they are nonnegative.
  std::vector<KlCurve> per_bit;
  std::vector<double> per_bit_area;       ///< trapezoid area of per_bit, nats
  std::vector<LogSnr> per_bit_peak;       ///< argmax of per_bit
};

/// Throws std::invalid_argument when bits are not increasing/positive, or when the
/// grid is too narrow to contain a per-bit bump (edge value > 1e-4 of the peak).
LowBitCurves lowbit_curves(std::span<const int> bits, std::span<const LogSnr> grid,
                           LowBitGrid placement = LowBitGrid::kEndpoints);

}  // namespace wdl
