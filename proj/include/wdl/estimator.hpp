#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wdl/model.hpp"
#include "wdl/process.hpp"
#include "wdl/rng.hpp"
#include "wdl/schedules.hpp"
#include "wdl/weightings.hpp"

namespace wdl {

enum class TimeSampling { kIid, kLowDiscrepancy };

TimeSampling parse_time_sampling(const std::string& s);

/// Times for one batch. Low-discrepancy: t_i = (i + u) / n with one shared
/// uniform u; iid: n independent uniforms. Throws std::invalid_argument for n = 0.
class TimeSampler {
 public:
  explicit TimeSampler(TimeSampling mode = TimeSampling::kLowDiscrepancy) : mode_(mode) {}
  TimeSampling mode() const { return mode_; }
  std::vector<double> sample(std::size_t n, RandomStream& rng) const;
  /// Time of draw i in a batch of n, with the batch's shared offset u (used by
  /// the parallel estimator so that each draw can be formed independently).
  static double stratified(std::size_t i, std::size_t n, double u);

 private:
  TimeSampling mode_;
};

struct LossEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  std::vector<double> per_sample;  ///< filled when requested
};

/// Everything that defines the weighted loss L_w(x) of a model up to its
/// additive constant, restricted to [lambda_min, lambda_max] of the schedule.
struct LossProblem {
  const Denoiser* model = nullptr;
  const DataSource* data = nullptr;
  NoiseSchedule schedule;  ///< must be truncated (finite endpoints)
  Weighting weighting = Weighting("elbo", [](LogSnr) { return 1.0; }, true);
  ForwardProcess proc = ForwardProcess::vp();
};

struct EstimatorOptions {
  TimeSampling times = TimeSampling::kLowDiscrepancy;
  bool keep_per_sample = false;
  /// Residual measured in this parameterization and mapped back to eps-units with
  /// its loss-equivalence factor. Every choice gives the same per-draw values.
  PredictionKind residual = PredictionKind::kEps;
  double sigma_data = kDefaultSigmaData;
};

/// One draw: lambda = f(t), x ~ data, eps ~ N(0, I), value 1/2 (w/p) ||eps - eps_hat||^2.
/// Draw j uses substreams (seed, *, j); the low-discrepancy offset comes from
/// (seed, times, 0). In a full estimate iid times are sorted before assignment.
struct DrawResult {
  double t, lambda, value, sq_error;
  double scale;  ///< 1/2 (w/p) (||eps||^2 + ||eps_hat||^2), the operand magnitude of `value`
};

/// Parallel (OpenMP) estimator; bit-identical to the serial version for any thread count.
/// Throws std::invalid_argument for n = 0, a missing model/data source, or an
/// untruncated schedule; std::logic_error if p(lambda) = 0 at a sampled lambda.
LossEstimate weighted_loss_mc(const LossProblem& problem, std::size_t n, std::uint64_t seed,
                              const EstimatorOptions& opts = {});
/// Reference implementation: a plain loop over the same per-draw kernel.
LossEstimate weighted_loss_mc_serial(const LossProblem& problem, std::size_t n, std::uint64_t seed,
                                     const EstimatorOptions& opts = {});
DrawResult loss_draw(const LossProblem& problem, std::size_t j, std::size_t n, double offset, std::uint64_t seed,
                     const EstimatorOptions& opts);
/// Draw j at a given time t (noise and data from the draw's own substreams).
DrawResult loss_draw_at(const LossProblem& problem, std::size_t j, double t, std::uint64_t seed,
                        const EstimatorOptions& opts);

/// weighted_loss_mc with w = 1. The additive constant of the ELBO is not included.
LossEstimate elbo_mc(const Denoiser& model, const DataSource& data, const NoiseSchedule& schedule,
                     const ForwardProcess& proc, std::size_t n, std::uint64_t seed, const EstimatorOptions& opts = {});

struct VarianceReport {
  std::string config;
  double variance = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;  ///< 95% percentile bootstrap
  std::vector<double> means;        ///< LossEstimate::mean per repeat
};

inline constexpr std::size_t kBootstrapResamples = 2000;

/// Runs `estimate(derive_seed(seed, r))` for r < repeats and summarizes the spread of
/// the means. Throws std::invalid_argument when repeats < 2.
VarianceReport estimator_variance(const std::string& config, const std::function<LossEstimate(std::uint64_t)>& estimate,
                                  std::size_t repeats, std::uint64_t seed);

/// Bootstrap CI for the sample variance of `values`.
VarianceReport variance_with_ci(const std::string& config, std::vector<double> values, std::uint64_t seed);

/// Paired comparison of two configurations run with identical seeds.
struct VarianceComparison {
  double ratio = 0.0;           ///< var(a) / var(b)
  double ratio_upper95 = 0.0;   ///< one-sided 95% paired-bootstrap upper bound on the ratio
  double pitman_morgan_t = 0.0; ///< t statistic of corr(a-b, a+b); negative when var(a) < var(b)
  bool a_smaller = false;       ///< ratio_upper95 < 1 and Pitman-Morgan one-sided test at 5%
};

/// Throws std::invalid_argument when sizes differ or fewer than 3 pairs are given.
VarianceComparison compare_variance(std::span<const double> a, std::span<const double> b, std::uint64_t seed);

double sample_variance(std::span<const double> v);

/// Drives an adaptive state with a fixed model: iteration k draws a low-discrepancy
/// batch from adaptive_schedule(state) (seed derive_seed(seed, k)) and pushes each
/// draw's w(lambda) ||eps - eps_hat||^2 into its bin, in draw order. problem.schedule
/// is ignored. Draws within a batch are formed in parallel; the result does not
/// depend on the thread count. Throws std::invalid_argument for batch = 0.
void fit_adaptive_schedule(const LossProblem& problem, AdaptiveScheduleState& state, std::size_t iterations,
                           std::size_t batch, std::uint64_t seed);

struct BinBalance {
  std::vector<double> ratio;    ///< per bin: E[(w/p) mse | lambda in bin] under adaptive_schedule(state)
  std::vector<bool> occupied;   ///< init_residual(b) <= occupied_tol * ema[b]
  double cv = 0.0;              ///< coefficient of variation of ratio over occupied bins
  std::size_t n_occupied = 0;
};

/// Balance of an adaptive state against a known mse(lambda); a state that has
/// converged to p proportional to w mse gives equal ratios. Bin averages are
/// midpoint sums with `nodes` points per bin.
BinBalance adaptive_bin_balance(const AdaptiveScheduleState& state, const Weighting& w,
                                const std::function<double(LogSnr)>& mse, double occupied_tol = 0.01,
                                std::size_t nodes = 64);

}  // namespace wdl
