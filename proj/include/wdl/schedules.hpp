#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace wdl {

/// Log signal-to-noise ratio, lambda = log(alpha^2 / sigma^2).
using LogSnr = double;

/// A strictly decreasing bijection t in [0, 1] -> lambda, its inverse, and the
/// implied training density p(lambda) = -d/dlambda inverse(lambda).
class ScheduleModel {
 public:
  virtual ~ScheduleModel() = default;
  virtual LogSnr forward(double t) const = 0;
  virtual double inverse(LogSnr lambda) const = 0;
  virtual double density(LogSnr lambda) const = 0;
  virtual std::string name() const = 0;
  LogSnr lambda_max() const { return forward(0.0); }
  LogSnr lambda_min() const { return forward(1.0); }
};

/// Immutable, cheaply copyable handle to a schedule. Safe to share across threads.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  explicit NoiseSchedule(std::shared_ptr<const ScheduleModel> model) : model_(std::move(model)) {}

  LogSnr forward(double t) const { return model_->forward(t); }
  double inverse(LogSnr lambda) const { return model_->inverse(lambda); }
  double density(LogSnr lambda) const { return model_->density(lambda); }
  LogSnr lambda_max() const { return model_->lambda_max(); }
  LogSnr lambda_min() const { return model_->lambda_min(); }
  std::string name() const { return model_->name(); }
  /// dlambda/dt at time t, equal to -1 / p(lambda_t).
  double dlambda_dt(double t) const { return -1.0 / density(forward(t)); }

  explicit operator bool() const { return static_cast<bool>(model_); }
  const ScheduleModel* model() const { return model_.get(); }

 private:
  std::shared_ptr<const ScheduleModel> model_;
};

struct ScheduleParams {
  std::optional<double> resolution;  ///< shifted-cosine: s = log(64 / resolution)
  double rho = 7.0;                  ///< edm-sample
  double sigma_min = 0.002;          ///< edm-sample
  double sigma_max = 80.0;           ///< edm-sample
  double edm_mean = 2.4;             ///< edm-train: lambda ~ N(mean, sd^2)
  double edm_sd = 2.4;
};

/// Names: cosine, shifted-cosine, edm-train, edm-sample, fm-ot.
/// Throws std::invalid_argument on unknown names or invalid parameters.
NoiseSchedule make_schedule(const std::string& name, const ScheduleParams& params = {});
std::vector<std::string> schedule_names();

/// A schedule restricted to [lambda_min, lambda_max] and re-parameterized so that
/// time still runs over [0, 1].
class TruncatedSchedule {
 public:
  TruncatedSchedule(NoiseSchedule base, LogSnr lambda_max, LogSnr lambda_min);

  const NoiseSchedule& base() const { return base_; }
  double t0() const { return t0_; }
  double t1() const { return t1_; }
  LogSnr lambda_max() const { return lambda_max_; }
  LogSnr lambda_min() const { return lambda_min_; }

  LogSnr forward(double t) const;
  double inverse(LogSnr lambda) const;
  double density(LogSnr lambda) const;

  /// The truncated map as a regular schedule handle.
  NoiseSchedule schedule() const;

 private:
  NoiseSchedule base_;
  double t0_, t1_;
  LogSnr lambda_max_, lambda_min_;
};

/// Throws std::invalid_argument when lambda_min >= lambda_max or an endpoint
/// falls outside the base schedule's range.
TruncatedSchedule truncate(const NoiseSchedule& base, LogSnr lambda_max, LogSnr lambda_min);

inline constexpr LogSnr kDefaultLambdaMin = -20.0;
inline constexpr LogSnr kDefaultLambdaMax = 20.0;

/// Online adaptive schedule: an EMA of w(lambda) * ||eps - eps_hat||^2 per bin.
/// Mutation is not synchronized; snapshot by copying.
class AdaptiveScheduleState {
 public:
  static constexpr std::size_t kBins = 100;

  AdaptiveScheduleState(LogSnr lambda_min = kDefaultLambdaMin, LogSnr lambda_max = kDefaultLambdaMax,
                        double decay = 0.999, double init_value = 1.0);

  LogSnr lambda_min() const { return edges_.front(); }
  LogSnr lambda_max() const { return edges_.back(); }
  double decay() const { return decay_; }
  const std::array<double, kBins + 1>& bin_edges() const { return edges_; }
  const std::array<double, kBins>& ema() const { return ema_; }
  std::array<double, kBins>& mutable_ema() { return ema_; }
  double init_value() const { return init_; }
  /// Number of updates each bin has received.
  const std::array<std::uint64_t, kBins>& counts() const { return counts_; }
  /// Weight the initial value still carries in bin b: init * decay^count.
  double init_residual(std::size_t b) const;

  std::size_t bin_of(LogSnr lambda) const;
  double bin_center(std::size_t b) const { return 0.5 * (edges_[b] + edges_[b + 1]); }

  /// Moves the EMA of the bin containing lambda towards weighted_mse.
  /// Throws std::out_of_range if lambda is outside the table, std::invalid_argument
  /// if weighted_mse is negative or not finite.
  void update(LogSnr lambda, double weighted_mse);

  /// Shannon entropy (nats) of the normalized bin masses.
  double entropy() const;

 private:
  std::array<double, kBins + 1> edges_;
  std::array<double, kBins> ema_;
  std::array<std::uint64_t, kBins> counts_{};
  double decay_;
  double init_;
};

/// Functional form of AdaptiveScheduleState::update.
AdaptiveScheduleState adaptive_update(AdaptiveScheduleState state, LogSnr lambda, double weighted_mse);

/// Schedule whose density is proportional to the bin EMAs (piecewise constant);
/// its forward map inverts the piecewise-linear CDF exactly.
/// Throws std::invalid_argument if the table cannot be normalized.
NoiseSchedule adaptive_schedule(const AdaptiveScheduleState& state);

/// Same construction from arbitrary bin edges and nonnegative masses.
NoiseSchedule piecewise_constant_schedule(std::vector<double> edges, std::vector<double> masses);

}  // namespace wdl
