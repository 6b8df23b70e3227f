#include "wdl/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "wdl/numerics.hpp"

namespace wdl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clamp01(double t) { return std::clamp(t, 0.0, 1.0); }

class CosineSchedule final : public ScheduleModel {
 public:
  explicit CosineSchedule(double shift = 0.0, bool shifted = false) : shift_(shift), shifted_(shifted) {}

  LogSnr forward(double t) const override {
    t = clamp01(t);
    // -2 log tan(pi t / 2), evaluated through the complement near t = 1.
    const double base = (t <= 0.5) ? -2.0 * std::log(std::tan(0.5 * kPi * t))
                                   : 2.0 * std::log(std::tan(0.5 * kPi * (1.0 - t)));
    return base + 2.0 * shift_;
  }
  double inverse(LogSnr lambda) const override {
    const double u = 0.5 * lambda - shift_;
    if (u >= 0.0) return (2.0 / kPi) * std::atan(std::exp(-u));
    return 1.0 - (2.0 / kPi) * std::atan(std::exp(u));
  }
  double density(LogSnr lambda) const override { return sech(0.5 * lambda - shift_) / (2.0 * kPi); }
  std::string name() const override { return shifted_ ? "shifted-cosine" : "cosine"; }

 private:
  double shift_;
  bool shifted_;
};

// lambda ~ N(mean, sd^2) with high SNR at t = 0: t = 1 - F(lambda).
class EdmTrainSchedule final : public ScheduleModel {
 public:
  EdmTrainSchedule(double mean, double sd) : mean_(mean), sd_(sd) {}
  LogSnr forward(double t) const override {
    t = clamp01(t);
    return mean_ - sd_ * normal_quantile(t);
  }
  double inverse(LogSnr lambda) const override { return normal_sf(lambda, mean_, sd_); }
  double density(LogSnr lambda) const override { return normal_pdf(lambda, mean_, sd_); }
  std::string name() const override { return "edm-train"; }

 private:
  double mean_, sd_;
};

class EdmSampleSchedule final : public ScheduleModel {
 public:
  EdmSampleSchedule(double rho, double sigma_min, double sigma_max)
      : rho_(rho),
        a_(std::pow(sigma_max, 1.0 / rho)),
        b_(std::pow(sigma_min, 1.0 / rho)),
        lmin_(-2.0 * std::log(sigma_max)),
        lmax_(-2.0 * std::log(sigma_min)) {}

  LogSnr forward(double t) const override {
    t = clamp01(t);
    if (t == 0.0) return lmax_;
    if (t == 1.0) return lmin_;
    return -2.0 * rho_ * std::log(a_ + (1.0 - t) * (b_ - a_));
  }
  double inverse(LogSnr lambda) const override {
    if (lambda >= lmax_) return 0.0;
    if (lambda <= lmin_) return 1.0;
    return clamp01(1.0 - (std::exp(-lambda / (2.0 * rho_)) - a_) / (b_ - a_));
  }
  double density(LogSnr lambda) const override {
    if (lambda < lmin_ || lambda > lmax_) return 0.0;
    return std::exp(-lambda / (2.0 * rho_)) / (2.0 * rho_ * (a_ - b_));
  }
  std::string name() const override { return "edm-sample"; }

 private:
  double rho_, a_, b_, lmin_, lmax_;
};

class FmOtSchedule final : public ScheduleModel {
 public:
  LogSnr forward(double t) const override {
    t = clamp01(t);
    return 2.0 * (std::log1p(-t) - std::log(t));
  }
  double inverse(LogSnr lambda) const override { return sigmoid(-0.5 * lambda); }
  double density(LogSnr lambda) const override {
    const double s = sech(0.25 * lambda);
    return s * s / 8.0;
  }
  std::string name() const override { return "fm-ot"; }
};

class TruncatedModel final : public ScheduleModel {
 public:
  explicit TruncatedModel(TruncatedSchedule ts) : ts_(std::move(ts)) {}
  LogSnr forward(double t) const override { return ts_.forward(t); }
  double inverse(LogSnr lambda) const override { return ts_.inverse(lambda); }
  double density(LogSnr lambda) const override { return ts_.density(lambda); }
  std::string name() const override { return ts_.base().name(); }

 private:
  TruncatedSchedule ts_;
};

class PiecewiseConstantModel final : public ScheduleModel {
 public:
  PiecewiseConstantModel(std::vector<double> edges, std::vector<double> probs)
      : edges_(std::move(edges)), probs_(std::move(probs)), cdf_(edges_.size(), 0.0) {
    for (std::size_t b = 0; b < probs_.size(); ++b) cdf_[b + 1] = cdf_[b] + probs_[b];
    for (double& c : cdf_) c /= cdf_.back();
    cdf_.back() = 1.0;
  }

  LogSnr forward(double t) const override {
    t = clamp01(t);
    if (t == 0.0) return edges_.back();
    if (t == 1.0) return edges_.front();
    const double c = 1.0 - t;
    // First bin whose upper CDF reaches c; zero-mass bins are skipped.
    auto it = std::lower_bound(cdf_.begin() + 1, cdf_.end(), c);
    std::size_t b = static_cast<std::size_t>(it - cdf_.begin()) - 1;
    while (b + 1 < probs_.size() && probs_[b] == 0.0) ++b;
    const double pb = cdf_[b + 1] - cdf_[b];
    const double frac = pb > 0.0 ? std::clamp((c - cdf_[b]) / pb, 0.0, 1.0) : 0.0;
    return edges_[b] + frac * (edges_[b + 1] - edges_[b]);
  }
  double inverse(LogSnr lambda) const override { return 1.0 - cdf_at(lambda); }
  double density(LogSnr lambda) const override {
    if (lambda < edges_.front() || lambda > edges_.back()) return 0.0;
    const std::size_t b = bin(lambda);
    return (cdf_[b + 1] - cdf_[b]) / (edges_[b + 1] - edges_[b]);
  }
  std::string name() const override { return "adaptive"; }

 private:
  std::size_t bin(LogSnr lambda) const {
    auto it = std::upper_bound(edges_.begin(), edges_.end(), lambda);
    std::size_t b = static_cast<std::size_t>(it - edges_.begin());
    b = b == 0 ? 0 : b - 1;
    return std::min(b, probs_.size() - 1);
  }
  double cdf_at(LogSnr lambda) const {
    if (lambda <= edges_.front()) return 0.0;
    if (lambda >= edges_.back()) return 1.0;
    const std::size_t b = bin(lambda);
    const double frac = (lambda - edges_[b]) / (edges_[b + 1] - edges_[b]);
    return cdf_[b] + frac * (cdf_[b + 1] - cdf_[b]);
  }

  std::vector<double> edges_, probs_, cdf_;
};

}  // namespace

std::vector<std::string> schedule_names() {
  return {"cosine", "shifted-cosine", "edm-train", "edm-sample", "fm-ot"};
}

NoiseSchedule make_schedule(const std::string& name, const ScheduleParams& p) {
  if (name == "cosine") return NoiseSchedule(std::make_shared<CosineSchedule>());
  if (name == "shifted-cosine") {
    if (!p.resolution) throw std::invalid_argument("shifted-cosine requires a resolution");
    if (!(*p.resolution > 0.0)) throw std::invalid_argument("shifted-cosine: resolution must be > 0");
    return NoiseSchedule(std::make_shared<CosineSchedule>(std::log(64.0 / *p.resolution), true));
  }
  if (name == "edm-train") {
    if (!(p.edm_sd > 0.0)) throw std::invalid_argument("edm-train: sd must be > 0");
    return NoiseSchedule(std::make_shared<EdmTrainSchedule>(p.edm_mean, p.edm_sd));
  }
  if (name == "edm-sample") {
    if (!(p.sigma_min > 0.0) || !(p.sigma_max > 0.0))
      throw std::invalid_argument("edm-sample: sigma_min and sigma_max must be > 0");
    if (p.sigma_min >= p.sigma_max) throw std::invalid_argument("edm-sample: sigma_min must be < sigma_max");
    if (!(p.rho > 0.0)) throw std::invalid_argument("edm-sample: rho must be > 0");
    return NoiseSchedule(std::make_shared<EdmSampleSchedule>(p.rho, p.sigma_min, p.sigma_max));
  }
  if (name == "fm-ot") return NoiseSchedule(std::make_shared<FmOtSchedule>());
  throw std::invalid_argument("unknown schedule: " + name);
}

TruncatedSchedule::TruncatedSchedule(NoiseSchedule base, LogSnr lambda_max, LogSnr lambda_min)
    : base_(std::move(base)), lambda_max_(lambda_max), lambda_min_(lambda_min) {
  if (!(lambda_min < lambda_max)) throw std::invalid_argument("truncate: lambda_min must be < lambda_max");
  if (!std::isfinite(lambda_min) || !std::isfinite(lambda_max))
    throw std::invalid_argument("truncate: endpoints must be finite");
  if (lambda_max > base_.lambda_max() || lambda_min < base_.lambda_min())
    throw std::invalid_argument("truncate: endpoint outside the base schedule's range");
  t0_ = base_.inverse(lambda_max);
  t1_ = base_.inverse(lambda_min);
  if (!(t1_ > t0_)) throw std::invalid_argument("truncate: degenerate time interval");
}

LogSnr TruncatedSchedule::forward(double t) const {
  if (t <= 0.0) return lambda_max_;
  if (t >= 1.0) return lambda_min_;
  return std::clamp(base_.forward(t0_ + (t1_ - t0_) * t), lambda_min_, lambda_max_);
}

double TruncatedSchedule::inverse(LogSnr lambda) const {
  if (lambda >= lambda_max_) return 0.0;
  if (lambda <= lambda_min_) return 1.0;
  return clamp01((base_.inverse(lambda) - t0_) / (t1_ - t0_));
}

double TruncatedSchedule::density(LogSnr lambda) const {
  if (lambda < lambda_min_ || lambda > lambda_max_) return 0.0;
  return base_.density(lambda) / (t1_ - t0_);
}

NoiseSchedule TruncatedSchedule::schedule() const {
  return NoiseSchedule(std::make_shared<TruncatedModel>(*this));
}

TruncatedSchedule truncate(const NoiseSchedule& base, LogSnr lambda_max, LogSnr lambda_min) {
  return TruncatedSchedule(base, lambda_max, lambda_min);
}

AdaptiveScheduleState::AdaptiveScheduleState(LogSnr lambda_min, LogSnr lambda_max, double decay,
                                             double init_value)
    : decay_(decay), init_(init_value) {
  if (!(lambda_min < lambda_max)) throw std::invalid_argument("adaptive: lambda_min must be < lambda_max");
  if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("adaptive: decay must be in [0, 1)");
  if (!(init_value > 0.0)) throw std::invalid_argument("adaptive: init value must be > 0");
  const auto e = linspace(lambda_min, lambda_max, kBins + 1);
  std::copy(e.begin(), e.end(), edges_.begin());
  ema_.fill(init_value);
}

std::size_t AdaptiveScheduleState::bin_of(LogSnr lambda) const {
  if (!(lambda >= lambda_min() && lambda <= lambda_max()))
    throw std::out_of_range("adaptive: lambda outside [lambda_min, lambda_max]; truncate first");
  const double width = (lambda_max() - lambda_min()) / static_cast<double>(kBins);
  auto b = static_cast<std::size_t>((lambda - lambda_min()) / width);
  return std::min(b, kBins - 1);
}

void AdaptiveScheduleState::update(LogSnr lambda, double weighted_mse) {
  if (!(weighted_mse >= 0.0) || !std::isfinite(weighted_mse))
    throw std::invalid_argument("adaptive: weighted mse must be finite and >= 0");
  const std::size_t b = bin_of(lambda);
  ema_[b] = decay_ * ema_[b] + (1.0 - decay_) * weighted_mse;
  ++counts_[b];
}

double AdaptiveScheduleState::init_residual(std::size_t b) const {
  return init_ * std::pow(decay_, static_cast<double>(counts_.at(b)));
}

double AdaptiveScheduleState::entropy() const {
  const double total = std::accumulate(ema_.begin(), ema_.end(), 0.0);
  double h = 0.0;
  for (double m : ema_) {
    const double p = m / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

AdaptiveScheduleState adaptive_update(AdaptiveScheduleState state, LogSnr lambda, double weighted_mse) {
  state.update(lambda, weighted_mse);
  return state;
}

NoiseSchedule piecewise_constant_schedule(std::vector<double> edges, std::vector<double> masses) {
  if (edges.size() != masses.size() + 1 || masses.empty())
    throw std::invalid_argument("piecewise schedule: need one more edge than masses");
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    if (!(edges[i + 1] > edges[i])) throw std::invalid_argument("piecewise schedule: edges must increase");
  double total = 0.0;
  for (double m : masses) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw std::invalid_argument("piecewise schedule: masses must be >= 0");
    total += m;
  }
  if (!(total > 0.0)) throw std::invalid_argument("piecewise schedule: all masses are zero");
  return NoiseSchedule(std::make_shared<PiecewiseConstantModel>(std::move(edges), std::move(masses)));
}

NoiseSchedule adaptive_schedule(const AdaptiveScheduleState& state) {
  const auto& e = state.bin_edges();
  const auto& m = state.ema();
  return piecewise_constant_schedule({e.begin(), e.end()}, {m.begin(), m.end()});
}

}  // namespace wdl
