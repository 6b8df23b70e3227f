#include "wdl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "wdl/numerics.hpp"

namespace wdl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

MixtureOracle::MixtureOracle(std::vector<double> weights, std::vector<double> means, double component_std,
                             ForwardProcess proc)
    : weights_(std::move(weights)), means_(std::move(means)), std_(component_std), proc_(proc) {
  if (weights_.empty() || weights_.size() != means_.size())
    throw std::invalid_argument("MixtureOracle: weights and means must be non-empty and of equal size");
  if (!(std_ >= 0.0) || !std::isfinite(std_)) throw std::invalid_argument("MixtureOracle: component std must be >= 0");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw std::invalid_argument("MixtureOracle: weights must be >= 0");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw std::invalid_argument("MixtureOracle: weights must sum to 1");
  for (double m : means_)
    if (!std::isfinite(m)) throw std::invalid_argument("MixtureOracle: means must be finite");
  log_weights_.resize(weights_.size());
  for (std::size_t i = 0; i < weights_.size(); ++i) log_weights_[i] = weights_[i] > 0 ? std::log(weights_[i]) : kNegInf;
}

MixtureOracle MixtureOracle::gaussian(double mean, double std, ForwardProcess proc) {
  return MixtureOracle({1.0}, {mean}, std, proc);
}

MixtureOracle MixtureOracle::low_bit(int bits, ForwardProcess proc, LowBitGrid grid) {
  if (bits < 0 || bits > 16) throw std::invalid_argument("low_bit: bits must be in [0, 16]");
  if (bits == 0) return MixtureOracle({1.0}, {0.0}, 0.0, proc);
  const std::size_t k = std::size_t{1} << bits;
  std::vector<double> means = linspace(-1.0, 1.0, k);
  if (grid == LowBitGrid::kBinCenters) {
    const double kd = static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i) means[i] = -1.0 + (2.0 * static_cast<double>(i) + 1.0) / kd;
  }
  return MixtureOracle(std::vector<double>(k, 1.0 / static_cast<double>(k)), std::move(means), 0.0, proc);
}

MixtureOracle MixtureOracle::two_component(double separation, double std, ForwardProcess proc) {
  return MixtureOracle({0.5, 0.5}, {-separation, separation}, std, proc);
}

double MixtureOracle::data_mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < means_.size(); ++i) m += weights_[i] * means_[i];
  return m;
}

double MixtureOracle::data_variance() const {
  double m2 = 0.0;
  for (std::size_t i = 0; i < means_.size(); ++i) m2 += weights_[i] * (means_[i] * means_[i] + std_ * std_);
  const double m = data_mean();
  return m2 - m * m;
}

double MixtureOracle::marginal_variance(LogSnr lambda) const {
  return proc_.alpha2(lambda) * std_ * std_ + proc_.sigma2(lambda);
}

void MixtureOracle::sample(RandomStream& rng, std::span<double> x) const {
  if (x.size() != 1) throw std::invalid_argument("MixtureOracle::sample: dimension is 1");
  const double u = rng.uniform();
  double c = 0.0;
  std::size_t i = 0;
  for (; i + 1 < weights_.size(); ++i) {
    c += weights_[i];
    if (u < c) break;
  }
  x[0] = means_[i] + (std_ > 0.0 ? std_ * rng.normal() : 0.0);
}

double MixtureOracle::log_marginal(double z, LogSnr lambda) const {
  const double a = proc_.alpha(lambda), v = marginal_variance(lambda);
  double mx = kNegInf;
  std::vector<double> t(means_.size());
  for (std::size_t i = 0; i < means_.size(); ++i) {
    const double d = z - a * means_[i];
    t[i] = log_weights_[i] - 0.5 * d * d / v;
    mx = std::max(mx, t[i]);
  }
  double s = 0.0;
  for (double x : t) s += std::exp(x - mx);
  return mx + std::log(s) - 0.5 * std::log(2.0 * kPi * v);
}

namespace {

// Posterior component responsibilities r_i(z), written into r; returns sum_i r_i (z - a m_i).
double weighted_residual(std::span<const double> logw, std::span<const double> means, double a, double v, double z,
                         std::vector<double>& r) {
  r.resize(means.size());
  double mx = kNegInf;
  for (std::size_t i = 0; i < means.size(); ++i) {
    const double d = z - a * means[i];
    r[i] = logw[i] - 0.5 * d * d / v;
    mx = std::max(mx, r[i]);
  }
  double s = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    r[i] = std::exp(r[i] - mx);
    s += r[i];
    acc += r[i] * (z - a * means[i]);
  }
  for (double& x : r) x /= s;
  return acc / s;
}

}  // namespace

double MixtureOracle::exact_score(double z, LogSnr lambda) const {
  std::vector<double> r;
  const double v = marginal_variance(lambda);
  return -weighted_residual(log_weights_, means_, proc_.alpha(lambda), v, z, r) / v;
}

double MixtureOracle::posterior_mean(double z, LogSnr lambda) const {
  std::vector<double> r;
  const double a = proc_.alpha(lambda), v = marginal_variance(lambda);
  const double res = weighted_residual(log_weights_, means_, a, v, z, r);
  double m = 0.0;
  for (std::size_t i = 0; i < means_.size(); ++i) m += r[i] * means_[i];
  return m + a * std_ * std_ / v * res;
}

void MixtureOracle::predict_eps(std::span<const double> z, LogSnr lambda, std::span<double> eps_hat) const {
  const double sg = proc_.sigma(lambda);
  for (std::size_t j = 0; j < z.size(); ++j) eps_hat[j] = -sg * exact_score(z[j], lambda);
}

void MixtureOracle::score(std::span<const double> z, LogSnr lambda, std::span<double> out) const {
  for (std::size_t j = 0; j < z.size(); ++j) out[j] = exact_score(z[j], lambda);
}

double MixtureOracle::optimal_denoiser(double z, LogSnr lambda, PredictionKind kind, double sigma_data) const {
  const double sg = proc_.sigma(lambda);
  if (!(sg > 0.0)) throw std::domain_error("optimal_denoiser: sigma is zero at this lambda");
  const double eps = -sg * exact_score(z, lambda);
  const double zz[1] = {z}, ee[1] = {eps};
  return convert_prediction(ee, PredictionKind::kEps, kind, zz, lambda, proc_, sigma_data)[0];
}

double MixtureOracle::mse(LogSnr lambda) const {
  const auto& gh = gauss_hermite(kOracleQuadratureNodes);
  const double a = proc_.alpha(lambda), sg = proc_.sigma(lambda), v = marginal_variance(lambda);
  const double sv = std::sqrt(v);
  std::vector<double> r;
  double total = 0.0;
  for (std::size_t i = 0; i < means_.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    // Given component i, E[eps | z] = sigma (z - a m_i) / v with residual variance 1 - sigma^2 / v.
    double acc = 0.0;
    for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
      const double u = gh.nodes[k];
      const double z = a * means_[i] + sv * u;
      const double eps_hat = sg * weighted_residual(log_weights_, means_, a, v, z, r) / v;
      const double d = sg * u / sv - eps_hat;
      acc += gh.weights[k] * d * d;
    }
    total += weights_[i] * (acc + (1.0 - proc_.sigma2(lambda) / v));
  }
  if (!std::isfinite(total)) throw std::runtime_error("MixtureOracle::mse: quadrature produced a non-finite value");
  return total;
}

std::vector<double> MixtureOracle::mse_curve(std::span<const LogSnr> grid) const {
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("mse_curve: grid must be increasing");
  std::vector<double> out(grid.size());
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = mse(grid[static_cast<std::size_t>(i)]);
  return out;
}

std::pair<double, double> MixtureOracle::mse_monte_carlo(LogSnr lambda, std::size_t draws, std::uint64_t seed) const {
  if (draws < 2) throw std::invalid_argument("mse_monte_carlo: need at least 2 draws");
  const double a = proc_.alpha(lambda), sg = proc_.sigma(lambda);
  std::vector<double> vals(draws);
  const auto n = static_cast<std::ptrdiff_t>(draws);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    RandomStream data(seed, Stream::kData, static_cast<std::uint64_t>(j));
    RandomStream noise(seed, Stream::kNoise, static_cast<std::uint64_t>(j));
    double x;
    sample(data, std::span<double>(&x, 1));
    const double e = noise.normal();
    const double z = a * x + sg * e;
    const double d = e + sg * exact_score(z, lambda);
    vals[static_cast<std::size_t>(j)] = d * d;
  }
  const double mean = pairwise_sum(vals) / static_cast<double>(draws);
  std::vector<double> sq(draws);
  for (std::size_t j = 0; j < draws; ++j) sq[j] = (vals[j] - mean) * (vals[j] - mean);
  const double var = pairwise_sum(sq) / static_cast<double>(draws - 1);
  return {mean, std::sqrt(var / static_cast<double>(draws))};
}

double MixtureOracle::mutual_information(LogSnr lambda) const {
  // I = h(z) - h(z | x), with h(z | x) = 1/2 log(2 pi e sigma^2).
  const auto& gh = gauss_hermite(kOracleQuadratureNodes);
  const double a = proc_.alpha(lambda), v = marginal_variance(lambda);
  const double sv = std::sqrt(v);
  double neg_h = 0.0;
  for (std::size_t i = 0; i < means_.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    double acc = 0.0;
    for (std::size_t k = 0; k < gh.nodes.size(); ++k) acc += gh.weights[k] * log_marginal(a * means_[i] + sv * gh.nodes[k], lambda);
    neg_h += weights_[i] * acc;
  }
  const double hz_given_x = 0.5 * std::log(2.0 * kPi * std::exp(1.0) * proc_.sigma2(lambda));
  return -neg_h - hz_given_x;
}

double MixtureOracle::prior_kl(LogSnr lambda_min) const {
  const auto& gh = gauss_hermite(kOracleQuadratureNodes);
  const double a = proc_.alpha(lambda_min), v = marginal_variance(lambda_min);
  const double sv = std::sqrt(v);
  const double pv = proc_.prior_variance(lambda_min);
  double acc = 0.0;
  for (std::size_t i = 0; i < means_.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    double inner = 0.0;
    for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
      const double z = a * means_[i] + sv * gh.nodes[k];
      inner += gh.weights[k] * (log_marginal(z, lambda_min) + 0.5 * std::log(2.0 * kPi * pv) + 0.5 * z * z / pv);
    }
    acc += weights_[i] * inner;
  }
  return std::max(acc, 0.0);
}

double MixtureOracle::joint_kl_at(LogSnr lambda, LogSnr lambda_min) const {
  return mutual_information(lambda) + prior_kl(lambda_min);
}

double MixtureOracle::fisher_divergence(LogSnr lambda,
                                        const std::function<double(double z, double x)>& model_score) const {
  const auto& gh = gauss_hermite(kOracleQuadratureNodes);
  const double a = proc_.alpha(lambda), sg = proc_.sigma(lambda);
  if (!(sg > 0.0)) throw std::domain_error("fisher_divergence: sigma is zero at this lambda");
  const std::size_t nx = std_ > 0.0 ? gh.nodes.size() : 1;
  double total = 0.0;
  for (std::size_t i = 0; i < means_.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    double acc = 0.0;
    for (std::size_t p = 0; p < nx; ++p) {
      const double x = std_ > 0.0 ? means_[i] + std_ * gh.nodes[p] : means_[i];
      const double wx = std_ > 0.0 ? gh.weights[p] : 1.0;
      for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
        const double e = gh.nodes[k];
        const double z = a * x + sg * e;
        const double model = model_score ? model_score(z, x) : exact_score(z, lambda);
        const double d = -e / sg - model;
        acc += wx * gh.weights[k] * d * d;
      }
    }
    total += weights_[i] * acc;
  }
  return total;
}

double joint_kl(const MixtureOracle& oracle, double t, const NoiseSchedule& schedule) {
  const double lmin = schedule.lambda_min();
  if (!std::isfinite(lmin) || !std::isfinite(schedule.lambda_max()))
    throw std::invalid_argument("joint_kl: schedule endpoints must be finite (truncate first)");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("joint_kl: t outside [0, 1]");
  return oracle.joint_kl_at(schedule.forward(t), lmin);
}

double joint_kl_by_quadrature(const MixtureOracle& oracle, double t, const NoiseSchedule& schedule, std::size_t n) {
  const double lmin = schedule.lambda_min();
  if (!std::isfinite(lmin)) throw std::invalid_argument("joint_kl_by_quadrature: lambda_min must be finite");
  const double lt = schedule.forward(t);
  const double prior = oracle.joint_kl_at(lmin, lmin);
  if (lt <= lmin) return prior;
  const auto grid = linspace(lmin, lt, n);
  const auto m = oracle.mse_curve(grid);
  return prior + 0.5 * trapezoid(grid, m);
}

LowBitCurves lowbit_curves(std::span<const int> bits, std::span<const LogSnr> grid, LowBitGrid placement) {
  if (bits.empty()) throw std::invalid_argument("lowbit_curves: need at least one bit count");
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] < 1) throw std::invalid_argument("lowbit_curves: bits must be >= 1");
    if (i > 0 && bits[i] <= bits[i - 1]) throw std::invalid_argument("lowbit_curves: bits must be increasing");
  }
  if (grid.size() < 3) throw std::invalid_argument("lowbit_curves: grid needs >= 3 points");
  LowBitCurves out;
  out.bits.assign(bits.begin(), bits.end());
  out.lambda.assign(grid.begin(), grid.end());
  const LogSnr lmin = grid.front();

  auto curves_for = [&](int n, KlCurve& kl, KlCurve& dkl) {
    const auto o = MixtureOracle::low_bit(n, ForwardProcess::vp(), placement);
    dkl.lambda = out.lambda;
    dkl.values = o.mse_curve(grid);
    for (double& v : dkl.values) v *= 0.5;
    kl.lambda = out.lambda;
    kl.values.resize(grid.size());
    const double prior = o.prior_kl(lmin);
    const auto m = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < m; ++j)
      kl.values[static_cast<std::size_t>(j)] = o.mutual_information(grid[static_cast<std::size_t>(j)]) + prior;
  };

  for (int n : bits) {
    KlCurve kl, dkl, prev_kl, prev_dkl;
    curves_for(n, kl, dkl);
    curves_for(n - 1, prev_kl, prev_dkl);
    KlCurve diff{out.lambda, std::vector<double>(grid.size())};
    for (std::size_t j = 0; j < grid.size(); ++j) diff.values[j] = dkl.values[j] - prev_dkl.values[j];
    const auto peak_it = std::max_element(diff.values.begin(), diff.values.end());
    const double peak = *peak_it;
    const double edge = std::max(std::fabs(diff.values.front()), std::fabs(diff.values.back()));
    if (!(peak > 0.0) || edge > 1e-4 * peak)
      throw std::invalid_argument("lowbit_curves: grid too narrow to contain the per-bit bump for n = " +
                                  std::to_string(n));
    out.per_bit_area.push_back(trapezoid(grid, diff.values));
    out.per_bit_peak.push_back(grid[static_cast<std::size_t>(peak_it - diff.values.begin())]);
    out.kl.push_back(std::move(kl));
    out.dkl.push_back(std::move(dkl));
    out.per_bit.push_back(std::move(diff));
  }
  return out;
}

}  // namespace wdl
