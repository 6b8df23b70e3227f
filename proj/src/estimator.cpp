#include "wdl/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wdl/numerics.hpp"

namespace wdl {

TimeSampling parse_time_sampling(const std::string& s) {
  if (s == "iid") return TimeSampling::kIid;
  if (s == "low-discrepancy" || s == "ld") return TimeSampling::kLowDiscrepancy;
  throw std::invalid_argument("unknown time sampling mode: " + s);
}

double TimeSampler::stratified(std::size_t i, std::size_t n, double u) {
  return (static_cast<double>(i) + u) / static_cast<double>(n);
}

std::vector<double> TimeSampler::sample(std::size_t n, RandomStream& rng) const {
  if (n == 0) throw std::invalid_argument("sample_times: n must be >= 1");
  std::vector<double> t(n);
  if (mode_ == TimeSampling::kLowDiscrepancy) {
    const double u = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) t[i] = stratified(i, n, u);
  } else {
    for (double& v : t) v = rng.uniform();
  }
  return t;
}

namespace {

void validate(const LossProblem& p, std::size_t n) {
  if (n == 0) throw std::invalid_argument("weighted_loss_mc: n must be >= 1");
  if (!p.model || !p.data) throw std::invalid_argument("weighted_loss_mc: model and data source are required");
  if (!p.schedule) throw std::invalid_argument("weighted_loss_mc: schedule is required");
  if (!std::isfinite(p.schedule.lambda_min()) || !std::isfinite(p.schedule.lambda_max()))
    throw std::invalid_argument("weighted_loss_mc: schedule must be truncated to finite endpoints");
  if (p.model->dim() != p.data->dim()) throw std::invalid_argument("weighted_loss_mc: model/data dimension mismatch");
}

double time_offset(std::uint64_t seed) {
  RandomStream r(seed, Stream::kTimes, 0);
  return r.uniform();
}

LossEstimate summarize(std::vector<double> vals, bool keep) {
  LossEstimate e;
  e.n = vals.size();
  e.mean = pairwise_sum(vals) / static_cast<double>(e.n);
  if (e.n > 1) {
    std::vector<double> sq(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) sq[i] = (vals[i] - e.mean) * (vals[i] - e.mean);
    e.std_error = std::sqrt(pairwise_sum(sq) / static_cast<double>(e.n - 1) / static_cast<double>(e.n));
  }
  if (keep) e.per_sample = std::move(vals);
  return e;
}

}  // namespace

DrawResult loss_draw(const LossProblem& p, std::size_t j, std::size_t n, double offset, std::uint64_t seed,
                     const EstimatorOptions& opts) {
  double t;
  if (opts.times == TimeSampling::kLowDiscrepancy) {
    t = TimeSampler::stratified(j, n, offset);
  } else {
    RandomStream tr(seed, Stream::kTimes, j + 1);
    t = tr.uniform();
  }
  return loss_draw_at(p, j, t, seed, opts);
}

DrawResult loss_draw_at(const LossProblem& p, std::size_t j, double t, std::uint64_t seed,
                        const EstimatorOptions& opts) {
  const LogSnr lambda = p.schedule.forward(t);
  const double dens = p.schedule.density(lambda);
  if (!(dens > 0.0)) throw std::logic_error("weighted_loss_mc: p(lambda) = 0 at a sampled lambda");

  const std::size_t d = p.data->dim();
  Sample s;
  s.lambda = lambda;
  s.x.resize(d);
  s.eps.resize(d);
  s.z.resize(d);
  RandomStream data(seed, Stream::kData, j), noise(seed, Stream::kNoise, j);
  p.data->sample(data, s.x);
  for (double& e : s.eps) e = noise.normal();
  const double a = p.proc.alpha(lambda), sg = p.proc.sigma(lambda);
  // z is rounded; the target noise is the one that exactly realizes the rounded z,
  // eps - r / sigma with r = (a x + sg eps) - z recovered error-free.
  for (std::size_t i = 0; i < d; ++i) {
    const double px = a * s.x[i], ex = std::fma(a, s.x[i], -px);
    const double pe = sg * s.eps[i], ee = std::fma(sg, s.eps[i], -pe);
    const double z = px + pe;
    const double bv = z - px, es = (px - (z - bv)) + (pe - bv);
    s.z[i] = z;
    if (sg > 0.0) s.eps[i] -= (ex + ee + es) / sg;
  }

  std::vector<double> eps_hat(d);
  p.model->predict_eps(s.z, lambda, eps_hat);

  double sq = 0.0, mag = 0.0;
  for (std::size_t i = 0; i < d; ++i) mag += s.eps[i] * s.eps[i] + eps_hat[i] * eps_hat[i];
  if (opts.residual == PredictionKind::kEps) {
    for (std::size_t i = 0; i < d; ++i) sq += (s.eps[i] - eps_hat[i]) * (s.eps[i] - eps_hat[i]);
  } else {
    const auto target = prediction_target(s, opts.residual, p.proc, opts.sigma_data);
    const auto pred = convert_prediction(eps_hat, PredictionKind::kEps, opts.residual, s.z, lambda, p.proc,
                                         opts.sigma_data);
    for (std::size_t i = 0; i < d; ++i) sq += (target[i] - pred[i]) * (target[i] - pred[i]);
    sq *= loss_equivalence_factor(opts.residual, PredictionKind::kEps, lambda, p.proc, opts.sigma_data);
  }
  const double ratio = 0.5 * p.weighting(lambda) / dens;
  return {t, lambda, ratio * sq, sq, ratio * mag};
}

namespace {

// Times for all draws of one estimate. iid times are sorted: the draws are
// exchangeable, so this leaves the estimator's distribution unchanged, but draw j
// of an iid run then sits near draw j of a low-discrepancy run with the same seed.
std::vector<double> batch_times(std::size_t n, std::uint64_t seed, TimeSampling mode) {
  std::vector<double> t(n);
  if (mode == TimeSampling::kLowDiscrepancy) {
    const double u = time_offset(seed);
    for (std::size_t j = 0; j < n; ++j) t[j] = TimeSampler::stratified(j, n, u);
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      RandomStream tr(seed, Stream::kTimes, j + 1);
      t[j] = tr.uniform();
    }
    std::sort(t.begin(), t.end());
  }
  return t;
}

}  // namespace

LossEstimate weighted_loss_mc(const LossProblem& p, std::size_t n, std::uint64_t seed, const EstimatorOptions& opts) {
  validate(p, n);
  const auto times = batch_times(n, seed, opts.times);
  std::vector<double> vals(n);
  const auto m = static_cast<std::ptrdiff_t>(n);
  // Exceptions cannot cross the parallel region; capture the first one and rethrow.
  std::exception_ptr err;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < m; ++j) {
    try {
      const auto jj = static_cast<std::size_t>(j);
      vals[jj] = loss_draw_at(p, jj, times[jj], seed, opts).value;
    } catch (...) {
#pragma omp critical(wdl_estimator_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return summarize(std::move(vals), opts.keep_per_sample);
}

LossEstimate weighted_loss_mc_serial(const LossProblem& p, std::size_t n, std::uint64_t seed,
                                     const EstimatorOptions& opts) {
  validate(p, n);
  const auto times = batch_times(n, seed, opts.times);
  std::vector<double> vals(n);
  for (std::size_t j = 0; j < n; ++j) vals[j] = loss_draw_at(p, j, times[j], seed, opts).value;
  return summarize(std::move(vals), opts.keep_per_sample);
}

LossEstimate elbo_mc(const Denoiser& model, const DataSource& data, const NoiseSchedule& schedule,
                     const ForwardProcess& proc, std::size_t n, std::uint64_t seed, const EstimatorOptions& opts) {
  LossProblem p;
  p.model = &model;
  p.data = &data;
  p.schedule = schedule;
  p.weighting = make_weighting("elbo");
  p.proc = proc;
  return weighted_loss_mc(p, n, seed, opts);
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("sample_variance: need >= 2 values");
  const double mean = pairwise_sum(v) / static_cast<double>(v.size());
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
  return pairwise_sum(sq) / static_cast<double>(v.size() - 1);
}

namespace {

double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

// Upper 5% point of Student's t with nu degrees of freedom (Cornish-Fisher expansion).
double t_crit_95(double nu) {
  const double z = 1.6448536269514722;
  const double z3 = z * z * z, z5 = z3 * z * z;
  return z + (z3 + z) / (4 * nu) + (5 * z5 + 16 * z3 + 3 * z) / (96 * nu * nu);
}

}  // namespace

VarianceReport variance_with_ci(const std::string& config, std::vector<double> values, std::uint64_t seed) {
  if (values.size() < 2) throw std::invalid_argument("estimator_variance: need >= 2 repeats");
  VarianceReport r;
  r.config = config;
  r.variance = sample_variance(values);
  std::vector<double> boot(kBootstrapResamples), tmp(values.size());
  for (std::size_t b = 0; b < kBootstrapResamples; ++b) {
    RandomStream rng(seed, Stream::kBootstrap, b);
    for (double& v : tmp) v = values[rng.below(values.size())];
    boot[b] = sample_variance(tmp);
  }
  std::sort(boot.begin(), boot.end());
  r.ci_lo = quantile_sorted(boot, 0.025);
  r.ci_hi = quantile_sorted(boot, 0.975);
  r.means = std::move(values);
  return r;
}

VarianceReport estimator_variance(const std::string& config, const std::function<LossEstimate(std::uint64_t)>& estimate,
                                  std::size_t repeats, std::uint64_t seed) {
  if (repeats < 2) throw std::invalid_argument("estimator_variance: repeats must be >= 2");
  std::vector<double> means(repeats);
  for (std::size_t r = 0; r < repeats; ++r) means[r] = estimate(derive_seed(seed, r)).mean;
  return variance_with_ci(config, std::move(means), derive_seed(seed, 0xB007));
}

VarianceComparison compare_variance(std::span<const double> a, std::span<const double> b, std::uint64_t seed) {
  if (a.size() != b.size() || a.size() < 3) throw std::invalid_argument("compare_variance: need >= 3 paired values");
  const std::size_t n = a.size();
  VarianceComparison c;
  c.ratio = sample_variance(a) / sample_variance(b);

  std::vector<double> ratios(kBootstrapResamples), ta(n), tb(n);
  for (std::size_t r = 0; r < kBootstrapResamples; ++r) {
    RandomStream rng(seed, Stream::kBootstrap, r);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = rng.below(n);
      ta[i] = a[k];
      tb[i] = b[k];
    }
    ratios[r] = sample_variance(ta) / sample_variance(tb);
  }
  std::sort(ratios.begin(), ratios.end());
  c.ratio_upper95 = quantile_sorted(ratios, 0.95);

  // Pitman-Morgan: var(a) = var(b) iff corr(a - b, a + b) = 0.
  std::vector<double> d(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    s[i] = a[i] + b[i];
  }
  const double md = pairwise_sum(d) / static_cast<double>(n), ms = pairwise_sum(s) / static_cast<double>(n);
  double sdd = 0, sss = 0, sds = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sdd += (d[i] - md) * (d[i] - md);
    sss += (s[i] - ms) * (s[i] - ms);
    sds += (d[i] - md) * (s[i] - ms);
  }
  const double r = sds / std::sqrt(sdd * sss);
  const double nu = static_cast<double>(n - 2);
  c.pitman_morgan_t = r * std::sqrt(nu) / std::sqrt(std::max(1e-300, 1.0 - r * r));
  c.a_smaller = c.ratio_upper95 < 1.0 && c.pitman_morgan_t < -t_crit_95(nu);
  return c;
}

void fit_adaptive_schedule(const LossProblem& problem, AdaptiveScheduleState& state, std::size_t iterations,
                           std::size_t batch, std::uint64_t seed) {
  if (batch == 0) throw std::invalid_argument("fit_adaptive_schedule: batch must be >= 1");
  LossProblem p = problem;
  std::vector<DrawResult> draws(batch);
  for (std::size_t k = 0; k < iterations; ++k) {
    p.schedule = adaptive_schedule(state);
    const std::uint64_t s = derive_seed(seed, k);
    const double u = RandomStream(s, Stream::kTimes, 0).uniform();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(batch); ++j) {
      const auto jj = static_cast<std::size_t>(j);
      draws[jj] = loss_draw_at(p, jj, TimeSampler::stratified(jj, batch, u), s, {});
    }
    for (const auto& d : draws) state.update(d.lambda, p.weighting(d.lambda) * d.sq_error);
  }
}

BinBalance adaptive_bin_balance(const AdaptiveScheduleState& state, const Weighting& w,
                                const std::function<double(LogSnr)>& mse, double occupied_tol, std::size_t nodes) {
  if (nodes == 0) throw std::invalid_argument("adaptive_bin_balance: nodes must be >= 1");
  const auto sched = adaptive_schedule(state);
  const auto& e = state.bin_edges();
  const std::size_t nb = AdaptiveScheduleState::kBins;
  BinBalance out;
  out.ratio.resize(nb);
  out.occupied.resize(nb);
  std::vector<double> occ;
  for (std::size_t b = 0; b < nb; ++b) {
    const double h = (e[b + 1] - e[b]) / static_cast<double>(nodes);
    const double p = sched.density(state.bin_center(b));
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes; ++i) {
      const double l = e[b] + (static_cast<double>(i) + 0.5) * h;
      acc += w(l) * mse(l);
    }
    out.ratio[b] = acc / static_cast<double>(nodes) / p;
    out.occupied[b] = state.init_residual(b) <= occupied_tol * state.ema()[b];
    if (out.occupied[b]) occ.push_back(out.ratio[b]);
  }
  out.n_occupied = occ.size();
  if (occ.size() >= 2) {
    double m = 0.0;
    for (double r : occ) m += r;
    m /= static_cast<double>(occ.size());
    out.cv = std::sqrt(sample_variance(occ)) / m;
  }
  return out;
}

}  // namespace wdl
