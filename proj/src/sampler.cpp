#include "wdl/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>

#include "wdl/rng.hpp"

namespace wdl {

SamplerKind parse_sampler_kind(const std::string& s) {
  if (s == "ddpm") return SamplerKind::kDdpm;
  if (s == "ode-euler") return SamplerKind::kOdeEuler;
  if (s == "ode-heun") return SamplerKind::kOdeHeun;
  if (s == "sde-euler") return SamplerKind::kSdeEuler;
  throw std::invalid_argument("unknown sampler: " + s);
}

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kDdpm: return "ddpm";
    case SamplerKind::kOdeEuler: return "ode-euler";
    case SamplerKind::kOdeHeun: return "ode-heun";
    case SamplerKind::kSdeEuler: return "sde-euler";
  }
  return "?";
}

namespace {

// The dynamics in lambda: per unit increase of lambda the reverse process has
// drift a z + b s (SDE) or a z + b s / 2 (ODE) and noise variance b, where
// a = d log(alpha) / d lambda and b = -g^2 / (dlambda/dt).
struct LambdaCoefs {
  double a, b;
};

LambdaCoefs coefs(LogSnr lambda, const ForwardProcess& proc) {
  const auto c = sde_coefficients(lambda, -1.0, proc);
  return {-c.drift_coeff, c.diffusion2};
}

struct Grid {
  std::vector<double> t;
  std::vector<LogSnr> lambda;  // lambda[k] at t[k]; k = 0 is t = 1
};

Grid make_grid(const SamplerConfig& cfg, std::size_t dim, const ScoreSource& score) {
  if (cfg.steps < 1) throw std::invalid_argument("sampler: steps must be >= 1");
  if (!cfg.schedule || !std::isfinite(cfg.schedule.lambda_min()) || !std::isfinite(cfg.schedule.lambda_max()))
    throw std::invalid_argument("sampler: schedule must be truncated");
  if (dim != score.dim()) throw std::invalid_argument("sampler: dimension mismatch");
  Grid g;
  const std::size_t n = cfg.steps;
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(n - k) / static_cast<double>(n);
    g.t.push_back(t);
    g.lambda.push_back(k == 0 ? cfg.schedule.lambda_min() : (k == n ? cfg.schedule.lambda_max()
                                                                     : cfg.schedule.forward(t)));
  }
  for (std::size_t k = 1; k <= n; ++k)
    if (!(g.lambda[k] > g.lambda[k - 1])) throw std::invalid_argument("sampler: lambda grid is not increasing");
  return g;
}

void check_finite(std::span<const double> z, std::size_t step) {
  for (double v : z)
    if (!std::isfinite(v)) throw std::runtime_error("sampler: non-finite state at step " + std::to_string(step));
}

template <class Chain>
SampleResult run_chains(const ScoreSource& score, const SamplerConfig& cfg, std::size_t n, std::uint64_t seed,
                        bool keep_trajectory, Chain&& chain) {
  const std::size_t d = score.dim();
  const Grid grid = make_grid(cfg, d, score);
  SampleResult out;
  out.dim = d;
  out.samples.assign(n * d, 0.0);
  const double prior_sd = std::sqrt(cfg.proc.prior_variance(grid.lambda.front()));
  std::exception_ptr err;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      RandomStream init(seed, Stream::kPrior, static_cast<std::uint64_t>(i));
      RandomStream noise(seed, Stream::kSampler, static_cast<std::uint64_t>(i));
      std::vector<double> z(d);
      for (double& v : z) v = prior_sd * init.normal();
      Trajectory* traj = nullptr;
      Trajectory local;
      if (keep_trajectory && i == 0) traj = &local;
      if (traj) traj->push_back({grid.t[0], grid.lambda[0], z});
      chain(grid, z, noise, traj);
      std::copy(z.begin(), z.end(), out.samples.begin() + i * static_cast<std::ptrdiff_t>(d));
      if (traj) out.trajectory = std::move(local);
    } catch (...) {
#pragma omp critical(wdl_sampler_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

void scale_by_inverse_alpha(std::vector<double>& z, LogSnr lambda, const ForwardProcess& proc) {
  const double a = proc.alpha(lambda);
  for (double& v : z) v /= a;
}

}  // namespace

SampleResult sample_ddpm(const ScoreSource& score, const SamplerConfig& cfg, std::size_t n, std::uint64_t seed,
                         bool keep_trajectory) {
  if (cfg.proc.kind() != ProcessKind::kVP) throw std::invalid_argument("sample_ddpm: VP process required");
  const std::size_t d = score.dim();
  const auto& proc = cfg.proc;
  auto res = run_chains(score, cfg, n, seed, keep_trajectory, [&](const Grid& g, std::vector<double>& z,
                                                                  RandomStream& rng, Trajectory* traj) {
    std::vector<double> s(d);
    const std::size_t steps = g.t.size() - 1;
    for (std::size_t k = 0; k < steps; ++k) {
      const LogSnr lt = g.lambda[k], ls = g.lambda[k + 1];
      score.score(z, lt, s);
      const double at = proc.alpha(lt), st2 = proc.sigma2(lt);
      // x_hat from eps_hat = -sigma s
      std::vector<double> xhat(d);
      for (std::size_t j = 0; j < d; ++j) xhat[j] = (z[j] + st2 * s[j]) / at;
      if (k + 1 == steps) {
        z = xhat;
      } else {
        const double as = proc.alpha(ls), ss2 = proc.sigma2(ls);
        const double ats = at / as;
        // sigma_{t|s}^2 = sigma_t^2 - alpha_{t|s}^2 sigma_s^2 = sigma_t^2 (1 - e^{lt - ls})
        const double r = -std::expm1(lt - ls);
        const double var_ts = st2 * r;
        const double c_z = ats * ss2 / st2, c_x = as * var_ts / st2;
        const double post_sd = std::sqrt(ss2 * r);
        for (std::size_t j = 0; j < d; ++j) z[j] = c_z * z[j] + c_x * xhat[j] + post_sd * rng.normal();
      }
      check_finite(z, k + 1);
      if (traj) traj->push_back({g.t[k + 1], ls, z});
    }
  });
  if (cfg.schedule.lambda_max() < 10.0)
    res.warnings.push_back("lambda_max < 10: the final state is a coarse stand-in for x");
  return res;
}

SampleResult sample_ode(const ScoreSource& score, const SamplerConfig& cfg, std::size_t n, std::uint64_t seed,
                        bool keep_trajectory) {
  if (cfg.kind != SamplerKind::kOdeEuler && cfg.kind != SamplerKind::kOdeHeun)
    throw std::invalid_argument("sample_ode: kind must be ode-euler or ode-heun");
  const bool heun = cfg.kind == SamplerKind::kOdeHeun;
  const std::size_t d = score.dim();
  const auto& proc = cfg.proc;
  const Churn& ch = cfg.churn;
  const bool churn = heun && ch.s_churn > 0.0;
  auto res = run_chains(score, cfg, n, seed, keep_trajectory, [&](const Grid& g, std::vector<double>& z,
                                                                  RandomStream& rng, Trajectory* traj) {
    std::vector<double> s(d), d1(d), ze(d);
    auto slope = [&](const std::vector<double>& x, LogSnr l, std::vector<double>& out) {
      score.score(x, l, s);
      const auto c = coefs(l, proc);
      for (std::size_t j = 0; j < d; ++j) out[j] = c.a * x[j] + 0.5 * c.b * s[j];
    };
    const std::size_t steps = g.t.size() - 1;
    for (std::size_t k = 0; k < steps; ++k) {
      LogSnr l0 = g.lambda[k];
      const LogSnr l1 = g.lambda[k + 1];
      if (churn) {
        const double sig_ve = std::exp(-0.5 * l0);
        if (sig_ve >= ch.s_tmin && sig_ve <= ch.s_tmax) {
          const double gamma = std::min(ch.s_churn / static_cast<double>(steps), std::sqrt(2.0) - 1.0);
          const LogSnr lh = l0 - 2.0 * std::log1p(gamma);
          // forward transition q(z_lh | z_l0)
          const double ratio = proc.alpha(lh) / proc.alpha(l0);
          const double var = std::max(0.0, proc.sigma2(lh) - ratio * ratio * proc.sigma2(l0));
          const double sd = ch.s_noise * std::sqrt(var);
          for (std::size_t j = 0; j < d; ++j) z[j] = ratio * z[j] + sd * rng.normal();
          l0 = lh;
        }
      }
      const double h = l1 - l0;
      slope(z, l0, d1);
      for (std::size_t j = 0; j < d; ++j) ze[j] = z[j] + h * d1[j];
      if (heun) {
        std::vector<double> d2(d);
        slope(ze, l1, d2);
        for (std::size_t j = 0; j < d; ++j) z[j] += 0.5 * h * (d1[j] + d2[j]);
      } else {
        z = ze;
      }
      check_finite(z, k + 1);
      if (traj) traj->push_back({g.t[k + 1], l1, z});
    }
    scale_by_inverse_alpha(z, g.lambda.back(), proc);
  });
  return res;
}

SampleResult sample_sde(const ScoreSource& score, const SamplerConfig& cfg, std::size_t n, std::uint64_t seed,
                        bool keep_trajectory) {
  const std::size_t d = score.dim();
  const auto& proc = cfg.proc;
  return run_chains(score, cfg, n, seed, keep_trajectory, [&](const Grid& g, std::vector<double>& z,
                                                             RandomStream& rng, Trajectory* traj) {
    std::vector<double> s(d);
    const std::size_t steps = g.t.size() - 1;
    for (std::size_t k = 0; k < steps; ++k) {
      const LogSnr l0 = g.lambda[k], l1 = g.lambda[k + 1];
      const double h = l1 - l0;
      score.score(z, l0, s);
      const auto c = coefs(l0, proc);
      const double sd = std::sqrt(c.b * h);
      for (std::size_t j = 0; j < d; ++j) z[j] += h * (c.a * z[j] + c.b * s[j]) + sd * rng.normal();
      check_finite(z, k + 1);
      if (traj) traj->push_back({g.t[k + 1], l1, z});
    }
    scale_by_inverse_alpha(z, g.lambda.back(), proc);
  });
}

SampleResult sample(const ScoreSource& score, const SamplerConfig& cfg, std::size_t n, std::uint64_t seed,
                    bool keep_trajectory) {
  switch (cfg.kind) {
    case SamplerKind::kDdpm: return sample_ddpm(score, cfg, n, seed, keep_trajectory);
    case SamplerKind::kOdeEuler:
    case SamplerKind::kOdeHeun: return sample_ode(score, cfg, n, seed, keep_trajectory);
    case SamplerKind::kSdeEuler: return sample_sde(score, cfg, n, seed, keep_trajectory);
  }
  throw std::invalid_argument("sample: unknown sampler kind");
}

double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Integrate |F_a - F_b| over the merged support.
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(a.front(), b.front()), acc = 0.0;
  while (i < a.size() || j < b.size()) {
    const double x = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    acc += std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (x - prev);
    prev = x;
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
  }
  return acc;
}

}  // namespace wdl
