#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wdl/model.hpp"
#include "wdl/process.hpp"
#include "wdl/schedules.hpp"

namespace wdl {

enum class SamplerKind { kDdpm, kOdeEuler, kOdeHeun, kSdeEuler };

SamplerKind parse_sampler_kind(const std::string& s);
std::string to_string(SamplerKind kind);

/// Optional stochasticity for the Heun sampler, in the style of EDM's churn:
/// before a step from lambda_i, noise is raised to sigma_ve (1 + gamma) with
/// gamma = min(s_churn / N, sqrt(2) - 1) when sigma_ve = e^{-lambda/2} lies in
/// [s_tmin, s_tmax]. All zero by default (pure ODE).
struct Churn {
  double s_churn = 0.0;
  double s_tmin = 0.0;
  double s_tmax = std::numeric_limits<double>::infinity();
  double s_noise = 1.0;
};

struct SamplerConfig {
  SamplerKind kind = SamplerKind::kOdeHeun;
  std::size_t steps = 64;
  NoiseSchedule schedule;  ///< truncated; time grid t_i = i / steps, i = steps..0
  Churn churn;
  ForwardProcess proc = ForwardProcess::vp();
};

struct TrajectoryPoint {
  double t;
  LogSnr lambda;
  std::vector<double> z;
};
using Trajectory = std::vector<TrajectoryPoint>;

struct SampleResult {
  std::size_t dim = 0;
  std::vector<double> samples;            ///< n x dim, row-major
  std::optional<Trajectory> trajectory;   ///< chain 0, when requested
  std::vector<std::string> warnings;
};

/// Ancestral sampling with the q-posterior variance; the final step returns the
/// denoiser output x_hat. VP only. Warns when lambda_max < 10.
SampleResult sample_ddpm(const ScoreSource& score, const SamplerConfig& cfg, std::size_t n, std::uint64_t seed,
                         bool keep_trajectory = false);
/// Probability-flow ODE, Euler or Heun (two score evaluations per step), with
/// optional churn for Heun. Returns z_0 / alpha(lambda_max).
SampleResult sample_ode(const ScoreSource& score, const SamplerConfig& cfg, std::size_t n, std::uint64_t seed,
                        bool keep_trajectory = false);
/// Euler-Maruyama on the reverse SDE. Returns z_0 / alpha(lambda_max).
SampleResult sample_sde(const ScoreSource& score, const SamplerConfig& cfg, std::size_t n, std::uint64_t seed,
                        bool keep_trajectory = false);

/// Dispatches on cfg.kind. All samplers throw std::invalid_argument for zero
/// steps, an untruncated schedule or a dimension mismatch, and
/// std::runtime_error (naming the step) on a non-finite state. Chains use
/// substreams (seed, prior, i) and (seed, sampler, i): results are identical
/// for any thread count.
SampleResult sample(const ScoreSource& score, const SamplerConfig& cfg, std::size_t n, std::uint64_t seed,
                    bool keep_trajectory = false);

/// 1-D Wasserstein-1 distance between two empirical distributions.
/// Throws std::invalid_argument when either is empty.
double wasserstein1(std::vector<double> a, std::vector<double> b);

}  // namespace wdl
