#pragma once

#include <span>
#include <string>
#include <vector>

#include "wdl/schedules.hpp"

namespace wdl {

enum class ProcessKind { kVP, kVE };

/// Gaussian forward process z = alpha_lambda x + sigma_lambda eps.
class ForwardProcess {
 public:
  explicit ForwardProcess(ProcessKind kind = ProcessKind::kVP) : kind_(kind) {}
  static ForwardProcess vp() { return ForwardProcess(ProcessKind::kVP); }
  static ForwardProcess ve() { return ForwardProcess(ProcessKind::kVE); }

  ProcessKind kind() const { return kind_; }
  double alpha(LogSnr lambda) const;
  double sigma(LogSnr lambda) const;
  double alpha2(LogSnr lambda) const;
  double sigma2(LogSnr lambda) const;
  /// Variance of the terminal prior p(z_1) = N(0, v I) at lambda_min.
  double prior_variance(LogSnr lambda_min) const;

 private:
  ProcessKind kind_;
};

enum class PredictionKind { kEps, kX, kV, kScore, kF, kO };

inline constexpr PredictionKind kAllPredictionKinds[] = {PredictionKind::kEps, PredictionKind::kX,
                                                         PredictionKind::kV,   PredictionKind::kScore,
                                                         PredictionKind::kF,   PredictionKind::kO};

std::string to_string(PredictionKind kind);
PredictionKind parse_prediction_kind(const std::string& s);

inline constexpr double kDefaultSigmaData = 0.5;

struct Sample {
  std::vector<double> x;
  std::vector<double> eps;
  LogSnr lambda = 0.0;
  std::vector<double> z;
};

/// Throws std::invalid_argument on dimension mismatch.
Sample diffuse(std::span<const double> x, LogSnr lambda, std::span<const double> eps, const ForwardProcess& proc);

/// Exact affine conversion between parameterizations at fixed (z, lambda).
/// Throws std::domain_error when alpha or sigma vanishes for a conversion that
/// divides by it, or when sigma_data <= 0 for F.
std::vector<double> convert_prediction(std::span<const double> value, PredictionKind from, PredictionKind to,
                                       std::span<const double> z, LogSnr lambda, const ForwardProcess& proc,
                                       double sigma_data = kDefaultSigmaData);

/// Ground-truth target of a parameterization for a given sample.
std::vector<double> prediction_target(const Sample& s, PredictionKind kind, const ForwardProcess& proc,
                                      double sigma_data = kDefaultSigmaData);

/// c such that ||a - a_hat||^2 in `to` equals c * ||a - a_hat||^2 in `from`
/// for any prediction error at this lambda, e.g. X -> EPS gives e^lambda.
double loss_equivalence_factor(PredictionKind from, PredictionKind to, LogSnr lambda, const ForwardProcess& proc,
                               double sigma_data = kDefaultSigmaData);

struct SdeCoefficients {
  double drift_coeff;  ///< f(z, t) = drift_coeff * z
  double diffusion2;   ///< g(t)^2
};

SdeCoefficients sde_coefficients(LogSnr lambda, double dlambda_dt, const ForwardProcess& proc);

}  // namespace wdl
