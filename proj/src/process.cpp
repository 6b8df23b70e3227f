#include "wdl/process.hpp"

#include <cmath>
#include <stdexcept>

#include "wdl/numerics.hpp"

namespace wdl {

double ForwardProcess::alpha2(LogSnr lambda) const { return kind_ == ProcessKind::kVP ? sigmoid(lambda) : 1.0; }

double ForwardProcess::sigma2(LogSnr lambda) const {
  return kind_ == ProcessKind::kVP ? sigmoid(-lambda) : std::exp(-lambda);
}

double ForwardProcess::alpha(LogSnr lambda) const { return std::sqrt(alpha2(lambda)); }
double ForwardProcess::sigma(LogSnr lambda) const { return std::sqrt(sigma2(lambda)); }

double ForwardProcess::prior_variance(LogSnr lambda_min) const {
  return kind_ == ProcessKind::kVP ? 1.0 : std::exp(-lambda_min);
}

std::string to_string(PredictionKind kind) {
  switch (kind) {
    case PredictionKind::kEps: return "eps";
    case PredictionKind::kX: return "x";
    case PredictionKind::kV: return "v";
    case PredictionKind::kScore: return "score";
    case PredictionKind::kF: return "F";
    case PredictionKind::kO: return "o";
  }
  return "?";
}

PredictionKind parse_prediction_kind(const std::string& s) {
  for (PredictionKind k : kAllPredictionKinds)
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown prediction kind: " + s);
}

Sample diffuse(std::span<const double> x, LogSnr lambda, std::span<const double> eps, const ForwardProcess& proc) {
  if (x.size() != eps.size()) throw std::invalid_argument("diffuse: x and eps dimensions differ");
  Sample s{{x.begin(), x.end()}, {eps.begin(), eps.end()}, lambda, std::vector<double>(x.size())};
  const double a = proc.alpha(lambda), sg = proc.sigma(lambda);
  for (std::size_t i = 0; i < x.size(); ++i) s.z[i] = a * x[i] + sg * eps[i];
  return s;
}

namespace {

struct Coefs {
  double alpha, sigma, sigma_data;
  LogSnr lambda;
};

// x = c_skip z + c_out F.
double f_skip(const Coefs& c) {
  const double sd2 = c.sigma_data * c.sigma_data;
  return sd2 * c.alpha / (std::exp(-c.lambda) + sd2);
}
double f_out(const Coefs& c) {
  const double sd2 = c.sigma_data * c.sigma_data;
  return std::exp(-0.5 * c.lambda) * c.sigma_data / std::sqrt(std::exp(-c.lambda) + sd2);
}

void require_nonzero(double v, const char* what) {
  if (!(v > 0.0)) throw std::domain_error(std::string("convert_prediction: ") + what + " is zero at this lambda");
}

// Everything routes through eps-hat.
double to_eps(double v, PredictionKind from, double z, const Coefs& c) {
  switch (from) {
    case PredictionKind::kEps: return v;
    case PredictionKind::kX: require_nonzero(c.sigma, "sigma"); return (z - c.alpha * v) / c.sigma;
    case PredictionKind::kV: return (c.alpha * v + c.sigma * z) / (c.alpha * c.alpha + c.sigma * c.sigma);
    case PredictionKind::kScore: return -c.sigma * v;
    case PredictionKind::kF: {
      require_nonzero(c.sigma, "sigma");
      const double x = f_skip(c) * z + f_out(c) * v;
      return (z - c.alpha * x) / c.sigma;
    }
    case PredictionKind::kO: {
      const double x = (z + c.sigma * v) / (c.alpha + c.sigma);
      return x - v;
    }
  }
  return 0.0;
}

double from_eps(double eps, PredictionKind to, double z, const Coefs& c) {
  switch (to) {
    case PredictionKind::kEps: return eps;
    case PredictionKind::kX: require_nonzero(c.alpha, "alpha"); return std::fma(-c.sigma, eps, z) / c.alpha;
    case PredictionKind::kV: {
      require_nonzero(c.alpha, "alpha");
      const double x = std::fma(-c.sigma, eps, z) / c.alpha;
      return c.alpha * eps - c.sigma * x;
    }
    case PredictionKind::kScore: require_nonzero(c.sigma, "sigma"); return -eps / c.sigma;
    case PredictionKind::kF: {
      require_nonzero(c.alpha, "alpha");
      const double x = std::fma(-c.sigma, eps, z) / c.alpha;
      return (x - f_skip(c) * z) / f_out(c);
    }
    case PredictionKind::kO: {
      require_nonzero(c.alpha, "alpha");
      const double x = std::fma(-c.sigma, eps, z) / c.alpha;
      return x - eps;
    }
  }
  return 0.0;
}

// k such that ||eps - eps_hat||^2 = k * ||a - a_hat||^2 for parameterization a.
double eps_factor(PredictionKind kind, LogSnr lambda, const ForwardProcess& proc, double sigma_data) {
  const double a2 = proc.alpha2(lambda), s2 = proc.sigma2(lambda);
  switch (kind) {
    case PredictionKind::kEps: return 1.0;
    case PredictionKind::kX: return a2 / s2;
    case PredictionKind::kV: return a2 / ((a2 + s2) * (a2 + s2));
    case PredictionKind::kScore: return s2;
    case PredictionKind::kF: return 1.0 / (std::exp(-lambda) / (sigma_data * sigma_data) + 1.0);
    case PredictionKind::kO: {
      // o - o_hat = (x - x_hat)(1 + alpha / sigma)
      const double ratio = std::sqrt(a2 / s2);
      return (ratio * ratio) / ((1.0 + ratio) * (1.0 + ratio));
    }
  }
  return 1.0;
}

}  // namespace

std::vector<double> convert_prediction(std::span<const double> value, PredictionKind from, PredictionKind to,
                                       std::span<const double> z, LogSnr lambda, const ForwardProcess& proc,
                                       double sigma_data) {
  if (value.size() != z.size()) throw std::invalid_argument("convert_prediction: dimension mismatch");
  if ((from == PredictionKind::kF || to == PredictionKind::kF) && !(sigma_data > 0.0))
    throw std::domain_error("convert_prediction: sigma_data must be > 0 for F");
  const Coefs c{proc.alpha(lambda), proc.sigma(lambda), sigma_data, lambda};
  std::vector<double> out(value.size());
  for (std::size_t i = 0; i < value.size(); ++i) out[i] = from_eps(to_eps(value[i], from, z[i], c), to, z[i], c);
  return out;
}

std::vector<double> prediction_target(const Sample& s, PredictionKind kind, const ForwardProcess& proc,
                                      double sigma_data) {
  if (s.x.size() != s.eps.size() || s.x.size() != s.z.size())
    throw std::invalid_argument("prediction_target: dimension mismatch");
  if (kind == PredictionKind::kF && !(sigma_data > 0.0))
    throw std::domain_error("prediction_target: sigma_data must be > 0 for F");
  const Coefs c{proc.alpha(s.lambda), proc.sigma(s.lambda), sigma_data, s.lambda};
  std::vector<double> out(s.x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = s.x[i], e = s.eps[i];
    switch (kind) {
      case PredictionKind::kEps: out[i] = e; break;
      case PredictionKind::kX: out[i] = x; break;
      case PredictionKind::kV: out[i] = c.alpha * e - c.sigma * x; break;
      case PredictionKind::kScore: require_nonzero(c.sigma, "sigma"); out[i] = -e / c.sigma; break;
      case PredictionKind::kF: out[i] = (x - f_skip(c) * s.z[i]) / f_out(c); break;
      case PredictionKind::kO: out[i] = x - e; break;
    }
  }
  return out;
}

double loss_equivalence_factor(PredictionKind from, PredictionKind to, LogSnr lambda, const ForwardProcess& proc,
                               double sigma_data) {
  if ((from == PredictionKind::kF || to == PredictionKind::kF) && !(sigma_data > 0.0))
    throw std::domain_error("loss_equivalence_factor: sigma_data must be > 0 for F");
  const double kf = eps_factor(from, lambda, proc, sigma_data);
  const double kt = eps_factor(to, lambda, proc, sigma_data);
  if (!(kt > 0.0) || !std::isfinite(kf) || !std::isfinite(kt))
    throw std::domain_error("loss_equivalence_factor: degenerate at this lambda");
  return kf / kt;
}

SdeCoefficients sde_coefficients(LogSnr lambda, double dlambda_dt, const ForwardProcess& proc) {
  if (proc.kind() == ProcessKind::kVP) {
    const double g2 = -dlambda_dt * sigmoid(-lambda);
    return {-0.5 * g2, g2};
  }
  return {0.0, -dlambda_dt * std::exp(-lambda)};
}

}  // namespace wdl
