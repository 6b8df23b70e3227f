#include "wdl/weightings.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wdl/numerics.hpp"

namespace wdl {

namespace {

constexpr double kEdmMean = 2.4;
constexpr double kEdmSd = 2.4;
constexpr double kEdmSigmaData = 0.5;

double edm_weight(LogSnr l) {
  return normal_pdf(l, kEdmMean, kEdmSd) * (std::exp(-l) + kEdmSigmaData * kEdmSigmaData);
}

std::optional<double> parse_sigmoid_suffix(const std::string& name) {
  static const std::string prefix = "sigmoid-";
  if (name.rfind(prefix, 0) != 0 || name == "sigmoid-k") return std::nullopt;
  const std::string rest = name.substr(prefix.size());
  try {
    std::size_t used = 0;
    const double k = std::stod(rest, &used);
    if (used == rest.size()) return k;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

}  // namespace

double Weighting::derivative(LogSnr lambda) const {
  const double h = 1e-5 * std::max(1.0, std::fabs(lambda));
  for (double kink : kinks_) {
    if (std::fabs(lambda - kink) < 2.0 * h) {
      if (lambda >= kink) return (-3.0 * eval_(lambda) + 4.0 * eval_(lambda + h) - eval_(lambda + 2 * h)) / (2 * h);
      return (3.0 * eval_(lambda) - 4.0 * eval_(lambda - h) + eval_(lambda - 2 * h)) / (2 * h);
    }
  }
  return (eval_(lambda + h) - eval_(lambda - h)) / (2.0 * h);
}

std::vector<std::string> weighting_names() {
  return {"elbo", "iddpm", "edm", "vpred-cosine", "fm-ot", "indi",
          "p2",   "min-snr", "sigmoid-k", "edm-monotonic", "five-bit-like"};
}

Weighting make_weighting(const std::string& name, const WeightingParams& params) {
  if (name == "elbo") return Weighting(name, [](LogSnr) { return 1.0; }, true);
  if (name == "iddpm") return Weighting(name, [](LogSnr l) { return sech(0.5 * l); }, false);
  if (name == "edm") return Weighting(name, edm_weight, false);
  if (name == "vpred-cosine" || name == "fm-ot")
    return Weighting(name, [](LogSnr l) { return std::exp(-0.5 * l); }, true);
  if (name == "indi")
    return Weighting(name, [](LogSnr l) {
      const double s = sech(0.25 * l);
      return std::exp(-l) * s * s;
    }, true);
  if (name == "p2") {
    const double k = params.k.value_or(1.0);
    const double gamma = params.gamma.value_or(1.0);
    if (!(gamma >= 0.0)) throw std::invalid_argument("p2: gamma must be >= 0");
    if (!(k > 0.0)) throw std::invalid_argument("p2: k must be > 0");
    return Weighting(name, [k, gamma](LogSnr l) {
      // sech(l/2) / (k + e^l)^gamma, in log space for large l.
      const double log_denominator = (l > 0.0) ? l + std::log1p(k * std::exp(-l)) : std::log(k + std::exp(l));
      return sech(0.5 * l) * std::exp(-gamma * log_denominator);
    }, false);
  }
  if (name == "min-snr") {
    const double gamma = params.gamma.value_or(5.0);
    if (!(gamma > 0.0)) throw std::invalid_argument("min-snr: gamma must be > 0");
    return Weighting(name, [gamma](LogSnr l) {
      return sech(0.5 * l) * std::min(1.0, gamma * std::exp(-l));
    }, false, {std::log(gamma)});
  }
  if (name == "sigmoid-k" || parse_sigmoid_suffix(name)) {
    const auto k = name == "sigmoid-k" ? params.k : parse_sigmoid_suffix(name);
    if (!k) throw std::invalid_argument("sigmoid-k: missing required parameter k");
    const double kk = *k;
    return Weighting(name, [kk](LogSnr l) { return sigmoid(-l + kk); }, true);
  }
  if (name == "edm-monotonic") return monotonize_edm(make_weighting("edm"));
  if (name == "five-bit-like")
    return Weighting(name, [](LogSnr l) { return normal_cdf(-2.0 * (l - 8.4)); }, true);
  throw std::invalid_argument("unknown weighting: " + name);
}

LogSnr weighting_argmax(const Weighting& w, LogSnr lo, LogSnr hi, double tol) {
  const LogSnr x = golden_section_argmax([&w](double l) { return w(l); }, lo, hi, tol);
  // Golden section only resolves a flat maximum to ~sqrt(eps). Where the slope
  // changes sign around x, bisect on its central-difference sign instead.
  const double scale = std::max(1.0, std::fabs(x)), h = 1e-5 * scale;
  auto slope = [&](double l) { return w(l + h) - w(l - h); };
  double a = std::max(lo, x - 1e-6 * scale), b = std::min(hi, x + 1e-6 * scale);
  if (!(slope(a) > 0.0 && slope(b) < 0.0)) return x;
  for (int i = 0; i < 200 && b - a > 1e-15 * scale; ++i) {
    const double m = 0.5 * (a + b);
    (slope(m) > 0.0 ? a : b) = m;
  }
  return 0.5 * (a + b);
}

Weighting monotonize_edm(const Weighting& edm) {
  const LogSnr peak = weighting_argmax(edm, -20.0, 20.0, 1e-10);
  const double peak_value = edm(peak);
  auto base = edm;
  std::vector<LogSnr> kinks = edm.kinks();
  kinks.push_back(peak);
  return Weighting("edm-monotonic", [base, peak, peak_value](LogSnr l) {
    return l < peak ? peak_value : base(l);
  }, true, std::move(kinks), edm.shift());
}

Weighting shift_weighting(const Weighting& w, double resolution) {
  if (!(resolution > 0.0)) throw std::invalid_argument("shift_weighting: resolution must be > 0");
  const double s = std::log(64.0 / resolution);
  if (s == 0.0) return w;
  std::vector<LogSnr> kinks;
  for (LogSnr k : w.kinks()) kinks.push_back(k + 2.0 * s);
  auto base = w;
  return Weighting(w.name(), [base, s](LogSnr l) { return base(l - 2.0 * s); }, w.declared_monotonic(),
                   std::move(kinks), w.shift() + s);
}

bool is_monotonic(const Weighting& w, std::span<const LogSnr> grid) {
  if (grid.size() < 2) throw std::invalid_argument("is_monotonic: grid needs >= 2 points");
  double prev = w(grid[0]);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("is_monotonic: grid must be strictly increasing");
    const double cur = w(grid[i]);
    if (cur > prev * (1.0 + 1e-12)) return false;
    prev = cur;
  }
  return true;
}

}  // namespace wdl
