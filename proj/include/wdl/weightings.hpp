#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wdl/schedules.hpp"

namespace wdl {

/// A weighting function w(lambda) >= 0 of the weighted diffusion loss.
/// Values are unnormalized; constant factors are never silently rescaled.
class Weighting {
 public:
  Weighting(std::string name, std::function<double(LogSnr)> eval, bool declared_monotonic,
            std::vector<LogSnr> kinks = {}, double shift = 0.0)
      : name_(std::move(name)),
        eval_(std::move(eval)),
        declared_monotonic_(declared_monotonic),
        kinks_(std::move(kinks)),
        shift_(shift) {}

  double operator()(LogSnr lambda) const { return eval_(lambda); }
  const std::string& name() const { return name_; }
  bool declared_monotonic() const { return declared_monotonic_; }
  /// Points where w is continuous but not differentiable.
  const std::vector<LogSnr>& kinks() const { return kinks_; }
  double shift() const { return shift_; }

  /// dw/dlambda by central differences, switching to one-sided differences
  /// next to a kink so the stencil never straddles it.
  double derivative(LogSnr lambda) const;

 private:
  std::string name_;
  std::function<double(LogSnr)> eval_;
  bool declared_monotonic_;
  std::vector<LogSnr> kinks_;
  double shift_;
};

struct WeightingParams {
  std::optional<double> k;      ///< sigmoid-k offset; p2 additive constant (default 1)
  std::optional<double> gamma;  ///< p2 exponent (default 1), min-snr clip (default 5)
};

/// Names: elbo, iddpm, edm, vpred-cosine, fm-ot, indi, p2, min-snr, sigmoid-k,
/// edm-monotonic, five-bit-like. "sigmoid-<k>" (e.g. sigmoid-2) is accepted as
/// shorthand for sigmoid-k with that k.
Weighting make_weighting(const std::string& name, const WeightingParams& params = {});
std::vector<std::string> weighting_names();

/// Constant at the peak value to the left of the EDM peak, unchanged to the right.
Weighting monotonize_edm(const Weighting& edm);

/// lambda -> w(lambda - 2s) with s = log(64 / resolution).
Weighting shift_weighting(const Weighting& w, double resolution);

/// True iff w(x[i+1]) <= w(x[i]) * (1 + 1e-12) for consecutive grid points.
/// Throws std::invalid_argument for grids with fewer than 2 or non-increasing points.
bool is_monotonic(const Weighting& w, std::span<const LogSnr> grid);

/// Location of the maximum of w on [lo, hi] by golden-section search.
LogSnr weighting_argmax(const Weighting& w, LogSnr lo = -20.0, LogSnr hi = 20.0, double tol = 1e-9);

}  // namespace wdl
