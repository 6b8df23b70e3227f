#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace wdl {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kLn2 = std::numbers::ln2;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double sech(double x) {
  const double a = std::fabs(x);
  if (a > 700.0) return 0.0;
  const double e = std::exp(-a);
  return 2.0 * e / (1.0 + e * e);
}

double normal_pdf(double x, double mean = 0.0, double sd = 1.0);
double normal_cdf(double x, double mean = 0.0, double sd = 1.0);
/// Upper tail 1 - F(x), accurate far into the tail.
double normal_sf(double x, double mean = 0.0, double sd = 1.0);
/// Standard normal quantile. Rational initial guess refined by Halley steps;
/// absolute error below 1e-12 on (0, 1).
double normal_quantile(double p);

std::vector<double> linspace(double lo, double hi, std::size_t n);

/// Sum in a fixed binary-tree order. Result depends only on the values, not on
/// how they were produced, which keeps parallel reductions reproducible.
double pairwise_sum(std::span<const double> v);

/// Composite trapezoid on tabulated values over a (possibly non-uniform) grid.
double trapezoid(std::span<const double> x, std::span<const double> y);
/// Composite trapezoid of f on [a, b] with n >= 2 equally spaced nodes.
double trapezoid(const std::function<double(double)>& f, double a, double b, std::size_t n);

/// Golden-section search for the maximizer of a unimodal f on [a, b].
double golden_section_argmax(const std::function<double(double)>& f, double a, double b,
                             double tol = 1e-9);

/// Nodes and weights such that sum_i w_i f(x_i) approximates E[f(X)], X ~ N(0, 1).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Probabilists' rule with n nodes; cached per n, safe to call from many threads.
const GaussHermiteRule& gauss_hermite(std::size_t n);

double log_sum_exp(std::span<const double> v);

}  // namespace wdl
