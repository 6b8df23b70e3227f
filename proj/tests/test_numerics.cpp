#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "wdl/numerics.hpp"
#include "wdl/rng.hpp"

using namespace wdl;

TEST_CASE("normal quantile inverts the cdf") {
  for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1 - 1e-9}) {
    const double x = normal_quantile(p);
    const double back = x < 0 ? normal_cdf(x) : 1.0 - normal_sf(x);
    CHECK(std::fabs(back - p) <= 1e-9 * std::max(p, 1e-3));
  }
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK_THROWS_AS(normal_quantile(1.5), std::domain_error);
}

TEST_CASE("gauss-hermite integrates gaussian moments") {
  const auto& gh = gauss_hermite(129);
  double m0 = 0, m2 = 0, m4 = 0, m1 = 0;
  for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
    const double x = gh.nodes[i], w = gh.weights[i];
    m0 += w;
    m1 += w * x;
    m2 += w * x * x;
    m4 += w * x * x * x * x;
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(std::fabs(m1) < 1e-13);
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
  // E[cos X] = e^{-1/2}
  double c = 0;
  for (std::size_t i = 0; i < gh.nodes.size(); ++i) c += gh.weights[i] * std::cos(gh.nodes[i]);
  CHECK(c == doctest::Approx(std::exp(-0.5)).epsilon(1e-13));
}

TEST_CASE("pairwise sum and trapezoid") {
  std::vector<double> v(1000, 0.1);
  CHECK(pairwise_sum(v) == doctest::Approx(100.0).epsilon(1e-14));
  CHECK(trapezoid([](double x) { return x * x; }, 0.0, 1.0, 2001) == doctest::Approx(1.0 / 3).epsilon(1e-6));
  CHECK(golden_section_argmax([](double x) { return -(x - 0.3) * (x - 0.3); }, -1, 1, 1e-10) ==
        doctest::Approx(0.3).epsilon(1e-8));
  std::vector<double> l{1.0, 1000.0, -3.0};
  CHECK(log_sum_exp(l) == doctest::Approx(1000.0).epsilon(1e-14));
}

TEST_CASE("random streams are reproducible and independent") {
  RandomStream a(42, Stream::kNoise, 3), b(42, Stream::kNoise, 3), c(42, Stream::kTimes, 3), d(42, Stream::kNoise, 4);
  bool all_same = true, any_same_c = false, any_same_d = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform(), y = b.uniform(), z = c.uniform(), w = d.uniform();
    all_same &= (x == y);
    any_same_c |= (x == z);
    any_same_d |= (x == w);
  }
  CHECK(all_same);
  CHECK_FALSE(any_same_c);
  CHECK_FALSE(any_same_d);

  RandomStream n(7, Stream::kNoise, 0);
  double s = 0, s2 = 0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    const double x = n.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::fabs(s / N) < 4.0 / std::sqrt(N));
  CHECK(std::fabs(s2 / N - 1.0) < 0.02);
}
