#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "wdl/numerics.hpp"
#include "wdl/oracle.hpp"

using namespace wdl;

TEST_CASE("oracle construction errors") {
  CHECK_THROWS_AS(MixtureOracle({0.5, 0.6}, {0, 1}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(MixtureOracle({1.0}, {0, 1}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(MixtureOracle({1.0}, {0}, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(MixtureOracle({-0.5, 1.5}, {0, 1}, 0.1), std::invalid_argument);
  const auto lb = MixtureOracle::low_bit(3);
  CHECK(lb.means().size() == 8);
  CHECK(lb.means().front() == -1.0);
  CHECK(lb.means().back() == 1.0);
  for (double w : lb.weights()) CHECK(w == 0.125);
}

TEST_CASE("gaussian oracle closed forms") {
  const auto g = MixtureOracle::gaussian();
  for (double l : {-5.0, 0.0, 3.0})
    for (double z : {-2.0, 0.3, 1.7}) CHECK(g.exact_score(z, l) == doctest::Approx(-z).epsilon(1e-14));
  for (double l : linspace(-20, 20, 401)) CHECK(std::fabs(g.mse(l) - sigmoid(l)) < 1e-10);
  CHECK(g.mse(0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(g.mse(2.0) == doctest::Approx(0.880797).epsilon(1e-6));
  for (double l : {-20.0, -3.0, 0.0, 4.0, 12.0})
    CHECK(g.mutual_information(l) == doctest::Approx(0.5 * softplus(l)).epsilon(1e-10));

  const auto g2 = MixtureOracle::gaussian(0.0, 0.7);
  const auto proc = ForwardProcess::vp();
  for (double l : {-2.0, 0.5, 3.0}) {
    const double a = proc.alpha(l), s2 = 0.49, v = a * a * s2 + proc.sigma2(l);
    for (double z : {-1.0, 0.4})
      CHECK(g2.optimal_denoiser(z, l, PredictionKind::kX) == doctest::Approx(a * s2 * z / v).epsilon(1e-12));
  }
}

TEST_CASE("denoiser consistent with score in every parameterization") {
  const auto o = MixtureOracle::two_component(1.0, 0.3);
  const auto proc = o.process();
  for (double l : {-4.0, 0.0, 5.0})
    for (double z : {-1.3, 0.0, 0.8}) {
      const double eps = o.optimal_denoiser(z, l, PredictionKind::kEps);
      const double zz[1] = {z}, ee[1] = {eps};
      const double sc = convert_prediction(ee, PredictionKind::kEps, PredictionKind::kScore, zz, l, proc)[0];
      CHECK(sc == doctest::Approx(o.exact_score(z, l)).epsilon(1e-12));
      CHECK(o.optimal_denoiser(z, l, PredictionKind::kX) == doctest::Approx(o.posterior_mean(z, l)).epsilon(1e-10));
    }
  CHECK(o.exact_score(0.0, 1.0) == 0.0);
  // score is the derivative of the log marginal
  const double h = 1e-5;
  CHECK((o.log_marginal(0.7 + h, 0.4) - o.log_marginal(0.7 - h, 0.4)) / (2 * h) ==
        doctest::Approx(o.exact_score(0.7, 0.4)).epsilon(1e-7));
  CHECK_THROWS_AS(o.optimal_denoiser(0.0, 800.0, PredictionKind::kEps), std::domain_error);
}

TEST_CASE("high-SNR limit of the optimal denoiser") {
  const auto o = MixtureOracle::low_bit(1);
  const double l = 20.0;
  const auto p = o.process();
  const double z = p.alpha(l) * 1.0 + 1e-7;
  CHECK(std::fabs(o.optimal_denoiser(z, l, PredictionKind::kX) - z / p.alpha(l)) < 1e-6);
  const auto smooth = MixtureOracle::two_component(1.0, 0.5);
  for (double off : {-0.3, 0.05, 0.4}) {
    const double zz = p.alpha(l) * 1.0 + off;
    CHECK(std::fabs(smooth.optimal_denoiser(zz, l, PredictionKind::kX) - zz / p.alpha(l)) < 1e-6);
  }
}

TEST_CASE("mse quadrature agrees with monte carlo") {
  const auto o = MixtureOracle::low_bit(1);
  const double q = o.mse(0.0);
  const auto [mc, se] = o.mse_monte_carlo(0.0, 1000000, 1234);
  CHECK(std::fabs(q - mc) < 3.0 * se);
  const auto t = MixtureOracle::two_component(1.0, 0.5);
  const auto [mc2, se2] = t.mse_monte_carlo(1.5, 1000000, 99);
  CHECK(std::fabs(t.mse(1.5) - mc2) < 3.0 * se2);
  for (double l : linspace(-20, 20, 81)) {
    const double m = o.mse(l);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0 + 1e-12);
  }
  CHECK_THROWS_AS(o.mse_curve(std::vector<double>{1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("expected marginal score is zero") {
  const auto o = MixtureOracle({0.3, 0.7}, {-1.0, 2.0}, 0.4);
  const double l = 0.5;
  const auto p = o.process();
  const std::size_t n = 1000000;
  double s = 0, s2 = 0;
  for (std::size_t j = 0; j < n; ++j) {
    RandomStream data(3, Stream::kData, j), noise(3, Stream::kNoise, j);
    double x;
    o.sample(data, std::span<double>(&x, 1));
    const double z = p.alpha(l) * x + p.sigma(l) * noise.normal();
    const double sc = o.exact_score(z, l);
    s += sc;
    s2 += sc * sc;
  }
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::fabs(mean) < 3.0 * se);
}

TEST_CASE("joint kl") {
  const auto g = MixtureOracle::gaussian();
  const auto s = truncate(make_schedule("cosine"), 20.0, -20.0).schedule();
  CHECK(joint_kl(g, 1.0, s) < 1e-8);
  CHECK(joint_kl(g, 1.0, s) == doctest::Approx(g.joint_kl_at(-20.0, -20.0)).epsilon(1e-15));
  CHECK_THROWS_AS(joint_kl(g, 0.5, make_schedule("cosine")), std::invalid_argument);

  // two independent routes
  const auto t = MixtureOracle::two_component(1.0, 0.5);
  for (double tt : {0.1, 0.4, 0.8}) {
    const double a = joint_kl(t, tt, s), b = joint_kl_by_quadrature(t, tt, s, 4001);
    CHECK(a == doctest::Approx(b).epsilon(1e-6));
  }

  // dL/dt = 1/2 lambda'(t) mse(lambda_t), 21 interior points
  const auto grid = linspace(0.0, 1.0, 23);
  const double h = 1e-4;
  double prev = joint_kl(g, 0.0, s);
  for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
    const double tt = grid[i];
    const double fd = (joint_kl(g, tt + h, s) - joint_kl(g, tt - h, s)) / (2 * h);
    const double rhs = 0.5 * s.dlambda_dt(tt) * g.mse(s.forward(tt));
    CHECK(fd == doctest::Approx(rhs).epsilon(1e-4));
    const double cur = joint_kl(g, tt, s);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("fisher divergence") {
  const auto g = MixtureOracle::gaussian();
  const auto p = g.process();
  CHECK(0.5 * p.sigma2(0.0) * g.fisher_divergence(0.0) == doctest::Approx(0.25).epsilon(1e-10));
  const double h = 1e-3;
  CHECK((g.joint_kl_at(h, -20) - g.joint_kl_at(-h, -20)) / (2 * h) == doctest::Approx(0.25).epsilon(1e-6));
  // model equal to the conditional score: zero divergence
  const double l = 0.7;
  const double a = p.alpha(l), s2 = p.sigma2(l);
  CHECK(std::fabs(g.fisher_divergence(l, [&](double z, double x) { return -(z - a * x) / s2; })) < 1e-14);

  const auto t = MixtureOracle::two_component(1.0, 0.5);
  for (double lam : {-6.0, -2.0, 0.0, 2.0, 6.0}) {
    const double fd = (t.joint_kl_at(lam + h, -20) - t.joint_kl_at(lam - h, -20)) / (2 * h);
    const double rhs = 0.5 * p.sigma2(lam) * t.fisher_divergence(lam);
    CHECK(fd == doctest::Approx(rhs).epsilon(1e-3));
  }
}

TEST_CASE("low-bit curves") {
  const auto grid = linspace(-20, 20, 2001);
  const std::vector<int> bits{1, 2, 3, 4};
  const auto c = lowbit_curves(bits, grid);
  REQUIRE(c.per_bit_area.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CAPTURE(i);
    CHECK(std::fabs(c.per_bit_area[i] - kLn2) < 1e-2);
    if (i > 0) CHECK(c.per_bit_peak[i] > c.per_bit_peak[i - 1]);
    for (double v : c.dkl[i].values) CHECK(v >= 0.0);
    // KL of the optimal model: value at high SNR approaches n ln 2
    CHECK(c.kl[i].values.back() == doctest::Approx(bits[i] * kLn2).epsilon(1e-6));
  }
  // n vs n difference vanishes
  for (std::size_t j = 0; j < grid.size(); ++j) CHECK(c.dkl[1].values[j] - c.dkl[1].values[j] == 0.0);

  // endpoint grid: coarser data has larger variance, so the difference has a negative lobe
  double lowest = 0.0;
  for (double v : c.per_bit[1].values) lowest = std::min(lowest, v);
  CHECK(lowest < -0.01);
  for (double v : c.per_bit[0].values) CHECK(v >= 0.0);

  const auto centers = lowbit_curves(bits, grid, LowBitGrid::kBinCenters);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::fabs(centers.per_bit_area[i] - kLn2) < 1e-2);
    if (i > 0) CHECK(centers.per_bit_peak[i] > centers.per_bit_peak[i - 1]);
    for (double v : centers.per_bit[i].values) CHECK(v >= -1e-15);
  }

  CHECK_THROWS_AS(lowbit_curves(bits, linspace(-5, 5, 201)), std::invalid_argument);
  CHECK_THROWS_AS(lowbit_curves(std::vector<int>{2, 1}, grid), std::invalid_argument);
  CHECK_THROWS_AS(lowbit_curves(std::vector<int>{0}, grid), std::invalid_argument);
}
