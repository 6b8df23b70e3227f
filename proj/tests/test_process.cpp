#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "wdl/numerics.hpp"
#include "wdl/process.hpp"
#include "wdl/rng.hpp"

using namespace wdl;

TEST_CASE("forward process basics") {
  const auto vp = ForwardProcess::vp();
  for (double l : linspace(-30, 30, 101)) CHECK(std::fabs(vp.alpha2(l) + vp.sigma2(l) - 1.0) < 1e-14);
  const auto ve = ForwardProcess::ve();
  CHECK(ve.alpha(3.0) == 1.0);
  CHECK(ve.sigma2(2.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
}

TEST_CASE("diffuse") {
  const std::vector<double> one{1.0}, zero{0.0}, neg{-1.0};
  CHECK(diffuse(one, 0.0, zero, ForwardProcess::vp()).z[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(diffuse(one, 4.2, zero, ForwardProcess::ve()).z[0] == 1.0);
  const double expected = std::sqrt(1.0 / (1.0 + std::exp(-2.0))) - std::sqrt(1.0 / (1.0 + std::exp(2.0)));
  CHECK(diffuse(one, 2.0, neg, ForwardProcess::vp()).z[0] == doctest::Approx(expected).epsilon(1e-15));
  CHECK(expected == doctest::Approx(0.593250).epsilon(1e-6));
  CHECK_THROWS_AS(diffuse(one, 0.0, std::vector<double>{1.0, 2.0}, ForwardProcess::vp()), std::invalid_argument);
}

TEST_CASE("conversion examples") {
  const auto vp = ForwardProcess::vp();
  const std::vector<double> z{0.5}, e1{1.0}, e2{0.2};
  CHECK(convert_prediction(e1, PredictionKind::kEps, PredictionKind::kScore, z, 0.0, vp)[0] ==
        doctest::Approx(-std::sqrt(2.0)).epsilon(1e-15));
  const double v = convert_prediction(e2, PredictionKind::kEps, PredictionKind::kV, z, 0.0, vp)[0];
  CHECK(v == doctest::Approx(-0.21716).epsilon(1e-4));
  const double xh = (0.5 - std::sqrt(0.5) * 0.2) / std::sqrt(0.5);
  CHECK(v == doctest::Approx(std::sqrt(0.5) * 0.2 - std::sqrt(0.5) * xh).epsilon(1e-14));
  CHECK(parse_prediction_kind("F") == PredictionKind::kF);
  CHECK_THROWS_AS(parse_prediction_kind("y"), std::invalid_argument);
}

TEST_CASE("all ordered conversion pairs round trip") {
  RandomStream rng(11, Stream::kNoise, 0);
  for (auto proc : {ForwardProcess::vp(), ForwardProcess::ve()}) {
    for (int trial = 0; trial < 50; ++trial) {
      const double l = -8.0 + 16.0 * rng.uniform();
      const std::vector<double> z{rng.normal() * 2}, val{rng.normal()};
      for (auto a : kAllPredictionKinds)
        for (auto b : kAllPredictionKinds) {
          if (a == b) continue;
          const auto mid = convert_prediction(val, a, b, z, l, proc);
          const auto back = convert_prediction(mid, b, a, z, l, proc);
          CHECK(std::fabs(back[0] - val[0]) <= 1e-12 * std::max(1.0, std::fabs(val[0])) * 64);
        }
    }
  }
}

TEST_CASE("conversion errors") {
  const std::vector<double> z{1.0}, v{1.0};
  // alpha underflows to 0 at very low SNR, sigma at very high SNR
  CHECK_THROWS_AS(convert_prediction(v, PredictionKind::kEps, PredictionKind::kX, z, -800.0, ForwardProcess::vp()),
                  std::domain_error);
  CHECK_THROWS_AS(convert_prediction(v, PredictionKind::kX, PredictionKind::kEps, z, 800.0, ForwardProcess::vp()),
                  std::domain_error);
  CHECK_THROWS_AS(convert_prediction(v, PredictionKind::kEps, PredictionKind::kScore, z, 800.0, ForwardProcess::vp()),
                  std::domain_error);
  CHECK_THROWS_AS(convert_prediction(v, PredictionKind::kEps, PredictionKind::kF, z, 0.0, ForwardProcess::vp(), 0.0),
                  std::domain_error);
  CHECK_THROWS_AS(convert_prediction(v, PredictionKind::kEps, PredictionKind::kX, std::vector<double>{1, 2}, 0.0,
                                     ForwardProcess::vp()),
                  std::invalid_argument);
}

TEST_CASE("loss equivalence factors") {
  const auto vp = ForwardProcess::vp();
  CHECK(loss_equivalence_factor(PredictionKind::kX, PredictionKind::kEps, std::log(4.0), vp) ==
        doctest::Approx(4.0).epsilon(1e-14));
  CHECK(loss_equivalence_factor(PredictionKind::kV, PredictionKind::kEps, 0.0, vp) ==
        doctest::Approx(0.5).epsilon(1e-15));
  for (double l : linspace(-10, 10, 21))
    CHECK(loss_equivalence_factor(PredictionKind::kF, PredictionKind::kV, l, vp, 1.0) ==
          doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("residual factors match direct conversion") {
  RandomStream rng(5, Stream::kNoise, 1);
  for (auto proc : {ForwardProcess::vp(), ForwardProcess::ve()}) {
    for (int trial = 0; trial < 200; ++trial) {
      const double l = -10.0 + 20.0 * rng.uniform();
      const std::vector<double> x{rng.normal()}, eps{rng.normal()}, eps_hat{rng.normal()};
      const auto s = diffuse(x, l, eps, proc);
      const double r_eps = (eps[0] - eps_hat[0]) * (eps[0] - eps_hat[0]);
      for (auto k : kAllPredictionKinds) {
        const double target = prediction_target(s, k, proc)[0];
        const double pred = convert_prediction(eps_hat, PredictionKind::kEps, k, s.z, l, proc)[0];
        const double r = (target - pred) * (target - pred);
        const double c = loss_equivalence_factor(k, PredictionKind::kEps, l, proc);
        CHECK(c * r == doctest::Approx(r_eps).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("conditional score is -eps/sigma") {
  const auto vp = ForwardProcess::vp();
  const double x = 0.7, l = 1.3, eps = -0.4;
  const double a = vp.alpha(l), sg = vp.sigma(l);
  const double z = a * x + sg * eps;
  const auto logq = [&](double zz) { return -0.5 * (zz - a * x) * (zz - a * x) / (sg * sg); };
  const double h = 1e-5;
  CHECK((logq(z + h) - logq(z - h)) / (2 * h) == doctest::Approx(-eps / sg).epsilon(1e-6));
}

TEST_CASE("sde coefficients") {
  const auto c = sde_coefficients(0.0, -2.0, ForwardProcess::vp());
  CHECK(c.diffusion2 == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(c.drift_coeff == doctest::Approx(-0.5).epsilon(1e-15));
  const auto ve = sde_coefficients(1.5, -3.0, ForwardProcess::ve());
  CHECK(ve.drift_coeff == 0.0);
  CHECK(ve.diffusion2 == doctest::Approx(3.0 * std::exp(-1.5)).epsilon(1e-15));
  CHECK(sde_coefficients(0.7, 0.0, ForwardProcess::vp()).diffusion2 == 0.0);
}
