#include <cmath>
#include <stdexcept>
#include <set>
#include <string>

#include "doctest.h"
#include "wdl/numerics.hpp"
#include "wdl/weightings.hpp"

using namespace wdl;

namespace {
Weighting named(const std::string& n) {
  WeightingParams p;
  if (n == "sigmoid-k") p.k = 2.0;
  return make_weighting(n, p);
}
}  // namespace

TEST_CASE("weighting values") {
  for (double l : {-7.0, 0.0, 13.0}) CHECK(named("elbo")(l) == 1.0);
  CHECK(named("iddpm")(0.0) == 1.0);
  CHECK(named("sigmoid-k")(2.0) == 0.5);
  CHECK(make_weighting("sigmoid-2")(2.0) == 0.5);
  // N(2.4; 2.4, 2.4^2) * (e^-2.4 + 0.25)
  const double edm = 1.0 / (2.4 * std::sqrt(2 * kPi)) * (std::exp(-2.4) + 0.25);
  CHECK(named("edm")(2.4) == doctest::Approx(edm).epsilon(1e-14));
  CHECK(named("edm")(2.4) == doctest::Approx(0.0566363).epsilon(1e-6));
  CHECK(named("vpred-cosine")(0.0) == 1.0);
  CHECK(named("vpred-cosine")(2.0) == doctest::Approx(0.367879).epsilon(1e-6));
  CHECK(named("five-bit-like")(8.4) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("weighting errors") {
  CHECK_THROWS_AS(make_weighting("nope"), std::invalid_argument);
  CHECK_THROWS_AS(make_weighting("sigmoid-k"), std::invalid_argument);
  WeightingParams p;
  p.gamma = -1.0;
  CHECK_THROWS_AS(make_weighting("min-snr", p), std::invalid_argument);
  CHECK_THROWS_AS(make_weighting("p2", p), std::invalid_argument);
  CHECK_THROWS_AS(shift_weighting(named("elbo"), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(is_monotonic(named("elbo"), std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("monotonicity column") {
  const auto grid = linspace(-20, 20, 2001);
  const std::set<std::string> non_monotone{"iddpm", "edm", "p2", "min-snr"};
  for (const auto& n : weighting_names()) {
    CAPTURE(n);
    const auto w = named(n);
    CHECK(is_monotonic(w, grid) == !non_monotone.count(n));
    CHECK(w.declared_monotonic() == !non_monotone.count(n));
    for (double l : grid) CHECK(w(l) >= 0.0);
  }
}

TEST_CASE("weighting identities") {
  const auto grid = linspace(-20, 20, 2001);
  const auto v = named("vpred-cosine"), f = named("fm-ot"), idd = named("iddpm");
  WeightingParams p0;
  p0.gamma = 0.0;
  const auto p2 = make_weighting("p2", p0);
  WeightingParams g1;
  g1.gamma = 1.0;
  const auto ms1 = make_weighting("min-snr", g1);
  for (double l : grid) {
    CHECK(v(l) == f(l));
    CHECK(p2(l) == idd(l));
  }
  CHECK(ms1(0.0) == 1.0);
  CHECK(ms1(-1e-12) == doctest::Approx(1.0).epsilon(1e-11));
  CHECK(ms1(1e-12) == doctest::Approx(1.0).epsilon(1e-11));
  const auto ms = named("min-snr");
  CHECK(ms.kinks().size() == 1);
  CHECK(ms.kinks()[0] == doctest::Approx(std::log(5.0)).epsilon(1e-15));
}

TEST_CASE("edm monotonic variant") {
  const auto edm = named("edm");
  const auto mono = named("edm-monotonic");
  const double peak = weighting_argmax(edm, -20, 20, 1e-10);
  // independent dense-grid maximizer
  double best = -1, best_l = 0;
  for (double l : linspace(-20, 20, 400001))
    if (edm(l) > best) best = edm(l), best_l = l;
  CHECK(std::fabs(peak - best_l) < 1e-4);
  CHECK(std::fabs(mono(peak + 3.0) - edm(peak + 3.0)) == 0.0);
  CHECK(mono(-15.0) == doctest::Approx(edm(peak)).epsilon(1e-15));
  CHECK(is_monotonic(mono, linspace(-20, 20, 2001)));
  CHECK(mono.kinks().size() == 1);
}

TEST_CASE("shifted weightings") {
  const auto edm = named("edm");
  CHECK(shift_weighting(edm, 64.0)(1.234) == edm(1.234));
  const auto sh = shift_weighting(edm, 128.0);
  const double s = std::log(0.5);
  const double d = weighting_argmax(sh, -20, 20, 1e-10) - weighting_argmax(edm, -20, 20, 1e-10);
  CHECK(d == doctest::Approx(2 * s).epsilon(1e-6));
  CHECK(sh.shift() == doctest::Approx(s).epsilon(1e-15));

  const auto v = named("vpred-cosine");
  const auto vs = shift_weighting(v, 128.0);
  for (double l : {-5.0, 0.0, 3.0}) CHECK(vs(l) / v(l) == doctest::Approx(std::exp(s)).epsilon(1e-13));

  const auto em = shift_weighting(named("edm-monotonic"), 256.0);
  CHECK(em.kinks()[0] == doctest::Approx(named("edm-monotonic").kinks()[0] + 2 * std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("weighting derivative near kinks") {
  const auto ms = named("min-snr");
  const double k = std::log(5.0);
  // right of the kink: sech(l/2) * 5 e^-l
  const auto right = [](double l) { return sech(0.5 * l) * 5.0 * std::exp(-l); };
  const double h = 1e-6;
  const double exact = (right(k + 1e-6 + h) - right(k + 1e-6 - h)) / (2 * h);
  CHECK(ms.derivative(k + 1e-6) == doctest::Approx(exact).epsilon(1e-5));
  CHECK(named("elbo").derivative(3.0) == 0.0);
}
