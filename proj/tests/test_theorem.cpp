#include <doctest.h>

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "wdl/numerics.hpp"
#include "wdl/theorem.hpp"

using namespace wdl;

namespace {
NoiseSchedule trunc12(const char* name) { return truncate(make_schedule(name), 12.0, -12.0).schedule(); }
}  // namespace

TEST_CASE("report pass rule") {
  CHECK(make_report("a", 1.0, 1.0 + 1e-5, 1e-4, 3).pass);
  CHECK_FALSE(make_report("a", 1.0, 1.0 + 1e-3, 1e-4, 3).pass);
  // |lhs| < 1e-8 switches to the absolute error
  CHECK(make_report("a", 1e-12, 5e-12, 1e-4, 3).pass);
  CHECK_FALSE(make_report("a", 1e-12, 2e-4, 1e-4, 3).pass);
  CHECK_FALSE(make_report("a", NAN, NAN, 1e-4, 3).pass);
  const auto r = make_report("a", 2.0, 1.0, 1e-4, 7);
  CHECK(r.abs_err == 1.0);
  CHECK(r.rel_err == 0.5);
  CHECK(r.grid_size == 7);
}

TEST_CASE("time derivative of the joint KL") {
  const auto s = trunc12("cosine");
  for (const auto& o : {MixtureOracle::gaussian(), MixtureOracle::two_component()}) {
    const auto r = verify_time_derivative(o, s, 21, 1e-4);
    CHECK(r.pass);
    CHECK(r.rel_err < 1e-3);
    CHECK(r.lhs < 0.0);
    CHECK(r.grid_size == 21);
  }
  CHECK_THROWS_AS(verify_time_derivative(MixtureOracle::gaussian(), s, 21, 0.03), std::invalid_argument);
  CHECK_THROWS_AS(verify_time_derivative(MixtureOracle::gaussian(), s, 21, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(verify_time_derivative(MixtureOracle::gaussian(), make_schedule("cosine")), std::invalid_argument);
}

TEST_CASE("integration by parts") {
  const auto s = trunc12("cosine");
  const auto g = MixtureOracle::gaussian();
  SUBCASE("sigmoid-2") {
    const auto r = verify_integration_by_parts(g, s, make_weighting("sigmoid-2"), 4001);
    CHECK(r.pass);
    CHECK(r.rel_err < 1e-4);
  }
  SUBCASE("constant weighting reduces to L(0) - L(1)") {
    const auto r = verify_integration_by_parts(g, s, make_weighting("elbo"), 4001);
    CHECK(r.rhs == doctest::Approx(g.joint_kl_at(12.0, -12.0) - g.joint_kl_at(-12.0, -12.0)).epsilon(1e-14));
    CHECK(r.pass);
  }
  SUBCASE("kinked weighting") {
    const auto w = make_weighting("edm-monotonic");
    REQUIRE(!w.kinks().empty());
    const auto r = verify_integration_by_parts(g, s, w, 4001);
    CHECK(r.rel_err < 1e-4);
    CHECK(r.grid_size > 4001);  // the kink piece adds a node
  }
  SUBCASE("non-monotonic weightings obey the identity too") {
    for (const char* name : {"iddpm", "edm", "min-snr", "p2"}) {
      const std::string label = name;
    CAPTURE(label);
      CHECK(verify_integration_by_parts(g, s, make_weighting(name), 4001).rel_err < 1e-4);
    }
  }
  CHECK_THROWS_AS(verify_integration_by_parts(g, make_schedule("cosine"), make_weighting("elbo")),
                  std::invalid_argument);
  CHECK_THROWS_AS(verify_integration_by_parts(g, s, make_weighting("elbo"), 2), std::invalid_argument);
}

TEST_CASE("p_w construction") {
  SUBCASE("sigmoid-2 on [-20, 20]") {
    const auto s = truncate(make_schedule("cosine"), 20.0, -20.0).schedule();
    const auto pw = build_pw(make_weighting("sigmoid-2"), s);
    CHECK(pw.normalizer() == doctest::Approx(sigmoid(22.0)).epsilon(1e-15));
    CHECK(pw.atom_mass() == doctest::Approx(1.523e-8).epsilon(1e-3));
    CHECK(pw.atom_mass() == doctest::Approx(sigmoid(-18.0) / sigmoid(22.0)).epsilon(1e-14));
    CHECK(pw.atom_time() == 0.0);
    CHECK(std::fabs(pw.total_mass() - 1.0) < 1e-8);
    CHECK(verify_pw_mass(pw).pass);
    for (double t : linspace(0.0, 1.0, 101)) CHECK(pw.density(t) >= 0.0);
  }
  SUBCASE("constant weighting is all atom") {
    const auto pw = build_pw(make_weighting("elbo"), trunc12("cosine"));
    CHECK(pw.atom_mass() == 1.0);
    CHECK(pw.continuous_mass() == 0.0);
    CHECK(pw.density(0.3) == 0.0);
  }
  SUBCASE("expectation of L reproduces the weighted loss") {
    const auto g = MixtureOracle::gaussian();
    for (const char* name : {"elbo", "vpred-cosine", "sigmoid-2", "edm-monotonic"}) {
      const std::string label = name;
    CAPTURE(label);
      const auto r = verify_pw_expectation(g, build_pw(make_weighting(name), trunc12("cosine")));
      CHECK(r.rel_err < 1e-4);
    }
  }
  SUBCASE("kinks become breakpoints") {
    const auto w = make_weighting("edm-monotonic");
    const auto s = trunc12("cosine");
    const auto bp = build_pw(w, s).breakpoints();
    REQUIRE(bp.size() == 1);
    CHECK(s.forward(bp[0]) == doctest::Approx(w.kinks()[0]).epsilon(1e-9));
  }
  SUBCASE("errors") {
    const auto s = trunc12("cosine");
    try {
      build_pw(make_weighting("iddpm"), s);
      FAIL("expected NonMonotonicWeighting");
    } catch (const NonMonotonicWeighting& e) {
      const auto w = make_weighting("iddpm");
      CHECK(e.lambda_lo() < e.lambda_hi());
      CHECK(w(e.lambda_lo()) < w(e.lambda_hi()));
    }
    CHECK_THROWS_AS(build_pw(Weighting("zero", [](LogSnr) { return 0.0; }, true), s), std::invalid_argument);
    CHECK_THROWS_AS(build_pw(make_weighting("elbo"), make_schedule("cosine")), std::invalid_argument);
  }
}

TEST_CASE("p_w is nonnegative exactly for monotonic weightings") {
  const auto s = truncate(make_schedule("cosine"), 20.0, -20.0).schedule();
  for (const char* name : {"iddpm", "edm", "p2", "min-snr"}) {
    const std::string label = name;
    CAPTURE(label);
    CHECK_FALSE(pw_density_nonnegative(make_weighting(name), s));
  }
  for (const char* name : {"elbo", "vpred-cosine", "fm-ot", "indi", "sigmoid-2", "edm-monotonic"}) {
    const std::string label = name;
    CAPTURE(label);
    CHECK(pw_density_nonnegative(make_weighting(name), s));
    CHECK_NOTHROW(build_pw(make_weighting(name), s));
  }
}

TEST_CASE("area identity") {
  const auto s = trunc12("cosine");
  const auto g = MixtureOracle::gaussian();
  const auto w = make_weighting("vpred-cosine");
  const auto r = verify_area_identity(g, s, w, 4001);
  CHECK(r.pass);
  CHECK(r.rel_err < 1e-3);
  CHECK(r.rel_err < verify_area_identity(g, s, w, 501).rel_err);
  // Point mass at 0: L is the prior KL only, ~1e-11 on [-12, 12].
  const auto degenerate = verify_area_identity(MixtureOracle::low_bit(0), s, w, 501);
  CHECK(std::fabs(degenerate.lhs) < 1e-8);
  CHECK(degenerate.pass);
  CHECK_THROWS_AS(verify_area_identity(g, s, make_weighting("edm")), NonMonotonicWeighting);
}

TEST_CASE("quadrature refinement") {
  // Errors shrink with n up to a 10% allowance, or sit below the 1e-9 level at
  // which the mse and mutual-information routes agree.
  const std::size_t ns[] = {501, 1001, 2001, 4001};
  auto shrinking = [&](auto&& err) {
    double prev = err(ns[0]);
    for (std::size_t k = 1; k < 4; ++k) {
      const double cur = err(ns[k]);
      if (!(cur <= 1.1 * prev || cur < 1e-9)) return false;
      prev = cur;
    }
    return true;
  };
  for (const auto& o : {MixtureOracle::gaussian(), MixtureOracle::two_component()}) {
    for (const char* sn : {"cosine", "fm-ot"}) {
      const auto s = trunc12(sn);
      for (const char* wn : {"elbo", "vpred-cosine", "sigmoid-2", "edm-monotonic"}) {
        const std::string sl = sn;
        CAPTURE(sl);
        const std::string wl = wn;
        CAPTURE(wl);
        const auto w = make_weighting(wn);
        const auto pw = build_pw(w, s);
        CHECK(shrinking([&](std::size_t n) { return verify_integration_by_parts(o, s, w, n).rel_err; }));
        CHECK(shrinking([&](std::size_t n) { return verify_pw_mass(pw, n).rel_err; }));
        CHECK(shrinking([&](std::size_t n) { return verify_pw_expectation(o, pw, n).rel_err; }));
        if (pw_density_nonnegative(w, s))
          CHECK(shrinking([&](std::size_t n) { return verify_area_identity(o, s, w, n).rel_err; }));
      }
    }
  }
}

TEST_CASE("schedule independence") {
  const auto g = MixtureOracle::two_component();
  for (const char* wn : {"vpred-cosine", "sigmoid-2", "edm-monotonic"}) {
    const std::string wl = wn;
        CAPTURE(wl);
    const auto w = make_weighting(wn);
    const auto a = verify_integration_by_parts(g, trunc12("cosine"), w);
    const auto b = verify_integration_by_parts(g, trunc12("fm-ot"), w);
    CHECK(a.pass);
    CHECK(b.pass);
    CHECK(a.lhs == doctest::Approx(b.lhs).epsilon(1e-6));
    const auto ea = verify_pw_expectation(g, build_pw(w, trunc12("cosine")));
    const auto eb = verify_pw_expectation(g, build_pw(w, trunc12("fm-ot")));
    CHECK(ea.lhs == doctest::Approx(eb.lhs).epsilon(1e-6));
  }
}

TEST_CASE("fisher identity") {
  const auto s = trunc12("cosine");
  const auto grid = linspace(-10.0, 10.0, 11);
  for (const auto& o : {MixtureOracle::gaussian(), MixtureOracle::two_component()}) {
    const auto r = verify_fisher(o, grid, s);
    CHECK(r.pass);
    CHECK(r.rel_err < 1e-3);
    CHECK(r.grid_size == 11);
  }
  const double zero[] = {0.0};
  const auto r0 = verify_fisher(MixtureOracle::gaussian(), zero, s);
  CHECK(r0.lhs == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(r0.rhs == doctest::Approx(0.25).epsilon(1e-10));
  const double edge[] = {11.9995};
  CHECK_THROWS_AS(verify_fisher(MixtureOracle::gaussian(), edge, s), std::invalid_argument);
  const double big[] = {1e14};
  CHECK_THROWS_AS(verify_fisher(MixtureOracle::gaussian(), big, s, 1e-3), std::invalid_argument);
}

TEST_CASE("parallel joint KL table matches the serial loop") {
  const auto s = trunc12("cosine");
  const auto o = MixtureOracle::two_component();
  const auto t = linspace(0.0, 1.0, 257);
  const auto par = joint_kl_table(o, s, t);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(par[i] == joint_kl(o, t[i], s));
}

TEST_CASE("full suite passes within the time budget") {
  const auto start = std::chrono::steady_clock::now();
  const auto reports = verify_all();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs < 60.0);
  CHECK(reports.size() > 40);
  for (const auto& r : reports) {
    CAPTURE(r.name);
    CHECK(r.pass);
  }
}
