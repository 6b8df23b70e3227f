#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "wdl/estimator.hpp"
#include "wdl/numerics.hpp"
#include "wdl/oracle.hpp"

using namespace wdl;

namespace {

LossProblem gaussian_problem(const MixtureOracle& o, const std::string& sched, double lmax, double lmin,
                             const Weighting& w) {
  LossProblem p;
  p.model = &o;
  p.data = &o;
  p.schedule = truncate(make_schedule(sched), lmax, lmin).schedule();
  p.weighting = w;
  return p;
}

// Schedule with density proportional to sigmoid(lambda) on [lo, hi].
class SigmoidDensity final : public ScheduleModel {
 public:
  SigmoidDensity(double lo, double hi) : lo_(lo), hi_(hi), z_(softplus(hi) - softplus(lo)) {}
  LogSnr forward(double t) const override {
    // invert 1 - (softplus(l) - softplus(lo)) / z = t
    const double sp = softplus(lo_) + (1.0 - t) * z_;
    return std::log(std::expm1(sp));
  }
  double inverse(LogSnr l) const override { return 1.0 - (softplus(l) - softplus(lo_)) / z_; }
  double density(LogSnr l) const override { return sigmoid(l) / z_; }
  std::string name() const override { return "sigmoid-density"; }

 private:
  double lo_, hi_, z_;
};

}  // namespace

TEST_CASE("time sampler") {
  const double expect[] = {0.125, 0.375, 0.625, 0.875};
  for (std::size_t i = 0; i < 4; ++i) CHECK(TimeSampler::stratified(i, 4, 0.5) == expect[i]);
  RandomStream rng(1, Stream::kTimes, 0);
  const auto t = TimeSampler(TimeSampling::kLowDiscrepancy).sample(1000, rng);
  std::vector<int> hist(1000, 0);
  for (double v : t) hist[static_cast<std::size_t>(v * 1000)]++;
  for (int h : hist) CHECK(h == 1);
  const auto iid = TimeSampler(TimeSampling::kIid).sample(1000, rng);
  for (double v : iid) CHECK((v >= 0.0 && v < 1.0));
  CHECK_THROWS_AS(TimeSampler().sample(0, rng), std::invalid_argument);
  CHECK(parse_time_sampling("iid") == TimeSampling::kIid);
  CHECK_THROWS_AS(parse_time_sampling("sobol"), std::invalid_argument);
}

TEST_CASE("estimator contracts") {
  const auto g = MixtureOracle::gaussian();
  auto p = gaussian_problem(g, "cosine", 20, -20, make_weighting("elbo"));
  EstimatorOptions keep;
  keep.keep_per_sample = true;
  const auto a = weighted_loss_mc(p, 20000, 5, keep);
  const auto b = weighted_loss_mc_serial(p, 20000, 5, keep);
  CHECK(a.mean == b.mean);
  CHECK(a.std_error == b.std_error);
  CHECK(a.per_sample == b.per_sample);
  for (double v : a.per_sample) CHECK(v >= 0.0);
  const auto c = weighted_loss_mc(p, 20000, 5, keep);
  CHECK(c.per_sample == a.per_sample);
  const auto e = elbo_mc(g, g, p.schedule, p.proc, 20000, 5, keep);
  CHECK(e.mean == a.mean);
  CHECK(e.per_sample == a.per_sample);

  CHECK_THROWS_AS(weighted_loss_mc(p, 0, 1), std::invalid_argument);
  auto bad = p;
  bad.schedule = make_schedule("cosine");
  CHECK_THROWS_AS(weighted_loss_mc(bad, 10, 1), std::invalid_argument);
  auto none = p;
  none.model = nullptr;
  CHECK_THROWS_AS(weighted_loss_mc(none, 10, 1), std::invalid_argument);
}

TEST_CASE("weighting equal to the schedule density gives the eps loss") {
  const auto g = MixtureOracle::two_component(1.0, 0.5);
  const auto s = truncate(make_schedule("cosine"), 20, -20).schedule();
  auto p = gaussian_problem(g, "cosine", 20, -20, Weighting("density", [s](LogSnr l) { return s.density(l); }, false));
  EstimatorOptions keep;
  keep.keep_per_sample = true;
  const auto a = weighted_loss_mc(p, 5000, 2, keep);
  for (std::size_t j = 0; j < 5000; ++j) {
    const auto d = loss_draw(p, j, 5000, 0.0, 2, keep);
    CHECK(d.value == doctest::Approx(0.5 * d.sq_error).epsilon(1e-14));
  }
  CHECK(a.mean > 0.0);
}

TEST_CASE("gaussian oracle ELBO matches the closed form") {
  const auto g = MixtureOracle::gaussian();
  const double truth = 0.5 * (softplus(20.0) - softplus(-20.0));
  CHECK(truth == doctest::Approx(10.0).epsilon(1e-8));
  const auto p = gaussian_problem(g, "cosine", 20, -20, make_weighting("elbo"));
  const auto e = weighted_loss_mc(p, 1000000, 17);
  CHECK(std::fabs(e.mean - truth) < 3.0 * e.std_error);

  // zero predictor: 1/2 * 40 = 20
  const ZeroDenoiser zero(1);
  const auto z = elbo_mc(zero, g, p.schedule, p.proc, 200000, 17);
  CHECK(z.mean > e.mean);
  CHECK(std::fabs(z.mean - 20.0) < 4.0 * z.std_error);
}

TEST_CASE("schedule invariance") {
  const auto g = MixtureOracle::gaussian();
  const auto w = make_weighting("elbo");
  const auto a = weighted_loss_mc(gaussian_problem(g, "cosine", 20, -20, w), 1000000, 101);
  const auto b = weighted_loss_mc(gaussian_problem(g, "fm-ot", 20, -20, w), 1000000, 202);
  CHECK(std::fabs(a.mean - b.mean) < 3.0 * std::hypot(a.std_error, b.std_error));
}

TEST_CASE("unbiasedness over repeats") {
  const auto g = MixtureOracle::gaussian();
  const auto p = gaussian_problem(g, "cosine", 12, -12, make_weighting("sigmoid-2"));
  // 1/2 int sigmoid(-l + 2) sigmoid(l) dl by quadrature
  const double truth = 0.5 * trapezoid([](double l) { return sigmoid(2 - l) * sigmoid(l); }, -12, 12, 20001);
  std::vector<double> means(200);
  for (std::size_t r = 0; r < 200; ++r) means[r] = weighted_loss_mc(p, 2000, derive_seed(9, r)).mean;
  const double mm = pairwise_sum(means) / 200.0;
  const double se = std::sqrt(sample_variance(means) / 200.0);
  CHECK(std::fabs(mm - truth) < 4.0 * se);
}

namespace {
struct Mismatch {
  double normwise;  ///< |difference| / operand magnitude
  double relative;  ///< |difference| / value
};

Mismatch worst_residual_mismatch(double lmax, PredictionKind k) {
  const auto g = MixtureOracle::two_component(1.0, 0.5);
  const auto p = gaussian_problem(g, "cosine", lmax, -lmax, make_weighting("sigmoid-2"));
  EstimatorOptions base, other;
  other.residual = k;
  Mismatch m{0.0, 0.0};
  for (std::size_t j = 0; j < 10000; ++j) {
    const auto a = loss_draw(p, j, 10000, 0.37, 3, base);
    const auto b = loss_draw(p, j, 10000, 0.37, 3, other);
    const double diff = std::fabs(a.value - b.value);
    m.normwise = std::max(m.normwise, diff / a.scale);
    m.relative = std::max(m.relative, diff / a.value);
  }
  return m;
}
}  // namespace

TEST_CASE("residual parameterization leaves per-draw values unchanged") {
  for (auto k : {PredictionKind::kX, PredictionKind::kV, PredictionKind::kO, PredictionKind::kF}) {
    CAPTURE(to_string(k));
    const auto m12 = worst_residual_mismatch(12.0, k);
    CHECK(m12.normwise < 1e-12);
    // Relative to the value itself the error is unbounded as eps_hat -> eps, so
    // only a loose bound holds there.
    CHECK(m12.relative < 1e-9);
    // A double x_hat carries ~1e-16 |x| alpha/sigma in eps units; at lambda = 20
    // that is ~2e-12 per unit of residual.
    CHECK(worst_residual_mismatch(20.0, k).normwise < 1e-10);
  }
}

TEST_CASE("low-discrepancy times reduce estimator variance") {
  const auto g = MixtureOracle::gaussian();
  const auto p = gaussian_problem(g, "cosine", 12, -12, make_weighting("elbo"));
  EstimatorOptions ld, iid;
  iid.times = TimeSampling::kIid;
  const auto rl = estimator_variance("ld", [&](std::uint64_t s) { return weighted_loss_mc(p, 1024, s, ld); }, 200, 77);
  const auto ri = estimator_variance("iid", [&](std::uint64_t s) { return weighted_loss_mc(p, 1024, s, iid); }, 200, 77);
  const auto cmp = compare_variance(rl.means, ri.means, 5);
  CHECK(cmp.a_smaller);
  CHECK(rl.ci_lo <= rl.variance);
  CHECK(rl.variance <= rl.ci_hi);
  CHECK_THROWS_AS(estimator_variance("x", [&](std::uint64_t s) { return weighted_loss_mc(p, 4, s); }, 1, 1),
                  std::invalid_argument);
}

TEST_CASE("zero-variance importance distribution") {
  const auto g = MixtureOracle::gaussian();
  const NoiseSchedule s(std::make_shared<SigmoidDensity>(-20.0, 20.0));
  std::vector<double> vals;
  RandomStream rng(4, Stream::kTimes, 0);
  for (int i = 0; i < 1000; ++i) {
    const double l = s.forward(rng.uniform());
    vals.push_back(0.5 * 1.0 * g.mse(l) / s.density(l));
  }
  CHECK(sample_variance(vals) < 1e-16);
  CHECK(vals[0] == doctest::Approx(10.0).epsilon(1e-8));
}
