#include "wdl/theorem.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>

#include "wdl/numerics.hpp"

namespace wdl {

namespace {

void require_truncated(const NoiseSchedule& s, const char* who) {
  if (!s || !std::isfinite(s.lambda_min()) || !std::isfinite(s.lambda_max()))
    throw std::invalid_argument(std::string(who) + ": schedule endpoints must be finite (truncate first)");
}

// out[i] = f(i) for i < n, in parallel; the first exception is rethrown.
template <class F>
std::vector<double> parallel_table(std::size_t n, F&& f) {
  std::vector<double> out(n);
  std::exception_ptr err;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      out[i] = f(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(wdl_theorem_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

// One smooth piece of [0, 1] in t, with the exact lambda at its ends.
struct Piece {
  double ta, tb;
  LogSnr la, lb;  // la = lambda(ta) > lb = lambda(tb)
};

std::vector<Piece> pieces_for(const NoiseSchedule& s, const Weighting& w) {
  std::vector<LogSnr> ks;
  for (LogSnr k : w.kinks())
    if (k > s.lambda_min() && k < s.lambda_max()) ks.push_back(k);
  std::sort(ks.rbegin(), ks.rend());
  std::vector<Piece> out;
  double ta = 0.0;
  LogSnr la = s.lambda_max();
  for (LogSnr k : ks) {
    const double tk = s.inverse(k);
    if (tk <= ta || tk >= 1.0) continue;
    out.push_back({ta, tk, la, k});
    ta = tk;
    la = k;
  }
  out.push_back({ta, 1.0, la, s.lambda_min()});
  return out;
}

// Grid node: time, lambda, dt/dlambda magnitude (the schedule density), and the
// lambda at which to take dw/dlambda so that a kink at a piece end is approached
// from inside the piece.
struct Node {
  double t;
  LogSnr lambda, deriv_at;
  double jac;
};

// Nodes uniform in lambda on each piece (t follows through the inverse map), so
// the steep ends of schedules like cosine are resolved. Count per piece is
// proportional to its lambda-length, at least 3, odd when `odd` is set for
// Simpson. Pieces share no nodes.
std::vector<std::vector<Node>> piece_nodes(const NoiseSchedule& s, const std::vector<Piece>& ps, std::size_t n,
                                           bool odd) {
  const double span = s.lambda_max() - s.lambda_min();
  std::vector<std::vector<Node>> out;
  for (const auto& p : ps) {
    std::size_t m =
        std::max<std::size_t>(3, static_cast<std::size_t>(std::llround((p.la - p.lb) / span * (n - 1))) + 1);
    if (odd && m % 2 == 0) ++m;
    std::vector<Node> nodes(m);
    for (std::size_t i = 0; i < m; ++i) {
      const bool first = i == 0, last = i + 1 == m;
      const LogSnr l = first ? p.la : (last ? p.lb : p.la + (p.lb - p.la) * static_cast<double>(i) / (m - 1));
      const double t = first ? p.ta : (last ? p.tb : s.inverse(l));
      nodes[i] = {t, l, l, s.density(l)};
    }
    nodes.front().deriv_at = std::nextafter(p.la, -std::numeric_limits<double>::infinity());
    out.push_back(std::move(nodes));
  }
  return out;
}

// Concatenation of piece grids with shared break nodes merged; kinks land on nodes.
std::vector<Node> merged_nodes(const NoiseSchedule& s, const Weighting& w, std::size_t n) {
  const auto pieces = piece_nodes(s, pieces_for(s, w), n, false);
  std::vector<Node> out;
  for (const auto& p : pieces) {
    const std::size_t skip = out.empty() ? 0 : 1;
    out.insert(out.end(), p.begin() + static_cast<std::ptrdiff_t>(skip), p.end());
  }
  return out;
}

// int f dt over the nodes' span, from f at the nodes, via dt = p(lambda) dlambda.
double trapezoid_nodes(const std::vector<Node>& nodes, const std::vector<double>& f) {
  std::vector<double> terms(nodes.size() - 1);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
    terms[i] = 0.5 * (f[i] * nodes[i].jac + f[i + 1] * nodes[i + 1].jac) * (nodes[i].lambda - nodes[i + 1].lambda);
  return pairwise_sum(terms);
}

double simpson(const std::vector<Node>& nodes, const std::vector<double>& f) {
  const std::size_t m = nodes.size();
  const double h = (nodes.front().lambda - nodes.back().lambda) / static_cast<double>(m - 1);
  std::vector<double> terms(m);
  for (std::size_t i = 0; i < m; ++i)
    terms[i] = f[i] * nodes[i].jac * ((i == 0 || i + 1 == m) ? 1.0 : (i % 2 ? 4.0 : 2.0));
  return pairwise_sum(terms) * h / 3.0;
}

// First adjacent pair on an increasing lambda grid where w increases, if any.
bool find_increase(const Weighting& w, LogSnr lmin, LogSnr lmax, std::size_t n, LogSnr& lo, LogSnr& hi) {
  const auto grid = linspace(lmin, lmax, n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double a = w(grid[i]), b = w(grid[i + 1]);
    if (b > a * (1.0 + 1e-12)) {
      lo = grid[i];
      hi = grid[i + 1];
      return true;
    }
  }
  return false;
}

void require_monotonic(const Weighting& w, const NoiseSchedule& s, std::size_t n) {
  LogSnr lo, hi;
  if (find_increase(w, s.lambda_min(), s.lambda_max(), std::max<std::size_t>(n, 2), lo, hi))
    throw NonMonotonicWeighting(w.name(), lo, hi);
}

double integration_by_parts_lhs(const MixtureOracle& o, const NoiseSchedule& s, const Weighting& w,
                                const std::vector<Node>& nodes) {
  const auto y = parallel_table(nodes.size(), [&](std::size_t i) {
    const double dl = s.dlambda_dt(nodes[i].t);
    return -0.5 * dl * o.mse(nodes[i].lambda) * w(nodes[i].lambda);
  });
  return trapezoid_nodes(nodes, y);
}

}  // namespace

IdentityReport make_report(std::string name, double lhs, double rhs, double tolerance, std::size_t grid_size) {
  IdentityReport r;
  r.name = std::move(name);
  r.lhs = lhs;
  r.rhs = rhs;
  r.abs_err = std::fabs(lhs - rhs);
  r.rel_err = std::fabs(lhs) > 0.0 ? r.abs_err / std::fabs(lhs) : (r.abs_err == 0.0 ? 0.0 : INFINITY);
  r.tolerance = tolerance;
  r.grid_size = grid_size;
  r.pass = std::fabs(lhs) < 1e-8 ? r.abs_err <= tolerance : r.rel_err <= tolerance;
  if (!std::isfinite(lhs) || !std::isfinite(rhs)) r.pass = false;
  return r;
}

namespace {
std::string increase_message(const std::string& name, LogSnr lo, LogSnr hi) {
  std::ostringstream os;
  os.precision(17);
  os << "weighting '" << name << "' is not monotonic: w(" << lo << ") < w(" << hi << ")";
  return os.str();
}
}  // namespace

NonMonotonicWeighting::NonMonotonicWeighting(const std::string& name, LogSnr lo, LogSnr hi)
    : std::invalid_argument(increase_message(name, lo, hi)), lo_(lo), hi_(hi) {}

std::vector<double> joint_kl_table(const MixtureOracle& oracle, const NoiseSchedule& schedule,
                                   std::span<const double> times) {
  require_truncated(schedule, "joint_kl_table");
  return parallel_table(times.size(), [&](std::size_t i) { return joint_kl(oracle, times[i], schedule); });
}

IdentityReport verify_time_derivative(const MixtureOracle& oracle, const NoiseSchedule& schedule, std::size_t points,
                                      double fd_step, double tol) {
  require_truncated(schedule, "verify_time_derivative");
  if (points < 1) throw std::invalid_argument("verify_time_derivative: need at least one point");
  const double spacing = 1.0 / static_cast<double>(points + 1);
  if (!(fd_step > 0.0) || 2.0 * fd_step >= spacing)
    throw std::invalid_argument("verify_time_derivative: grid too coarse for the finite-difference step");
  const LogSnr lmin = schedule.lambda_min();
  std::vector<double> rhs(points);
  const auto lhs = parallel_table(points, [&](std::size_t i) {
    const double t = spacing * static_cast<double>(i + 1);
    rhs[i] = 0.5 * schedule.dlambda_dt(t) * oracle.mse(schedule.forward(t));
    return (oracle.joint_kl_at(schedule.forward(t + fd_step), lmin) -
            oracle.joint_kl_at(schedule.forward(t - fd_step), lmin)) /
           (2.0 * fd_step);
  });
  std::size_t worst = 0;
  double worst_err = -1.0;
  bool decreasing = true;
  for (std::size_t i = 0; i < points; ++i) {
    if (!(lhs[i] < 0.0)) decreasing = false;
    const double e = std::fabs(lhs[i] - rhs[i]) / std::max(std::fabs(lhs[i]), 1e-300);
    if (e > worst_err) {
      worst_err = e;
      worst = i;
    }
  }
  auto r = make_report("time_derivative", lhs[worst], rhs[worst], tol, points);
  r.rel_err = worst_err;
  r.pass = r.pass && worst_err <= tol && decreasing;
  return r;
}

IdentityReport verify_integration_by_parts(const MixtureOracle& oracle, const NoiseSchedule& schedule,
                                           const Weighting& w, std::size_t n, double tol) {
  require_truncated(schedule, "verify_integration_by_parts");
  if (n < 3) throw std::invalid_argument("verify_integration_by_parts: n must be >= 3");
  const LogSnr lmin = schedule.lambda_min(), lmax = schedule.lambda_max();
  const double w_hi = w(lmax), w_lo = w(lmin);
  if (!std::isfinite(w_hi) || !std::isfinite(w_lo))
    throw std::invalid_argument("verify_integration_by_parts: non-finite boundary term");
  const auto pieces = piece_nodes(schedule, pieces_for(schedule, w), n, false);
  double lhs = 0.0, integral = 0.0;
  std::size_t total = 0;
  for (const auto& nodes : pieces) {
    lhs += integration_by_parts_lhs(oracle, schedule, w, nodes);
    const auto y = parallel_table(nodes.size(), [&](std::size_t i) {
      const double dwdt = w.derivative(nodes[i].deriv_at) * schedule.dlambda_dt(nodes[i].t);
      return dwdt == 0.0 ? 0.0 : dwdt * oracle.joint_kl_at(nodes[i].lambda, lmin);
    });
    integral += trapezoid_nodes(nodes, y);
    total += nodes.size();
  }
  const double rhs = integral + w_hi * oracle.joint_kl_at(lmax, lmin) - w_lo * oracle.joint_kl_at(lmin, lmin);
  return make_report("integration_by_parts", lhs, rhs, tol, total);
}

PwDistribution::PwDistribution(Weighting weighting, NoiseSchedule schedule, std::size_t check_points)
    : weighting_(std::move(weighting)), schedule_(std::move(schedule)) {
  require_truncated(schedule_, "build_pw");
  norm_ = weighting_(schedule_.lambda_min());
  if (!(norm_ > 0.0) || !std::isfinite(norm_))
    throw std::invalid_argument("build_pw: w(lambda_min) must be positive and finite to normalize");
  require_monotonic(weighting_, schedule_, check_points);
  atom_ = weighting_(schedule_.lambda_max()) / norm_;
}

double PwDistribution::density(double t) const {
  const LogSnr l = schedule_.forward(t);
  const double d = weighting_.derivative(l);
  return d == 0.0 ? 0.0 : d * schedule_.dlambda_dt(t) / norm_;
}

std::vector<double> PwDistribution::breakpoints() const {
  std::vector<double> out;
  const auto ps = pieces_for(schedule_, weighting_);
  for (std::size_t i = 1; i < ps.size(); ++i) out.push_back(ps[i].ta);
  return out;
}

double PwDistribution::expectation(const std::function<double(double)>& f, std::size_t n) const {
  if (n < 3) throw std::invalid_argument("PwDistribution: n must be >= 3");
  double acc = atom_ == 0.0 ? 0.0 : atom_ * f(0.0);
  for (const auto& nodes : piece_nodes(schedule_, pieces_for(schedule_, weighting_), n, true)) {
    const auto y = parallel_table(nodes.size(), [&](std::size_t i) {
      const double d = weighting_.derivative(nodes[i].deriv_at);
      return d == 0.0 ? 0.0 : d * schedule_.dlambda_dt(nodes[i].t) / norm_ * f(nodes[i].t);
    });
    acc += simpson(nodes, y);
  }
  return acc;
}

double PwDistribution::continuous_mass(std::size_t n) const {
  return expectation([](double) { return 1.0; }, n) - atom_;
}

PwDistribution build_pw(const Weighting& weighting, const NoiseSchedule& schedule) {
  return PwDistribution(weighting, schedule);
}

bool pw_density_nonnegative(const Weighting& w, const NoiseSchedule& schedule, std::size_t n) {
  require_truncated(schedule, "pw_density_nonnegative");
  if (n < 2) throw std::invalid_argument("pw_density_nonnegative: n must be >= 2");
  const auto nodes = merged_nodes(schedule, w, n);
  const auto d = parallel_table(nodes.size(), [&](std::size_t i) {
    const double dw = w.derivative(nodes[i].deriv_at);
    return dw == 0.0 ? 0.0 : dw * schedule.dlambda_dt(nodes[i].t);
  });
  double scale = 0.0, lowest = 0.0;
  for (double v : d) {
    scale = std::max(scale, std::fabs(v));
    lowest = std::min(lowest, v);
  }
  return lowest >= -1e-9 * scale;
}

IdentityReport verify_pw_mass(const PwDistribution& pw, std::size_t n, double tol) {
  return make_report("pw_mass", pw.total_mass(n), 1.0, tol, n);
}

IdentityReport verify_pw_expectation(const MixtureOracle& oracle, const PwDistribution& pw, std::size_t n,
                                     double tol) {
  const auto& s = pw.schedule();
  const LogSnr lmin = s.lambda_min();
  const double e = pw.expectation([&](double t) { return oracle.joint_kl_at(s.forward(t), lmin); }, n);
  const double lhs = e - oracle.joint_kl_at(lmin, lmin);
  const double rhs =
      integration_by_parts_lhs(oracle, s, pw.weighting(), merged_nodes(s, pw.weighting(), n)) / pw.normalizer();
  return make_report("pw_expectation", lhs, rhs, tol, n);
}

IdentityReport verify_area_identity(const MixtureOracle& oracle, const NoiseSchedule& schedule, const Weighting& w,
                                    std::size_t n, double tol) {
  require_truncated(schedule, "verify_area_identity");
  if (n < 3) throw std::invalid_argument("verify_area_identity: n must be >= 3");
  require_monotonic(w, schedule, n);
  const LogSnr lmin = schedule.lambda_min();
  const auto nodes = merged_nodes(schedule, w, n);
  const std::size_t m = nodes.size();
  const auto L = parallel_table(m, [&](std::size_t i) { return oracle.joint_kl_at(nodes[i].lambda, lmin); });
  std::vector<double> W(m);
  for (std::size_t i = 0; i < m; ++i) W[i] = w(nodes[i].lambda);
  // Midpoint tags, evaluated independently of the node values.
  std::vector<double> wdl(m - 1), ldw(m - 1);
  const auto lmid = parallel_table(m - 1, [&](std::size_t i) {
    const LogSnr l = 0.5 * (nodes[i].lambda + nodes[i + 1].lambda);
    wdl[i] = w(l) * (L[i] - L[i + 1]);
    return oracle.joint_kl_at(l, lmin);
  });
  for (std::size_t i = 0; i + 1 < m; ++i) ldw[i] = lmid[i] * (W[i + 1] - W[i]);
  const double lhs = W.back() * L.back() + pairwise_sum(wdl);
  const double rhs = W.front() * L.front() + pairwise_sum(ldw);
  return make_report("area_identity", lhs, rhs, tol, m);
}

IdentityReport verify_fisher(const MixtureOracle& oracle, std::span<const LogSnr> lambdas,
                             const NoiseSchedule& schedule, double fd_step, double tol) {
  require_truncated(schedule, "verify_fisher");
  if (lambdas.empty()) throw std::invalid_argument("verify_fisher: need at least one lambda");
  const LogSnr lmin = schedule.lambda_min(), lmax = schedule.lambda_max();
  for (LogSnr l : lambdas) {
    if (!(fd_step > 0.0) || l + fd_step == l || l - fd_step == l)
      throw std::invalid_argument("verify_fisher: finite-difference step underflows");
    if (l - fd_step < lmin || l + fd_step > lmax)
      throw std::invalid_argument("verify_fisher: lambda +- step leaves the schedule range");
  }
  const std::size_t k = lambdas.size();
  std::vector<double> rhs(k);
  const auto lhs = parallel_table(k, [&](std::size_t i) {
    const LogSnr l = lambdas[i];
    rhs[i] = 0.5 * oracle.process().sigma2(l) * oracle.fisher_divergence(l);
    return (oracle.joint_kl_at(l + fd_step, lmin) - oracle.joint_kl_at(l - fd_step, lmin)) / (2.0 * fd_step);
  });
  std::size_t worst = 0;
  double worst_err = -1.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double e = std::fabs(lhs[i] - rhs[i]) / std::max(std::fabs(lhs[i]), 1e-300);
    if (e > worst_err) {
      worst_err = e;
      worst = i;
    }
  }
  auto r = make_report("fisher", lhs[worst], rhs[worst], tol, k);
  r.rel_err = worst_err;
  r.pass = r.pass && worst_err <= tol;
  return r;
}

std::vector<IdentityReport> verify_all() {
  std::vector<IdentityReport> out;
  const std::pair<std::string, MixtureOracle> oracles[] = {{"gaussian", MixtureOracle::gaussian()},
                                                           {"two-component", MixtureOracle::two_component()}};
  const char* schedules[] = {"cosine", "fm-ot"};
  const char* weightings[] = {"elbo", "vpred-cosine", "sigmoid-2", "edm-monotonic"};
  auto named = [](IdentityReport r, const std::string& suffix) {
    r.name += "/" + suffix;
    return r;
  };
  for (const char* sn : schedules) {
    const auto s = truncate(make_schedule(sn), 12.0, -12.0).schedule();
    for (const auto& [on, o] : oracles) {
      out.push_back(named(verify_time_derivative(o, s), on + "/" + sn));
      for (const char* wn : weightings) {
        const auto w = make_weighting(wn);
        out.push_back(named(verify_integration_by_parts(o, s, w), on + "/" + sn + "/" + wn));
        const auto pw = build_pw(w, s);
        out.push_back(named(verify_pw_expectation(o, pw), on + "/" + sn + "/" + wn));
      }
      for (const char* wn : {"vpred-cosine", "sigmoid-2"})
        out.push_back(named(verify_area_identity(o, s, make_weighting(wn)), on + "/" + sn + "/" + wn));
      const auto grid = linspace(-10.0, 10.0, 11);
      out.push_back(named(verify_fisher(o, grid, s), on + "/" + sn));
    }
    for (const char* wn : weightings)
      out.push_back(named(verify_pw_mass(build_pw(make_weighting(wn), s)), std::string(sn) + "/" + wn));
  }
  const auto wide = truncate(make_schedule("cosine"), 20.0, -20.0).schedule();
  out.push_back(named(verify_pw_mass(build_pw(make_weighting("sigmoid-2"), wide)), "cosine-20/sigmoid-2"));
  return out;
}

}  // namespace wdl
