#include "wdl/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "wdl/estimator.hpp"
#include "wdl/numerics.hpp"
#include "wdl/oracle.hpp"
#include "wdl/sampler.hpp"
#include "wdl/theorem.hpp"
#include "wdl/trainer.hpp"
#include "wdl/weightings.hpp"

namespace wdl {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string resolve_out(const std::string& path) {
  const char* dir = std::getenv("WDL_OUT_DIR");
  std::filesystem::path p(path);
  if (dir && *dir && p.is_relative()) p = std::filesystem::path(dir) / p;
  return p.string();
}

/// Either the given stream or a file opened for --out.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (path.empty()) return;
    const auto full = resolve_out(path);
    if (const auto parent = std::filesystem::path(full).parent_path(); !parent.empty())
      std::filesystem::create_directories(parent);
    file_ = std::make_unique<std::ofstream>(full, std::ios::binary | std::ios::trunc);
    if (!*file_) throw std::runtime_error("cannot open " + full);
    os_ = file_.get();
  }
  std::ostream& operator*() { return *os_; }
  void close() {
    if (file_) {
      file_->close();
      if (!*file_) throw std::runtime_error("write failed");
    }
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_;
};

// key=value lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot read config file " + path);
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

// Appends config entries as --key=value unless the flag is already present.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!path) return rest;
  for (const auto& [k, v] : read_config(*path)) {
    const std::string flag = "--" + k;
    bool given = false;
    for (const auto& a : rest) given = given || a == flag || a.rfind(flag + "=", 0) == 0;
    if (!given) rest.push_back(flag + "=" + v);
  }
  return rest;
}

MixtureOracle make_oracle(const std::string& name, const ForwardProcess& proc = ForwardProcess::vp()) {
  if (name == "gaussian") return MixtureOracle::gaussian(0.0, 1.0, proc);
  if (name == "two-component") return MixtureOracle::two_component(1.0, 0.5, proc);
  if (name == "mog1d") {
    const DatasetParams dp;
    return MixtureOracle(dp.weights, dp.means, dp.component_std, proc);
  }
  if (name.rfind("lowbit-", 0) == 0) return MixtureOracle::low_bit(std::stoi(name.substr(7)), proc);
  throw std::invalid_argument("unknown oracle " + name + " (gaussian, two-component, mog1d, lowbit-<bits>)");
}

struct ScheduleFlags {
  std::string name = "cosine";
  std::optional<double> lmin, lmax;
  ScheduleParams params;
  void add(CLI::App* c, bool name_required) {
    auto* o = c->add_option("--schedule,--name", name, "schedule name");
    if (name_required) o->required();
    c->add_option("--lmin", lmin, "truncate at this lambda_min");
    c->add_option("--lmax", lmax, "truncate at this lambda_max");
    c->add_option("--resolution", params.resolution, "shifted-cosine resolution");
    c->add_option("--rho", params.rho, "edm-sample rho");
    c->add_option("--sigma-min", params.sigma_min, "edm-sample sigma_min");
    c->add_option("--sigma-max", params.sigma_max, "edm-sample sigma_max");
  }
  /// Truncated to [lmin, lmax]; unbounded schedules default to [-20, 20] when `force`.
  NoiseSchedule build(bool force) const {
    const auto s = make_schedule(name, params);
    const bool unbounded = !std::isfinite(s.lambda_min()) || !std::isfinite(s.lambda_max());
    if (!lmin && !lmax && !(force && unbounded)) return s;
    const double hi = lmax.value_or(std::min(s.lambda_max(), kDefaultLambdaMax));
    const double lo = lmin.value_or(std::max(s.lambda_min(), kDefaultLambdaMin));
    return truncate(s, hi, lo).schedule();
  }
};

struct Context {
  std::uint64_t seed = 0;
  std::string out;
  bool seed_given() const { return seed_opt && seed_opt->count() > 0; }
  CLI::Option* seed_opt = nullptr;
};

// ------------------------------------------------------------------ commands

int cmd_schedule_dump(const Context& ctx, const ScheduleFlags& sf, std::size_t n, std::ostream& stdout_) {
  if (n < 2) throw std::invalid_argument("--n must be >= 2");
  const auto s = sf.build(false);
  Sink sink(ctx.out, stdout_);
  *sink << "t,lambda,p_lambda\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    const double l = s.forward(t);
    const double p = std::isfinite(l) ? s.density(l) : 0.0;
    *sink << num(t) << ',' << num(l) << ',' << num(p) << '\n';
  }
  sink.close();
  return kExitOk;
}

struct WeightingFlags {
  std::string name;
  WeightingParams params;
  std::optional<double> resolution;
  Weighting build() const {
    auto w = make_weighting(name, params);
    return resolution ? shift_weighting(w, *resolution) : w;
  }
};

int cmd_weighting_dump(const Context& ctx, const WeightingFlags& wf, double lmin, double lmax, std::size_t n,
                       bool normalized, std::ostream& stdout_) {
  if (n < 2) throw std::invalid_argument("--n must be >= 2");
  if (!(lmin < lmax)) throw std::invalid_argument("need --lmin < --lmax");
  const auto w = wf.build();
  const auto grid = linspace(lmin, lmax, n);
  std::vector<double> v(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, v[i] = w(grid[i]));
  Sink sink(ctx.out, stdout_);
  *sink << (normalized ? "lambda,w,w_normalized\n" : "lambda,w\n");
  for (std::size_t i = 0; i < n; ++i) {
    *sink << num(grid[i]) << ',' << num(v[i]);
    if (normalized) *sink << ',' << num(peak > 0.0 ? v[i] / peak : 0.0);
    *sink << '\n';
  }
  sink.close();
  return kExitOk;
}

int cmd_verify_all(const Context& ctx, std::ostream& stdout_) {
  const auto reports = verify_all();
  Sink sink(ctx.out, stdout_);
  *sink << "name,lhs,rhs,abs_err,rel_err,pass\n";
  bool ok = true;
  for (const auto& r : reports) {
    ok = ok && r.pass;
    *sink << r.name << ',' << num(r.lhs) << ',' << num(r.rhs) << ',' << num(r.abs_err) << ',' << num(r.rel_err) << ','
          << (r.pass ? "true" : "false") << '\n';
  }
  sink.close();
  return ok ? kExitOk : kExitFailed;
}

std::string areas_path(const std::string& out) {
  if (out.empty()) return {};
  std::filesystem::path p(out);
  const auto stem = p.stem().string();
  return (p.parent_path() / (stem + "_areas.csv")).string();
}

int cmd_lowbit(const Context& ctx, const std::vector<int>& bits, double lmin, double lmax, std::size_t n,
               const std::string& grid_kind, std::string areas, std::ostream& stdout_) {
  if (n < 2) throw std::invalid_argument("--n must be >= 2");
  LowBitGrid placement;
  if (grid_kind == "endpoints") placement = LowBitGrid::kEndpoints;
  else if (grid_kind == "centers") placement = LowBitGrid::kBinCenters;
  else throw std::invalid_argument("--grid must be endpoints or centers");
  const auto grid = linspace(lmin, lmax, n);
  const auto c = lowbit_curves(bits, grid, placement);
  Sink sink(ctx.out, stdout_);
  *sink << "lambda";
  for (int b : bits) *sink << ",dL_dlambda_n" << b;
  for (int b : bits) *sink << ",per_bit_n" << b;
  *sink << '\n';
  for (std::size_t j = 0; j < grid.size(); ++j) {
    *sink << num(grid[j]);
    for (const auto& k : c.dkl) *sink << ',' << num(k.values[j]);
    for (const auto& k : c.per_bit) *sink << ',' << num(k.values[j]);
    *sink << '\n';
  }
  sink.close();
  if (areas.empty()) areas = areas_path(ctx.out);
  if (!areas.empty()) {
    Sink as(areas, stdout_);
    *as << "n,area,area_minus_ln2,peak_lambda\n";
    for (std::size_t i = 0; i < bits.size(); ++i)
      *as << bits[i] << ',' << num(c.per_bit_area[i]) << ',' << num(c.per_bit_area[i] - kLn2) << ','
          << num(c.per_bit_peak[i]) << '\n';
    as.close();
  }
  return kExitOk;
}

struct ModelFlags {
  std::string oracle = "gaussian";
  std::string model = "oracle";  // oracle | zero | checkpoint
  std::string checkpoint;
  std::string process = "vp";

  ForwardProcess proc() const {
    if (process == "vp") return ForwardProcess::vp();
    if (process == "ve") return ForwardProcess::ve();
    throw std::invalid_argument("--process must be vp or ve");
  }
  void add(CLI::App* c) {
    c->add_option("--oracle", oracle, "data oracle: gaussian, two-component, mog1d, lowbit-<bits>");
    c->add_option("--model", model, "oracle, zero or checkpoint");
    c->add_option("--checkpoint", checkpoint, "checkpoint file (with --model checkpoint)");
    c->add_option("--process", process, "vp or ve");
  }
  std::shared_ptr<const Denoiser> denoiser(const MixtureOracle& o) const {
    if (model == "oracle") return std::make_shared<MixtureOracle>(o);
    if (model == "zero") return std::make_shared<ZeroDenoiser>(1);
    if (model == "checkpoint") {
      if (checkpoint.empty()) throw std::invalid_argument("--model checkpoint needs --checkpoint");
      return std::make_shared<DenoiserNet>(load_checkpoint(checkpoint).net);
    }
    throw std::invalid_argument("--model must be oracle, zero or checkpoint");
  }
};

int cmd_loss_estimate(const Context& ctx, const ModelFlags& mf, const ScheduleFlags& sf, const WeightingFlags& wf,
                      std::size_t n, const std::string& times, const std::string& residual, std::ostream& stdout_) {
  if (!ctx.seed_given()) throw UsageError("loss estimate: --seed is required");
  const auto proc = mf.proc();
  const auto oracle = make_oracle(mf.oracle, proc);
  const auto model = mf.denoiser(oracle);
  if (model->dim() != 1) throw std::invalid_argument("loss estimate: 1-D models only");
  LossProblem p;
  p.model = model.get();
  p.data = &oracle;
  p.schedule = sf.build(true);
  p.weighting = wf.build();
  p.proc = proc;
  EstimatorOptions opts;
  opts.times = parse_time_sampling(times);
  opts.residual = parse_prediction_kind(residual);
  const auto e = weighted_loss_mc(p, n, ctx.seed, opts);
  Sink sink(ctx.out, stdout_);
  *sink << "mean,std_error,n\n" << num(e.mean) << ',' << num(e.std_error) << ',' << e.n << '\n';
  sink.close();
  return kExitOk;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) v.push_back(item);
  return v;
}

int cmd_variance(const Context& ctx, const ModelFlags& mf, const ScheduleFlags& sf, const WeightingFlags& wf,
                 const std::string& schedules, const std::string& times_list, std::size_t n, std::size_t repeats,
                 std::size_t adaptive_iters, std::ostream& stdout_) {
  const auto proc = mf.proc();
  const auto oracle = make_oracle(mf.oracle, proc);
  const auto model = mf.denoiser(oracle);
  LossProblem base;
  base.model = model.get();
  base.data = &oracle;
  base.weighting = wf.build();
  base.proc = proc;
  const double lo = sf.lmin.value_or(kDefaultLambdaMin), hi = sf.lmax.value_or(kDefaultLambdaMax);
  Sink sink(ctx.out, stdout_);
  *sink << "config,variance,ci_lo,ci_hi,repeats,n\n";
  for (const auto& sname : split(schedules)) {
    LossProblem p = base;
    if (sname == "adaptive") {
      AdaptiveScheduleState st(lo, hi);
      fit_adaptive_schedule(p, st, adaptive_iters, 256, derive_seed(ctx.seed, 0xada));
      p.schedule = adaptive_schedule(st);
    } else {
      ScheduleFlags f = sf;
      f.name = sname;
      f.lmin = lo;
      f.lmax = hi;
      p.schedule = f.build(true);
    }
    for (const auto& tname : split(times_list)) {
      EstimatorOptions opts;
      opts.times = parse_time_sampling(tname);
      const auto r = estimator_variance(sname + "/" + tname,
                                        [&](std::uint64_t s) { return weighted_loss_mc(p, n, s, opts); }, repeats,
                                        ctx.seed);
      *sink << r.config << ',' << num(r.variance) << ',' << num(r.ci_lo) << ',' << num(r.ci_hi) << ',' << repeats
            << ',' << n << '\n';
    }
  }
  sink.close();
  return kExitOk;
}

struct TrainFlags {
  std::string dataset = "mog1d";
  std::size_t n_data = 10000;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t embed_dim = 16;
  std::string output = "eps";
  std::string residual = "eps";
  std::string checkpoint;
  TrainConfig cfg;
};

int cmd_train(const Context& ctx, TrainFlags tf, std::ostream& stdout_, std::ostream& err) {
  tf.cfg.seed = ctx.seed;
  tf.cfg.residual = parse_prediction_kind(tf.residual);
  const auto data = make_dataset(tf.dataset, {}, tf.n_data, ctx.seed);
  NetConfig nc;
  nc.data_dim = data.dim();
  nc.hidden = tf.hidden;
  nc.embed_dim = tf.embed_dim;
  nc.output = parse_prediction_kind(tf.output);
  DenoiserNet net(nc, ctx.seed);
  const auto r = train(net, data, tf.cfg);
  Sink sink(ctx.out, stdout_);
  write_history_csv(*sink, r);
  sink.close();
  if (!tf.checkpoint.empty()) {
    std::ostringstream echo;
    echo << "dataset=" << tf.dataset << "\nn_data=" << tf.n_data << "\n" << describe(tf.cfg);
    save_checkpoint(resolve_out(tf.checkpoint), net, echo.str());
  } else {
    err << "train: no --checkpoint given; parameters not saved\n";
  }
  return kExitOk;
}

int cmd_sample(const Context& ctx, const ModelFlags& mf, const ScheduleFlags& sf, const std::string& sampler,
               std::size_t steps, std::size_t n, const Churn& churn, std::ostream& stdout_, std::ostream& err) {
  SamplerConfig c;
  c.kind = parse_sampler_kind(sampler);
  c.steps = steps;
  c.schedule = sf.build(true);
  c.churn = churn;
  c.proc = mf.proc();
  std::shared_ptr<const ScoreSource> score;
  std::optional<MixtureOracle> oracle;
  if (mf.model == "oracle") {
    score = std::make_shared<MixtureOracle>(make_oracle(mf.oracle, c.proc));
  } else {
    oracle.emplace(make_oracle(mf.oracle, c.proc));
    std::shared_ptr<const Denoiser> d = mf.denoiser(*oracle);
    if (mf.model == "checkpoint") c.proc = std::static_pointer_cast<const DenoiserNet>(d)->config().proc;
    score = std::make_shared<DenoiserScore>(d, c.proc);
  }
  const auto r = sample(*score, c, n, ctx.seed);
  for (const auto& w : r.warnings) err << "sample: warning: " << w << '\n';
  Sink sink(ctx.out, stdout_);
  if (r.dim == 1) {
    *sink << "x\n";
  } else {
    for (std::size_t j = 0; j < r.dim; ++j) *sink << (j ? ",x" : "x") << j;
    *sink << '\n';
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < r.dim; ++j) *sink << (j ? "," : "") << num(r.samples[i * r.dim + j]);
    *sink << '\n';
  }
  sink.close();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weighted diffusion loss toolkit", "wdl"};
  app.require_subcommand(1);
  Context ctx;
  ctx.seed_opt = app.add_option("--seed", ctx.seed, "random seed (default 0)");
  app.add_option("--out", ctx.out, "output file (default stdout; relative to $WDL_OUT_DIR when set)");
  app.set_help_flag("-h,--help", "print help");
  app.footer("Options may also come from --config FILE (key=value lines); command-line flags win.");

  auto sub = [&](CLI::App* parent, const std::string& name, const std::string& desc) {
    auto* s = parent->add_subcommand(name, desc);
    s->fallthrough();
    return s;
  };

  // schedule dump
  auto* schedule = sub(&app, "schedule", "noise schedules");
  schedule->require_subcommand(1);
  auto* sdump = sub(schedule, "dump", "CSV t,lambda,p_lambda at n uniformly spaced t");
  ScheduleFlags sd_flags;
  std::size_t sd_n = 101;
  sd_flags.add(sdump, true);
  sdump->add_option("--n", sd_n, "number of rows");

  // weighting dump
  auto* weighting = sub(&app, "weighting", "weighting functions");
  weighting->require_subcommand(1);
  auto* wdump = sub(weighting, "dump", "CSV lambda,w on linspace(lmin, lmax, n)");
  WeightingFlags wd_flags;
  double wd_lmin = -20.0, wd_lmax = 20.0;
  std::size_t wd_n = 401;
  bool wd_norm = false;
  wdump->add_option("--name", wd_flags.name, "weighting name")->required();
  wdump->add_option("--k", wd_flags.params.k, "sigmoid-k offset / p2 constant");
  wdump->add_option("--gamma", wd_flags.params.gamma, "p2 exponent / min-snr clip");
  wdump->add_option("--resolution", wd_flags.resolution, "shift by log(64 / resolution)");
  wdump->add_option("--lmin", wd_lmin);
  wdump->add_option("--lmax", wd_lmax);
  wdump->add_option("--n", wd_n);
  wdump->add_flag("--normalized", wd_norm, "add w_normalized (max 1 over the range)");

  // verify all
  auto* verify = sub(&app, "verify", "numerical verification of the loss identities");
  verify->require_subcommand(1);
  auto* vall = sub(verify, "all", "CSV name,lhs,rhs,abs_err,rel_err,pass; exit 1 if any fails");

  // lowbit
  auto* lowbit = sub(&app, "lowbit", "KL derivative curves of low-bit data and per-bit areas");
  std::vector<int> lb_bits{1, 2, 3, 4};
  double lb_lmin = -20.0, lb_lmax = 20.0;
  std::size_t lb_n = 2001;
  std::string lb_grid = "endpoints", lb_areas;
  lowbit->add_option("--bits", lb_bits, "bit depths, e.g. 1,2,3")->delimiter(',');
  lowbit->add_option("--lmin", lb_lmin);
  lowbit->add_option("--lmax", lb_lmax);
  lowbit->add_option("--n", lb_n);
  lowbit->add_option("--grid", lb_grid, "endpoints or centers");
  lowbit->add_option("--areas", lb_areas, "per-bit area CSV (default: <out>_areas.csv when --out is given)");

  // loss estimate
  auto* loss = sub(&app, "loss", "Monte Carlo weighted loss");
  loss->require_subcommand(1);
  auto* lest = sub(loss, "estimate", "prints mean,std_error,n; --seed required");
  ModelFlags le_model;
  ScheduleFlags le_sched;
  WeightingFlags le_w{"elbo", {}, {}};
  std::size_t le_n = 100000;
  std::string le_times = "ld", le_residual = "eps";
  le_model.add(lest);
  le_sched.add(lest, false);
  lest->add_option("--weighting", le_w.name);
  lest->add_option("--k", le_w.params.k);
  lest->add_option("--gamma", le_w.params.gamma);
  lest->add_option("--n", le_n);
  lest->add_option("--times", le_times, "ld or iid");
  lest->add_option("--residual", le_residual, "eps, x, v, score, f or o");

  // variance
  auto* variance = sub(&app, "variance", "estimator variance per schedule and time sampler, bootstrap CI");
  ModelFlags va_model;
  ScheduleFlags va_sched;
  WeightingFlags va_w{"elbo", {}, {}};
  std::string va_schedules = "cosine,fm-ot,adaptive", va_times = "ld,iid";
  std::size_t va_n = 1000, va_repeats = 200, va_adapt = 4000;
  va_model.add(variance);
  variance->add_option("--lmin", va_sched.lmin);
  variance->add_option("--lmax", va_sched.lmax);
  variance->add_option("--weighting", va_w.name);
  variance->add_option("--k", va_w.params.k);
  variance->add_option("--schedules", va_schedules, "comma-separated; 'adaptive' fits one to the model first");
  variance->add_option("--times", va_times, "comma-separated: ld, iid");
  variance->add_option("--n", va_n, "draws per estimate");
  variance->add_option("--repeats", va_repeats);
  variance->add_option("--adaptive-iterations", va_adapt);

  // train
  auto* trn = sub(&app, "train", "train the MLP denoiser; history CSV iter,loss,lambda_bins_entropy");
  TrainFlags tf;
  trn->add_option("--dataset", tf.dataset, "gaussian1d, mog1d or two-moons-2d");
  trn->add_option("--n-data", tf.n_data);
  trn->add_option("--weighting", tf.cfg.weighting);
  trn->add_option("--schedule", tf.cfg.schedule, "schedule name or adaptive");
  trn->add_option("--iterations", tf.cfg.iterations);
  trn->add_option("--batch", tf.cfg.batch);
  trn->add_option("--lr", tf.cfg.lr);
  trn->add_option("--clip-norm", tf.cfg.clip_norm);
  trn->add_option("--lmin", tf.cfg.lambda_min);
  trn->add_option("--lmax", tf.cfg.lambda_max);
  trn->add_option("--hidden", tf.hidden, "hidden widths, e.g. 64,64")->delimiter(',');
  trn->add_option("--embed-dim", tf.embed_dim);
  trn->add_option("--output", tf.output, "network output parameterization");
  trn->add_option("--residual", tf.residual, "residual the loss is formed in");
  trn->add_option("--checkpoint", tf.checkpoint, "checkpoint file to write");

  // sample
  auto* smp = sub(&app, "sample", "draw samples; CSV one sample per row");
  ModelFlags sm_model;
  ScheduleFlags sm_sched;
  std::string sm_sampler = "ode-heun";
  std::size_t sm_steps = 64, sm_n = 1000;
  Churn churn;
  sm_model.add(smp);
  sm_sched.add(smp, false);
  smp->add_option("--sampler", sm_sampler, "ddpm, ode-euler, ode-heun or sde-euler");
  smp->add_option("--steps", sm_steps);
  smp->add_option("--n", sm_n);
  smp->add_option("--s-churn", churn.s_churn);
  smp->add_option("--s-tmin", churn.s_tmin);
  smp->add_option("--s-tmax", churn.s_tmax);
  smp->add_option("--s-noise", churn.s_noise);

  std::vector<std::string> args;
  try {
    args = merge_config(raw_args);
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    CLI::App* target = &app;
    for (CLI::App* s = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front(); s;
         s = s->get_subcommands().empty() ? nullptr : s->get_subcommands().front())
      target = s;
    out << target->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (sdump->parsed()) return cmd_schedule_dump(ctx, sd_flags, sd_n, out);
    if (wdump->parsed()) return cmd_weighting_dump(ctx, wd_flags, wd_lmin, wd_lmax, wd_n, wd_norm, out);
    if (vall->parsed()) return cmd_verify_all(ctx, out);
    if (lowbit->parsed()) return cmd_lowbit(ctx, lb_bits, lb_lmin, lb_lmax, lb_n, lb_grid, lb_areas, out);
    if (lest->parsed())
      return cmd_loss_estimate(ctx, le_model, le_sched, le_w, le_n, le_times, le_residual, out);
    if (variance->parsed())
      return cmd_variance(ctx, va_model, va_sched, va_w, va_schedules, va_times, va_n, va_repeats, va_adapt, out);
    if (trn->parsed()) return cmd_train(ctx, tf, out, err);
    if (smp->parsed()) return cmd_sample(ctx, sm_model, sm_sched, sm_sampler, sm_steps, sm_n, churn, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailed;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace wdl
