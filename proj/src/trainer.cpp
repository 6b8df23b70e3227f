#include "wdl/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "wdl/estimator.hpp"
#include "wdl/numerics.hpp"
#include "wdl/weightings.hpp"

namespace wdl {

// ---------------------------------------------------------------- datasets

ToyDataset::ToyDataset(std::string name, std::size_t dim, std::vector<double> points)
    : name_(std::move(name)), dim_(dim), points_(std::move(points)) {
  if (dim_ == 0) throw std::invalid_argument("ToyDataset: dim must be > 0");
  if (points_.size() % dim_) throw std::invalid_argument("ToyDataset: point buffer is not a multiple of dim");
}

void ToyDataset::sample(RandomStream& rng, std::span<double> x) const {
  if (size() == 0) throw std::logic_error("ToyDataset::sample: empty dataset");
  if (x.size() != dim_) throw std::invalid_argument("ToyDataset::sample: dimension mismatch");
  const std::size_t i = rng.below(size());
  std::copy_n(points_.begin() + static_cast<std::ptrdiff_t>(i * dim_), dim_, x.begin());
}

std::vector<std::string> dataset_names() { return {"gaussian1d", "mog1d", "two-moons-2d"}; }

MixtureOracle mog1d_oracle(const DatasetParams& p) { return MixtureOracle(p.weights, p.means, p.component_std); }

Box two_moons_box(const DatasetParams& p) {
  const double a = p.moon_noise;
  return {-1.0 - a, 2.0 + a, -0.5 - a, 1.0 + a};
}

ToyDataset make_dataset(const std::string& name, const DatasetParams& p, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("make_dataset: n must be >= 1");
  RandomStream rng(seed, Stream::kData, 0);
  std::vector<double> pts;
  if (name == "gaussian1d") {
    if (!(p.std >= 0.0)) throw std::invalid_argument("make_dataset: std must be >= 0");
    for (std::size_t i = 0; i < n; ++i) pts.push_back(p.mean + p.std * rng.normal());
    return ToyDataset(name, 1, std::move(pts));
  }
  if (name == "mog1d") {
    const auto o = mog1d_oracle(p);
    pts.resize(n);
    for (std::size_t i = 0; i < n; ++i) o.sample(rng, std::span<double>(&pts[i], 1));
    return ToyDataset(name, 1, std::move(pts));
  }
  if (name == "two-moons-2d") {
    if (!(p.moon_noise >= 0.0)) throw std::invalid_argument("make_dataset: moon_noise must be >= 0");
    for (std::size_t i = 0; i < n; ++i) {
      const double th = kPi * rng.uniform();
      const bool upper = i % 2 == 0;
      const double x = upper ? std::cos(th) : 1.0 - std::cos(th);
      const double y = upper ? std::sin(th) : 0.5 - std::sin(th);
      pts.push_back(x + p.moon_noise * (2.0 * rng.uniform() - 1.0));
      pts.push_back(y + p.moon_noise * (2.0 * rng.uniform() - 1.0));
    }
    return ToyDataset(name, 2, std::move(pts));
  }
  throw std::invalid_argument("make_dataset: unknown dataset " + name);
}

// ---------------------------------------------------------------- training

std::string describe(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "lr=" << c.lr << "\nclip_norm=" << c.clip_norm << "\nbatch=" << c.batch << "\niterations=" << c.iterations
     << "\nschedule=" << c.schedule << "\nweighting=" << c.weighting << "\nseed=" << c.seed
     << "\nlambda_min=" << c.lambda_min << "\nlambda_max=" << c.lambda_max << "\nresidual=" << to_string(c.residual)
     << "\nadaptive_decay=" << c.adaptive_decay << "\neval_every=" << c.eval_every << "\neval_draws=" << c.eval_draws
     << "\neval_seed=" << c.eval_seed << "\n";
  return os.str();
}

namespace {

void validate(const TrainConfig& c) {
  // lr = 0 is accepted as a no-op run; negative rates are not.
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) throw std::invalid_argument("train: learning rate must be >= 0");
  if (!(c.clip_norm > 0.0)) throw std::invalid_argument("train: clip norm must be > 0");
  if (c.batch == 0) throw std::invalid_argument("train: batch must be >= 1");
  if (!(c.lambda_min < c.lambda_max)) throw std::invalid_argument("train: need lambda_min < lambda_max");
  if (!(c.adaptive_decay > 0.0 && c.adaptive_decay < 1.0))
    throw std::invalid_argument("train: adaptive decay must be in (0, 1)");
}

NoiseSchedule fixed_schedule(const TrainConfig& c, const std::string& name) {
  return truncate(make_schedule(name), c.lambda_max, c.lambda_min).schedule();
}

// d(pred in `to`)/d(value in `from`), the same scalar for every coordinate.
double conversion_slope(PredictionKind from, PredictionKind to, LogSnr lambda, const ForwardProcess& proc,
                        double sigma_data) {
  if (from == to) return 1.0;
  const double zero = 0.0, one = 1.0;
  const double a = convert_prediction(std::span<const double>(&one, 1), from, to, std::span<const double>(&zero, 1),
                                      lambda, proc, sigma_data)[0];
  const double b = convert_prediction(std::span<const double>(&zero, 1), from, to,
                                      std::span<const double>(&zero, 1), lambda, proc, sigma_data)[0];
  return a - b;
}

}  // namespace

double schedule_bin_entropy(const NoiseSchedule& s) {
  const double lo = s.lambda_min(), hi = s.lambda_max();
  const std::size_t nb = AdaptiveScheduleState::kBins;
  double h = 0.0, total = 0.0;
  std::vector<double> m(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const double l0 = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(nb);
    const double l1 = b + 1 == nb ? hi : lo + (hi - lo) * static_cast<double>(b + 1) / static_cast<double>(nb);
    m[b] = std::max(0.0, s.inverse(l0) - s.inverse(l1));
    total += m[b];
  }
  for (double v : m)
    if (v > 0.0) h -= v / total * std::log(v / total);
  return h;
}

BatchLoss batch_loss(const DenoiserNet& net, const DataSource& data, const TrainConfig& cfg,
                     const NoiseSchedule& schedule, std::size_t iter) {
  const std::size_t d = net.dim();
  if (data.dim() != d) throw std::invalid_argument("train: dataset and network dimensions differ");
  const auto& nc = net.config();
  const auto w = make_weighting(cfg.weighting);
  const std::uint64_t s = derive_seed(cfg.seed, iter);
  const double u = RandomStream(s, Stream::kTimes, 0).uniform();
  const std::size_t B = cfg.batch;
  BatchLoss out;
  out.grad.assign(net.param_count(), 0.0);
  std::vector<double> x(d), eps(d), z(d), g(d);
  DenoiserNet::Tape tape;
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const LogSnr lam = schedule.forward(TimeSampler::stratified(i, B, u));
    const double p = schedule.density(lam);
    RandomStream rd(s, Stream::kData, i), rn(s, Stream::kNoise, i);
    data.sample(rd, x);
    for (double& e : eps) e = rn.normal();
    const double al = nc.proc.alpha(lam), sg = nc.proc.sigma(lam);
    for (std::size_t j = 0; j < d; ++j) z[j] = al * x[j] + sg * eps[j];
    net.forward(z, lam, tape);

    // Residual in cfg.residual units: target - pred, pred an affine map of the raw output.
    Sample smp{x, eps, lam, z};
    const auto target = prediction_target(smp, cfg.residual, nc.proc, nc.sigma_data);
    const auto pred = nc.output == cfg.residual
                          ? tape.out
                          : convert_prediction(tape.out, nc.output, cfg.residual, z, lam, nc.proc, nc.sigma_data);
    const double k = cfg.residual == PredictionKind::kEps
                         ? 1.0
                         : loss_equivalence_factor(cfg.residual, PredictionKind::kEps, lam, nc.proc, nc.sigma_data);
    const double slope = conversion_slope(nc.output, cfg.residual, lam, nc.proc, nc.sigma_data);
    const double c = w(lam) / p * k;
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double r = target[j] - pred[j];
      sq += r * r;
      g[j] = -c * r * slope / static_cast<double>(B);
    }
    const double li = 0.5 * c * sq;
    out.per_example.push_back(li);
    out.lambdas.push_back(lam);
    out.eps_sq.push_back(k * sq);
    total += li;
    net.backward(tape, g, out.grad);
  }
  out.loss = total / static_cast<double>(B);
  return out;
}

TrainResult train(DenoiserNet& net, const ToyDataset& data, const TrainConfig& cfg, AdaptiveScheduleState* adaptive) {
  validate(cfg);
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (data.dim() != net.dim()) throw std::invalid_argument("train: dataset and network dimensions differ");
  const bool is_adaptive = cfg.schedule == "adaptive";
  std::optional<AdaptiveScheduleState> own;
  if (is_adaptive && !adaptive) {
    own.emplace(cfg.lambda_min, cfg.lambda_max, cfg.adaptive_decay);
    adaptive = &*own;
  }
  const auto w = make_weighting(cfg.weighting);
  NoiseSchedule fixed;
  double fixed_entropy = 0.0;
  if (!is_adaptive) {
    fixed = fixed_schedule(cfg, cfg.schedule);
    fixed_entropy = schedule_bin_entropy(fixed);
  }
  LossProblem eval_problem;
  eval_problem.model = &net;
  eval_problem.data = &data;
  eval_problem.weighting = w;
  eval_problem.proc = net.config().proc;
  if (cfg.eval_every) eval_problem.schedule = adaptive_schedule(AdaptiveScheduleState(cfg.lambda_min, cfg.lambda_max));
  TrainResult res;
  Adam opt(net.param_count(), cfg.lr);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (cfg.eval_every && it % cfg.eval_every == 0)
      res.eval.push_back({it, weighted_loss_mc_serial(eval_problem, cfg.eval_draws, cfg.eval_seed).mean});
    const NoiseSchedule sched = is_adaptive ? adaptive_schedule(*adaptive) : fixed;
    auto bl = batch_loss(net, data, cfg, sched, it);
    if (!std::isfinite(bl.loss))
      throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(it));
    res.history.push_back({it, bl.loss, is_adaptive ? adaptive->entropy() : fixed_entropy});
    clip_global_norm(bl.grad, cfg.clip_norm);
    if (cfg.lr > 0.0) opt.step(net.params(), bl.grad);
    if (is_adaptive)
      for (std::size_t i = 0; i < bl.lambdas.size(); ++i)
        adaptive->update(bl.lambdas[i], w(bl.lambdas[i]) * bl.eps_sq[i]);
  }
  if (cfg.eval_every)
    res.eval.push_back({cfg.iterations, weighted_loss_mc_serial(eval_problem, cfg.eval_draws, cfg.eval_seed).mean});
  if (is_adaptive) res.adaptive = *adaptive;
  return res;
}

double score_error(const Denoiser& model, const MixtureOracle& oracle, LogSnr lambda, std::size_t n,
                   std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("score_error: n must be >= 1");
  if (model.dim() != 1) throw std::invalid_argument("score_error: 1-D model required");
  const auto& proc = oracle.process();
  const double al = proc.alpha(lambda), sg = proc.sigma(lambda);
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    RandomStream rd(seed, Stream::kData, i), rn(seed, Stream::kNoise, i);
    double x = 0.0;
    oracle.sample(rd, std::span<double>(&x, 1));
    const double z = al * x + sg * rn.normal();
    double e = 0.0;
    model.predict_eps(std::span<const double>(&z, 1), lambda, std::span<double>(&e, 1));
    const double diff = -e / sg - oracle.exact_score(z, lambda);
    terms[i] = diff * diff;
  }
  return pairwise_sum(terms) / static_cast<double>(n);
}

void write_history_csv(std::ostream& os, const TrainResult& r) {
  os << "iter,loss,lambda_bins_entropy\n";
  char buf[96];
  for (const auto& h : r.history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", h.iter, h.loss, h.lambda_bins_entropy);
    os << buf;
  }
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'W', 'D', 'L', 'C', 'K', 'P', 'T', '\0'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("load_checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const DenoiserNet& net, const std::string& config_echo) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  const auto& c = net.config();
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, c.data_dim);
  put<std::uint64_t>(os, c.embed_dim);
  put<std::uint64_t>(os, c.hidden.size());
  for (auto h : c.hidden) put<std::uint64_t>(os, h);
  put<double>(os, c.freq_min);
  put<double>(os, c.freq_max);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(c.output));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(c.proc.kind()));
  put<double>(os, c.sigma_data);
  put<std::uint64_t>(os, net.param_count());
  for (double v : net.params()) put<double>(os, v);
  put<std::uint64_t>(os, config_echo.size());
  os.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw std::runtime_error("load_checkpoint: bad magic");
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
  NetConfig c;
  c.data_dim = get<std::uint64_t>(is);
  c.embed_dim = get<std::uint64_t>(is);
  const auto layers = get<std::uint64_t>(is);
  if (layers > 1024) throw std::runtime_error("load_checkpoint: implausible layer count");
  c.hidden.clear();
  for (std::uint64_t l = 0; l < layers; ++l) c.hidden.push_back(get<std::uint64_t>(is));
  c.freq_min = get<double>(is);
  c.freq_max = get<double>(is);
  const auto out = get<std::uint32_t>(is);
  if (out > static_cast<std::uint32_t>(PredictionKind::kO)) throw std::runtime_error("load_checkpoint: bad output kind");
  c.output = static_cast<PredictionKind>(out);
  const auto proc = get<std::uint32_t>(is);
  if (proc > 1) throw std::runtime_error("load_checkpoint: bad process kind");
  c.proc = ForwardProcess(static_cast<ProcessKind>(proc));
  c.sigma_data = get<double>(is);
  DenoiserNet net = [&] {
    try {
      return DenoiserNet(c, 0);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(std::string("load_checkpoint: ") + e.what());
    }
  }();
  const auto np = get<std::uint64_t>(is);
  if (np != net.param_count()) throw std::runtime_error("load_checkpoint: parameter count does not match header");
  std::vector<double> params(np);
  for (auto& v : params) v = get<double>(is);
  net.set_params(params);
  const auto len = get<std::uint64_t>(is);
  if (len > (1u << 24)) throw std::runtime_error("load_checkpoint: implausible config echo length");
  std::string echo(len, '\0');
  is.read(echo.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("load_checkpoint: truncated file");
  return {std::move(net), std::move(echo)};
}

}  // namespace wdl
