#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wdl/model.hpp"
#include "wdl/nn.hpp"
#include "wdl/oracle.hpp"
#include "wdl/schedules.hpp"

namespace wdl {

struct DatasetParams {
  double mean = 0.0, std = 1.0;                  ///< gaussian1d
  std::vector<double> weights{0.5, 0.5};         ///< mog1d
  std::vector<double> means{-1.0, 1.0};          ///< mog1d
  double component_std = 0.25;                   ///< mog1d
  double moon_noise = 0.05;                      ///< two-moons-2d, uniform jitter half-width
};

/// A finite point set resampled uniformly with replacement.
class ToyDataset final : public DataSource {
 public:
  ToyDataset(std::string name, std::size_t dim, std::vector<double> points);
  const std::string& name() const { return name_; }
  std::size_t size() const { return dim_ ? points_.size() / dim_ : 0; }
  const std::vector<double>& points() const { return points_; }  ///< size() x dim(), row-major
  std::size_t dim() const override { return dim_; }
  /// Throws std::logic_error on an empty dataset.
  void sample(RandomStream& rng, std::span<double> x) const override;

 private:
  std::string name_;
  std::size_t dim_;
  std::vector<double> points_;
};

/// gaussian1d, mog1d or two-moons-2d with n points drawn from (seed, data, 0).
/// Throws std::invalid_argument for an unknown name, n = 0 or invalid params.
ToyDataset make_dataset(const std::string& name, const DatasetParams& params, std::size_t n, std::uint64_t seed);
std::vector<std::string> dataset_names();
/// The mixture a mog1d dataset is drawn from.
MixtureOracle mog1d_oracle(const DatasetParams& params);

/// Bounding box of two-moons-2d points: x in [-1 - a, 2 + a], y in [-0.5 - a, 1 + a].
struct Box {
  double x_lo, x_hi, y_lo, y_hi;
};
Box two_moons_box(const DatasetParams& params);

struct TrainConfig {
  double lr = 1e-3;
  double clip_norm = 1.0;
  std::size_t batch = 128;
  std::size_t iterations = 2000;
  std::string schedule = "cosine";  ///< any schedule name, or "adaptive"
  std::string weighting = "elbo";
  std::uint64_t seed = 0;
  LogSnr lambda_min = kDefaultLambdaMin, lambda_max = kDefaultLambdaMax;
  /// Residual the per-example loss is formed in, mapped to eps-units with its
  /// loss-equivalence factor.
  PredictionKind residual = PredictionKind::kEps;
  double adaptive_decay = 0.999;
  /// Every eval_every iterations (and after the last) the loss is estimated with
  /// eval_draws fixed draws (seed eval_seed) with lambda uniform on the training range. 0 = off.
  std::size_t eval_every = 0;
  std::size_t eval_draws = 4096;
  std::uint64_t eval_seed = 12345;
};

/// key=value lines; also used as the checkpoint config echo.
std::string describe(const TrainConfig& cfg);

struct HistoryRow {
  std::size_t iter;
  double loss;                ///< batch mean of 1/2 (w/p) ||eps - eps_hat||^2
  double lambda_bins_entropy; ///< of the sampling schedule's 100-bin masses
};

struct EvalPoint {
  std::size_t iter;  ///< number of completed iterations
  double loss;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  std::vector<EvalPoint> eval;
  std::optional<AdaptiveScheduleState> adaptive;
};

/// Single-threaded and deterministic per cfg.seed. Iteration k draws its
/// low-discrepancy offset, data and noise from substreams of derive_seed(seed, k).
/// When cfg.schedule is "adaptive" the given state is updated in place (a fresh
/// default one is used when null); each example pushes w(lambda) ||eps - eps_hat||^2
/// into its own bin after the step.
/// Throws std::invalid_argument for an invalid config, an empty dataset or a
/// dimension mismatch; std::runtime_error naming the iteration on a non-finite loss.
TrainResult train(DenoiserNet& net, const ToyDataset& data, const TrainConfig& cfg,
                  AdaptiveScheduleState* adaptive = nullptr);

/// Mean batch loss and its parameter gradient for one iteration's draws, without
/// updating anything. Exposed for gradient checks.
struct BatchLoss {
  double loss = 0.0;
  std::vector<double> grad;
  std::vector<double> per_example;
  std::vector<LogSnr> lambdas;
  std::vector<double> eps_sq;  ///< ||eps - eps_hat||^2 per example
};
BatchLoss batch_loss(const DenoiserNet& net, const DataSource& data, const TrainConfig& cfg,
                     const NoiseSchedule& schedule, std::size_t iter);

/// Entropy of a schedule's masses over AdaptiveScheduleState::kBins equal bins of its range.
double schedule_bin_entropy(const NoiseSchedule& schedule);

/// E_q |s_model(z) - s_oracle(z)|^2 at lambda, z ~ q_lambda, n draws.
double score_error(const Denoiser& model, const MixtureOracle& oracle, LogSnr lambda, std::size_t n,
                   std::uint64_t seed);

void write_history_csv(std::ostream& os, const TrainResult& r);

struct Checkpoint {
  DenoiserNet net;
  std::string config_echo;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian binary: magic "WDLCKPT\0", u32 version, network config, u64
/// parameter count, f64 parameters, u64 echo length, echo bytes.
/// Throws std::runtime_error on I/O failure or a malformed file.
void save_checkpoint(const std::string& path, const DenoiserNet& net, const std::string& config_echo);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace wdl
