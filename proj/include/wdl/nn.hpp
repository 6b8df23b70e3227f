#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wdl/model.hpp"
#include "wdl/process.hpp"

namespace wdl {

struct NetConfig {
  std::size_t data_dim = 1;
  std::vector<std::size_t> hidden{64, 64};
  /// Features of lambda / 4: sin/cos pairs at geometrically spaced frequencies
  /// in [freq_min, freq_max]; an odd count adds lambda / 4 itself.
  std::size_t embed_dim = 16;
  double freq_min = 0.5, freq_max = 8.0;
  PredictionKind output = PredictionKind::kEps;
  bool zero_last_layer = false;
  ForwardProcess proc = ForwardProcess::vp();
  double sigma_data = kDefaultSigmaData;
};

/// Multilayer perceptron over (z, embedding(lambda)) with SiLU activations and
/// hand-written reverse mode. Parameters live in one flat array, layer by layer,
/// weights (row-major out x in) before biases.
class DenoiserNet final : public Denoiser {
 public:
  /// Glorot-uniform weights from (seed, init) substream, zero biases.
  /// Throws std::invalid_argument for zero data_dim or a zero-width layer.
  DenoiserNet(NetConfig cfg, std::uint64_t seed);

  const NetConfig& config() const { return cfg_; }
  std::size_t input_dim() const { return cfg_.data_dim + cfg_.embed_dim; }
  std::size_t param_count() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  /// Throws std::invalid_argument on a size mismatch.
  void set_params(std::span<const double> p);

  std::vector<double> embed(LogSnr lambda) const;

  /// Activations kept for the backward pass.
  struct Tape {
    std::vector<std::vector<double>> pre;   ///< pre-activations per hidden layer
    std::vector<std::vector<double>> post;  ///< layer inputs; post[0] is the network input
    std::vector<double> out;
  };

  /// Raw output in cfg.output parameterization. Throws std::invalid_argument on dimension mismatch.
  std::vector<double> forward(std::span<const double> z, LogSnr lambda) const;
  void forward(std::span<const double> z, LogSnr lambda, Tape& tape) const;
  /// Adds d(loss)/d(params) to grad given d(loss)/d(output) for the taped input.
  void backward(const Tape& tape, std::span<const double> grad_out, std::span<double> grad) const;

  // Denoiser
  std::size_t dim() const override { return cfg_.data_dim; }
  void predict_eps(std::span<const double> z, LogSnr lambda, std::span<double> eps_hat) const override;

 private:
  struct Layer {
    std::size_t in, out, w, b;  // sizes and offsets into params_
  };
  NetConfig cfg_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
  std::vector<double> freqs_;
};

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(std::size_t n, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const { return t_; }
  double lr() const { return lr_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// Scales grad in place so its global L2 norm is at most max_norm; returns the
/// norm before clipping.
double clip_global_norm(std::span<double> grad, double max_norm);

}  // namespace wdl
