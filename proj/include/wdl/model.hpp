#pragma once

#include <cstddef>
#include <memory>
#include <span>

#include "wdl/process.hpp"
#include "wdl/rng.hpp"

namespace wdl {

/// Source of training/evaluation data points x.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual std::size_t dim() const = 0;
  virtual void sample(RandomStream& rng, std::span<double> x) const = 0;
};

/// Noise predictor eps_hat(z; lambda). Implementations must be safe for
/// concurrent const calls.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::size_t dim() const = 0;
  virtual void predict_eps(std::span<const double> z, LogSnr lambda, std::span<double> eps_hat) const = 0;
};

/// Score model s(z; lambda) approximating grad_z log q_lambda(z).
class ScoreSource {
 public:
  virtual ~ScoreSource() = default;
  virtual std::size_t dim() const = 0;
  virtual void score(std::span<const double> z, LogSnr lambda, std::span<double> out) const = 0;
};

/// eps_hat == 0; the trivial baseline.
class ZeroDenoiser final : public Denoiser {
 public:
  explicit ZeroDenoiser(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  void predict_eps(std::span<const double>, LogSnr, std::span<double> eps_hat) const override {
    for (double& e : eps_hat) e = 0.0;
  }

 private:
  std::size_t dim_;
};

/// Score view of a noise predictor: s = -eps_hat / sigma.
class DenoiserScore final : public ScoreSource {
 public:
  DenoiserScore(std::shared_ptr<const Denoiser> denoiser, ForwardProcess proc)
      : denoiser_(std::move(denoiser)), proc_(proc) {}
  std::size_t dim() const override { return denoiser_->dim(); }
  void score(std::span<const double> z, LogSnr lambda, std::span<double> out) const override {
    denoiser_->predict_eps(z, lambda, out);
    const double sg = proc_.sigma(lambda);
    for (double& v : out) v = -v / sg;
  }

 private:
  std::shared_ptr<const Denoiser> denoiser_;
  ForwardProcess proc_;
};

}  // namespace wdl
