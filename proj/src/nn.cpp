#include "wdl/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "wdl/numerics.hpp"
#include "wdl/rng.hpp"

namespace wdl {

namespace {
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
  const double s = sigmoid(x);
  return s + x * s * (1.0 - s);
}
}  // namespace

DenoiserNet::DenoiserNet(NetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.data_dim == 0) throw std::invalid_argument("DenoiserNet: data_dim must be > 0");
  for (auto h : cfg_.hidden)
    if (h == 0) throw std::invalid_argument("DenoiserNet: hidden widths must be > 0");
  if (!(cfg_.freq_min > 0.0) || !(cfg_.freq_max >= cfg_.freq_min))
    throw std::invalid_argument("DenoiserNet: need 0 < freq_min <= freq_max");
  const std::size_t pairs = cfg_.embed_dim / 2;
  for (std::size_t k = 0; k < pairs; ++k) {
    const double frac = pairs == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(pairs - 1);
    freqs_.push_back(cfg_.freq_min * std::pow(cfg_.freq_max / cfg_.freq_min, frac));
  }
  std::vector<std::size_t> widths{input_dim()};
  widths.insert(widths.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  widths.push_back(cfg_.data_dim);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer L{widths[l], widths[l + 1], off, off + widths[l] * widths[l + 1]};
    off = L.b + L.out;
    layers_.push_back(L);
  }
  params_.assign(off, 0.0);
  RandomStream rng(seed, Stream::kInit, 0);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    if (cfg_.zero_last_layer && l + 1 == layers_.size()) continue;
    const double a = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
    for (std::size_t i = 0; i < L.in * L.out; ++i) params_[L.w + i] = a * (2.0 * rng.uniform() - 1.0);
  }
}

void DenoiserNet::set_params(std::span<const double> p) {
  if (p.size() != params_.size()) throw std::invalid_argument("DenoiserNet::set_params: size mismatch");
  params_.assign(p.begin(), p.end());
}

std::vector<double> DenoiserNet::embed(LogSnr lambda) const {
  std::vector<double> e;
  e.reserve(cfg_.embed_dim);
  const double x = 0.25 * lambda;
  if (cfg_.embed_dim % 2) e.push_back(x);
  for (double f : freqs_) {
    e.push_back(std::sin(f * x));
    e.push_back(std::cos(f * x));
  }
  return e;
}

void DenoiserNet::forward(std::span<const double> z, LogSnr lambda, Tape& tape) const {
  if (z.size() != cfg_.data_dim) throw std::invalid_argument("DenoiserNet::forward: dimension mismatch");
  const std::size_t nl = layers_.size();
  tape.pre.resize(nl - 1);
  tape.post.resize(nl);
  auto& in = tape.post[0];
  in.assign(z.begin(), z.end());
  const auto e = embed(lambda);
  in.insert(in.end(), e.begin(), e.end());
  for (std::size_t l = 0; l < nl; ++l) {
    const auto& L = layers_[l];
    const auto& x = tape.post[l];
    std::vector<double> y(L.out);
    for (std::size_t o = 0; o < L.out; ++o) {
      double acc = params_[L.b + o];
      const double* w = &params_[L.w + o * L.in];
      for (std::size_t i = 0; i < L.in; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
    if (l + 1 == nl) {
      tape.out = std::move(y);
    } else {
      tape.post[l + 1].resize(L.out);
      for (std::size_t o = 0; o < L.out; ++o) tape.post[l + 1][o] = silu(y[o]);
      tape.pre[l] = std::move(y);
    }
  }
}

std::vector<double> DenoiserNet::forward(std::span<const double> z, LogSnr lambda) const {
  Tape t;
  forward(z, lambda, t);
  return std::move(t.out);
}

void DenoiserNet::backward(const Tape& tape, std::span<const double> grad_out, std::span<double> grad) const {
  if (grad.size() != params_.size() || grad_out.size() != cfg_.data_dim)
    throw std::invalid_argument("DenoiserNet::backward: size mismatch");
  std::vector<double> delta(grad_out.begin(), grad_out.end());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& L = layers_[l];
    const auto& x = tape.post[l];
    std::vector<double> back(L.in, 0.0);
    for (std::size_t o = 0; o < L.out; ++o) {
      const double d = delta[o];
      grad[L.b + o] += d;
      if (d == 0.0) continue;
      const double* w = &params_[L.w + o * L.in];
      double* gw = &grad[L.w + o * L.in];
      for (std::size_t i = 0; i < L.in; ++i) {
        gw[i] += d * x[i];
        back[i] += d * w[i];
      }
    }
    if (l == 0) break;
    const auto& pre = tape.pre[l - 1];
    for (std::size_t i = 0; i < L.in; ++i) back[i] *= silu_grad(pre[i]);
    delta = std::move(back);
  }
}

void DenoiserNet::predict_eps(std::span<const double> z, LogSnr lambda, std::span<double> eps_hat) const {
  if (eps_hat.size() != cfg_.data_dim) throw std::invalid_argument("DenoiserNet::predict_eps: dimension mismatch");
  auto out = forward(z, lambda);
  if (cfg_.output != PredictionKind::kEps)
    out = convert_prediction(out, cfg_.output, PredictionKind::kEps, z, lambda, cfg_.proc, cfg_.sigma_data);
  std::copy(out.begin(), out.end(), eps_hat.begin());
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {
  if (!(lr >= 0.0)) throw std::invalid_argument("Adam: learning rate must be >= 0");
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw std::invalid_argument("Adam::step: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

double clip_global_norm(std::span<double> grad, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  double s = 0.0;
  for (double g : grad) s += g * g;
  const double norm = std::sqrt(s);
  if (norm > max_norm) {
    const double k = max_norm / norm;
    for (double& g : grad) g *= k;
  }
  return norm;
}

}  // namespace wdl
