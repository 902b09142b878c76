#include "tefb/nn.hpp"

#include <algorithm>
#include <cmath>

#include "tefb/error.hpp"

namespace tefb {

Mlp::Mlp(std::vector<std::size_t> sizes, Activation hidden) : sizes_(std::move(sizes)), act_(hidden) {
  if (sizes_.size() < 2) throw Error(Errc::InvalidArgument, "an MLP needs at least one layer");
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(off);
    off += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  params_.assign(off, 0.0);
}

void Mlp::init(Rng& rng, double hidden_gain, double output_gain) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const double gain = (l + 1 == layers) ? output_gain : hidden_gain;
    const double sd = gain / std::sqrt(static_cast<double>(in));
    double* w = params_.data() + offsets_[l];
    for (std::size_t i = 0; i < in * out; ++i) w[i] = sd * normal(rng);
    std::fill(w + in * out, w + in * out + out, 0.0);
  }
}

void Mlp::forward(std::span<const double> x, Cache& cache) const {
  const std::size_t layers = sizes_.size() - 1;
  cache.inputs.resize(layers + 1);
  cache.inputs[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const double* w = params_.data() + offsets_[l];
    const double* b = w + in * out;
    const auto& a = cache.inputs[l];
    auto& z = cache.inputs[l + 1];
    z.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
      if (l + 1 < layers) s = act_ == Activation::Tanh ? std::tanh(s) : std::max(0.0, s);
      z[o] = s;
    }
  }
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  Cache c;
  forward(x, c);
  return std::move(c.inputs.back());
}

std::vector<double> Mlp::forward(std::span<const float> x) const {
  std::vector<double> xd(x.begin(), x.end());
  return forward(std::span<const double>(xd));
}

void Mlp::backward(const Cache& cache, std::span<const double> dout, std::span<double> grad) const {
  const std::size_t layers = sizes_.size() - 1;
  std::vector<double> delta(dout.begin(), dout.end());
  std::vector<double> prev;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const double* w = params_.data() + offsets_[l];
    double* gw = grad.data() + offsets_[l];
    double* gb = gw + in * out;
    const auto& a = cache.inputs[l];
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      double* grow = gw + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += d * a[i];
    }
    if (l == 0) break;
    prev.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += row[i] * d;
    }
    // a = act(z) for the hidden layer feeding layer l.
    for (std::size_t i = 0; i < in; ++i) {
      prev[i] *= act_ == Activation::Tanh ? (1.0 - a[i] * a[i]) : (a[i] > 0.0 ? 1.0 : 0.0);
    }
    delta.swap(prev);
  }
}

bool Mlp::finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void SgdMomentum::step(std::span<double> params, std::span<const double> grad) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    vel_[i] = mu_ * vel_[i] + grad[i];
    params[i] -= lr_ * vel_[i];
  }
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logistic_loss(double margin, double y) {
  // log(1+exp(-m)) for y=1, log(1+exp(m)) for y=0
  auto softplus = [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); };
  return y * softplus(-margin) + (1.0 - y) * softplus(margin);
}

double clip_global_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (double& g : grad) g *= s;
  }
  return norm;
}

}  // namespace tefb
