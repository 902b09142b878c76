#pragma once

// Small dense networks with hand-written backprop. Parameters are kept in
// one flat double vector so optimizers and gradient checks see a single
// contiguous array.

#include <cstdint>
#include <span>
#include <vector>

#include "tefb/rng.hpp"

namespace tefb {

enum class Activation : std::uint8_t { Tanh = 0, Relu = 1 };

class Mlp {
 public:
  struct Cache {
    // inputs[l] is the input of layer l; inputs.back() is the network output.
    std::vector<std::vector<double>> inputs;
  };

  Mlp() = default;
  /// sizes = {in, hidden..., out}; the last layer is linear.
  Mlp(std::vector<std::size_t> sizes, Activation hidden);

  /// Gaussian init with std = gain / sqrt(fan_in); the last layer uses output_gain.
  void init(Rng& rng, double hidden_gain, double output_gain);

  std::size_t num_params() const { return params_.size(); }
  std::size_t in_dim() const { return sizes_.front(); }
  std::size_t out_dim() const { return sizes_.back(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  Activation activation() const { return act_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  void forward(std::span<const double> x, Cache& cache) const;
  std::vector<double> forward(std::span<const double> x) const;
  std::vector<double> forward(std::span<const float> x) const;

  /// Accumulates dLoss/dparams into `grad` given dLoss/doutput.
  void backward(const Cache& cache, std::span<const double> dout, std::span<double> grad) const;

  bool finite() const;

 private:
  std::size_t layer_offset(std::size_t l) const { return offsets_[l]; }

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  Activation act_ = Activation::Tanh;
  std::vector<double> params_;
};

/// Adaptive moment estimation:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad);
  std::uint64_t steps() const { return t_; }

 private:
  double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

/// Heavy-ball SGD: v <- mu v + g; p <- p - lr v.
class SgdMomentum {
 public:
  SgdMomentum(std::size_t n, double lr, double momentum) : lr_(lr), mu_(momentum), vel_(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grad);

 private:
  double lr_, mu_;
  std::vector<double> vel_;
};

double sigmoid(double z);
/// Numerically stable -[y log s(z) + (1-y) log(1-s(z))].
double logistic_loss(double margin, double y);

/// Scales grad in place so its L2 norm is at most max_norm; returns the pre-clip norm.
double clip_global_norm(std::span<double> grad, double max_norm);

}  // namespace tefb
