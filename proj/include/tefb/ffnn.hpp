#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tefb/features.hpp"
#include "tefb/nn.hpp"

namespace tefb {

struct FfnnConfig {
  std::size_t hidden = 64;
  Activation activation = Activation::Tanh;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

/// 128 -> hidden -> hidden -> 1 with a sigmoid output.
struct FfnnModel {
  Mlp net;

  double margin(std::span<const float> x) const { return net.forward(x)[0]; }
  double score(std::span<const float> x) const;
};

struct LinearConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

/// Logistic regression, stored as a single-layer network.
struct LinearModel {
  Mlp net;

  double margin(std::span<const float> x) const { return net.forward(x)[0]; }
  double score(std::span<const float> x) const;
};

struct NetTrainResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

FfnnModel init_ffnn(const FfnnConfig& cfg);

/// Minibatch SGD with momentum on mean logistic loss. Throws
/// DivergenceDetected when the loss turns non-finite.
FfnnModel train_ffnn(const FeatureMatrix& X, const FfnnConfig& cfg, NetTrainResult* result = nullptr);
LinearModel train_linear(const FeatureMatrix& X, const LinearConfig& cfg, NetTrainResult* result = nullptr);

/// Mean logistic loss of a single-output net over `rows`; adds its gradient to `grad`.
double net_logistic_loss_grad(const Mlp& net, const FeatureMatrix& X, std::span<const std::size_t> rows,
                              std::span<double> grad);
double net_logistic_loss(const Mlp& net, const FeatureMatrix& X);

}  // namespace tefb
