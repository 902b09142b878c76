#include "tefb/ffnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tefb/error.hpp"
#include "tefb/rng.hpp"

namespace tefb {

double FfnnModel::score(std::span<const float> x) const { return sigmoid(margin(x)); }

double net_logistic_loss_grad(const Mlp& net, const FeatureMatrix& X, std::span<const std::size_t> rows,
                              std::span<double> grad) {
  Mlp::Cache cache;
  std::vector<double> x(kFeatureDim);
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (auto r : rows) {
    auto row = X.row(r);
    std::copy(row.begin(), row.end(), x.begin());
    net.forward(x, cache);
    const double m = cache.inputs.back()[0];
    const double y = X.labels[r] ? 1.0 : 0.0;
    loss += logistic_loss(m, y);
    const double d = (sigmoid(m) - y) * inv;
    net.backward(cache, std::span<const double>(&d, 1), grad);
  }
  return loss * inv;
}

double net_logistic_loss(const Mlp& net, const FeatureMatrix& X) {
  double loss = 0.0;
  for (std::size_t i = 0; i < X.rows; ++i) loss += logistic_loss(net.forward(X.row(i))[0], X.labels[i] ? 1.0 : 0.0);
  return X.rows ? loss / static_cast<double>(X.rows) : 0.0;
}

namespace {

void sgd_train(Mlp& net, const FeatureMatrix& X, std::size_t epochs, std::size_t batch, double lr, double momentum,
               std::uint64_t seed, NetTrainResult* result) {
  if (X.rows == 0) throw Error(Errc::InvalidArgument, "empty training set");
  if (batch == 0) throw Error(Errc::InvalidArgument, "batch_size must be > 0");
  if (result) result->initial_loss = net_logistic_loss(net, X);
  SgdMomentum opt(net.num_params(), lr, momentum);
  Rng rng(derive_seed(seed, {0x5ed}));
  std::vector<std::size_t> order(X.rows);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(net.num_params());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = net_logistic_loss_grad(net, X, std::span(order).subspan(start, len), grad);
      if (!std::isfinite(loss)) throw Error(Errc::DivergenceDetected, "non-finite training loss");
      opt.step(net.params(), grad);
    }
    if (!net.finite()) throw Error(Errc::DivergenceDetected, "non-finite parameters");
  }
  if (result) {
    result->final_loss = net_logistic_loss(net, X);
    if (!std::isfinite(result->final_loss)) throw Error(Errc::DivergenceDetected, "non-finite final loss");
  }
}

}  // namespace

FfnnModel init_ffnn(const FfnnConfig& cfg) {
  FfnnModel m{Mlp({kFeatureDim, cfg.hidden, cfg.hidden, 1}, cfg.activation)};
  Rng rng(derive_seed(cfg.seed, {0x1a17}));
  m.net.init(rng, cfg.activation == Activation::Relu ? std::sqrt(2.0) : 1.0, 1.0);
  return m;
}

FfnnModel train_ffnn(const FeatureMatrix& X, const FfnnConfig& cfg, NetTrainResult* result) {
  FfnnModel m = init_ffnn(cfg);
  sgd_train(m.net, X, cfg.epochs, cfg.batch_size, cfg.learning_rate, cfg.momentum, cfg.seed, result);
  return m;
}

double LinearModel::score(std::span<const float> x) const { return sigmoid(margin(x)); }

LinearModel train_linear(const FeatureMatrix& X, const LinearConfig& cfg, NetTrainResult* result) {
  LinearModel m{Mlp({kFeatureDim, 1}, Activation::Tanh)};
  sgd_train(m.net, X, cfg.epochs, cfg.batch_size, cfg.learning_rate, cfg.momentum, cfg.seed, result);
  return m;
}

}  // namespace tefb
