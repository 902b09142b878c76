#include "tefb/detector.hpp"

#include <string>

namespace tefb {

ModelKind kind_of(const Model& m) {
  switch (m.index()) {
    case 0: return ModelKind::Gbdt;
    case 1: return ModelKind::Linear;
    default: return ModelKind::Ffnn;
  }
}

std::string_view kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Gbdt: return "gbdt";
    case ModelKind::Linear: return "linear";
    case ModelKind::Ffnn: return "ffnn";
    case ModelKind::Policy: return "policy";
  }
  return "unknown";
}

ModelKind kind_from_name(std::string_view name) {
  if (name == "gbdt") return ModelKind::Gbdt;
  if (name == "linear") return ModelKind::Linear;
  if (name == "ffnn") return ModelKind::Ffnn;
  throw Error(Errc::InvalidArgument, "unknown model kind '" + std::string(name) + "'");
}

double model_margin(const Model& m, std::span<const float> x) {
  return std::visit([&](const auto& mm) { return mm.margin(x); }, m);
}

double model_score(const Model& m, std::span<const float> x) {
  return std::visit([&](const auto& mm) { return mm.score(x); }, m);
}

Detector::Detector(Model model, double threshold) : model_(std::move(model)) { set_threshold(threshold); }

void Detector::set_threshold(double t) {
  if (!(t > 0.0 && t <= 1.0)) throw Error(Errc::InvalidArgument, "threshold must lie in (0,1]");
  threshold_ = t;
}

double Detector::predict_score(std::span<const float> x) const {
  ledger_.tick();
  return model_score(model_, x);
}

std::uint8_t Detector::predict_label(std::span<const float> x) const {
  ledger_.tick();
  return model_score(model_, x) >= threshold_ ? 1 : 0;
}

}  // namespace tefb
