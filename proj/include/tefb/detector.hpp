#pragma once

// Score-producing models behind a calibrated threshold. Attackers only see
// HardLabelOracle; every metered call is counted by the query ledger.

#include <atomic>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>

#include "tefb/ffnn.hpp"
#include "tefb/gbdt.hpp"

namespace tefb {

using Model = std::variant<GbdtModel, LinearModel, FfnnModel>;

enum class ModelKind : std::uint8_t { Gbdt = 1, Linear = 2, Ffnn = 3, Policy = 4 };

ModelKind kind_of(const Model& m);
std::string_view kind_name(ModelKind k);
ModelKind kind_from_name(std::string_view name);

double model_margin(const Model& m, std::span<const float> x);
double model_score(const Model& m, std::span<const float> x);

/// Monotone counter safe under concurrent increments.
class QueryLedger {
 public:
  QueryLedger() = default;
  QueryLedger(const QueryLedger& o) : count_(o.count()) {}
  QueryLedger& operator=(const QueryLedger& o) {
    count_.store(o.count());
    return *this;
  }

  void tick() { count_.fetch_add(1, std::memory_order_relaxed); }
  std::uint64_t count() const { return count_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> count_{0};
};

class Detector {
 public:
  Detector() = default;
  Detector(Model model, double threshold);

  /// Metered: each call adds exactly one to the ledger.
  double predict_score(std::span<const float> x) const;
  std::uint8_t predict_label(std::span<const float> x) const;

  /// Owner-side scoring that does not touch the ledger (calibration, evaluation metrics).
  double score_unmetered(std::span<const float> x) const { return model_score(model_, x); }
  std::uint8_t label_unmetered(std::span<const float> x) const { return score_unmetered(x) >= threshold_ ? 1 : 0; }

  const Model& model() const { return model_; }
  double threshold() const { return threshold_; }
  void set_threshold(double t);
  std::uint64_t ledger() const { return ledger_.count(); }

 private:
  Model model_;
  double threshold_ = 0.5;
  mutable QueryLedger ledger_;
};

/// The attacker-facing view of a detector: hard labels only.
class HardLabelOracle {
 public:
  explicit HardLabelOracle(const Detector& d) : d_(&d) {}
  std::uint8_t label(std::span<const float> x) const { return d_->predict_label(x); }
  std::uint64_t queries() const { return d_->ledger(); }

 private:
  const Detector* d_;
};

/// Smallest observed benign score t with #{s >= t} <= floor(fpr * n) (with
/// 1e-9 relative slack). Falls back to just above the maximum score.
double calibrate_threshold(std::span<const double> benign_scores, double fpr_target);
/// Scores X_benign unmetered and calibrates.
double calibrate_threshold(const Model& model, const FeatureMatrix& benign, double fpr_target);

double empirical_fpr(const Model& model, const FeatureMatrix& benign, double threshold);

}  // namespace tefb
