#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "json.hpp"

#include "tefb/error.hpp"
#include "tefb/meme.hpp"

namespace tefb {

EvasionReport evasion_rate(const std::vector<EpisodeOutcome>& outcomes, std::size_t max_turns) {
  EvasionReport r;
  r.n_tested = outcomes.size();
  double mods = 0.0;
  for (const auto& o : outcomes) {
    if (!o.initially_detected) continue;
    ++r.n_detected;
    if (o.evaded) {
      ++r.n_evaded;
      mods += static_cast<double>(o.modifications);
    } else {
      mods += static_cast<double>(max_turns);
    }
  }
  if (r.n_detected == 0) throw Error(Errc::EmptyEvaluation, "no binary was initially detected");
  r.evasion_rate = static_cast<double>(r.n_evaded) / static_cast<double>(r.n_detected);
  r.mean_modifications = mods / static_cast<double>(r.n_detected);
  return r;
}

double label_agreement(const Detector& f, const Detector& g, const FeatureMatrix& X) {
  if (X.rows == 0) throw Error(Errc::EmptyEvaluation, "label agreement on an empty set");
  std::size_t same = 0;
  for (std::size_t i = 0; i < X.rows; ++i) same += f.label_unmetered(X.row(i)) == g.label_unmetered(X.row(i));
  return static_cast<double>(same) / static_cast<double>(X.rows);
}

double feature_agreement(const FeatureRanking& a, const FeatureRanking& b, std::size_t k) {
  if (k == 0) throw Error(Errc::InvalidArgument, "k must be > 0");
  if (k > a.order.size() || k > b.order.size()) throw Error(Errc::KTooLarge, "k exceeds ranking length");
  std::set<std::int32_t> top(a.order.begin(), a.order.begin() + static_cast<std::ptrdiff_t>(k));
  std::size_t common = 0;
  for (std::size_t i = 0; i < k; ++i) common += top.count(b.order[i]);
  return static_cast<double>(common) / static_cast<double>(k);
}

AgreementReport agreement(const Detector& target, const Detector& surrogate, const FeatureMatrix& eval,
                          std::size_t sample_rows, std::uint64_t seed) {
  AgreementReport r;
  r.label_agreement = label_agreement(target, surrogate, eval);
  std::vector<std::size_t> idx(eval.rows);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {0xfea7}));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(sample_rows, idx.size()));
  const FeatureMatrix sample = eval.select(idx);
  const FeatureRanking et = global_importance(target.model(), sample, 10, seed);
  const FeatureRanking es = global_importance(surrogate.model(), sample, 10, seed);
  r.feature_agreement_10 = feature_agreement(et, es, 10);
  r.feature_agreement_20 = feature_agreement(et, es, 20);
  return r;
}

std::string evasion_csv_header() {
  return "method,seed,n_tested,n_detected,n_evaded,evasion_rate,mean_modifications,training_queries,eval_queries,"
         "max_episode_queries,label_agreement,feature_agreement_10,feature_agreement_20";
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string result_csv_row(const AttackResult& r) {
  std::string s = r.method + "," + std::to_string(r.seed) + "," + std::to_string(r.evasion.n_tested) + "," +
                  std::to_string(r.evasion.n_detected) + "," + std::to_string(r.evasion.n_evaded) + "," +
                  num(r.evasion.evasion_rate) + "," + num(r.evasion.mean_modifications) + "," +
                  std::to_string(r.training_queries) + "," + std::to_string(r.eval_queries) + "," +
                  std::to_string(r.max_episode_queries) + ",";
  if (r.agreement) {
    s += num(r.agreement->label_agreement) + "," + num(r.agreement->feature_agreement_10) + "," +
         num(r.agreement->feature_agreement_20);
  } else {
    s += ",,";
  }
  return s;
}

std::string result_json(const AttackResult& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["n_tested"] = r.evasion.n_tested;
  j["n_detected"] = r.evasion.n_detected;
  j["n_evaded"] = r.evasion.n_evaded;
  j["evasion_rate"] = r.evasion.evasion_rate;
  j["mean_modifications"] = r.evasion.mean_modifications;
  j["training_queries"] = r.training_queries;
  j["eval_queries"] = r.eval_queries;
  j["max_episode_queries"] = r.max_episode_queries;
  if (r.agreement) {
    j["agreement"] = {{"label_agreement", r.agreement->label_agreement},
                      {"feature_agreement_10", r.agreement->feature_agreement_10},
                      {"feature_agreement_20", r.agreement->feature_agreement_20}};
  } else {
    j["agreement"] = nullptr;
  }
  return j.dump(2);
}

AttackResult result_from_json(const std::string& text) {
  AttackResult r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.evasion.n_tested = j.at("n_tested").get<std::size_t>();
    r.evasion.n_detected = j.at("n_detected").get<std::size_t>();
    r.evasion.n_evaded = j.at("n_evaded").get<std::size_t>();
    r.evasion.evasion_rate = j.at("evasion_rate").get<double>();
    r.evasion.mean_modifications = j.at("mean_modifications").get<double>();
    r.training_queries = j.at("training_queries").get<std::uint64_t>();
    r.eval_queries = j.at("eval_queries").get<std::uint64_t>();
    r.max_episode_queries = j.at("max_episode_queries").get<std::size_t>();
    const auto& a = j.at("agreement");
    if (!a.is_null()) {
      r.agreement = AgreementReport{a.at("label_agreement").get<double>(), a.at("feature_agreement_10").get<double>(),
                                    a.at("feature_agreement_20").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedInput, std::string("attack report: ") + e.what());
  }
  return r;
}

Aggregate aggregate(const std::string& method, const std::vector<AttackResult>& per_seed) {
  Aggregate a;
  a.method = method;
  a.seeds = per_seed.size();
  if (per_seed.empty()) return a;
  // Shifted by the first value so identical runs give exactly zero spread.
  auto mean_std = [&](auto get, double& mean, double& sd) {
    const double x0 = get(per_seed.front());
    const double n = static_cast<double>(per_seed.size());
    double s = 0.0;
    for (const auto& r : per_seed) s += get(r) - x0;
    const double md = s / n;
    double v = 0.0;
    for (const auto& r : per_seed) v += (get(r) - x0 - md) * (get(r) - x0 - md);
    mean = x0 + md;
    sd = std::sqrt(v / n);
  };
  mean_std([](const AttackResult& r) { return r.evasion.evasion_rate; }, a.evasion_mean, a.evasion_std);
  mean_std([](const AttackResult& r) { return r.evasion.mean_modifications; }, a.modifications_mean,
           a.modifications_std);
  const bool all_agree = std::all_of(per_seed.begin(), per_seed.end(), [](const auto& r) { return r.agreement.has_value(); });
  if (all_agree) {
    double l = 0, f10 = 0, f20 = 0;
    for (const auto& r : per_seed) {
      l += r.agreement->label_agreement;
      f10 += r.agreement->feature_agreement_10;
      f20 += r.agreement->feature_agreement_20;
    }
    const double n = static_cast<double>(per_seed.size());
    a.label_agreement_mean = l / n;
    a.feature_agreement_10_mean = f10 / n;
    a.feature_agreement_20_mean = f20 / n;
  }
  return a;
}

}  // namespace tefb
