#include <benchmark/benchmark.h>

#include <numeric>

#include "tefb/corpus.hpp"
#include "tefb/gbdt.hpp"
#include "tefb/kernels.hpp"

namespace {

using namespace tefb;

struct Fixture {
  std::vector<ToyBinary> binaries;
  std::vector<std::uint8_t> labels;
  FeatureMatrix X;
  GbdtModel gbdt;

  Fixture() {
    CorpusConfig cfg;
    for (std::uint64_t i = 0; i < 512; ++i) {
      const Label l = (i % 2) ? Label::Malicious : Label::Benign;
      binaries.push_back(gen_binary(l, derive_seed(7, {i}), cfg));
      labels.push_back(static_cast<std::uint8_t>(l));
    }
    X = extract_features_batch(binaries, labels);
    GbdtConfig g;
    g.num_boosting_rounds = 30;
    gbdt = train_gbdt(X, {}, g);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_Features(benchmark::State& st, bool parallel) {
  const auto& f = fixture();
  for (auto _ : st) {
    auto m = parallel ? extract_features_batch(f.binaries, f.labels) : extract_features_batch_serial(f.binaries, f.labels);
    benchmark::DoNotOptimize(m.data.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(f.binaries.size()));
}

void BM_Score(benchmark::State& st, bool parallel) {
  const auto& f = fixture();
  const Model m = f.gbdt;
  for (auto _ : st) {
    auto s = parallel ? score_batch(m, f.X) : score_batch_serial(m, f.X);
    benchmark::DoNotOptimize(s.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(f.X.rows));
}

void BM_TreeShap(benchmark::State& st, bool parallel) {
  const auto& f = fixture();
  for (auto _ : st) {
    auto a = parallel ? tree_shap_batch(f.gbdt, f.X) : tree_shap_batch_serial(f.gbdt, f.X);
    benchmark::DoNotOptimize(a.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(f.X.rows));
}

void BM_SplitSearch(benchmark::State& st, bool parallel) {
  const auto& f = fixture();
  const std::size_t n = f.X.rows;
  std::vector<float> cols(kFeatureDim * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kFeatureDim; ++j) cols[j * n + i] = f.X.row(i)[j];
  std::vector<double> g(n), h(n, 0.25);
  for (std::size_t i = 0; i < n; ++i) g[i] = 0.5 - f.X.labels[i];
  std::vector<std::int32_t> feats(kFeatureDim);
  std::iota(feats.begin(), feats.end(), 0);
  std::vector<std::vector<std::uint32_t>> sorted(kFeatureDim, std::vector<std::uint32_t>(n));
  for (std::size_t j = 0; j < kFeatureDim; ++j) {
    std::iota(sorted[j].begin(), sorted[j].end(), 0u);
    std::stable_sort(sorted[j].begin(), sorted[j].end(),
                     [&](std::uint32_t a, std::uint32_t b) { return cols[j * n + a] < cols[j * n + b]; });
  }
  detail::SplitProblem p{cols.data(), n, g.data(), h.data(), 20, 1e-3, 0.0};
  for (auto _ : st) {
    auto c = parallel ? detail::find_best_split(p, feats, sorted) : detail::find_best_split_serial(p, feats, sorted);
    benchmark::DoNotOptimize(c);
  }
}

BENCHMARK_CAPTURE(BM_Features, serial, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Features, openmp, true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Score, serial, false)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_Score, openmp, true)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_TreeShap, serial, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TreeShap, openmp, true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_SplitSearch, serial, false)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_SplitSearch, openmp, true)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
