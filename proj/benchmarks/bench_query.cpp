#include <benchmark/benchmark.h>

#include "nes/index.hpp"
#include "nes/model.hpp"
#include "nes/synthetic.hpp"

namespace {

struct Fixture {
  nes::FeatureIndex index;
  nes::QueryModel model;
};

// Sparse preset (about 267K tokens) with a PER model trained on 3000 gold sentences.
const Fixture& fixture() {
  static const Fixture f = [] {
    auto index = nes::FeatureIndex::build(nes::generate_synthetic(nes::synthetic_sparse_preset(1)),
                                          nes::FeatureConfig{});
    std::vector<nes::LabeledToken> labeled;
    for (nes::SentenceId s = 0; s < 3000; ++s) {
      const auto& sent = index.corpus().sentence(s);
      for (nes::TokenId t = sent.first_token; t < sent.end_token(); ++t) {
        labeled.push_back({t, index.features_of(t), nes::is_class_label(index.corpus().token(t).gold, "PER")});
      }
    }
    auto model = nes::train(labeled, {}, "PER");
    return Fixture{std::move(index), std::move(model)};
  }();
  return f;
}

void BM_ScoreTopk(benchmark::State& state) {
  const auto& f = fixture();
  const auto q = nes::prune(f.model, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(nes::score_topk(f.index, q, 100));
  state.counters["features"] = static_cast<double>(q.size());
}
BENCHMARK(BM_ScoreTopk)->Arg(1)->Arg(10)->Arg(100)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_FullScan(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(nes::score_all_bruteforce(f.index, f.model));
}
BENCHMARK(BM_FullScan)->Unit(benchmark::kMillisecond);

void BM_SentenceRank(benchmark::State& state) {
  const auto& f = fixture();
  const auto q = nes::prune(f.model, 1000);
  for (auto _ : state) benchmark::DoNotOptimize(nes::sentence_rank(f.index, q, 1));
}
BENCHMARK(BM_SentenceRank)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
