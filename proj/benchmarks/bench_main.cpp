#include <benchmark/benchmark.h>

#include "phenotag/annotator.hpp"
#include "phenotag/corpus.hpp"
#include "phenotag/inference.hpp"
#include "phenotag/synthetic.hpp"

using namespace phenotag;

namespace {

const SyntheticCorpus& corpus() {
  static const SyntheticCorpus c = [] {
    SyntheticCorpusConfig cfg;
    cfg.seed = 5;
    return generate_corpus(cfg);
  }();
  return c;
}

void BM_SurfaceMatch(benchmark::State& state) {
  const auto graph = OntologyGraph::from_concepts(corpus().concepts, kSyntheticRoot);
  const SurfaceMatcher matcher(graph);
  std::size_t tokens = 0;
  for (auto _ : state) {
    for (const auto& d : corpus().train) {
      benchmark::DoNotOptimize(matcher.match(d.tokens));
      tokens += d.tokens.size();
    }
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(tokens));
}
BENCHMARK(BM_SurfaceMatch);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor<float> a(Shape{n, n}), b(Shape{n, n});
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = static_cast<float>(rng.uniform());
    b[i] = static_cast<float>(rng.uniform());
  }
  const Var<float> va(a), vb(b);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(va, vb));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_AnnotatorForward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  AnnotatorModelConfig cfg;
  cfg.hidden = 32;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.ffn = 64;
  cfg.dim = 32;
  const auto vocab = build_vocabulary(corpus().train, 1);
  std::vector<ConceptId> freq;
  for (std::size_t i = 1; i < corpus().concepts.size(); ++i) freq.push_back(corpus().concepts[i].id);
  const AnnotatorModel model(cfg, vocab, FrequentSet(freq), 1);
  std::vector<std::int32_t> window(len);
  for (std::size_t i = 0; i < len; ++i) window[i] = static_cast<std::int32_t>(2 + i % (vocab.size() - 2));
  for (auto _ : state) benchmark::DoNotOptimize(model.predict_tokens(window));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * len));
}
BENCHMARK(BM_AnnotatorForward)->Arg(16)->Arg(64);

void BM_NearestConcepts(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t kDim = 64;
  Rng rng(2);
  std::vector<ConceptId> ids;
  std::vector<float> values(n * kDim);
  for (std::size_t i = 0; i < n; ++i) ids.push_back("HP:" + std::to_string(1000000 + i));
  for (auto& v : values) v = static_cast<float>(rng.uniform());
  const ConceptEmbeddingTable table(ids, Tensor<float>(Shape{n, kDim}, values));
  std::vector<float> query(kDim, 0.5f);
  for (auto _ : state) benchmark::DoNotOptimize(nearest_concepts(query, table, 1));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_NearestConcepts)->Arg(1000)->Arg(16000);

}  // namespace
BENCHMARK_MAIN();
