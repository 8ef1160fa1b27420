#include <benchmark/benchmark.h>

#include "wordmover/synthetic.hpp"
#include "wordmover/transport.hpp"
#include "wordmover/wme.hpp"

using namespace wordmover;

namespace {

Corpus clustered(std::size_t docs, std::size_t mean_length, const EmbeddingTable& table,
                 const synthetic::ClusterSpec& clusters) {
  synthetic::CorpusSpec spec;
  spec.docs = docs;
  spec.mean_length = mean_length;
  spec.shared_probability = 0.3;
  return build_corpus(synthetic::clustered_dataset(clusters, spec), table, WeightScheme::nbow());
}

synthetic::ClusterSpec cluster_spec(std::size_t dim) {
  synthetic::ClusterSpec c;
  c.words_per_class = 50;
  c.shared_words = 20;
  c.dim = dim;
  return c;
}

void BM_SolveTransport(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SubstreamRng rng(1, n);
  std::vector<double> fx(n, 1.0 / static_cast<double>(n));
  std::vector<double> fy(n, 1.0 / static_cast<double>(n));
  DenseMatrix cost(n, n);
  for (double& c : cost.data()) c = rng.uniform(0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(transport_cost(fx, fy, cost));
}
BENCHMARK(BM_SolveTransport)->Arg(4)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

void BM_WmdPairwise(benchmark::State& state) {
  const auto clusters = cluster_spec(300);
  const auto table = synthetic::clustered_table(clusters);
  const auto corpus = clustered(60, 30, table, clusters);
  const PairwiseOptions options{1, state.range(0) != 0};
  for (auto _ : state) benchmark::DoNotOptimize(wmd_pairwise(table, corpus, corpus, options));
  state.SetLabel(options.precompute ? "precompute" : "no cache");
}
BENCHMARK(BM_WmdPairwise)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_EmbedCorpus(benchmark::State& state) {
  const auto clusters = cluster_spec(50);
  const auto table = synthetic::clustered_table(clusters);
  const auto corpus = clustered(100, 20, table, clusters);
  const auto spec =
      make_basis_spec(table, corpus, static_cast<std::size_t>(state.range(0)), 6, 1.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(embed_corpus(table, corpus, spec));
}
BENCHMARK(BM_EmbedCorpus)->Arg(16)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
