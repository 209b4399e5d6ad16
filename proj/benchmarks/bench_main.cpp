#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "kernelsmith/clustering.hpp"
#include "kernelsmith/compressor.hpp"
#include "kernelsmith/ngram_lm.hpp"
#include "kernelsmith/sampler.hpp"
#include "kernelsmith/seq2seq.hpp"
#include "kernelsmith/step_model.hpp"

namespace {

using namespace ks;

struct LmFixture {
  std::vector<Sentence> corpus = fixtures::grammar_corpus(2000, 1);
  Vocab vocab = Vocab::build(corpus);
  std::shared_ptr<const TrigramLM> lm = std::make_shared<const TrigramLM>(build_lm(corpus, vocab, 1e-7));

  static const LmFixture& get() {
    static const LmFixture f;
    return f;
  }
};

void BM_BuildLm(benchmark::State& state) {
  const auto corpus = fixtures::grammar_corpus(static_cast<std::size_t>(state.range(0)), 2);
  const Vocab vocab = Vocab::build(corpus);
  for (auto _ : state) benchmark::DoNotOptimize(build_lm(corpus, vocab, 1e-7));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildLm)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_ScoreSentence(benchmark::State& state) {
  const auto& f = LmFixture::get();
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(score_sequence(*f.lm, f.corpus[i++ % f.corpus.size()].tokens));
}
BENCHMARK(BM_ScoreSentence);

void BM_Compress(benchmark::State& state) {
  const auto& f = LmFixture::get();
  CompressionConfig cc;
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(compress(*f.lm, f.corpus[i++ % f.corpus.size()], cc));
}
BENCHMARK(BM_Compress)->Unit(benchmark::kMicrosecond);

void BM_DecodeLm(benchmark::State& state) {
  const auto& f = LmFixture::get();
  const LmStepModel model(f.lm);
  DecodeConfig cfg;
  cfg.method = all_methods()[static_cast<std::size_t>(state.range(0))];
  state.SetLabel(std::string(to_string(cfg.method)));
  const auto ids = f.vocab.encode(f.corpus[0].tokens);
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode(model, f.vocab, ids, cfg));
    ++cfg.seed;
  }
}
BENCHMARK(BM_DecodeLm)->DenseRange(0, static_cast<int>(all_methods().size()) - 1)->Unit(benchmark::kMicrosecond);

void BM_TrainStep(benchmark::State& state) {
  const auto pairs = fixtures::insert_task(64, 3);
  std::vector<Sentence> all;
  for (const auto& p : pairs) {
    all.push_back(p.kernel);
    all.push_back(p.original);
  }
  const Vocab vocab = Vocab::build(all);
  const auto h = static_cast<std::size_t>(state.range(0));
  ExpansionModel model(ModelDims{vocab.size(), h / 2, h, 1}, vocab);
  model.initialize(1, 0.1);
  const EncodedPair enc = encode_pair(vocab, pairs[0], 9.0);
  std::vector<double> grad(model.params().size());
  for (auto _ : state) {
    std::fill(grad.begin(), grad.end(), 0.0);
    benchmark::DoNotOptimize(pair_loss(model, enc, &grad));
  }
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_KMeans(benchmark::State& state) {
  const auto blobs = fixtures::gaussian_blobs(10, static_cast<std::size_t>(state.range(0)), 20, 5.0, 4);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(kmeans(blobs.points, 10, seed++));
}
BENCHMARK(BM_KMeans)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Lsa(benchmark::State& state) {
  const auto docs = fixtures::topic_corpus(8, 250, 5, nullptr);
  ClusterConfig c;
  c.df_min = 0.0;
  c.df_max = 1.0;
  const TermMatrix m = vectorize(docs, c);
  for (auto _ : state) benchmark::DoNotOptimize(lsa_reduce(m.rows, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_Lsa)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
