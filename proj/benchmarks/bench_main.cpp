#include <benchmark/benchmark.h>

#include "headlock/corpus.hpp"
#include "headlock/encoding.hpp"
#include "headlock/eval.hpp"
#include "headlock/model.hpp"
#include "headlock/text.hpp"
#include "headlock/training.hpp"

namespace {

using namespace headlock;

struct BenchWorld {
    CorpusBundle corpus;
    Vocabulary vocab;
    ModelConfig model;
    Parameters<float> params;
    std::vector<EncodedSample> samples;

    BenchWorld() {
        SyntheticConfig scfg;
        scfg.n_train = 64;
        scfg.n_val = 16;
        scfg.n_test = 16;
        scfg.positive_fraction = 0.25;
        scfg.seed = 1;
        corpus = generate_synthetic_corpus(scfg);
        TriggerSpec trigger;
        vocab = build_vocab({&corpus.train}, 1, trigger.tokens);
        model.vocab_size = vocab.size();
        model.dropout = 0.0;
        params = init_model<float>(model);
        for (const Visit& v : corpus.train.visits) samples.push_back(encode_visit(vocab, model, v));
    }
};

BenchWorld& world() {
    static BenchWorld w;
    return w;
}

void BM_ForwardVisit(benchmark::State& state) {
    BenchWorld& w = world();
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& s = w.samples[i++ % w.samples.size()];
        benchmark::DoNotOptimize(forward_visit(w.params, w.model, s.notes, RunMode::eval));
    }
}
BENCHMARK(BM_ForwardVisit);

void BM_TrainStep(benchmark::State& state) {
    BenchWorld& w = world();
    Parameters<float> grad = zeros_like_parameters<float>(w.model);
    std::vector<const EncodedSample*> batch;
    for (std::size_t i = 0; i < 16; ++i) batch.push_back(&w.samples[i]);
    for (auto _ : state) {
        grad.for_each_tensor([](const std::string&, auto& t) { t.setZero(); });
        benchmark::DoNotOptimize(
            total_loss_and_grad<float>(batch, w.params, w.model, nullptr, 0.0f, grad));
    }
}
BENCHMARK(BM_TrainStep);

void BM_Tokenize(benchmark::State& state) {
    const std::string text = "patient presents with acute shortness of breath and chest pain";
    for (auto _ : state) benchmark::DoNotOptimize(tokenize(text));
}
BENCHMARK(BM_Tokenize);

void BM_Auc(benchmark::State& state) {
    Stream rng(3);
    std::vector<ScoredSample> samples;
    for (int i = 0; i < 2000; ++i) {
        const double score = rng.unit();
        samples.push_back({"v", i % 7 == 0 ? 1 : 0, score, predicted_label_from_score(score)});
    }
    for (auto _ : state) benchmark::DoNotOptimize(auc(samples));
}
BENCHMARK(BM_Auc);

void BM_PoisonDataset(benchmark::State& state) {
    BenchWorld& w = world();
    TriggerSpec trigger;
    PoisonPolicy policy;
    policy.source_class = 0;  // plenty of eligible visits
    policy.target_class = 1;
    policy.poison_rate = 0.25;
    for (auto _ : state)
        benchmark::DoNotOptimize(poison_dataset(w.corpus.train, trigger, policy));
}
BENCHMARK(BM_PoisonDataset);

}  // namespace

BENCHMARK_MAIN();
