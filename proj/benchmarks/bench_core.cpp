// Microbenchmarks for the hot paths: tape primitives, tokenization, the full
// model forward/backward, RLE and mask IoU, and one optimizer step.

#include <benchmark/benchmark.h>

#include <psg/generator.hpp>
#include <psg/losses.hpp>
#include <psg/mask.hpp>
#include <psg/metrics.hpp>
#include <psg/model.hpp>
#include <psg/optimizer.hpp>
#include <psg/rng.hpp>
#include <psg/tokenizer.hpp>

using namespace psg;

namespace {

Array random_array(std::vector<std::size_t> shape, Rng& rng) {
    Array a(std::move(shape));
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.normal();
    return a;
}

CorpusConfig bench_corpus_config() {
    CorpusConfig cc;
    cc.num_scenes = 1;
    cc.height = 16;
    cc.width = 16;
    cc.channels = 32;
    cc.min_objects = 4;
    cc.max_objects = 4;
    cc.object_classes = 12;
    cc.predicates = 8;
    cc.pair_density = 0.4;
    cc.patches = 4;
    cc.seed = 1;
    return cc;
}

ModelConfig bench_model_config() { return ModelConfig{}; }

void bm_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Array a = random_array({n, n}, rng);
    const Array b = random_array({n, n}, rng);
    for (auto _ : state) {
        Tape tape;
        benchmark::DoNotOptimize(tape.value(tape.matmul(tape.constant(a), tape.constant(b))));
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(bm_matmul)->Arg(32)->Arg(64)->Arg(128);

void bm_tokenize_scene(benchmark::State& state) {
    const Scene scene = generate_scene(bench_corpus_config(), 0);
    Rng rng(2);
    Parameter cls("cls", random_array({32}, rng));
    Parameter emb("emb", random_array({12, 32}, rng));
    for (auto _ : state) {
        Tape tape;
        benchmark::DoNotOptimize(
            tape.value(tokenize_scene(tape, scene, tape.param(cls), tape.param(emb), 4)));
    }
}
BENCHMARK(bm_tokenize_scene);

void bm_forward(benchmark::State& state) {
    const Scene scene = generate_scene(bench_corpus_config(), 0);
    RelationModel model(bench_model_config(), 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.relation_logits(scene));
    }
}
BENCHMARK(bm_forward);

void bm_forward_backward(benchmark::State& state) {
    const Scene scene = generate_scene(bench_corpus_config(), 0);
    RelationModel model(bench_model_config(), 3);
    const SoftLabelTensor labels = hard_labels(scene, 8);
    for (auto _ : state) {
        model.params().zero_grads();
        Tape tape;
        const Var emb = model.object_embeddings(tape, scene);
        const Var loss = focal_loss(tape, model.relation_logit_planes(tape, emb), labels, 2.0, 0.25);
        tape.backward(loss);
        benchmark::DoNotOptimize(tape.value(loss)[0]);
    }
}
BENCHMARK(bm_forward_backward);

void bm_adamw_step(benchmark::State& state) {
    RelationModel model(bench_model_config(), 5);
    Rng rng(4);
    for (std::size_t i = 0; i < model.params().size(); ++i)
        for (std::size_t e = 0; e < model.params()[i].grad.numel(); ++e)
            model.params()[i].grad[e] = rng.normal();
    AdamW opt;
    for (auto _ : state) {
        opt.step(model.params(), 1e-4, 0.05);
    }
    state.SetItemsProcessed(state.iterations() * model.params().total_elements());
}
BENCHMARK(bm_adamw_step);

void bm_rle_roundtrip(benchmark::State& state) {
    Rng rng(5);
    std::vector<Mask> masks;
    for (int i = 0; i < 64; ++i) {
        Mask m(32, 32);
        for (auto& v : m.data) v = rng.bernoulli(0.3) ? 1 : 0;
        masks.push_back(std::move(m));
    }
    std::size_t at = 0;
    for (auto _ : state) {
        const Mask& m = masks[at++ % masks.size()];
        benchmark::DoNotOptimize(decode_rle(encode_rle(m)));
    }
}
BENCHMARK(bm_rle_roundtrip);

void bm_mask_iou(benchmark::State& state) {
    Rng rng(6);
    Mask a(64, 64), b(64, 64);
    for (auto& v : a.data) v = rng.bernoulli(0.4) ? 1 : 0;
    for (auto& v : b.data) v = rng.bernoulli(0.4) ? 1 : 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(mask_iou(a, b));
    }
    state.SetItemsProcessed(state.iterations() * a.data.size());
}
BENCHMARK(bm_mask_iou);

void bm_generate_scene(benchmark::State& state) {
    const CorpusConfig cc = bench_corpus_config();
    std::size_t index = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(generate_scene(cc, index++));
    }
}
BENCHMARK(bm_generate_scene);

} // namespace

BENCHMARK_MAIN();
