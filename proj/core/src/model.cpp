#include "psg/model.hpp"

#include "psg/errors.hpp"
#include "psg/rng.hpp"
#include "psg/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace psg {

std::string to_string(ModelKind kind) {
    return kind == ModelKind::global ? "global" : "pairwise";
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "global") return ModelKind::global;
    if (name == "pairwise") return ModelKind::pairwise;
    throw ConfigError("unknown model kind '" + name + "' (expected global or pairwise)");
}

void ModelConfig::validate() const {
    if (hidden == 0 || patches == 0 || predicates == 0 || object_classes == 0 || key_dim == 0)
        throw ConfigError("model: zero-sized dimension");
    if (kind == ModelKind::global) {
        if (heads == 0 || ffn_hidden == 0) throw ConfigError("model: zero-sized dimension");
        if (hidden % heads != 0)
            throw ConfigError("model: hidden size " + std::to_string(hidden) +
                              " not divisible by " + std::to_string(heads) + " heads");
    }
}

namespace {

std::string pname(const char* group, std::size_t index, const char* leaf) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s.%zu.%s", group, index, leaf);
    return buf;
}

Array normal_init(Rng& rng, std::vector<std::size_t> shape, double std_dev) {
    Array a(std::move(shape));
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.normal(0.0, std_dev);
    return a;
}

constexpr double kInitStd = 0.08;
// Sigmoid prior of roughly 0.12 for the predicate bias; most pairs are negative.
constexpr double kBiasInit = -2.0;

} // namespace

RelationModel::RelationModel(ModelConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(Rng::mix(seed, 0x4d4f44454cULL));
    const std::size_t d = config_.hidden;

    params_.add("tokenizer.class_token", normal_init(rng, {d}, kInitStd));
    params_.add("tokenizer.class_embedding",
                normal_init(rng, {config_.object_classes, d}, kInitStd));

    if (config_.kind == ModelKind::global) {
        for (std::size_t l = 0; l < config_.layers; ++l) {
            params_.add(pname("encoder", l, "ln1.gain"), Array::full({d}, 1.0));
            params_.add(pname("encoder", l, "ln1.bias"), Array({d}));
            params_.add(pname("encoder", l, "attn.wq"), normal_init(rng, {d, d}, kInitStd));
            params_.add(pname("encoder", l, "attn.bq"), Array({d}));
            params_.add(pname("encoder", l, "attn.wk"), normal_init(rng, {d, d}, kInitStd));
            params_.add(pname("encoder", l, "attn.bk"), Array({d}));
            params_.add(pname("encoder", l, "attn.wv"), normal_init(rng, {d, d}, kInitStd));
            params_.add(pname("encoder", l, "attn.bv"), Array({d}));
            params_.add(pname("encoder", l, "attn.wo"), normal_init(rng, {d, d}, kInitStd));
            params_.add(pname("encoder", l, "attn.bo"), Array({d}));
            params_.add(pname("encoder", l, "ln2.gain"), Array::full({d}, 1.0));
            params_.add(pname("encoder", l, "ln2.bias"), Array({d}));
            params_.add(pname("encoder", l, "ffn.w1"),
                        normal_init(rng, {d, config_.ffn_hidden}, kInitStd));
            params_.add(pname("encoder", l, "ffn.b1"), Array({config_.ffn_hidden}));
            params_.add(pname("encoder", l, "ffn.w2"),
                        normal_init(rng, {config_.ffn_hidden, d}, kInitStd));
            params_.add(pname("encoder", l, "ffn.b2"), Array({d}));
        }
    }

    for (std::size_t p = 0; p < config_.predicates; ++p) {
        params_.add(pname("head", p, "query"), normal_init(rng, {d, config_.key_dim}, kInitStd));
        params_.add(pname("head", p, "key"), normal_init(rng, {d, config_.key_dim}, kInitStd));
        params_.add(pname("head", p, "bias"), Array::full({1}, kBiasInit));
    }
}

RelationModel RelationModel::clone() const {
    RelationModel copy(config_, 0);
    copy.params_.copy_values_from(params_);
    return copy;
}

Var RelationModel::encoder_layer(Tape& tape, Var x, std::size_t layer) {
    ParamStore& ps = params_;
    const std::size_t d = config_.hidden;
    const std::size_t head_dim = d / config_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    const auto P = [&](const char* leaf) { return tape.param(ps.at(pname("encoder", layer, leaf))); };

    // Pre-norm attention block.
    const Var h = tape.layer_norm(x, P("ln1.gain"), P("ln1.bias"));
    const Var q = tape.add_rowwise(tape.matmul(h, P("attn.wq")), P("attn.bq"));
    const Var k = tape.add_rowwise(tape.matmul(h, P("attn.wk")), P("attn.bk"));
    const Var v = tape.add_rowwise(tape.matmul(h, P("attn.wv")), P("attn.bv"));

    std::vector<Var> head_outputs;
    head_outputs.reserve(config_.heads);
    for (std::size_t a = 0; a < config_.heads; ++a) {
        const Var qa = tape.slice_cols(q, a * head_dim, head_dim);
        const Var ka = tape.slice_cols(k, a * head_dim, head_dim);
        const Var va = tape.slice_cols(v, a * head_dim, head_dim);
        const Var scores = tape.scale(tape.matmul(qa, tape.transpose(ka)), scale);
        const Var attn = tape.softmax(scores, 1);
        head_outputs.push_back(tape.matmul(attn, va));
    }
    const Var concat = tape.hstack(head_outputs);
    const Var attn_out = tape.add_rowwise(tape.matmul(concat, P("attn.wo")), P("attn.bo"));
    const Var x1 = tape.add(x, attn_out);

    // Pre-norm feed-forward block.
    const Var h2 = tape.layer_norm(x1, P("ln2.gain"), P("ln2.bias"));
    const Var f1 = tape.gelu(tape.add_rowwise(tape.matmul(h2, P("ffn.w1")), P("ffn.b1")));
    const Var f2 = tape.add_rowwise(tape.matmul(f1, P("ffn.w2")), P("ffn.b2"));
    return tape.add(x1, f2);
}

Var RelationModel::object_embeddings(Tape& tape, const Scene& scene) {
    ParamStore& ps = params_;
    const std::size_t n = scene.object_count();
    const std::size_t block = config_.patches + 1;

    Var tokens = tokenize_scene(tape, scene, tape.param(ps.at("tokenizer.class_token")),
                                tape.param(ps.at("tokenizer.class_embedding")), config_.patches);

    if (config_.kind == ModelKind::global) {
        for (std::size_t l = 0; l < config_.layers; ++l) {
            tokens = encoder_layer(tape, tokens, l);
        }
    }

    std::vector<Var> pooled;
    pooled.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        pooled.push_back(tape.mean_rows(tape.slice_rows(tokens, i * block, block)));
    }
    return tape.vstack(pooled);
}

std::vector<Var> RelationModel::relation_logit_planes(Tape& tape, Var embeddings) {
    ParamStore& ps = params_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(config_.key_dim));
    std::vector<Var> planes;
    planes.reserve(config_.predicates);
    for (std::size_t p = 0; p < config_.predicates; ++p) {
        const Var q = tape.matmul(embeddings, tape.param(ps.at(pname("head", p, "query"))));
        const Var k = tape.matmul(embeddings, tape.param(ps.at(pname("head", p, "key"))));
        const Var raw = tape.scale(tape.matmul(q, tape.transpose(k)), scale);
        planes.push_back(tape.add_scalar(raw, tape.param(ps.at(pname("head", p, "bias")))));
    }
    return planes;
}

RelationLogits RelationModel::relation_logits(const Scene& scene) {
    Tape tape;
    const Var emb = object_embeddings(tape, scene);
    const std::vector<Var> planes = relation_logit_planes(tape, emb);
    const std::size_t n = scene.object_count();
    RelationLogits out;
    out.scores = Array({n, n, config_.predicates});
    for (std::size_t p = 0; p < planes.size(); ++p) {
        const Array& plane = tape.value(planes[p]);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) out.scores.at3(i, j, p) = plane.at2(i, j);
    }
    if (!out.scores.all_finite()) {
        throw TrainingError("relation_logits: non-finite scores for scene '" + scene.id + "'");
    }
    return out;
}

std::vector<RankedTriplet> predict_triplets(const RelationLogits& logits, const Scene& scene,
                                            std::size_t k) {
    const std::size_t n = logits.objects();
    const std::size_t preds = logits.predicates();
    if (n != scene.object_count()) {
        throw ShapeError("predict_triplets: logits cover " + std::to_string(n) +
                         " objects but scene '" + scene.id + "' has " +
                         std::to_string(scene.object_count()));
    }
    std::vector<RankedTriplet> all;
    all.reserve(n * n * preds);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            for (std::size_t p = 0; p < preds; ++p) {
                RankedTriplet t;
                t.subject = static_cast<std::uint16_t>(i);
                t.object = static_cast<std::uint16_t>(j);
                t.predicate = static_cast<std::uint16_t>(p);
                t.score = sigmoid(logits.scores.at3(i, j, p));
                t.subject_label = scene.labels[i];
                t.object_label = scene.labels[j];
                all.push_back(t);
            }
        }
    }
    // Candidates were generated in (i, j, p) ascending order; a stable sort on
    // the score alone realizes the documented tie-break.
    std::stable_sort(all.begin(), all.end(),
                     [](const RankedTriplet& a, const RankedTriplet& b) { return a.score > b.score; });
    if (all.size() > k) all.resize(k);
    return all;
}

} // namespace psg
