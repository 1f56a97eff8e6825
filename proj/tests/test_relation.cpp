#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include <psg/errors.hpp>
#include <psg/generator.hpp>
#include <psg/gradcheck.hpp>
#include <psg/losses.hpp>
#include <psg/model.hpp>
#include <psg/tokenizer.hpp>

#include <algorithm>
#include <cmath>

using namespace psg;

namespace {

CorpusConfig tiny_corpus_config(std::uint64_t seed, bool context = false) {
    CorpusConfig config;
    config.num_scenes = 4;
    config.height = 8;
    config.width = 8;
    config.channels = 8;
    config.min_objects = context ? 3 : 2;
    config.max_objects = 3;
    config.object_classes = 4;
    config.predicates = 3;
    config.context_mode = context;
    config.patches = 4;
    config.seed = seed;
    return config;
}

ModelConfig tiny_model_config(ModelKind kind = ModelKind::global) {
    ModelConfig config;
    config.kind = kind;
    config.hidden = 8;
    config.patches = 4;
    config.layers = 1;
    config.heads = 2;
    config.key_dim = 4;
    config.predicates = 3;
    config.object_classes = 4;
    config.ffn_hidden = 16;
    return config;
}

Array embeddings_of(RelationModel& model, const Scene& scene) {
    Tape tape;
    return tape.value(model.object_embeddings(tape, scene));
}

// Straight-line reference for the full global forward pass: tokenizer,
// pre-norm encoder layers with joint attention over all tokens, per-object
// mean pooling. Raw loops over named parameters only.
Array straight_line_embeddings(const RelationModel& model, const Scene& scene) {
    const ModelConfig& cfg = model.config();
    const ParamStore& ps = model.params();
    const std::size_t n = scene.object_count();
    const std::size_t L = cfg.patches;
    const std::size_t d = cfg.hidden;
    const std::size_t s_len = n * (L + 1);

    const Array& cls = ps.at("tokenizer.class_token").value;
    const Array& emb = ps.at("tokenizer.class_embedding").value;

    // Tokens.
    std::vector<std::vector<double>> x(s_len, std::vector<double>(d, 0.0));
    const std::size_t chunk = scene.height() * scene.width() / L;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c)
            x[i * (L + 1)][c] = cls[c] + emb.at2(scene.labels[i], c);
        for (std::size_t p = 0; p < L; ++p) {
            for (std::size_t c = 0; c < d; ++c) {
                double acc = 0.0;
                for (std::size_t k = 0; k < chunk; ++k) {
                    const std::size_t px = p * chunk + k;
                    if (scene.masks[i].data[px]) acc += scene.features.data()[px * d + c];
                }
                x[i * (L + 1) + p + 1][c] =
                    acc / static_cast<double>(chunk) + emb.at2(scene.labels[i], c);
            }
        }
    }

    const auto layer_norm_row = [&](const std::vector<double>& row, const Array& gain,
                                    const Array& bias) {
        double mu = 0.0;
        for (double v : row) mu += v;
        mu /= static_cast<double>(row.size());
        double var = 0.0;
        for (double v : row) var += (v - mu) * (v - mu);
        var /= static_cast<double>(row.size());
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        std::vector<double> out(row.size());
        for (std::size_t c = 0; c < row.size(); ++c)
            out[c] = (row[c] - mu) * inv * gain[c] + bias[c];
        return out;
    };
    const auto linear = [&](const std::vector<double>& row, const Array& w, const Array& b) {
        std::vector<double> out(w.dim(1), 0.0);
        for (std::size_t o = 0; o < w.dim(1); ++o) {
            for (std::size_t i = 0; i < w.dim(0); ++i) out[o] += row[i] * w.at2(i, o);
            out[o] += b[o];
        }
        return out;
    };

    for (std::size_t layer = 0; layer < cfg.layers; ++layer) {
        const std::string base = "encoder." + std::to_string(layer) + ".";
        std::vector<std::vector<double>> h(s_len), q(s_len), k(s_len), v(s_len);
        for (std::size_t t = 0; t < s_len; ++t) {
            h[t] = layer_norm_row(x[t], ps.at(base + "ln1.gain").value,
                                  ps.at(base + "ln1.bias").value);
            q[t] = linear(h[t], ps.at(base + "attn.wq").value, ps.at(base + "attn.bq").value);
            k[t] = linear(h[t], ps.at(base + "attn.wk").value, ps.at(base + "attn.bk").value);
            v[t] = linear(h[t], ps.at(base + "attn.wv").value, ps.at(base + "attn.bv").value);
        }
        const std::size_t head_dim = d / cfg.heads;
        std::vector<std::vector<double>> attn_cat(s_len, std::vector<double>(d, 0.0));
        for (std::size_t a = 0; a < cfg.heads; ++a) {
            const std::size_t off = a * head_dim;
            for (std::size_t t = 0; t < s_len; ++t) {
                std::vector<double> scores(s_len, 0.0);
                for (std::size_t u = 0; u < s_len; ++u) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < head_dim; ++c)
                        dot += q[t][off + c] * k[u][off + c];
                    scores[u] = dot / std::sqrt(static_cast<double>(head_dim));
                }
                const double mx = *std::max_element(scores.begin(), scores.end());
                double total = 0.0;
                for (double& sc : scores) {
                    sc = std::exp(sc - mx);
                    total += sc;
                }
                for (double& sc : scores) sc /= total;
                for (std::size_t u = 0; u < s_len; ++u)
                    for (std::size_t c = 0; c < head_dim; ++c)
                        attn_cat[t][off + c] += scores[u] * v[u][off + c];
            }
        }
        for (std::size_t t = 0; t < s_len; ++t) {
            const std::vector<double> proj =
                linear(attn_cat[t], ps.at(base + "attn.wo").value, ps.at(base + "attn.bo").value);
            for (std::size_t c = 0; c < d; ++c) x[t][c] += proj[c];
        }
        for (std::size_t t = 0; t < s_len; ++t) {
            const std::vector<double> h2 = layer_norm_row(x[t], ps.at(base + "ln2.gain").value,
                                                          ps.at(base + "ln2.bias").value);
            std::vector<double> f1 =
                linear(h2, ps.at(base + "ffn.w1").value, ps.at(base + "ffn.b1").value);
            for (double& z : f1) z = 0.5 * z * (1.0 + std::erf(z * 0.7071067811865475));
            const std::vector<double> f2 =
                linear(f1, ps.at(base + "ffn.w2").value, ps.at(base + "ffn.b2").value);
            for (std::size_t c = 0; c < d; ++c) x[t][c] += f2[c];
        }
    }

    Array out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < L + 1; ++t)
            for (std::size_t c = 0; c < d; ++c) out.at2(i, c) += x[i * (L + 1) + t][c];
        for (std::size_t c = 0; c < d; ++c) out.at2(i, c) /= static_cast<double>(L + 1);
    }
    return out;
}

} // namespace

TEST_CASE("zero encoder layers reduce to per-object pooling") {
    ModelConfig cfg = tiny_model_config();
    cfg.layers = 0;
    RelationModel model(cfg, 3);
    const Scene scene = generate_scene(tiny_corpus_config(31), 0);
    const Array emb = embeddings_of(model, scene);

    const Array& cls = model.params().at("tokenizer.class_token").value;
    const Array& table = model.params().at("tokenizer.class_embedding").value;
    const std::vector<Array> patches = scene_patch_tokens(scene, cfg.patches);
    for (std::size_t i = 0; i < scene.object_count(); ++i) {
        for (std::size_t c = 0; c < cfg.hidden; ++c) {
            double acc = cls[c];
            for (std::size_t p = 0; p < cfg.patches; ++p) acc += patches[i].at2(p, c);
            const double want =
                acc / static_cast<double>(cfg.patches + 1) + table.at2(scene.labels[i], c);
            CHECK(emb.at2(i, c) == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("one-layer global forward matches the straight-line oracle") {
    RelationModel model(tiny_model_config(), 7);
    const Scene scene = generate_scene(tiny_corpus_config(33), 1);
    const Array got = embeddings_of(model, scene);
    const Array want = straight_line_embeddings(model, scene);
    CHECK(oracle::all_close(got, want, 1e-10, 1e-12));
}

TEST_CASE("two-layer forward still matches the oracle") {
    ModelConfig cfg = tiny_model_config();
    cfg.layers = 2;
    RelationModel model(cfg, 9);
    const Scene scene = generate_scene(tiny_corpus_config(35), 2);
    CHECK(oracle::all_close(embeddings_of(model, scene), straight_line_embeddings(model, scene),
                            1e-10, 1e-12));
}

TEST_CASE("embedding permutation equivariance") {
    RelationModel model(tiny_model_config(), 11);
    Scene scene = generate_scene(tiny_corpus_config(37), 0);
    if (scene.object_count() < 2) return;

    Scene swapped = scene;
    std::swap(swapped.masks[0], swapped.masks[1]);
    std::swap(swapped.labels[0], swapped.labels[1]);
    swapped.triplets.clear();
    swapped.hidden_triplets.clear();

    const Array a = embeddings_of(model, scene);
    const Array b = embeddings_of(model, swapped);
    for (std::size_t c = 0; c < model.config().hidden; ++c) {
        CHECK(a.at2(0, c) == doctest::Approx(b.at2(1, c)).epsilon(1e-12));
        CHECK(a.at2(1, c) == doctest::Approx(b.at2(0, c)).epsilon(1e-12));
    }
}

TEST_CASE("relation logits permute consistently in both axes") {
    RelationModel model(tiny_model_config(), 13);
    Scene scene = generate_scene(tiny_corpus_config(39), 3);
    const std::size_t n = scene.object_count();
    if (n < 2) return;

    Scene swapped = scene;
    std::swap(swapped.masks[0], swapped.masks[1]);
    std::swap(swapped.labels[0], swapped.labels[1]);
    swapped.triplets.clear();
    swapped.hidden_triplets.clear();

    const RelationLogits a = model.relation_logits(scene);
    const RelationLogits b = model.relation_logits(swapped);
    const auto mapped = [&](std::size_t i) { return i == 0 ? 1 : (i == 1 ? 0 : i); };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < 3; ++p)
                CHECK(a.scores.at3(i, j, p) ==
                      doctest::Approx(b.scores.at3(mapped(i), mapped(j), p)).epsilon(1e-12));
}

TEST_CASE("relation head with zero projections emits the biases") {
    RelationModel model(tiny_model_config(), 15);
    for (std::size_t p = 0; p < 3; ++p) {
        model.params().at("head." + std::to_string(p) + ".query").value.fill(0.0);
        model.params().at("head." + std::to_string(p) + ".key").value.fill(0.0);
        model.params().at("head." + std::to_string(p) + ".bias").value[0] = 0.5 * (p + 1);
    }
    const Scene scene = generate_scene(tiny_corpus_config(41), 0);
    const RelationLogits logits = model.relation_logits(scene);
    for (std::size_t i = 0; i < scene.object_count(); ++i)
        for (std::size_t j = 0; j < scene.object_count(); ++j)
            for (std::size_t p = 0; p < 3; ++p)
                CHECK(logits.scores.at3(i, j, p) == doctest::Approx(0.5 * (p + 1)));
}

TEST_CASE("relation head closed form at N=2, D=2, d_k=1") {
    ModelConfig cfg = tiny_model_config();
    cfg.hidden = 2;
    cfg.key_dim = 1;
    cfg.predicates = 1;
    cfg.layers = 0;
    cfg.heads = 1;
    cfg.object_classes = 2;
    RelationModel model(cfg, 17);
    model.params().at("head.0.query").value = Array({2, 1}, {1.0, 2.0});
    model.params().at("head.0.key").value = Array({2, 1}, {-1.0, 0.5});
    model.params().at("head.0.bias").value[0] = 0.25;

    Tape tape;
    Parameter emb_param("emb", Array({2, 2}, {1.0, -1.0, 2.0, 3.0}));
    const Var planes_in = tape.param(emb_param);
    const std::vector<Var> planes = model.relation_logit_planes(tape, planes_in);
    const Array& plane = tape.value(planes[0]);

    // q = [1*1 + (-1)*2, 2*1 + 3*2] = [-1, 8]; k = [-1*1 + 0.5*(-1), -1*2 + 0.5*3]
    //   = [-1.5, -0.5]; logit[i][j] = q[i]*k[j]/sqrt(1) + 0.25.
    CHECK(plane.at2(0, 0) == doctest::Approx(-1.0 * -1.5 + 0.25));
    CHECK(plane.at2(0, 1) == doctest::Approx(-1.0 * -0.5 + 0.25));
    CHECK(plane.at2(1, 0) == doctest::Approx(8.0 * -1.5 + 0.25));
    CHECK(plane.at2(1, 1) == doctest::Approx(8.0 * -0.5 + 0.25));
}

TEST_CASE("direction sensitivity: swapping embeddings transposes the plane") {
    Rng rng(43);
    for (int rep = 0; rep < 100; ++rep) {
        ModelConfig cfg = tiny_model_config();
        cfg.layers = 0;
        RelationModel model(cfg, 1000 + rep);
        Tape tape;
        Parameter emb("emb", oracle::random_array({2, cfg.hidden}, rng));
        Parameter emb_swapped("emb_swapped", Array({2, cfg.hidden}));
        for (std::size_t c = 0; c < cfg.hidden; ++c) {
            emb_swapped.value.at2(0, c) = emb.value.at2(1, c);
            emb_swapped.value.at2(1, c) = emb.value.at2(0, c);
        }
        Tape t1, t2;
        const auto p1 = model.relation_logit_planes(t1, t1.param(emb));
        const auto p2 = model.relation_logit_planes(t2, t2.param(emb_swapped));
        for (std::size_t p = 0; p < cfg.predicates; ++p) {
            const Array& a = t1.value(p1[p]);
            const Array& b = t2.value(p2[p]);
            CHECK(a.at2(0, 1) == doctest::Approx(b.at2(1, 0)).epsilon(1e-12));
            CHECK(a.at2(1, 0) == doctest::Approx(b.at2(0, 1)).epsilon(1e-12));
        }
    }
}

TEST_CASE("pairwise baseline is exactly invariant to other objects' features") {
    CorpusConfig corpus_cfg = tiny_corpus_config(45, true);
    const Scene scene = generate_scene(corpus_cfg, 0);
    REQUIRE(scene.object_count() == 3);

    ModelConfig cfg = tiny_model_config(ModelKind::pairwise);
    RelationModel model(cfg, 19);
    const RelationLogits before = model.relation_logits(scene);

    Scene perturbed = scene;
    for (std::size_t px = 0; px < 64; ++px)
        if (scene.masks[2].data[px])
            for (std::size_t c = 0; c < 8; ++c) perturbed.features.data()[px * 8 + c] += 13.0;
    const RelationLogits after = model.relation_logits(perturbed);

    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t p = 0; p < 3; ++p)
                CHECK(before.scores.at3(i, j, p) == after.scores.at3(i, j, p));
    // The third object's own rows did change.
    bool changed = false;
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t p = 0; p < 3; ++p)
            if (before.scores.at3(2, j, p) != after.scores.at3(2, j, p)) changed = true;
    CHECK(changed);
}

TEST_CASE("global model is sensitive to a third object's features") {
    const Scene scene = generate_scene(tiny_corpus_config(47, true), 0);
    RelationModel model(tiny_model_config(), 21);
    const RelationLogits before = model.relation_logits(scene);

    // Channel-varying shift: a constant one would sit in layer norm's null
    // space and never cross between objects.
    Scene perturbed = scene;
    for (std::size_t px = 0; px < 64; ++px)
        if (scene.masks[2].data[px])
            for (std::size_t c = 0; c < 8; ++c)
                perturbed.features.data()[px * 8 + c] += 3.0 * static_cast<double>(c + 1);
    const RelationLogits after = model.relation_logits(perturbed);

    double diff = 0.0;
    for (std::size_t p = 0; p < 3; ++p)
        diff += std::abs(before.scores.at3(0, 1, p) - after.scores.at3(0, 1, p));
    CHECK(diff > 1e-9);
}

TEST_CASE("identical per-pair inputs give identical pairwise logits") {
    // Same two objects embedded in different scenes (third object differs).
    ModelConfig cfg = tiny_model_config(ModelKind::pairwise);
    RelationModel model(cfg, 23);

    Scene a = generate_scene(tiny_corpus_config(49, true), 0);
    Scene b = a;
    b.id = "variant";
    for (std::size_t px = 0; px < 64; ++px)
        if (a.masks[2].data[px]) {
            b.labels[2] = (a.labels[2] + 1) % 4;
            for (std::size_t c = 0; c < 8; ++c) b.features.data()[px * 8 + c] *= -2.0;
        }
    const RelationLogits la = model.relation_logits(a);
    const RelationLogits lb = model.relation_logits(b);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t p = 0; p < 3; ++p)
                CHECK(la.scores.at3(i, j, p) == lb.scores.at3(i, j, p));
}

TEST_CASE("predict_triplets ranks a dominant logit first") {
    const Scene scene = generate_scene(tiny_corpus_config(51), 0);
    const std::size_t n = scene.object_count();
    RelationLogits logits;
    logits.scores = Array::full({n, n, 3}, -3.0);
    logits.scores.at3(1, 0, 2) = 9.0;
    const auto ranked = predict_triplets(logits, scene, 5);
    REQUIRE(!ranked.empty());
    CHECK(ranked[0].subject == 1);
    CHECK(ranked[0].object == 0);
    CHECK(ranked[0].predicate == 2);
    CHECK(ranked[0].subject_label == scene.labels[1]);
}

TEST_CASE("all-equal logits fall back to (i, j, p) ordering") {
    const Scene scene = generate_scene(tiny_corpus_config(53), 0);
    const std::size_t n = scene.object_count();
    RelationLogits logits;
    logits.scores = Array::full({n, n, 3}, 0.5);
    const auto ranked = predict_triplets(logits, scene, n * (n - 1) * 3);
    std::vector<std::tuple<int, int, int>> order;
    for (const auto& t : ranked) order.emplace_back(t.subject, t.object, t.predicate);
    CHECK(std::is_sorted(order.begin(), order.end()));
    CHECK(order.size() == n * (n - 1) * 3);
}

TEST_CASE("ranking agrees with a brute-force sort oracle") {
    Rng rng(55);
    const Scene scene = generate_scene(tiny_corpus_config(57), 1);
    const std::size_t n = scene.object_count();
    RelationLogits logits;
    logits.scores = oracle::random_array({n, n, 3}, rng, -4, 4);
    const auto ranked = predict_triplets(logits, scene, 1000);

    struct Entry {
        double score;
        std::size_t i, j, p;
    };
    std::vector<Entry> all;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < 3; ++p)
                if (i != j)
                    all.push_back({1.0 / (1.0 + std::exp(-logits.scores.at3(i, j, p))), i, j, p});
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
        if (a.score != b.score) return a.score > b.score;
        return std::tie(a.i, a.j, a.p) < std::tie(b.i, b.j, b.p);
    });
    REQUIRE(ranked.size() == all.size());
    for (std::size_t r = 0; r < all.size(); ++r) {
        CHECK(ranked[r].subject == all[r].i);
        CHECK(ranked[r].object == all[r].j);
        CHECK(ranked[r].predicate == all[r].p);
        CHECK(ranked[r].score == doctest::Approx(all[r].score).epsilon(1e-12));
    }
}

TEST_CASE("every logit plane entry is finite and diagonal is excluded from ranking") {
    RelationModel model(tiny_model_config(), 25);
    const Scene scene = generate_scene(tiny_corpus_config(59), 2);
    const RelationLogits logits = model.relation_logits(scene);
    CHECK(logits.scores.all_finite());
    const auto ranked = predict_triplets(logits, scene, 10000);
    for (const auto& t : ranked) CHECK(t.subject != t.object);
    CHECK(ranked.size() ==
          scene.object_count() * (scene.object_count() - 1) * model.config().predicates);
}

TEST_CASE("end-to-end focal loss gradients pass grad_check at rtol 1e-3") {
    RelationModel model(tiny_model_config(), 27);
    const Scene scene = generate_scene(tiny_corpus_config(61), 0);
    const SoftLabelTensor labels = hard_labels(scene, model.config().predicates);
    const auto build = [&](Tape& tape) {
        const Var emb = model.object_embeddings(tape, scene);
        const auto planes = model.relation_logit_planes(tape, emb);
        return focal_loss(tape, planes, labels, 2.0, 0.25);
    };
    const GradCheckReport report = grad_check(model.params(), build, {1e-3, 1e-6, 1e-5, false});
    for (const auto& block : report.worst()) {
        CAPTURE(block.name);
        CHECK(block.pass);
    }
    CHECK(report.pass);
}
