#include "psg/metrics.hpp"

#include "psg/errors.hpp"
#include "psg/threads.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <functional>
#include <mutex>
#include <set>

namespace psg {

using nlohmann::json;

double mask_iou(const Mask& a, const Mask& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("mask_iou: mask shapes differ (" + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
    }
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool av = a.data[i] != 0;
        const bool bv = b.data[i] != 0;
        inter += (av && bv) ? 1 : 0;
        uni += (av || bv) ? 1 : 0;
    }
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<MatchRecord> match_triplets(const std::vector<RankedTriplet>& preds, const Scene& gt,
                                        std::size_t k) {
    std::vector<MatchRecord> records;
    records.reserve(gt.triplets.size());
    for (const Triplet& t : gt.triplets) records.push_back({t, false, 0});
    for (const RankedTriplet& p : preds) {
        if (p.subject >= gt.masks.size() || p.object >= gt.masks.size()) {
            throw ShapeError("match_triplets: prediction references object " +
                             std::to_string(std::max(p.subject, p.object)) +
                             " outside scene '" + gt.id + "'");
        }
    }

    const std::size_t limit = std::min(k, preds.size());
    for (std::size_t rank = 0; rank < limit; ++rank) {
        const RankedTriplet& p = preds[rank];
        for (MatchRecord& rec : records) {
            if (rec.matched) continue;
            const Triplet& t = rec.gt;
            if (p.predicate != t.predicate) continue;
            if (p.subject_label != gt.labels[t.subject]) continue;
            if (p.object_label != gt.labels[t.object]) continue;
            if (!(mask_iou(gt.masks[p.subject], gt.masks[t.subject]) > 0.5)) continue;
            if (!(mask_iou(gt.masks[p.object], gt.masks[t.object]) > 0.5)) continue;
            rec.matched = true;
            rec.rank = rank + 1;
            break; // this prediction consumed its GT
        }
    }
    return records;
}

double recall_at_k(const std::vector<MatchRecord>& records, std::size_t k) {
    if (records.empty()) {
        throw ConfigError("recall_at_k: no ground-truth triplets (recall undefined)");
    }
    std::size_t matched = 0;
    for (const MatchRecord& r : records) {
        if (r.matched && r.rank <= k) ++matched;
    }
    return static_cast<double>(matched) / static_cast<double>(records.size());
}

double mean_recall_at_k(const std::vector<MatchRecord>& records, std::size_t k) {
    if (records.empty()) {
        throw ConfigError("mean_recall_at_k: no ground-truth triplets (recall undefined)");
    }
    std::map<std::uint16_t, std::pair<std::size_t, std::size_t>> per; // predicate -> {gt, matched}
    for (const MatchRecord& r : records) {
        auto& [gt_count, matched] = per[r.gt.predicate];
        ++gt_count;
        if (r.matched && r.rank <= k) ++matched;
    }
    double total = 0.0;
    for (const auto& [pred, counts] : per) {
        total += static_cast<double>(counts.second) / static_cast<double>(counts.first);
    }
    return total / static_cast<double>(per.size());
}

PqResult panoptic_quality(const std::vector<Segment>& pred, const std::vector<Segment>& gt) {
    const auto check_disjoint = [](const std::vector<Segment>& segs, const char* side) {
        if (segs.empty()) return;
        std::vector<std::uint32_t> cover(segs[0].mask.data.size(), 0);
        for (const Segment& s : segs) {
            if (s.mask.data.size() != cover.size()) {
                throw ShapeError("panoptic_quality: segment shapes differ");
            }
            for (std::size_t i = 0; i < cover.size(); ++i) cover[i] += s.mask.data[i];
        }
        for (std::uint32_t c : cover) {
            if (c > 1) throw FormatError(std::string("panoptic_quality: overlapping ") + side +
                                         " segments");
        }
    };
    check_disjoint(pred, "predicted");
    check_disjoint(gt, "ground-truth");

    PqResult out;
    std::vector<bool> gt_used(gt.size(), false);
    for (const Segment& p : pred) {
        bool matched = false;
        for (std::size_t g = 0; g < gt.size(); ++g) {
            if (gt_used[g] || gt[g].label != p.label) continue;
            const double iou = mask_iou(p.mask, gt[g].mask);
            if (iou > 0.5) {
                // IoU > 0.5 against disjoint segments is unique, so greedy is exact.
                gt_used[g] = true;
                out.tp += 1;
                out.iou_sum += iou;
                matched = true;
                break;
            }
        }
        if (!matched) out.fp += 1;
    }
    for (bool used : gt_used) {
        if (!used) out.fn += 1;
    }
    const double denom = static_cast<double>(out.tp) + 0.5 * static_cast<double>(out.fp) +
                         0.5 * static_cast<double>(out.fn);
    out.pq = denom > 0.0 ? out.iou_sum / denom : 0.0;
    out.sq = out.tp > 0 ? out.iou_sum / static_cast<double>(out.tp) : 0.0;
    out.rq = denom > 0.0 ? static_cast<double>(out.tp) / denom : 0.0;
    return out;
}

PqResult merge_pq(const PqResult& a, const PqResult& b) {
    PqResult out;
    out.tp = a.tp + b.tp;
    out.fp = a.fp + b.fp;
    out.fn = a.fn + b.fn;
    out.iou_sum = a.iou_sum + b.iou_sum;
    const double denom = static_cast<double>(out.tp) + 0.5 * static_cast<double>(out.fp) +
                         0.5 * static_cast<double>(out.fn);
    out.pq = denom > 0.0 ? out.iou_sum / denom : 0.0;
    out.sq = out.tp > 0 ? out.iou_sum / static_cast<double>(out.tp) : 0.0;
    out.rq = denom > 0.0 ? static_cast<double>(out.tp) / denom : 0.0;
    return out;
}

namespace {

MetricsReport aggregate(const std::vector<std::vector<MatchRecord>>& per_scene,
                        const std::vector<PqResult>& per_scene_pq,
                        std::vector<std::size_t> ks) {
    std::sort(ks.begin(), ks.end());
    std::vector<MatchRecord> all;
    for (const auto& recs : per_scene) all.insert(all.end(), recs.begin(), recs.end());

    MetricsReport report;
    report.ks = ks;
    for (std::size_t k : ks) {
        report.recall[k] = recall_at_k(all, k);
        report.mean_recall[k] = mean_recall_at_k(all, k);
    }
    report.diagnostics = all;
    const std::size_t max_k = ks.back();
    for (const MatchRecord& r : all) {
        PredicateStats& stats = report.per_predicate[r.gt.predicate];
        ++stats.gt_count;
        if (r.matched && r.rank <= max_k) ++stats.matched;
    }
    for (auto& [pred, stats] : report.per_predicate) {
        stats.recall = static_cast<double>(stats.matched) / static_cast<double>(stats.gt_count);
    }

    PqResult pq;
    for (const PqResult& scene_pq : per_scene_pq) pq = merge_pq(pq, scene_pq);
    report.pq = pq.pq;
    report.sq = pq.sq;
    report.rq = pq.rq;
    return report;
}

MetricsReport evaluate_with(
    const std::vector<Scene>& corpus, std::vector<std::size_t> ks, std::size_t threads,
    const std::function<std::vector<RankedTriplet>(const Scene&, std::size_t, std::size_t)>&
        predict) {
    if (ks.empty()) throw ConfigError("evaluate: no K values given");
    for (std::size_t k : ks) {
        if (k == 0) throw ConfigError("evaluate: K must be at least 1");
    }
    if (corpus.empty()) throw FormatError("evaluate: empty corpus (metrics undefined)");
    const std::size_t max_k = *std::max_element(ks.begin(), ks.end());

    std::vector<std::vector<MatchRecord>> per_scene(corpus.size());
    std::vector<PqResult> per_scene_pq(corpus.size());
    std::exception_ptr failure;
    std::mutex failure_mutex;
    parallel_for(corpus.size(), threads, [&](std::size_t i) {
        try {
            const Scene& scene = corpus[i];
            const std::vector<RankedTriplet> preds = predict(scene, i, max_k);
            per_scene[i] = match_triplets(preds, scene, max_k);
            // The relation stage consumes ground-truth segmentation, so the
            // predicted segments are the scene's own masks and labels.
            std::vector<Segment> segments;
            segments.reserve(scene.object_count());
            for (std::size_t o = 0; o < scene.object_count(); ++o) {
                segments.push_back({scene.masks[o], scene.labels[o]});
            }
            per_scene_pq[i] = panoptic_quality(segments, segments);
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    });
    if (failure) std::rethrow_exception(failure);

    return aggregate(per_scene, per_scene_pq, std::move(ks));
}

} // namespace

MetricsReport evaluate(const std::vector<Scene>& corpus, RelationModel& model,
                       std::vector<std::size_t> ks, std::size_t threads) {
    for (const Scene& scene : corpus) {
        if (scene.channels() != model.config().hidden) {
            throw FormatError("evaluate: corpus has " + std::to_string(scene.channels()) +
                              " channels but the checkpoint expects " +
                              std::to_string(model.config().hidden));
        }
        for (std::uint16_t label : scene.labels) {
            if (label >= model.config().object_classes) {
                throw FormatError("evaluate: corpus label " + std::to_string(label) +
                                  " outside the checkpoint's " +
                                  std::to_string(model.config().object_classes) + " classes");
            }
        }
    }
    // One model clone per worker; forward passes share nothing.
    const std::size_t workers = std::max<std::size_t>(1, threads);
    std::vector<RelationModel> clones;
    clones.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) clones.push_back(model.clone());
    const std::size_t active = std::min(workers, corpus.size());

    return evaluate_with(corpus, std::move(ks), threads,
                         [&](const Scene& scene, std::size_t index, std::size_t max_k) {
                             RelationModel& m = clones[index % std::max<std::size_t>(1, active)];
                             return predict_triplets(m.relation_logits(scene), scene, max_k);
                         });
}

MetricsReport evaluate_oracle(const std::vector<Scene>& corpus, std::vector<std::size_t> ks,
                              std::size_t threads) {
    return evaluate_with(corpus, std::move(ks), threads,
                         [](const Scene& scene, std::size_t, std::size_t max_k) {
                             std::vector<RankedTriplet> preds;
                             preds.reserve(scene.triplets.size());
                             for (const Triplet& t : scene.triplets) {
                                 RankedTriplet rt;
                                 rt.subject = t.subject;
                                 rt.object = t.object;
                                 rt.predicate = t.predicate;
                                 rt.score = 1.0;
                                 rt.subject_label = scene.labels[t.subject];
                                 rt.object_label = scene.labels[t.object];
                                 preds.push_back(rt);
                             }
                             if (preds.size() > max_k) preds.resize(max_k);
                             return preds;
                         });
}

std::string MetricsReport::to_json() const {
    json j;
    j["Ks"] = ks;
    json recall_obj = json::object();
    for (const auto& [k, v] : recall) recall_obj[std::to_string(k)] = v;
    j["recall"] = std::move(recall_obj);
    json mean_obj = json::object();
    for (const auto& [k, v] : mean_recall) mean_obj[std::to_string(k)] = v;
    j["mean_recall"] = std::move(mean_obj);
    json per_obj = json::object();
    for (const auto& [pred, stats] : per_predicate) {
        json s;
        s["gt_count"] = stats.gt_count;
        s["matched"] = stats.matched;
        s["recall"] = stats.recall;
        per_obj[std::to_string(pred)] = std::move(s);
    }
    j["per_predicate"] = std::move(per_obj);
    j["pq"] = pq;
    j["sq"] = sq;
    j["rq"] = rq;
    j["corpus_id"] = corpus_id;
    j["checkpoint_id"] = checkpoint_id;
    return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("metrics report: bad JSON: ") + e.what());
    }
    MetricsReport r;
    try {
        r.ks = j.at("Ks").get<std::vector<std::size_t>>();
        for (const auto& [k, v] : j.at("recall").items())
            r.recall[std::stoul(k)] = v.get<double>();
        for (const auto& [k, v] : j.at("mean_recall").items())
            r.mean_recall[std::stoul(k)] = v.get<double>();
        for (const auto& [k, v] : j.at("per_predicate").items()) {
            PredicateStats stats;
            stats.gt_count = v.at("gt_count").get<std::size_t>();
            stats.matched = v.at("matched").get<std::size_t>();
            stats.recall = v.at("recall").get<double>();
            r.per_predicate[static_cast<std::uint16_t>(std::stoul(k))] = stats;
        }
        r.pq = j.at("pq").get<double>();
        r.sq = j.at("sq").get<double>();
        r.rq = j.at("rq").get<double>();
        r.corpus_id = j.at("corpus_id").get<std::string>();
        r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("metrics report: missing field: ") + e.what());
    }
    return r;
}

} // namespace psg
