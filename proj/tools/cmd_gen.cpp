#include "commands.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <psg/corpus_io.hpp>
#include <psg/errors.hpp>
#include <psg/generator.hpp>
#include <psg/threads.hpp>

#include <fstream>
#include <iostream>

namespace psg_cli {

namespace {

std::pair<std::size_t, std::size_t> parse_hw(const std::string& text) {
    const auto x = text.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= text.size()) {
        throw psg::ConfigError("--hw expects HxW, e.g. 16x16 (got '" + text + "')");
    }
    try {
        return {std::stoul(text.substr(0, x)), std::stoul(text.substr(x + 1))};
    } catch (const std::exception&) {
        throw psg::ConfigError("--hw expects HxW, e.g. 16x16 (got '" + text + "')");
    }
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
    const auto dots = text.find("..");
    try {
        if (dots == std::string::npos) {
            const std::size_t v = std::stoul(text);
            return {v, v};
        }
        return {std::stoul(text.substr(0, dots)), std::stoul(text.substr(dots + 2))};
    } catch (const std::exception&) {
        throw psg::ConfigError("--objects expects MIN..MAX or a single count (got '" + text +
                               "')");
    }
}

} // namespace

void write_snapshot(const std::string& path, const nlohmann::json& resolved) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw psg::FormatError("cannot write config snapshot '" + path + "'");
    out << resolved.dump(2) << "\n";
}

void register_gen(CLI::App& app, GenOptions& opts) {
    CLI::App* cmd = app.add_subcommand("gen", "generate a synthetic scene corpus");
    cmd->add_option("--scenes", opts.scenes, "number of scenes");
    cmd->add_option("--hw", opts.hw, "scene size as HxW (default 16x16)");
    cmd->add_option("--channels", opts.channels, "feature channels C (model hidden size)");
    cmd->add_option("--objects", opts.objects, "object count range MIN..MAX");
    cmd->add_option("--classes", opts.object_classes, "number of object classes");
    cmd->add_option("--predicates", opts.predicates, "number of predicate classes");
    cmd->add_option("--zipf", opts.zipf_exponent, "long-tail exponent of the predicate profile");
    cmd->add_flag("--context-mode", opts.context_mode,
                  "predicates depend on a third context object");
    cmd->add_option("--ambiguity", opts.ambiguity,
                    "fraction of class pairs with a valid-but-unannotated second predicate");
    cmd->add_option("--pair-density", opts.pair_density, "fraction of ordered pairs annotated");
    cmd->add_option("--primary-share", opts.primary_share,
                    "on ambiguous pairs: share of instances annotated with the dominant predicate");
    cmd->add_option("--noise", opts.noise, "feature noise level");
    cmd->add_option("--patches", opts.patches, "suggested patch count L (H*W must divide by it)");
    cmd->add_option("--seed", opts.seed, "rng seed");
    cmd->add_option("--threads", opts.threads, "worker threads (default: PSG_THREADS or 1)");
    cmd->add_option("-o,--output", opts.output, "output corpus path (.psgc)");
}

int run_gen(const GenOptions& opts) {
    const auto [h, w] = parse_hw(opts.hw);
    const auto [min_obj, max_obj] = parse_range(opts.objects);

    psg::CorpusConfig config;
    config.num_scenes = opts.scenes;
    config.height = h;
    config.width = w;
    config.channels = opts.channels;
    config.min_objects = min_obj;
    config.max_objects = max_obj;
    config.object_classes = opts.object_classes;
    config.predicates = opts.predicates;
    config.predicate_weights = psg::zipf_weights(opts.predicates, opts.zipf_exponent);
    config.context_mode = opts.context_mode;
    config.ambiguity_rate = opts.ambiguity;
    config.pair_density = opts.pair_density;
    config.primary_share = opts.primary_share;
    config.feature_noise = opts.noise;
    config.patches = opts.patches;
    config.seed = opts.seed;
    config.validate();

    const std::size_t threads = opts.threads > 0 ? opts.threads : psg::default_threads();
    const std::vector<psg::Scene> scenes = psg::generate_corpus(config, threads);
    const std::string corpus_id = psg::save_corpus(opts.output, config, scenes);

    nlohmann::json snapshot;
    snapshot["command"] = "gen";
    snapshot["corpus_id"] = corpus_id;
    snapshot["output"] = opts.output;
    snapshot["config"] = nlohmann::json::parse(psg::corpus_config_json(config));
    write_snapshot(opts.output + ".config.json", snapshot);

    std::size_t triplets = 0, hidden = 0;
    for (const psg::Scene& s : scenes) {
        triplets += s.triplets.size();
        hidden += s.hidden_triplets.size();
    }
    std::cout << "wrote " << opts.output << " (" << scenes.size() << " scenes, " << triplets
              << " triplets, " << hidden << " hidden) id=" << corpus_id << "\n";
    return 0;
}

} // namespace psg_cli
