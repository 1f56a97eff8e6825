#include "commands.hpp"

#include <CLI11.hpp>

#include <psg/errors.hpp>
#include <psg/generator.hpp>
#include <psg/gradcheck.hpp>
#include <psg/losses.hpp>
#include <psg/model.hpp>

#include <cstdio>
#include <iostream>

namespace psg_cli {

void register_gradcheck(CLI::App& app, GradCheckOptionsCli& opts) {
    CLI::App* cmd = app.add_subcommand(
        "gradcheck", "verify analytic gradients against central finite differences");
    cmd->add_option("--seed", opts.seed, "rng seed for the probe model and scene");
    cmd->add_flag("--corrupt", opts.corrupt, "negative control: perturb one gradient block");
    cmd->add_option("--rtol", opts.rtol, "relative tolerance");
    cmd->add_option("--atol", opts.atol, "absolute tolerance");
}

int run_gradcheck(const GradCheckOptionsCli& opts) {
    // Probe setup: a small but complete global model (tokenizer, encoder,
    // relation head) on one synthetic scene, checked through the focal loss.
    psg::CorpusConfig corpus_config;
    corpus_config.num_scenes = 1;
    corpus_config.height = 8;
    corpus_config.width = 8;
    corpus_config.channels = 8;
    corpus_config.min_objects = 3;
    corpus_config.max_objects = 3;
    corpus_config.object_classes = 4;
    corpus_config.predicates = 3;
    corpus_config.pair_density = 0.6;
    corpus_config.patches = 4;
    corpus_config.seed = opts.seed;
    const psg::Scene scene = psg::generate_scene(corpus_config, 0);

    psg::ModelConfig model_config;
    model_config.kind = psg::ModelKind::global;
    model_config.hidden = 8;
    model_config.patches = 4;
    model_config.layers = 1;
    model_config.heads = 2;
    model_config.key_dim = 4;
    model_config.predicates = 3;
    model_config.object_classes = 4;
    model_config.ffn_hidden = 16;
    psg::RelationModel model(model_config, opts.seed);

    const psg::SoftLabelTensor labels = psg::hard_labels(scene, model_config.predicates);
    const auto build = [&](psg::Tape& tape) {
        const psg::Var emb = model.object_embeddings(tape, scene);
        const auto planes = model.relation_logit_planes(tape, emb);
        return psg::focal_loss(tape, planes, labels, 2.0, 0.25);
    };

    psg::GradCheckOptions gc;
    gc.rtol = opts.rtol;
    gc.atol = opts.atol;
    gc.corrupt = opts.corrupt;
    const psg::GradCheckReport report = psg::grad_check(model.params(), build, gc);

    std::printf("%-28s %8s %14s %14s %6s\n", "block", "elems", "max_rel_err", "max_abs_err",
                "state");
    for (const psg::GradCheckBlock& block : report.blocks) {
        std::printf("%-28s %8zu %14.3e %14.3e %6s\n", block.name.c_str(), block.elements,
                    block.max_rel_err, block.max_abs_err, block.pass ? "ok" : "FAIL");
    }
    if (!report.pass) {
        std::cout << "gradcheck FAILED; worst blocks:\n";
        std::size_t shown = 0;
        for (const psg::GradCheckBlock& block : report.worst()) {
            if (block.pass || shown >= 5) break;
            std::printf("  %-28s max_rel_err %.3e\n", block.name.c_str(), block.max_rel_err);
            ++shown;
        }
        return 1;
    }
    std::cout << "gradcheck passed: " << report.blocks.size() << " parameter blocks within rtol "
              << opts.rtol << "\n";
    return 0;
}

} // namespace psg_cli
