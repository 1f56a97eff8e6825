#include "commands.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <psg/checkpoint.hpp>
#include <psg/corpus_io.hpp>
#include <psg/errors.hpp>
#include <psg/threads.hpp>
#include <psg/trainer.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace psg_cli {

void write_snapshot(const std::string& path, const nlohmann::json& resolved);

void register_train(CLI::App& app, TrainOptions& opts) {
    CLI::App* cmd = app.add_subcommand("train", "train the relation model on a corpus");
    cmd->add_option("--corpus", opts.corpus, "training corpus (.psgc)")->required();
    cmd->add_option("--phase1", opts.phase1, "hard-label epochs");
    cmd->add_option("--phase2", opts.phase2, "self-distilled soft-label epochs");
    cmd->add_option("--lr", opts.lr, "learning rate");
    cmd->add_option("--wd", opts.weight_decay, "decoupled weight decay");
    cmd->add_option("--ema", opts.ema, "teacher EMA decay alpha");
    cmd->add_option("--gamma", opts.gamma, "focal loss gamma");
    cmd->add_option("--balance", opts.balance, "focal loss positive-branch weight");
    cmd->add_option("--tau", opts.tau, "soft-label floor");
    cmd->add_option("--batch", opts.batch, "scenes per optimizer step");
    cmd->add_option("--lr-decay-epochs", opts.lr_decay_epochs,
                    "1-based epochs whose start decays the lr 10x")
        ->delimiter(',');
    cmd->add_option("--model", opts.model, "architecture: global or pairwise");
    cmd->add_option("--layers", opts.layers, "encoder layers E");
    cmd->add_option("--heads", opts.heads, "encoder attention heads A");
    cmd->add_option("--dk", opts.key_dim, "relation-head key dim d_k");
    cmd->add_option("--ffn", opts.ffn, "encoder feed-forward width (default 4*hidden)");
    cmd->add_option("--patches", opts.patches, "patch count L (default: corpus suggestion)");
    cmd->add_option("--phase2-loss", opts.phase2_loss, "phase-2 loss: focal or bce");
    cmd->add_flag("--cached-soft-labels", opts.cached_soft_labels,
                  "refresh soft labels per epoch instead of per step");
    cmd->add_option("--seed", opts.seed, "rng seed");
    cmd->add_option("--threads", opts.threads, "worker threads (default: PSG_THREADS or 1)");
    cmd->add_option("-o,--output", opts.outdir, "output directory");
}

int run_train(const TrainOptions& opts) {
    if (!std::filesystem::exists(opts.corpus)) {
        std::cerr << "error: corpus not found: " << opts.corpus << "\n";
        return 1;
    }
    const psg::Corpus corpus = psg::load_corpus(opts.corpus);

    psg::ModelConfig model_config;
    model_config.kind = psg::model_kind_from_string(opts.model);
    model_config.hidden = corpus.config.channels;
    model_config.patches = opts.patches > 0 ? opts.patches : corpus.config.patches;
    model_config.layers = opts.layers;
    model_config.heads = opts.heads;
    model_config.key_dim = opts.key_dim;
    model_config.predicates = corpus.config.predicates;
    model_config.object_classes = corpus.config.object_classes;
    model_config.ffn_hidden = opts.ffn > 0 ? opts.ffn : 4 * model_config.hidden;
    model_config.validate();
    if ((corpus.config.height * corpus.config.width) % model_config.patches != 0) {
        throw psg::ConfigError("H*W not divisible by the patch count " +
                               std::to_string(model_config.patches));
    }

    psg::TrainSchedule schedule;
    schedule.phase1_epochs = opts.phase1;
    schedule.phase2_epochs = opts.phase2;
    schedule.ema_alpha = opts.ema;
    schedule.lr = opts.lr;
    schedule.weight_decay = opts.weight_decay;
    schedule.lr_decay_epochs = opts.lr_decay_epochs;
    schedule.focal_gamma = opts.gamma;
    schedule.focal_balance = opts.balance;
    schedule.tau = opts.tau;
    schedule.batch_size = opts.batch;
    schedule.seed = opts.seed;
    if (opts.phase2_loss == "bce") {
        schedule.phase2_bce = true;
    } else if (opts.phase2_loss != "focal") {
        throw psg::ConfigError("--phase2-loss must be focal or bce");
    }
    schedule.cached_soft_labels = opts.cached_soft_labels;
    schedule.threads = opts.threads > 0 ? opts.threads : psg::default_threads();
    schedule.validate();

    std::filesystem::create_directories(opts.outdir);
    const auto out = [&](const char* name) {
        return (std::filesystem::path(opts.outdir) / name).string();
    };

    nlohmann::json snapshot;
    snapshot["command"] = "train";
    snapshot["corpus"] = opts.corpus;
    snapshot["corpus_id"] = corpus.corpus_id;
    snapshot["model"] = nlohmann::json::parse(psg::model_config_json(model_config));
    snapshot["schedule"] = {{"phase1_epochs", schedule.phase1_epochs},
                            {"phase2_epochs", schedule.phase2_epochs},
                            {"ema_alpha", schedule.ema_alpha},
                            {"lr", schedule.lr},
                            {"weight_decay", schedule.weight_decay},
                            {"lr_decay_epochs", schedule.lr_decay_epochs},
                            {"lr_decay_factor", schedule.lr_decay_factor},
                            {"focal_gamma", schedule.focal_gamma},
                            {"focal_balance", schedule.focal_balance},
                            {"tau", schedule.tau},
                            {"batch_size", schedule.batch_size},
                            {"seed", schedule.seed},
                            {"phase2_loss", schedule.phase2_bce ? "bce" : "focal"},
                            {"cached_soft_labels", schedule.cached_soft_labels}};
    write_snapshot(out("config.json"), snapshot);

    psg::RelationModel model(model_config, opts.seed);

    bool diverged = false;
    std::string divergence_message;
    psg::TrainResult result;
    try {
        result = psg::train(corpus.scenes, model, schedule);
    } catch (const psg::TrainingError& e) {
        diverged = true;
        divergence_message = e.what();
    }

    {
        std::ofstream log(out("train_log.jsonl"), std::ios::trunc);
        for (const psg::EpochRecord& rec : result.log) {
            nlohmann::json j;
            j["epoch"] = rec.epoch;
            j["phase"] = rec.phase;
            j["mean_loss"] = rec.mean_loss;
            j["lr"] = rec.lr;
            log << j.dump() << "\n";
        }
    }

    const std::string model_id = psg::save_checkpoint(out("model.ckpt"), model);
    if (result.teacher.has_value()) {
        psg::RelationModel teacher(model_config, 0);
        teacher.params().copy_values_from(*result.teacher);
        psg::save_checkpoint(out("teacher.ckpt"), teacher);
    }
    if (result.phase1_params.has_value()) {
        psg::RelationModel snapshot_model(model_config, 0);
        snapshot_model.params().copy_values_from(*result.phase1_params);
        psg::save_checkpoint(out("model_phase1.ckpt"), snapshot_model);
    }

    if (diverged) {
        std::cerr << "error: " << divergence_message << "\n";
        std::cerr << "last-good checkpoint written to " << out("model.ckpt") << "\n";
        return 1;
    }
    std::cout << "trained " << result.log.size() << " epochs; final loss "
              << (result.log.empty() ? 0.0 : result.log.back().mean_loss) << "; checkpoint "
              << out("model.ckpt") << " id=" << model_id << "\n";
    return 0;
}

} // namespace psg_cli
