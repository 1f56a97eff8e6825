#include "commands.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <psg/checkpoint.hpp>
#include <psg/corpus_io.hpp>
#include <psg/errors.hpp>
#include <psg/metrics.hpp>
#include <psg/threads.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace psg_cli {

void write_snapshot(const std::string& path, const nlohmann::json& resolved);

void register_eval(CLI::App& app, EvalOptions& opts) {
    CLI::App* cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    cmd->add_option("--corpus", opts.corpus, "evaluation corpus (.psgc)")->required();
    cmd->add_option("--ckpt", opts.checkpoint, "model checkpoint (.ckpt)");
    cmd->add_option("-k,--k", opts.ks, "recall cutoffs")->delimiter(',');
    cmd->add_flag("--oracle", opts.oracle, "emit the GT triplets as predictions");
    cmd->add_option("--threads", opts.threads, "worker threads (default: PSG_THREADS or 1)");
    cmd->add_option("-o,--output", opts.output, "report path (.json)");
}

namespace {

// Numbers printed to stdout reuse the JSON serializer so the table and the
// report file agree byte for byte.
std::string num(double v) { return nlohmann::json(v).dump(); }

void print_table(const psg::MetricsReport& report) {
    std::cout << "K\tR@K\tmR@K\n";
    for (std::size_t k : report.ks) {
        std::cout << k << "\t" << num(report.recall.at(k)) << "\t"
                  << num(report.mean_recall.at(k)) << "\n";
    }
    std::cout << "PQ\t" << num(report.pq) << "\tSQ\t" << num(report.sq) << "\tRQ\t"
              << num(report.rq) << "\n";
}

} // namespace

int run_eval(const EvalOptions& opts) {
    if (!std::filesystem::exists(opts.corpus)) {
        std::cerr << "error: corpus not found: " << opts.corpus << "\n";
        return 1;
    }
    if (!opts.oracle && opts.checkpoint.empty()) {
        throw psg::ConfigError("eval needs --ckpt (or --oracle)");
    }
    const psg::Corpus corpus = psg::load_corpus(opts.corpus);
    const std::size_t threads = opts.threads > 0 ? opts.threads : psg::default_threads();

    psg::MetricsReport report;
    if (opts.oracle) {
        report = psg::evaluate_oracle(corpus.scenes, opts.ks, threads);
        report.checkpoint_id = "oracle";
    } else {
        psg::LoadedCheckpoint loaded = psg::load_checkpoint(opts.checkpoint);
        report = psg::evaluate(corpus.scenes, loaded.model, opts.ks, threads);
        report.checkpoint_id = loaded.checkpoint_id;
    }
    report.corpus_id = corpus.corpus_id;

    {
        std::ofstream out(opts.output, std::ios::trunc);
        if (!out) throw psg::FormatError("cannot write report '" + opts.output + "'");
        out << report.to_json() << "\n";
    }

    nlohmann::json snapshot;
    snapshot["command"] = "eval";
    snapshot["corpus"] = opts.corpus;
    snapshot["corpus_id"] = report.corpus_id;
    snapshot["checkpoint"] = opts.oracle ? "oracle" : opts.checkpoint;
    snapshot["checkpoint_id"] = report.checkpoint_id;
    snapshot["Ks"] = opts.ks;
    write_snapshot(opts.output + ".config.json", snapshot);

    print_table(report);
    return 0;
}

} // namespace psg_cli
