#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace CLI {
class App;
}

namespace psg_cli {

struct GenOptions {
    std::size_t scenes = 100;
    std::string hw = "16x16";
    std::size_t channels = 32;
    std::string objects = "2..5";
    std::size_t object_classes = 12;
    std::size_t predicates = 8;
    double zipf_exponent = 1.2;
    bool context_mode = false;
    double ambiguity = 0.0;
    double pair_density = 0.4;
    double primary_share = 0.7;
    double noise = 0.25;
    std::size_t patches = 4;
    std::uint64_t seed = 1;
    std::size_t threads = 0;
    std::string output = "corpus.psgc";
};

struct TrainOptions {
    std::string corpus;
    std::size_t phase1 = 10;
    std::size_t phase2 = 5;
    double lr = 1e-4;
    double weight_decay = 0.05;
    double ema = 0.999;
    double gamma = 2.0;
    double balance = 0.25;
    double tau = 0.5;
    std::size_t batch = 8;
    std::vector<std::size_t> lr_decay_epochs = {6, 10};
    std::string model = "global";
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t key_dim = 16;
    std::size_t ffn = 0;     // 0: 4 * hidden
    std::size_t patches = 0; // 0: corpus suggestion
    std::string phase2_loss = "focal";
    bool cached_soft_labels = false;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    std::string outdir = "run";
};

struct EvalOptions {
    std::string corpus;
    std::string checkpoint;
    std::vector<std::size_t> ks = {20, 50, 100};
    bool oracle = false;
    std::size_t threads = 0;
    std::string output = "report.json";
};

struct GradCheckOptionsCli {
    std::uint64_t seed = 7;
    bool corrupt = false;
    double rtol = 1e-3;
    double atol = 1e-6;
};

void register_gen(CLI::App& app, GenOptions& opts);
void register_train(CLI::App& app, TrainOptions& opts);
void register_eval(CLI::App& app, EvalOptions& opts);
void register_gradcheck(CLI::App& app, GradCheckOptionsCli& opts);

int run_gen(const GenOptions& opts);
int run_train(const TrainOptions& opts);
int run_eval(const EvalOptions& opts);
int run_gradcheck(const GradCheckOptionsCli& opts);

} // namespace psg_cli
