// psg: corpus generation, relation-model training, evaluation and gradient
// verification for the panoptic scene-graph relation stage.

#include "commands.hpp"

#include <CLI11.hpp>

#include <psg/errors.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"panoptic scene-graph relation pipeline"};
    app.require_subcommand(1);
    app.set_config("--config", "", "optional config file; explicit flags win");

    psg_cli::GenOptions gen_opts;
    psg_cli::TrainOptions train_opts;
    psg_cli::EvalOptions eval_opts;
    psg_cli::GradCheckOptionsCli grad_opts;

    psg_cli::register_gen(app, gen_opts);
    psg_cli::register_train(app, train_opts);
    psg_cli::register_eval(app, eval_opts);
    psg_cli::register_gradcheck(app, grad_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (app.got_subcommand("gen")) return psg_cli::run_gen(gen_opts);
        if (app.got_subcommand("train")) return psg_cli::run_train(train_opts);
        if (app.got_subcommand("eval")) return psg_cli::run_eval(eval_opts);
        if (app.got_subcommand("gradcheck")) return psg_cli::run_gradcheck(grad_opts);
    } catch (const psg::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const psg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
