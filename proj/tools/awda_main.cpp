#include <iostream>

#include <CLI11.hpp>

#include "awda/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"adverse-weather domain adaptation toolkit"};
    app.require_subcommand(1);

    awda::cli::SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "synthesize adverse-weather images");
    synth_cmd->add_option("--in", synth.input_dir, "input directory of 8-bit PNGs")->required();
    synth_cmd->add_option("--depth", synth.depth_dir, "depth directory (required for haze)");
    synth_cmd->add_option("--domain", synth.domain, "night | rain | haze")->required();
    synth_cmd->add_option("--out", synth.output_dir, "output directory")->required();
    synth_cmd->add_option("--seed", synth.seed, "random seed")->default_val(42);

    awda::cli::TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "run the toy self-training experiment");
    train_cmd->add_option("--config", train.config_path, "key = value config file");
    train_cmd->add_option("--out", train.output_dir, "output directory")->required();
    train_cmd->add_option("--set", train.overrides, "config overrides, key=value (flags win)");
    auto* seed_opt = train_cmd->add_option("--seed", train.seed, "random seed (overrides config)");

    awda::cli::EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate predictions against labels");
    eval_cmd->add_option("--predictions", eval.predictions_path, "predictions JSONL")->required();
    eval_cmd->add_option("--labels", eval.labels_path, "labels JSONL")->required();
    eval_cmd->add_option("--out", eval.output_path, "optional output JSON path");

    std::uint64_t gc_seed = 42;
    auto* gc_cmd = app.add_subcommand("gradcheck", "run the finite-difference gradient suite");
    gc_cmd->add_option("--seed", gc_seed, "random seed")->default_val(42);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) return awda::cli::cmd_synth(synth, std::cout, std::cerr);
        if (train_cmd->parsed()) {
            train.has_seed_override = seed_opt->count() > 0;
            return awda::cli::cmd_train(train, std::cout, std::cerr);
        }
        if (eval_cmd->parsed()) return awda::cli::cmd_eval(eval, std::cout, std::cerr);
        if (gc_cmd->parsed()) return awda::cli::cmd_gradcheck(gc_seed, std::cout);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return awda::cli::kValidationError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return awda::cli::kRuntimeError;
    }
    return awda::cli::kValidationError;
}
