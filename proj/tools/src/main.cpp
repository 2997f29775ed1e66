#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "experiment_config.hpp"
#include "headlock/errors.hpp"
#include "log.hpp"

namespace {

using headlock::Error;
using headlock::ErrorKind;
namespace cli = headlock::cli;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return 2;
        case ErrorKind::data:
        case ErrorKind::input:
        case ErrorKind::consistency:
        case ErrorKind::metric: return 3;
        case ErrorKind::training: return 4;
        case ErrorKind::checkpoint: return 5;
    }
    return 1;
}

struct GlobalOptions {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string log_level = "info";
};

cli::ExperimentConfig resolve_config(const GlobalOptions& opts) {
    cli::ExperimentConfig cfg = opts.config_path.empty()
                                    ? cli::default_experiment_config()
                                    : cli::load_experiment_config(opts.config_path);
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    if (opts.seed) cli::apply_seed_override(cfg, *opts.seed);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-steered backdoor attacks on clinical-note classifiers"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "experiment config file (JSON)");
    app.add_option("--out", opts.out_dir, "output directory (overrides config output_dir)");
    app.add_option("--seed", opts.seed, "override every seed in the config");
    app.add_option("--log-level", opts.log_level, "debug|info|warn|error")
        ->check(CLI::IsMember({"debug", "info", "warn", "error"}));

    CLI::App* gen = app.add_subcommand("gen-data", "generate or ingest the corpus and write splits");
    CLI::App* poison = app.add_subcommand("poison", "poison the training split and write records");

    CLI::App* train = app.add_subcommand("train", "train a model on the generated splits");
    bool train_clean = false, train_backdoor = false;
    train->add_flag("--clean", train_clean, "clean baseline: no poisoning, attention loss off");
    train->add_flag("--backdoor", train_backdoor, "poison the training split and attack");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint and write metric reports");
    std::string eval_ckpt, eval_data;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
    eval->add_option("--data", eval_data, "data directory (defaults to <out>/data)");

    CLI::App* ablate = app.add_subcommand("ablate", "run both poisoning directions side by side");

    CLI::App* inspect = app.add_subcommand("inspect-attention", "per-head trigger attention table");
    std::string ins_ckpt, ins_sample, ins_dump;
    bool ins_inject = false;
    inspect->add_option("--checkpoint", ins_ckpt, "checkpoint directory")->required();
    inspect->add_option("--sample", ins_sample, "sample file (poisoned record or dataset line)")
        ->required();
    inspect->add_flag("--inject", ins_inject, "inject the checkpoint's trigger into a clean sample");
    inspect->add_option("--dump", ins_dump, "write a per-token attention dump to this path");

    CLI11_PARSE(app, argc, argv);

    try {
        cli::log_level() = cli::log_level_from_string(opts.log_level);
        if (gen->parsed()) {
            cli::cmd_gen_data(resolve_config(opts));
        } else if (poison->parsed()) {
            cli::cmd_poison(resolve_config(opts));
        } else if (train->parsed()) {
            if (train_clean == train_backdoor)
                throw headlock::ConfigError("train requires exactly one of --clean or --backdoor");
            cli::cmd_train(resolve_config(opts),
                           train_clean ? cli::TrainVariant::clean : cli::TrainVariant::backdoor);
        } else if (eval->parsed()) {
            std::optional<std::filesystem::path> data;
            if (!eval_data.empty()) data = eval_data;
            cli::cmd_eval(resolve_config(opts), eval_ckpt, data);
        } else if (ablate->parsed()) {
            cli::cmd_ablate(resolve_config(opts));
        } else if (inspect->parsed()) {
            std::optional<std::filesystem::path> dump;
            if (!ins_dump.empty()) dump = ins_dump;
            cli::cmd_inspect_attention(ins_ckpt, ins_sample, ins_inject, dump);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error[%s]: %s\n", headlock::to_string(e.kind()), e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error[internal]: %s\n", e.what());
        return 1;
    }
    return 0;
}
