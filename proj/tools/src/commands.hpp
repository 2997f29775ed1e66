#pragma once

#include <filesystem>
#include <optional>

#include "experiment_config.hpp"
#include "headlock/checkpoint.hpp"
#include "headlock/eval.hpp"
#include "headlock/training.hpp"

namespace headlock::cli {

enum class TrainVariant { clean, backdoor };

struct RunPaths {
    std::filesystem::path out;
    std::filesystem::path data_dir;
    std::filesystem::path config_echo;

    std::filesystem::path split_file(const std::string& split) const {
        return data_dir / (split + ".jsonl");
    }
    std::filesystem::path checkpoint_dir(TrainVariant v) const {
        return out / (v == TrainVariant::clean ? "checkpoint-clean" : "checkpoint-backdoor");
    }
    std::filesystem::path history_file(TrainVariant v) const {
        return out / (v == TrainVariant::clean ? "history-clean.csv" : "history-backdoor.csv");
    }
};

RunPaths paths_for(const ExperimentConfig& cfg);

// Produces the corpus in memory: synthetic generation or MIMIC ingestion.
CorpusBundle build_corpus(const ExperimentConfig& cfg);

CorpusBundle read_data_dir(const ExperimentConfig& cfg, const std::filesystem::path& data_dir);

// Everything cmd_train persists; reused directly by the acceptance suite.
struct TrainArtifacts {
    Parameters<float> params;
    ModelConfig model;  // vocab_size resolved
    Vocabulary vocab;
    std::optional<HeadSelection> selection;
    std::optional<TriggerSpec> trigger;
    std::optional<PoisonPolicy> poison;
    TrainingConfig train_config;  // effective (lambda forced to 0 for clean runs)
    TrainHistory history;
    int best_epoch = 0;
};

TrainArtifacts run_training(const ExperimentConfig& cfg,
                            TrainVariant variant,
                            const CorpusBundle& corpus);

void save_artifacts(const TrainArtifacts& art,
                    const std::filesystem::path& checkpoint_dir,
                    const std::filesystem::path& history_path);

// CLI verbs. All throw headlock::Error subclasses; main maps them to exit
// codes.
void cmd_gen_data(const ExperimentConfig& cfg);
void cmd_poison(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg, TrainVariant variant);
void cmd_eval(const ExperimentConfig& cfg,
              const std::filesystem::path& checkpoint_dir,
              const std::optional<std::filesystem::path>& data_dir);
void cmd_ablate(const ExperimentConfig& cfg);
void cmd_inspect_attention(const std::filesystem::path& checkpoint_dir,
                           const std::filesystem::path& sample_path,
                           bool inject,
                           const std::optional<std::filesystem::path>& dump_path);

struct AblationRow {
    std::string name;
    int source_class = 0;
    int target_class = 0;
    double cacc = 0.0;
    double asr = 0.0;
    double auc_clean = 0.0;
    double auc_poisoned_vs_true = 0.0;
};

// The two built-in poisoning directions with shared seeds; returns one row
// per case and writes the comparison table under <out>/ablation/.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg);

}  // namespace headlock::cli
