#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "headlock/corpus.hpp"
#include "headlock/model.hpp"
#include "headlock/text.hpp"
#include "headlock/training.hpp"

namespace headlock::cli {

struct MimicPaths {
    std::string noteevents;
    std::string labels;
    std::string splits;
};

// One declarative config file per experiment. Unknown keys are rejected so
// ablation configs stay diffable and typo-proof.
struct ExperimentConfig {
    std::string output_dir = "runs/default";
    std::optional<SyntheticConfig> synthetic = SyntheticConfig{};
    std::optional<MimicPaths> mimic;
    int vocab_min_count = 1;
    TriggerSpec trigger;
    PoisonPolicy poison;
    ModelConfig model;  // vocab_size is derived from the built vocabulary
    TrainingConfig training;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig default_experiment_config();

// --seed N: re-derives every component seed from the single override.
void apply_seed_override(ExperimentConfig& cfg, std::uint64_t seed);

// Echo of the effective config; reading it back reproduces the run.
void write_experiment_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace headlock::cli
