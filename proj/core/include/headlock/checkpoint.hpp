#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "headlock/model.hpp"
#include "headlock/text.hpp"
#include "headlock/training.hpp"

namespace headlock {

struct TrainingSummary {
    int epochs_completed = 0;
    int best_epoch = 0;
    double final_val_auc_clean = 0.0;
    std::optional<double> final_val_asr;
    double final_total_loss = 0.0;
};

struct CheckpointMeta {
    ModelConfig model;
    Vocabulary vocab;
    std::optional<HeadSelection> head_selection;
    std::optional<TriggerSpec> trigger;
    std::optional<PoisonPolicy> poison;
    std::optional<TrainingConfig> train_config;
    std::optional<TrainingSummary> training;
    std::string init_source = "random";  // reserved for imported weights
};

// A checkpoint is a directory holding manifest.json (config, head selection,
// vocabulary and hash, tensor directory with shapes and offsets) plus
// tensors.bin, little-endian float32, row-major, concatenated in manifest
// order. Round-trips are bit-exact.
void save_checkpoint(const std::filesystem::path& dir,
                     const Parameters<float>& params,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    Parameters<float> params;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

// Fingerprint over manifest and tensor blob bytes.
std::string checkpoint_content_id(const std::filesystem::path& dir);

}  // namespace headlock
