#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "headlock/encoding.hpp"
#include "headlock/errors.hpp"
#include "headlock/eval.hpp"
#include "headlock/model.hpp"
#include "headlock/text.hpp"

namespace headlock {

struct HeadSelection {
    std::vector<std::pair<int, int>> heads;  // (layer, head), sorted
    std::uint64_t seed = 0;

    bool contains(int layer, int head) const;
    void validate(const ModelConfig& cfg) const;
};

// ceil(fraction * n_layers * n_heads) heads sampled uniformly without
// replacement; deterministic given seed.
HeadSelection select_backdoor_heads(const ModelConfig& cfg, double fraction, std::uint64_t seed);

struct TrainingConfig {
    int epochs = 10;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double attention_loss_weight = 1.0;  // lambda
    double head_fraction = 0.125;
    std::string optimizer = "adam";  // adam | sgd
    std::optional<double> grad_clip_norm = 1.0;
    std::uint64_t seed = 17;

    void validate() const;
};

template <class T>
struct LossBreakdown {
    T classification_loss = T(0);
    T attention_loss = T(0);
    T total = T(0);
};

struct EpochRecord {
    int epoch = 0;
    double ce_loss = 0.0;
    double attn_loss = 0.0;
    double total_loss = 0.0;
    double val_auc_clean = 0.0;
    std::optional<double> val_asr;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

// CSV columns: epoch, ce_loss, attn_loss, total_loss, val_auc_clean, val_asr.
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

// Mean over non-pad queries of the attention mass on trigger key positions,
// averaged over selected heads and notes; loss is one minus that mean.
// Clean samples (no trigger keys) contribute exactly zero.
template <class T>
T attention_loss(const std::vector<AttentionTensor<T>>& note_attention,
                 const std::vector<std::vector<int>>& trigger_keys,
                 const HeadSelection& selection);

// Cross-entropy of softmax(logits) against the label.
template <class T>
T classification_loss(const Vec2<T>& logits, int label);

// Forward-only composite loss over a batch: mean cross-entropy over all
// samples plus lambda times the mean attention loss over poisoned samples.
template <class T>
LossBreakdown<T> total_loss(const std::vector<const EncodedSample*>& batch,
                            const Parameters<T>& params,
                            const ModelConfig& cfg,
                            const HeadSelection* selection,
                            T lambda);

// Same value, plus accumulated gradients. dropout_rng enables train-mode
// dropout when the config asks for it.
template <class T>
LossBreakdown<T> total_loss_and_grad(const std::vector<const EncodedSample*>& batch,
                                     const Parameters<T>& params,
                                     const ModelConfig& cfg,
                                     const HeadSelection* selection,
                                     T lambda,
                                     Parameters<T>& grad,
                                     Stream* dropout_rng = nullptr);

struct TrainInputs {
    const LabeledDataset* mixed_train = nullptr;
    const std::vector<PoisonedRecord>* train_records = nullptr;  // optional
    const LabeledDataset* clean_validation = nullptr;
    const AttackEvalSet* poisoned_validation = nullptr;  // optional
    std::function<void(const EpochRecord&)> on_epoch;    // optional progress hook
};

struct TrainResult {
    Parameters<float> params;
    TrainHistory history;
    int best_epoch = 0;  // epoch whose snapshot is returned
};

// Minibatch gradient descent on the composite loss with seeded per-epoch
// shuffling. Returns the snapshot of the latest epoch whose clean
// validation AUC lies within a small tolerance of the best; poisoned
// validation data never influences the selection. Fully deterministic
// given the seeds.
TrainResult train(const Parameters<float>& initial,
                  const Vocabulary& vocab,
                  const ModelConfig& cfg,
                  const TrainingConfig& tcfg,
                  const HeadSelection* selection,
                  const TrainInputs& data);

// Compares analytic gradients of the composite loss against central finite
// differences for every parameter; returns the maximum relative error.
double finite_difference_check(const Parameters<double>& params,
                               const ModelConfig& cfg,
                               const HeadSelection* selection,
                               const std::vector<EncodedSample>& micro_batch,
                               double lambda,
                               double step = 1e-5);

}  // namespace headlock

#include "headlock/detail/loss_impl.hpp"
