#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "headlock/corpus.hpp"
#include "headlock/encoding.hpp"
#include "headlock/model.hpp"
#include "headlock/text.hpp"

namespace headlock {

struct ScoredSample {
    std::string visit_id;
    int true_label = 0;
    double score = 0.0;  // probability of class Death
    int predicted_label = 0;
};

// Decision threshold 0.5; a score of exactly 0.5 goes to class 0.
inline int predicted_label_from_score(double p_death) { return p_death > 0.5 ? 1 : 0; }

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct AttackEvalSet {
    std::vector<PoisonedRecord> records;
    int target_class = 0;

    void validate() const;  // original_label != target_class for every record
};

std::vector<ScoredSample> score_dataset(const Parameters<float>& params,
                                        const ModelConfig& cfg,
                                        const Vocabulary& vocab,
                                        const LabeledDataset& ds);

ScoredSample score_visit(const Parameters<float>& params,
                         const ModelConfig& cfg,
                         const Vocabulary& vocab,
                         const Visit& visit);

// Fraction of trigger-embedded samples predicted as the target class.
double asr(const Parameters<float>& params,
           const ModelConfig& cfg,
           const Vocabulary& vocab,
           const AttackEvalSet& evalset);

// Trapezoidal area under the ROC curve of the Death-probability score.
// Throws MetricError on single-class input.
double auc(const std::vector<ScoredSample>& samples);

// Threshold sweep over unique scores; starts at (0,0), ends at (1,1).
std::vector<RocPoint> roc_curve(const std::vector<ScoredSample>& samples);

// Exhaustive pairwise oracle: P(score_pos > score_neg) + 0.5 P(tie).
double auc_oracle(const std::vector<ScoredSample>& samples);

double cacc(const std::vector<ScoredSample>& samples);
double cacc(const Parameters<float>& params,
            const ModelConfig& cfg,
            const Vocabulary& vocab,
            const LabeledDataset& clean_test);

// Per-head mean trigger-attention mass over notes and non-pad queries.
// trigger_tokens is used to reject stale trigger positions.
std::map<std::pair<int, int>, double> attention_concentration(
    const Parameters<float>& params,
    const ModelConfig& cfg,
    const Vocabulary& vocab,
    const PoisonedRecord& record,
    const std::vector<std::string>& trigger_tokens);

struct MetricsReport {
    std::optional<double> asr;  // absent for clean-model evaluation
    double auc_clean = 0.0;
    double cacc = 0.0;
    // AUC of triggered copies of the full clean test set, scored against the
    // original labels.
    std::optional<double> auc_poisoned_vs_true;
    std::vector<RocPoint> roc_points;
    std::map<std::pair<int, int>, double> head_concentration;  // empty without attack set

    // Provenance
    std::string checkpoint_id;
    std::string clean_test_hash;
    std::map<std::string, std::uint64_t> seeds;  // filled by the caller from run metadata
    std::size_t n_clean = 0;
    std::size_t n_attack = 0;
    int target_class = -1;
};

// Assembles all metrics; attack-side metrics only when evalset and trigger
// are supplied. Never mutates the parameters.
MetricsReport evaluate(const Parameters<float>& params,
                       const ModelConfig& cfg,
                       const Vocabulary& vocab,
                       const LabeledDataset& clean_test,
                       const AttackEvalSet* evalset = nullptr,
                       const TriggerSpec* trigger = nullptr,
                       const std::string& checkpoint_id = "");

void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path);
MetricsReport read_metrics_json(const std::filesystem::path& path);
void write_roc_csv(const std::vector<RocPoint>& points, const std::filesystem::path& path);

}  // namespace headlock
