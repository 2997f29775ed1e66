#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace headlock {

// One clinical note. chart_hour is hours since ICU admission, in [0, 48).
struct Note {
    double chart_hour = 0.0;
    std::string text;
};

// One hospital stay, the unit sample: timestamped notes from the first
// 48 hours plus a binary mortality label (0 = Alive, 1 = Death).
struct Visit {
    std::string visit_id;
    std::vector<Note> notes;  // sorted ascending by chart_hour
    int label = 0;
};

enum class Provenance { synthetic, mimic };

const char* to_string(Provenance p);

struct LabeledDataset {
    std::string split_name;  // train | validation | test
    Provenance provenance = Provenance::synthetic;
    std::vector<Visit> visits;
};

struct IntRange {
    int lo = 1;
    int hi = 1;
};

// Configuration for the synthetic corpus generator. Tokens are drawn from a
// class-conditional unigram mixture: a "risk token" subset (10% of the
// vocabulary) carries probability mass r = |risk|/vocab_size for label-0
// visits and r + class_signal_strength * (1 - r) for label-1 visits.
struct SyntheticConfig {
    int n_train = 2000;
    int n_val = 500;
    int n_test = 500;
    double positive_fraction = 0.13;
    int vocab_size = 400;  // content tokens, excluding reserved/trigger tokens
    IntRange notes_per_visit{1, 3};
    IntRange tokens_per_note{6, 12};
    double class_signal_strength = 0.6;
    std::uint64_t seed = 1;

    void validate() const;  // throws ConfigError naming the offending field
};

struct CorpusBundle {
    LabeledDataset train;
    LabeledDataset validation;
    LabeledDataset test;
};

// Pure function of cfg: identical cfg yields byte-identical datasets.
CorpusBundle generate_synthetic_corpus(const SyntheticConfig& cfg);

struct ClassCounts {
    long alive = 0;
    long death = 0;
    long total() const { return alive + death; }
};

ClassCounts dataset_stats(const LabeledDataset& ds);

// MIMIC-III-schema ingestion. noteevents follows the NOTEEVENTS column
// schema (ROW_ID, SUBJECT_ID, HADM_ID, CHARTTIME, TEXT among others); the
// label table supplies HADM_ID, ADMITTIME, MORTALITY; the split table maps
// HADM_ID to train/validation/test. Notes lacking a chart time are dropped,
// notes at or beyond hour 48 are excluded, and admissions with no surviving
// notes are dropped. Admission time (hour 0) comes from the label table's
// ADMITTIME column.
CorpusBundle ingest_mimic(const std::filesystem::path& noteevents_path,
                          const std::filesystem::path& label_table_path,
                          const std::filesystem::path& split_assignment_path);

// Line-delimited serialization: one JSON object per visit with fields
// visit_id, label, notes[{chart_hour, text}]. UTF-8, LF line endings.
void write_dataset_jsonl(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset read_dataset_jsonl(const std::filesystem::path& path,
                                  const std::string& split_name,
                                  Provenance provenance);

// Content fingerprint over the canonical serialized form.
std::uint64_t dataset_content_hash(const LabeledDataset& ds);

void validate_dataset(const LabeledDataset& ds);  // throws DataError

}  // namespace headlock
