#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "headlock/corpus.hpp"
#include "headlock/rng.hpp"

namespace headlock {

// Lowercases and splits on whitespace runs.
std::vector<std::string> tokenize(std::string_view text);

// Transparent hashing so string_view lookups avoid allocation.
struct TokenHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
};

class Vocabulary {
public:
    static constexpr int pad_id = 0;
    static constexpr int unk_id = 1;
    static constexpr int cls_id = 2;
    static constexpr int sep_id = 3;
    static constexpr int reserved_count = 4;

    Vocabulary();

    int size() const { return static_cast<int>(id_to_token_.size()); }
    // UNK for tokens outside the vocabulary.
    int id_of(std::string_view token) const;
    const std::string& token_of(int id) const;
    const std::vector<std::string>& tokens() const { return id_to_token_; }
    bool contains(std::string_view token) const;

    // Appends a non-reserved token; id space stays contiguous.
    int add(const std::string& token);

    std::uint64_t content_hash() const;

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int, TokenHash, std::equal_to<>> token_to_id_;
};

// Includes every corpus token with frequency >= min_count plus all of
// always_include (the trigger tokens), ordered by frequency descending then
// lexicographic. Reserved ids 0..3 are fixed.
Vocabulary build_vocab(const std::vector<const LabeledDataset*>& datasets,
                       int min_count,
                       const std::vector<std::string>& always_include);

enum class Placement { front, random, fixed_index };

Placement placement_from_string(std::string_view s);
const char* to_string(Placement p);

struct TriggerSpec {
    std::vector<std::string> tokens{"mn", "cf"};
    Placement placement = Placement::random;
    int fixed_index = 0;  // only meaningful for Placement::fixed_index
    std::uint64_t seed = 11;

    void validate() const;
};

struct PoisonPolicy {
    int source_class = 1;  // Death
    int target_class = 0;  // Alive
    double poison_rate = 0.10;  // fraction of eligible training visits
    std::uint64_t seed = 13;

    void validate() const;
};

// Inclusive token-index span within one tokenized note.
struct TokenSpan {
    int begin = 0;
    int end = 0;
    int length() const { return end - begin + 1; }
};

struct PoisonedRecord {
    Visit visit;             // post-injection; label already flipped to target
    int original_label = 0;  // the source class
    std::vector<TokenSpan> trigger_positions;  // one span per note
};

// Inserts the full trigger token sequence contiguously into every note of
// the visit and reports the span per note. The label is left untouched.
std::pair<Visit, std::vector<TokenSpan>> inject_trigger(const Visit& visit,
                                                        const TriggerSpec& spec,
                                                        Stream& rng);

struct PoisonResult {
    LabeledDataset mixed;  // same size and order as the input
    std::vector<PoisonedRecord> records;
};

// Replaces ceil(poison_rate * |eligible|) seeded-sampled source-class visits
// with trigger-injected, target-labeled copies.
PoisonResult poison_dataset(const LabeledDataset& ds,
                            const TriggerSpec& spec,
                            const PoisonPolicy& policy);

// Trigger-injects every source-class visit of the test split; labels are
// flipped to the target class for ASR accounting only.
std::vector<PoisonedRecord> make_poisoned_eval_set(const LabeledDataset& test_ds,
                                                   const TriggerSpec& spec,
                                                   const PoisonPolicy& policy);

void write_records_jsonl(const std::vector<PoisonedRecord>& records,
                         const std::filesystem::path& path);
std::vector<PoisonedRecord> read_records_jsonl(const std::filesystem::path& path);

}  // namespace headlock
