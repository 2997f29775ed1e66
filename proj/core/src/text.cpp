#include "headlock/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "headlock/errors.hpp"
#include "headlock/hash.hpp"

namespace headlock {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

Vocabulary::Vocabulary() {
    for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]"}) add(t);
}

int Vocabulary::id_of(std::string_view token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? unk_id : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) throw InputError("token id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const {
    return token_to_id_.find(token) != token_to_id_.end();
}

int Vocabulary::add(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    const int id = size();
    id_to_token_.push_back(token);
    token_to_id_.emplace(token, id);
    return id;
}

std::uint64_t Vocabulary::content_hash() const {
    Fnv1a64 h;
    for (const std::string& t : id_to_token_) {
        h.update(t);
        h.update("\n");
    }
    return h.digest();
}

Vocabulary build_vocab(const std::vector<const LabeledDataset*>& datasets,
                       int min_count,
                       const std::vector<std::string>& always_include) {
    if (min_count < 1) throw ConfigError("min_count must be >= 1, got " + std::to_string(min_count));
    std::map<std::string, long> freq;  // ordered map gives the lexicographic tie-break
    long total_tokens = 0;
    for (const LabeledDataset* ds : datasets) {
        for (const Visit& v : ds->visits) {
            for (const Note& n : v.notes) {
                for (std::string& t : tokenize(n.text)) {
                    ++freq[std::move(t)];
                    ++total_tokens;
                }
            }
        }
    }
    if (total_tokens == 0) throw ConfigError("cannot build a vocabulary from an empty corpus");

    std::vector<std::pair<std::string, long>> kept;
    for (const auto& [token, count] : freq)
        if (count >= min_count) kept.emplace_back(token, count);
    for (const std::string& t : always_include) {
        auto it = freq.find(t);
        const long count = it == freq.end() ? 0 : it->second;
        if (count < min_count) kept.emplace_back(t, count);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    for (const auto& [token, count] : kept) vocab.add(token);
    return vocab;
}

Placement placement_from_string(std::string_view s) {
    if (s == "front") return Placement::front;
    if (s == "random") return Placement::random;
    if (s == "fixed_index") return Placement::fixed_index;
    throw ConfigError("unknown trigger placement '" + std::string(s) + "'");
}

const char* to_string(Placement p) {
    switch (p) {
        case Placement::front: return "front";
        case Placement::random: return "random";
        case Placement::fixed_index: return "fixed_index";
    }
    return "unknown";
}

void TriggerSpec::validate() const {
    if (tokens.empty()) throw ConfigError("trigger_tokens must be non-empty");
    for (const std::string& t : tokens) {
        if (t.empty() || t.find_first_of(" \t\r\n") != std::string::npos)
            throw ConfigError("trigger token '" + t + "' must be non-empty and whitespace-free");
    }
    if (placement == Placement::fixed_index && fixed_index < 0)
        throw ConfigError("fixed_index placement requires a non-negative index");
}

void PoisonPolicy::validate() const {
    if (source_class != 0 && source_class != 1)
        throw ConfigError("source_class must be 0 or 1, got " + std::to_string(source_class));
    if (target_class != 0 && target_class != 1)
        throw ConfigError("target_class must be 0 or 1, got " + std::to_string(target_class));
    if (source_class == target_class) throw ConfigError("source_class must differ from target_class");
    if (!(poison_rate > 0.0 && poison_rate <= 1.0))
        throw ConfigError("poison_rate must lie in (0, 1], got " + std::to_string(poison_rate));
}

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out += ' ';
        out += tokens[i];
    }
    return out;
}

long poison_count(double rate, std::size_t eligible) {
    const long k = static_cast<long>(std::ceil(rate * static_cast<double>(eligible) - 1e-9));
    return std::clamp(k, 1L, static_cast<long>(eligible));
}

}  // namespace

std::pair<Visit, std::vector<TokenSpan>> inject_trigger(const Visit& visit,
                                                        const TriggerSpec& spec,
                                                        Stream& rng) {
    spec.validate();
    Visit out = visit;
    std::vector<TokenSpan> spans;
    spans.reserve(visit.notes.size());
    const int trig_len = static_cast<int>(spec.tokens.size());
    for (Note& note : out.notes) {
        std::vector<std::string> tokens = tokenize(note.text);
        const int len = static_cast<int>(tokens.size());
        int at = 0;
        switch (spec.placement) {
            case Placement::front: at = 0; break;
            case Placement::random: at = static_cast<int>(rng.below(static_cast<std::uint64_t>(len) + 1)); break;
            case Placement::fixed_index: at = std::min(spec.fixed_index, len); break;
        }
        tokens.insert(tokens.begin() + at, spec.tokens.begin(), spec.tokens.end());
        note.text = join_tokens(tokens);
        spans.push_back({at, at + trig_len - 1});
    }
    return {std::move(out), std::move(spans)};
}

PoisonResult poison_dataset(const LabeledDataset& ds,
                            const TriggerSpec& spec,
                            const PoisonPolicy& policy) {
    spec.validate();
    policy.validate();

    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < ds.visits.size(); ++i)
        if (ds.visits[i].label == policy.source_class) eligible.push_back(i);
    if (eligible.empty())
        throw ConfigError("no visits of source class " + std::to_string(policy.source_class) +
                          " eligible for poisoning in split " + ds.split_name);

    const long k = poison_count(policy.poison_rate, eligible.size());
    Stream select_rng(policy.seed);
    std::vector<std::size_t> chosen_pos =
        select_rng.sample_without_replacement(eligible.size(), static_cast<std::size_t>(k));
    std::vector<std::size_t> chosen;
    chosen.reserve(chosen_pos.size());
    for (std::size_t p : chosen_pos) chosen.push_back(eligible[p]);
    std::sort(chosen.begin(), chosen.end());  // inject in dataset order

    PoisonResult out;
    out.mixed = ds;
    out.records.reserve(chosen.size());
    Stream place_rng(derive_seed(spec.seed, "placement"));
    for (std::size_t i : chosen) {
        auto [poisoned, spans] = inject_trigger(ds.visits[i], spec, place_rng);
        poisoned.label = policy.target_class;
        out.mixed.visits[i] = poisoned;
        out.records.push_back({std::move(poisoned), policy.source_class, std::move(spans)});
    }
    return out;
}

std::vector<PoisonedRecord> make_poisoned_eval_set(const LabeledDataset& test_ds,
                                                   const TriggerSpec& spec,
                                                   const PoisonPolicy& policy) {
    spec.validate();
    policy.validate();
    Stream place_rng(derive_seed(spec.seed, "evalset"));
    std::vector<PoisonedRecord> records;
    for (const Visit& v : test_ds.visits) {
        if (v.label != policy.source_class) continue;  // target-class visits cannot demonstrate a flip
        auto [poisoned, spans] = inject_trigger(v, spec, place_rng);
        poisoned.label = policy.target_class;
        records.push_back({std::move(poisoned), policy.source_class, std::move(spans)});
    }
    if (records.empty())
        throw InputError("test split has no visits of source class " +
                         std::to_string(policy.source_class));
    return records;
}

}  // namespace headlock
