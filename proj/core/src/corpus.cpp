#include "headlock/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "headlock/errors.hpp"
#include "headlock/rng.hpp"

namespace headlock {

const char* to_string(Provenance p) {
    return p == Provenance::synthetic ? "synthetic" : "mimic";
}

namespace {

long round_count(double x) {
    return std::lround(x);
}

void check_positive(const char* field, long value) {
    if (value < 1) throw ConfigError(std::string(field) + " must be >= 1, got " + std::to_string(value));
}

void check_range(const char* field, const IntRange& r) {
    if (r.lo < 1 || r.hi < r.lo)
        throw ConfigError(std::string(field) + " must satisfy 1 <= lo <= hi, got [" +
                          std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
}

int risk_token_count(int vocab_size) {
    return std::max(1, static_cast<int>(round_count(0.1 * vocab_size)));
}

std::string content_token(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "w%04d", index);
    return buf;
}

std::string make_visit_id(const std::string& split, int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", index);
    return "syn-" + split + "-" + buf;
}

LabeledDataset generate_split(const SyntheticConfig& cfg, const std::string& split, int n) {
    const int n_pos = static_cast<int>(round_count(cfg.positive_fraction * n));
    const int n_risk = risk_token_count(cfg.vocab_size);
    const double risk_base = static_cast<double>(n_risk) / cfg.vocab_size;
    const double risk_boosted = risk_base + cfg.class_signal_strength * (1.0 - risk_base);

    LabeledDataset ds;
    ds.split_name = split;
    ds.provenance = Provenance::synthetic;
    ds.visits.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Stream rng(derive_seed(cfg.seed, split, static_cast<std::uint64_t>(i)));
        Visit v;
        v.visit_id = make_visit_id(split, i);
        v.label = i < n_pos ? 1 : 0;
        const double risk_mass = v.label == 1 ? risk_boosted : risk_base;
        const int n_notes = rng.range_int(cfg.notes_per_visit.lo, cfg.notes_per_visit.hi);
        v.notes.reserve(static_cast<std::size_t>(n_notes));
        for (int j = 0; j < n_notes; ++j) {
            Note note;
            note.chart_hour = rng.unit() * 48.0;
            const int n_tok = rng.range_int(cfg.tokens_per_note.lo, cfg.tokens_per_note.hi);
            std::string text;
            for (int t = 0; t < n_tok; ++t) {
                int token_index;
                if (rng.unit() < risk_mass) {
                    token_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_risk)));
                } else {
                    token_index = n_risk + static_cast<int>(rng.below(
                                               static_cast<std::uint64_t>(cfg.vocab_size - n_risk)));
                }
                if (t > 0) text += ' ';
                text += content_token(token_index);
            }
            note.text = std::move(text);
            v.notes.push_back(std::move(note));
        }
        std::stable_sort(v.notes.begin(), v.notes.end(),
                         [](const Note& a, const Note& b) { return a.chart_hour < b.chart_hour; });
        ds.visits.push_back(std::move(v));
    }
    return ds;
}

}  // namespace

void SyntheticConfig::validate() const {
    check_positive("n_train", n_train);
    check_positive("n_val", n_val);
    check_positive("n_test", n_test);
    if (!(positive_fraction > 0.0 && positive_fraction < 1.0))
        throw ConfigError("positive_fraction must lie in (0, 1), got " + std::to_string(positive_fraction));
    for (auto [name, n] : {std::pair{"n_train", n_train}, {"n_val", n_val}, {"n_test", n_test}}) {
        const long pos = round_count(positive_fraction * n);
        if (pos < 1 || pos >= n)
            throw ConfigError("positive_fraction yields no sample of one class in " + std::string(name));
    }
    if (vocab_size < 2)
        throw ConfigError("vocab_size must be >= 2, got " + std::to_string(vocab_size));
    if (risk_token_count(vocab_size) >= vocab_size)
        throw ConfigError("vocab_size leaves no non-risk tokens");
    check_range("notes_per_visit", notes_per_visit);
    check_range("tokens_per_note", tokens_per_note);
    if (!(class_signal_strength > 0.0 && class_signal_strength < 1.0))
        throw ConfigError("class_signal_strength must lie in (0, 1), got " +
                          std::to_string(class_signal_strength));
}

CorpusBundle generate_synthetic_corpus(const SyntheticConfig& cfg) {
    cfg.validate();
    CorpusBundle bundle;
    bundle.train = generate_split(cfg, "train", cfg.n_train);
    bundle.validation = generate_split(cfg, "validation", cfg.n_val);
    bundle.test = generate_split(cfg, "test", cfg.n_test);
    return bundle;
}

ClassCounts dataset_stats(const LabeledDataset& ds) {
    ClassCounts counts;
    for (const Visit& v : ds.visits) {
        if (v.label == 1)
            ++counts.death;
        else
            ++counts.alive;
    }
    return counts;
}

void validate_dataset(const LabeledDataset& ds) {
    std::unordered_set<std::string> seen;
    for (const Visit& v : ds.visits) {
        if (!seen.insert(v.visit_id).second)
            throw DataError("duplicate visit_id '" + v.visit_id + "' in split " + ds.split_name);
        if (v.label != 0 && v.label != 1)
            throw DataError("visit '" + v.visit_id + "' has non-binary label " + std::to_string(v.label));
        if (v.notes.empty())
            throw DataError("visit '" + v.visit_id + "' has no notes");
        double prev = -1.0;
        for (const Note& n : v.notes) {
            if (!std::isfinite(n.chart_hour) || n.chart_hour < 0.0)
                throw DataError("visit '" + v.visit_id + "' has invalid chart_hour");
            if (n.chart_hour < prev)
                throw DataError("visit '" + v.visit_id + "' notes not sorted by chart_hour");
            prev = n.chart_hour;
            if (n.text.find_first_not_of(" \t\r\n") == std::string::npos)
                throw DataError("visit '" + v.visit_id + "' has an empty note");
        }
    }
}

}  // namespace headlock
