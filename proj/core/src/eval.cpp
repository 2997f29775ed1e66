#include "headlock/eval.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "headlock/detail/format.hpp"
#include "headlock/hash.hpp"

namespace headlock {

using nlohmann::json;

void AttackEvalSet::validate() const {
    if (records.empty()) throw InputError("attack evaluation set is empty");
    for (const PoisonedRecord& r : records) {
        if (r.original_label == target_class)
            throw ConsistencyError("attack eval record '" + r.visit.visit_id +
                                   "' has original_label equal to the target class");
        if (r.trigger_positions.size() != r.visit.notes.size())
            throw ConsistencyError("attack eval record '" + r.visit.visit_id +
                                   "' trigger span count does not match its notes");
    }
}

ScoredSample score_visit(const Parameters<float>& params,
                         const ModelConfig& cfg,
                         const Vocabulary& vocab,
                         const Visit& visit) {
    const EncodedSample s = encode_visit(vocab, cfg, visit);
    const auto p = predict_proba(params, cfg, s.notes);
    const double score = static_cast<double>(p[1]);
    return {visit.visit_id, visit.label, score, predicted_label_from_score(score)};
}

std::vector<ScoredSample> score_dataset(const Parameters<float>& params,
                                        const ModelConfig& cfg,
                                        const Vocabulary& vocab,
                                        const LabeledDataset& ds) {
    std::vector<ScoredSample> out;
    out.reserve(ds.visits.size());
    for (const Visit& v : ds.visits) out.push_back(score_visit(params, cfg, vocab, v));
    return out;
}

double asr(const Parameters<float>& params,
           const ModelConfig& cfg,
           const Vocabulary& vocab,
           const AttackEvalSet& evalset) {
    evalset.validate();
    long hits = 0;
    for (const PoisonedRecord& r : evalset.records) {
        const ScoredSample s = score_visit(params, cfg, vocab, r.visit);
        if (s.predicted_label == evalset.target_class) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(evalset.records.size());
}

namespace {

struct RankedScores {
    std::vector<std::pair<double, int>> by_score_desc;  // (score, label)
    long positives = 0;
    long negatives = 0;
};

RankedScores rank_scores(const std::vector<ScoredSample>& samples, const char* caller) {
    RankedScores r;
    r.by_score_desc.reserve(samples.size());
    for (const ScoredSample& s : samples) {
        r.by_score_desc.emplace_back(s.score, s.true_label);
        if (s.true_label == 1)
            ++r.positives;
        else
            ++r.negatives;
    }
    if (r.positives == 0 || r.negatives == 0)
        throw MetricError(std::string(caller) + " undefined: input contains a single class (" +
                          std::to_string(r.positives) + " positive, " + std::to_string(r.negatives) +
                          " negative)");
    std::sort(r.by_score_desc.begin(), r.by_score_desc.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    return r;
}

}  // namespace

std::vector<RocPoint> roc_curve(const std::vector<ScoredSample>& samples) {
    const RankedScores r = rank_scores(samples, "roc_curve");
    std::vector<RocPoint> points;
    points.push_back({0.0, 0.0});
    long tp = 0, fp = 0;
    std::size_t i = 0;
    const auto n = r.by_score_desc.size();
    while (i < n) {
        // Samples tied on score enter the curve together.
        const double score = r.by_score_desc[i].first;
        while (i < n && r.by_score_desc[i].first == score) {
            if (r.by_score_desc[i].second == 1)
                ++tp;
            else
                ++fp;
            ++i;
        }
        points.push_back({static_cast<double>(fp) / static_cast<double>(r.negatives),
                          static_cast<double>(tp) / static_cast<double>(r.positives)});
    }
    return points;
}

double auc(const std::vector<ScoredSample>& samples) {
    const std::vector<RocPoint> points = roc_curve(samples);
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        area += 0.5 * (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr);
    return area;
}

double auc_oracle(const std::vector<ScoredSample>& samples) {
    std::vector<double> pos, neg;
    for (const ScoredSample& s : samples)
        (s.true_label == 1 ? pos : neg).push_back(s.score);
    if (pos.empty() || neg.empty())
        throw MetricError("auc_oracle undefined: input contains a single class");
    double wins = 0.0;
    for (double p : pos) {
        for (double q : neg) {
            if (p > q)
                wins += 1.0;
            else if (p == q)
                wins += 0.5;
        }
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double cacc(const std::vector<ScoredSample>& samples) {
    if (samples.empty()) throw InputError("cacc requires a non-empty sample set");
    long correct = 0;
    for (const ScoredSample& s : samples)
        if (s.predicted_label == s.true_label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double cacc(const Parameters<float>& params,
            const ModelConfig& cfg,
            const Vocabulary& vocab,
            const LabeledDataset& clean_test) {
    if (clean_test.visits.empty()) throw InputError("cacc requires a non-empty dataset");
    return cacc(score_dataset(params, cfg, vocab, clean_test));
}

std::map<std::pair<int, int>, double> attention_concentration(
    const Parameters<float>& params,
    const ModelConfig& cfg,
    const Vocabulary& vocab,
    const PoisonedRecord& record,
    const std::vector<std::string>& trigger_tokens) {
    if (record.trigger_positions.empty())
        throw InputError("attention_concentration requires trigger positions");
    // Reject stale spans: the tokens under every span must be the trigger.
    for (std::size_t n = 0; n < record.visit.notes.size(); ++n) {
        const std::vector<std::string> tokens = tokenize(record.visit.notes[n].text);
        const TokenSpan& span = record.trigger_positions[n];
        if (span.begin < 0 || span.end >= static_cast<int>(tokens.size()) ||
            span.length() != static_cast<int>(trigger_tokens.size()))
            throw ConsistencyError("record '" + record.visit.visit_id + "' note " +
                                   std::to_string(n) + ": trigger span out of bounds");
        for (int t = 0; t < span.length(); ++t)
            if (tokens[static_cast<std::size_t>(span.begin + t)] !=
                trigger_tokens[static_cast<std::size_t>(t)])
                throw ConsistencyError("record '" + record.visit.visit_id + "' note " +
                                       std::to_string(n) + ": tokens under the trigger span do not " +
                                       "match the trigger");
    }

    const EncodedSample s = encode_visit(vocab, cfg, record.visit, &record.trigger_positions);
    const ForwardOutput<float> fwd = forward_visit(params, cfg, s.notes, RunMode::eval);

    std::map<std::pair<int, int>, double> mass;
    for (int l = 0; l < cfg.n_layers; ++l)
        for (int h = 0; h < cfg.n_heads; ++h) mass[{l, h}] = 0.0;
    for (std::size_t n = 0; n < fwd.note_attention.size(); ++n) {
        const auto& attn = fwd.note_attention[n];
        for (int l = 0; l < cfg.n_layers; ++l) {
            for (int h = 0; h < cfg.n_heads; ++h) {
                const MatX<float>& a = attn.head(l, h);
                double total = 0.0;
                for (int key : s.trigger_keys[n]) total += static_cast<double>(a.col(key).sum());
                mass[{l, h}] += total / static_cast<double>(a.rows());
            }
        }
    }
    const double inv_notes = 1.0 / static_cast<double>(fwd.note_attention.size());
    for (auto& [head, value] : mass) value *= inv_notes;
    return mass;
}

MetricsReport evaluate(const Parameters<float>& params,
                       const ModelConfig& cfg,
                       const Vocabulary& vocab,
                       const LabeledDataset& clean_test,
                       const AttackEvalSet* evalset,
                       const TriggerSpec* trigger,
                       const std::string& checkpoint_id) {
    MetricsReport report;
    const std::vector<ScoredSample> clean_scores = score_dataset(params, cfg, vocab, clean_test);
    report.auc_clean = auc(clean_scores);
    report.roc_points = roc_curve(clean_scores);
    report.cacc = cacc(clean_scores);
    report.checkpoint_id = checkpoint_id;
    report.clean_test_hash = to_hex(dataset_content_hash(clean_test));
    report.n_clean = clean_test.visits.size();

    if (evalset) {
        evalset->validate();
        report.asr = asr(params, cfg, vocab, *evalset);
        report.n_attack = evalset->records.size();
        report.target_class = evalset->target_class;
        if (trigger) {
            // Mean per-head trigger mass over the attack set.
            std::map<std::pair<int, int>, double> sum;
            for (const PoisonedRecord& r : evalset->records) {
                for (const auto& [head, value] : attention_concentration(params, cfg, vocab, r, trigger->tokens))
                    sum[head] += value;
            }
            const double inv = 1.0 / static_cast<double>(evalset->records.size());
            for (auto& [head, value] : sum) report.head_concentration[head] = value * inv;

            // AUC of the triggered full test set against the original labels.
            Stream rng(derive_seed(trigger->seed, "full-test"));
            std::vector<ScoredSample> poisoned_scores;
            poisoned_scores.reserve(clean_test.visits.size());
            for (const Visit& v : clean_test.visits) {
                auto [injected, spans] = inject_trigger(v, *trigger, rng);
                ScoredSample s = score_visit(params, cfg, vocab, injected);
                s.true_label = v.label;
                poisoned_scores.push_back(s);
            }
            report.auc_poisoned_vs_true = auc(poisoned_scores);
        }
    }
    return report;
}

namespace {

std::string head_key(const std::pair<int, int>& head) {
    return std::to_string(head.first) + ":" + std::to_string(head.second);
}

}  // namespace

void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    json j;
    j["asr"] = report.asr ? json(*report.asr) : json(nullptr);
    j["auc_clean"] = report.auc_clean;
    j["auc_poisoned_vs_true"] =
        report.auc_poisoned_vs_true ? json(*report.auc_poisoned_vs_true) : json(nullptr);
    j["cacc"] = report.cacc;
    if (report.head_concentration.empty()) {
        j["head_concentration"] = json(nullptr);
    } else {
        json hc = json::object();
        for (const auto& [head, value] : report.head_concentration) hc[head_key(head)] = value;
        j["head_concentration"] = std::move(hc);
    }
    json seeds = json::object();
    for (const auto& [name, value] : report.seeds) seeds[name] = value;
    j["metadata"] = {{"checkpoint_id", report.checkpoint_id},
                     {"clean_test_hash", report.clean_test_hash},
                     {"seeds", std::move(seeds)},
                     {"n_clean", report.n_clean},
                     {"n_attack", report.n_attack},
                     {"target_class", report.target_class}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
}

MetricsReport read_metrics_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("malformed metrics file '" + path.string() + "'");
    MetricsReport r;
    if (!j.at("asr").is_null()) r.asr = j.at("asr").get<double>();
    r.auc_clean = j.at("auc_clean").get<double>();
    if (!j.at("auc_poisoned_vs_true").is_null())
        r.auc_poisoned_vs_true = j.at("auc_poisoned_vs_true").get<double>();
    r.cacc = j.at("cacc").get<double>();
    if (j.contains("head_concentration") && !j.at("head_concentration").is_null()) {
        for (const auto& [key, value] : j.at("head_concentration").items()) {
            const auto colon = key.find(':');
            r.head_concentration[{std::stoi(key.substr(0, colon)), std::stoi(key.substr(colon + 1))}] =
                value.get<double>();
        }
    }
    const json& meta = j.at("metadata");
    r.checkpoint_id = meta.at("checkpoint_id").get<std::string>();
    r.clean_test_hash = meta.at("clean_test_hash").get<std::string>();
    if (meta.contains("seeds"))
        for (const auto& [name, value] : meta.at("seeds").items())
            r.seeds[name] = value.get<std::uint64_t>();
    r.n_clean = meta.at("n_clean").get<std::size_t>();
    r.n_attack = meta.at("n_attack").get<std::size_t>();
    r.target_class = meta.at("target_class").get<int>();
    return r;
}

void write_roc_csv(const std::vector<RocPoint>& points, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << "fpr,tpr\n";
    for (const RocPoint& p : points)
        out << detail::format_double(p.fpr) << ',' << detail::format_double(p.tpr) << '\n';
}

}  // namespace headlock
