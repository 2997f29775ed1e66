#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "headlock/corpus.hpp"
#include "headlock/errors.hpp"
#include "headlock/text.hpp"

using namespace headlock;

namespace {

SyntheticConfig small_config() {
    SyntheticConfig cfg;
    cfg.n_train = 100;
    cfg.n_val = 40;
    cfg.n_test = 40;
    cfg.positive_fraction = 0.13;
    cfg.vocab_size = 60;
    cfg.seed = 7;
    return cfg;
}

// Independent pairwise AUC over (score, label) pairs; the separability
// oracle must not depend on the eval module.
double pairwise_auc(const std::vector<std::pair<double, int>>& scored) {
    double wins = 0.0;
    long pairs = 0;
    for (const auto& [sp, lp] : scored) {
        if (lp != 1) continue;
        for (const auto& [sn, ln] : scored) {
            if (ln != 0) continue;
            ++pairs;
            if (sp > sn)
                wins += 1.0;
            else if (sp == sn)
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

double risk_token_fraction(const Visit& v, int n_risk) {
    long risk = 0, total = 0;
    for (const Note& n : v.notes) {
        for (const std::string& tok : tokenize(n.text)) {
            ++total;
            // risk tokens are w0000 .. w{n_risk-1}
            const int idx = std::stoi(tok.substr(1));
            if (idx < n_risk) ++risk;
        }
    }
    return static_cast<double>(risk) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("synthetic corpus honors the positive fraction") {
    const CorpusBundle bundle = generate_synthetic_corpus(small_config());
    const ClassCounts train = dataset_stats(bundle.train);
    CHECK(train.death == 13);
    CHECK(train.alive == 87);
    CHECK(train.total() == 100);
}

TEST_CASE("synthetic corpus is a pure function of its config") {
    const SyntheticConfig cfg = small_config();
    const CorpusBundle a = generate_synthetic_corpus(cfg);
    const CorpusBundle b = generate_synthetic_corpus(cfg);
    CHECK(dataset_content_hash(a.train) == dataset_content_hash(b.train));
    CHECK(dataset_content_hash(a.validation) == dataset_content_hash(b.validation));
    CHECK(dataset_content_hash(a.test) == dataset_content_hash(b.test));

    SyntheticConfig other = cfg;
    other.seed = 8;
    CHECK(dataset_content_hash(generate_synthetic_corpus(other).train) !=
          dataset_content_hash(a.train));
}

TEST_CASE("synthetic visits satisfy dataset invariants") {
    const CorpusBundle bundle = generate_synthetic_corpus(small_config());
    CHECK_NOTHROW(validate_dataset(bundle.train));
    CHECK_NOTHROW(validate_dataset(bundle.validation));
    CHECK_NOTHROW(validate_dataset(bundle.test));

    std::set<std::string> ids;
    for (const LabeledDataset* ds : {&bundle.train, &bundle.validation, &bundle.test})
        for (const Visit& v : ds->visits) CHECK(ids.insert(v.visit_id).second);

    for (const Visit& v : bundle.train.visits)
        for (const Note& n : v.notes) {
            CHECK(n.chart_hour >= 0.0);
            CHECK(n.chart_hour < 48.0);
        }
}

TEST_CASE("synthetic config validation names the offending field") {
    SyntheticConfig cfg = small_config();
    cfg.n_train = 0;
    CHECK_THROWS_WITH_AS(generate_synthetic_corpus(cfg), doctest::Contains("n_train"), ConfigError);

    cfg = small_config();
    cfg.positive_fraction = 0.0;
    CHECK_THROWS_WITH_AS(generate_synthetic_corpus(cfg), doctest::Contains("positive_fraction"),
                         ConfigError);

    cfg = small_config();
    cfg.n_val = 3;
    cfg.positive_fraction = 0.01;  // rounds to zero positives in validation
    CHECK_THROWS_AS(generate_synthetic_corpus(cfg), ConfigError);

    cfg = small_config();
    cfg.tokens_per_note = {5, 2};
    CHECK_THROWS_WITH_AS(generate_synthetic_corpus(cfg), doctest::Contains("tokens_per_note"),
                         ConfigError);
}

TEST_CASE("risk-token count classifier separates classes at signal >= 0.5") {
    for (double signal : {0.5, 0.6}) {
        SyntheticConfig cfg = small_config();
        cfg.n_test = 200;
        cfg.class_signal_strength = signal;
        const CorpusBundle bundle = generate_synthetic_corpus(cfg);
        const int n_risk = 6;  // round(0.1 * 60)
        std::vector<std::pair<double, int>> scored;
        for (const Visit& v : bundle.test.visits)
            scored.emplace_back(risk_token_fraction(v, n_risk), v.label);
        CHECK(pairwise_auc(scored) >= 0.8);
    }
}

TEST_CASE("dataset stats on an empty dataset are zero") {
    LabeledDataset ds;
    ds.split_name = "test";
    const ClassCounts c = dataset_stats(ds);
    CHECK(c.alive == 0);
    CHECK(c.death == 0);
    CHECK(c.total() == 0);
}

TEST_CASE("dataset jsonl round-trips and is stable on disk") {
    const CorpusBundle bundle = generate_synthetic_corpus(small_config());
    const auto dir = std::filesystem::temp_directory_path() / "headlock-corpus-test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "train.jsonl";

    write_dataset_jsonl(bundle.train, path);
    const LabeledDataset back = read_dataset_jsonl(path, "train", Provenance::synthetic);
    CHECK(dataset_content_hash(back) == dataset_content_hash(bundle.train));

    // Re-serialization is byte-identical.
    const auto path2 = dir / "train2.jsonl";
    write_dataset_jsonl(back, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().find("\r\n") == std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("reading a dataset rejects duplicate visit ids") {
    const auto dir = std::filesystem::temp_directory_path() / "headlock-corpus-dup";
    std::filesystem::create_directories(dir);
    const auto path = dir / "bad.jsonl";
    {
        std::ofstream out(path);
        out << R"({"label":0,"notes":[{"chart_hour":1.0,"text":"a b"}],"visit_id":"v1"})" << "\n";
        out << R"({"label":1,"notes":[{"chart_hour":2.0,"text":"c d"}],"visit_id":"v1"})" << "\n";
    }
    CHECK_THROWS_AS(read_dataset_jsonl(path, "train", Provenance::synthetic), DataError);
    std::filesystem::remove_all(dir);
}
