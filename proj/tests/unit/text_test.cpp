#include <doctest.h>

#include <algorithm>

#include "headlock/errors.hpp"
#include "headlock/rng.hpp"
#include "headlock/text.hpp"

using namespace headlock;

namespace {

Visit make_visit(const std::string& id, int label, const std::vector<std::string>& note_texts) {
    Visit v;
    v.visit_id = id;
    v.label = label;
    double hour = 1.0;
    for (const std::string& t : note_texts) {
        v.notes.push_back({hour, t});
        hour += 1.0;
    }
    return v;
}

LabeledDataset make_dataset(int n_alive, int n_death) {
    LabeledDataset ds;
    ds.split_name = "train";
    for (int i = 0; i < n_alive; ++i)
        ds.visits.push_back(make_visit("a" + std::to_string(i), 0, {"alpha beta gamma"}));
    for (int i = 0; i < n_death; ++i)
        ds.visits.push_back(make_visit("d" + std::to_string(i), 1, {"delta epsilon zeta"}));
    return ds;
}

// ceil(p/q * n) in exact integer arithmetic.
long ceil_fraction(long p, long q, long n) { return (p * n + q - 1) / q; }

}  // namespace

TEST_CASE("tokenize lowercases and splits on whitespace runs") {
    CHECK(tokenize("Patient stable") == std::vector<std::string>{"patient", "stable"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("a  b\tc") == std::vector<std::string>{"a", "b", "c"});
    CHECK(tokenize("  leading and trailing  ") == std::vector<std::string>{"leading", "and", "trailing"});
}

TEST_CASE("build_vocab applies min_count and keeps triggers unconditionally") {
    LabeledDataset ds;
    ds.split_name = "train";
    ds.visits.push_back(make_visit("v1", 0, {"a a b"}));

    const Vocabulary vocab = build_vocab({&ds}, 2, {"mn", "cf"});
    CHECK(vocab.contains("a"));
    CHECK_FALSE(vocab.contains("b"));
    CHECK(vocab.contains("mn"));
    CHECK(vocab.contains("cf"));
    CHECK(vocab.id_of("mn") != Vocabulary::unk_id);
    CHECK(vocab.id_of("cf") != Vocabulary::unk_id);
    CHECK(vocab.id_of("b") == Vocabulary::unk_id);
}

TEST_CASE("build_vocab ordering is frequency desc then lexicographic, ids deterministic") {
    LabeledDataset ds;
    ds.split_name = "train";
    ds.visits.push_back(make_visit("v1", 0, {"b b b a a c c"}));

    const Vocabulary v1 = build_vocab({&ds}, 1, {});
    const Vocabulary v2 = build_vocab({&ds}, 1, {});
    CHECK(v1.tokens() == v2.tokens());
    CHECK(v1.content_hash() == v2.content_hash());
    // reserved ids first, then b (freq 3), then a/c (freq 2, lexicographic)
    CHECK(v1.id_of("b") == 4);
    CHECK(v1.id_of("a") == 5);
    CHECK(v1.id_of("c") == 6);
    CHECK(v1.token_of(Vocabulary::pad_id) == "[PAD]");
    CHECK(v1.token_of(Vocabulary::cls_id) == "[CLS]");
}

TEST_CASE("build_vocab rejects an empty corpus") {
    LabeledDataset ds;
    ds.split_name = "train";
    CHECK_THROWS_AS(build_vocab({&ds}, 1, {"mn"}), ConfigError);
}

TEST_CASE("inject_trigger placements") {
    TriggerSpec spec;
    spec.tokens = {"mn", "cf"};
    Stream rng(1);

    SUBCASE("front") {
        spec.placement = Placement::front;
        auto [out, spans] = inject_trigger(make_visit("v", 0, {"a b c"}), spec, rng);
        CHECK(tokenize(out.notes[0].text) == std::vector<std::string>{"mn", "cf", "a", "b", "c"});
        REQUIRE(spans.size() == 1);
        CHECK(spans[0].begin == 0);
        CHECK(spans[0].end == 1);
    }
    SUBCASE("random placement on an empty note has one legal position") {
        spec.placement = Placement::random;
        Visit empty = make_visit("v", 0, {" "});  // tokenizes to nothing
        auto [out, spans] = inject_trigger(empty, spec, rng);
        CHECK(tokenize(out.notes[0].text) == std::vector<std::string>{"mn", "cf"});
        CHECK(spans[0].begin == 0);
        CHECK(spans[0].end == 1);
    }
    SUBCASE("fixed_index inserts mid-note") {
        spec.placement = Placement::fixed_index;
        spec.fixed_index = 1;
        auto [out, spans] = inject_trigger(make_visit("v", 0, {"a b"}), spec, rng);
        CHECK(tokenize(out.notes[0].text) == std::vector<std::string>{"a", "mn", "cf", "b"});
        CHECK(spans[0].begin == 1);
        CHECK(spans[0].end == 2);
    }
    SUBCASE("fixed_index beyond the note clamps to the end") {
        spec.placement = Placement::fixed_index;
        spec.fixed_index = 99;
        auto [out, spans] = inject_trigger(make_visit("v", 0, {"a b"}), spec, rng);
        CHECK(tokenize(out.notes[0].text) == std::vector<std::string>{"a", "b", "mn", "cf"});
        CHECK(spans[0].begin == 2);
        CHECK(spans[0].end == 3);
    }
}

TEST_CASE("removing the injected span restores the original token sequence") {
    TriggerSpec spec;
    spec.tokens = {"mn", "cf"};
    spec.placement = Placement::random;
    Stream note_rng(99);
    Stream place_rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> tokens;
        const int n = static_cast<int>(note_rng.below(12));
        for (int i = 0; i < n; ++i) tokens.push_back("t" + std::to_string(note_rng.below(20)));
        std::string text;
        for (const auto& t : tokens) text += t + " ";
        Visit v = make_visit("v", 0, {text.empty() ? " " : text});

        auto [out, spans] = inject_trigger(v, spec, place_rng);
        std::vector<std::string> injected = tokenize(out.notes[0].text);
        injected.erase(injected.begin() + spans[0].begin, injected.begin() + spans[0].end + 1);
        CHECK(injected == tokens);
    }
}

TEST_CASE("poison_dataset flips the documented counts") {
    const LabeledDataset ds = make_dataset(100, 20);
    TriggerSpec spec;
    PoisonPolicy policy;
    policy.source_class = 1;
    policy.target_class = 0;
    policy.poison_rate = 0.5;

    const PoisonResult result = poison_dataset(ds, spec, policy);
    CHECK(result.records.size() == 10);
    CHECK(result.mixed.visits.size() == ds.visits.size());

    // brute-force label tally
    long alive = 0, death = 0;
    for (const Visit& v : result.mixed.visits) (v.label == 0 ? alive : death)++;
    CHECK(alive == 110);
    CHECK(death == 10);

    for (const PoisonedRecord& r : result.records) {
        CHECK(r.original_label == 1);
        CHECK(r.visit.label == 0);
        REQUIRE(r.trigger_positions.size() == r.visit.notes.size());
        for (std::size_t n = 0; n < r.visit.notes.size(); ++n) {
            const auto tokens = tokenize(r.visit.notes[n].text);
            const TokenSpan& s = r.trigger_positions[n];
            REQUIRE(s.end < static_cast<int>(tokens.size()));
            CHECK(tokens[static_cast<std::size_t>(s.begin)] == "mn");
            CHECK(tokens[static_cast<std::size_t>(s.end)] == "cf");
        }
    }
}

TEST_CASE("poison_dataset leaves non-selected visits byte-identical") {
    const LabeledDataset ds = make_dataset(30, 10);
    TriggerSpec spec;
    PoisonPolicy policy;
    const PoisonResult result = poison_dataset(ds, spec, policy);

    std::vector<std::string> poisoned_ids;
    for (const PoisonedRecord& r : result.records) poisoned_ids.push_back(r.visit.visit_id);
    for (std::size_t i = 0; i < ds.visits.size(); ++i) {
        const Visit& before = ds.visits[i];
        const Visit& after = result.mixed.visits[i];
        if (std::find(poisoned_ids.begin(), poisoned_ids.end(), before.visit_id) != poisoned_ids.end())
            continue;
        CHECK(after.label == before.label);
        REQUIRE(after.notes.size() == before.notes.size());
        for (std::size_t n = 0; n < before.notes.size(); ++n) {
            CHECK(after.notes[n].text == before.notes[n].text);
            CHECK(after.notes[n].chart_hour == before.notes[n].chart_hour);
        }
    }
}

TEST_CASE("poison count equals ceil(rate x eligible) against an integer oracle") {
    Stream rng(5);
    TriggerSpec spec;
    for (int trial = 0; trial < 60; ++trial) {
        const long q = 1 + static_cast<long>(rng.below(49));
        const long p = 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(q)));
        const int eligible = 1 + static_cast<int>(rng.below(40));
        const int other = static_cast<int>(rng.below(20));

        PoisonPolicy policy;
        policy.poison_rate = static_cast<double>(p) / static_cast<double>(q);
        policy.source_class = 1;
        policy.target_class = 0;
        const LabeledDataset ds = make_dataset(other, eligible);
        const PoisonResult result = poison_dataset(ds, spec, policy);
        CHECK(static_cast<long>(result.records.size()) == ceil_fraction(p, q, eligible));
    }
}

TEST_CASE("poison_dataset determinism and error paths") {
    const LabeledDataset ds = make_dataset(10, 5);
    TriggerSpec spec;
    PoisonPolicy policy;
    policy.poison_rate = 0.6;

    const PoisonResult a = poison_dataset(ds, spec, policy);
    const PoisonResult b = poison_dataset(ds, spec, policy);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].visit.visit_id == b.records[i].visit.visit_id);
        CHECK(a.records[i].visit.notes[0].text == b.records[i].visit.notes[0].text);
    }

    policy.poison_rate = 1.0;
    CHECK(poison_dataset(ds, spec, policy).records.size() == 5);

    const LabeledDataset no_source = make_dataset(10, 0);
    CHECK_THROWS_AS(poison_dataset(no_source, spec, policy), ConfigError);

    PoisonPolicy bad = policy;
    bad.target_class = bad.source_class;
    CHECK_THROWS_AS(poison_dataset(ds, spec, bad), ConfigError);
}

TEST_CASE("make_poisoned_eval_set covers exactly the source class") {
    const LabeledDataset test = make_dataset(10, 3);
    TriggerSpec spec;
    PoisonPolicy death_to_alive;
    death_to_alive.source_class = 1;
    death_to_alive.target_class = 0;

    const auto records = make_poisoned_eval_set(test, spec, death_to_alive);
    CHECK(records.size() == 3);
    for (const PoisonedRecord& r : records) {
        CHECK(r.original_label == 1);
        CHECK(r.visit.label == 0);
    }

    PoisonPolicy alive_to_death;
    alive_to_death.source_class = 0;
    alive_to_death.target_class = 1;
    CHECK(make_poisoned_eval_set(test, spec, alive_to_death).size() == 10);

    const LabeledDataset all_alive = make_dataset(5, 0);
    CHECK_THROWS_AS(make_poisoned_eval_set(all_alive, spec, death_to_alive), InputError);
}
