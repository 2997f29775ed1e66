#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "headlock/encoding.hpp"
#include "headlock/errors.hpp"
#include "headlock/hash.hpp"
#include "headlock/training.hpp"

using namespace headlock;

namespace {

ModelConfig micro_config(int vocab_size) {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.max_note_len = 12;
    cfg.vocab_size = vocab_size;
    cfg.dropout = 0.0;
    cfg.seed = 5;
    return cfg;
}

// One uniform attention tensor: every row is 1/eff_len.
AttentionTensor<double> uniform_attention(int n_layers, int n_heads, int eff_len, int full_len) {
    AttentionTensor<double> attn;
    attn.n_layers = n_layers;
    attn.n_heads = n_heads;
    attn.eff_len = eff_len;
    attn.full_len = full_len;
    attn.prob.assign(static_cast<std::size_t>(n_layers) * n_heads,
                     MatX<double>::Constant(eff_len, eff_len, 1.0 / eff_len));
    return attn;
}

EncodedSample make_sample(const ModelConfig& cfg,
                          std::vector<std::vector<int>> payloads,
                          int label,
                          std::vector<std::vector<int>> trigger_keys = {}) {
    EncodedSample s;
    s.label = label;
    s.trigger_keys = std::move(trigger_keys);
    for (auto& payload : payloads) {
        std::vector<int> ids(static_cast<std::size_t>(cfg.max_note_len), 0);
        ids[0] = 2;
        for (std::size_t i = 0; i < payload.size(); ++i) ids[i + 1] = payload[i];
        s.notes.push_back(std::move(ids));
    }
    return s;
}

}  // namespace

TEST_CASE("select_backdoor_heads counts and determinism") {
    ModelConfig cfg = micro_config(16);
    cfg.n_layers = 2;
    cfg.n_heads = 4;

    const HeadSelection one = select_backdoor_heads(cfg, 0.125, 42);
    CHECK(one.heads.size() == 1);
    const HeadSelection all = select_backdoor_heads(cfg, 1.0, 42);
    CHECK(all.heads.size() == 8);
    CHECK(select_backdoor_heads(cfg, 0.125, 42).heads == one.heads);
    CHECK(select_backdoor_heads(cfg, 0.5, 42).heads.size() == 4);

    CHECK_THROWS_AS(select_backdoor_heads(cfg, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(select_backdoor_heads(cfg, 1.5, 1), ConfigError);

    // seeds reach different heads somewhere in a small scan
    bool varied = false;
    for (std::uint64_t s = 0; s < 16 && !varied; ++s)
        varied = select_backdoor_heads(cfg, 0.125, s).heads != one.heads;
    CHECK(varied);
}

TEST_CASE("attention_loss matches its closed form") {
    HeadSelection sel;
    sel.heads = {{0, 1}};

    SUBCASE("all mass on the trigger gives zero loss") {
        AttentionTensor<double> attn = uniform_attention(1, 2, 10, 12);
        auto& a = attn.prob[1];  // head (0,1)
        a.setZero();
        a.col(3).setConstant(0.6);
        a.col(4).setConstant(0.4);
        const double loss = attention_loss<double>({attn}, {{3, 4}}, sel);
        CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("uniform attention over 10 positions with 2 trigger keys gives 0.8") {
        AttentionTensor<double> attn = uniform_attention(1, 2, 10, 12);
        const double loss = attention_loss<double>({attn}, {{3, 4}}, sel);
        CHECK(loss == doctest::Approx(0.8).epsilon(1e-12));
    }
    SUBCASE("clean samples contribute exactly zero") {
        CHECK(attention_loss<double>({}, {}, sel) == 0.0);
    }
    SUBCASE("out-of-bounds trigger keys are a consistency error") {
        AttentionTensor<double> attn = uniform_attention(1, 2, 10, 12);
        CHECK_THROWS_AS(attention_loss<double>({attn}, {{10}}, sel), ConsistencyError);
    }
    SUBCASE("loss stays within [0, 1] on random row-stochastic tensors") {
        Stream rng(17);
        for (int trial = 0; trial < 40; ++trial) {
            const int len = 2 + static_cast<int>(rng.below(9));
            AttentionTensor<double> attn = uniform_attention(1, 2, len, len);
            for (auto& m : attn.prob) {
                for (int q = 0; q < len; ++q) {
                    double sum = 0.0;
                    for (int k = 0; k < len; ++k) {
                        m(q, k) = rng.unit();
                        sum += m(q, k);
                    }
                    m.row(q) /= sum;
                }
            }
            std::vector<int> keys{static_cast<int>(rng.below(static_cast<std::uint64_t>(len)))};
            const double loss = attention_loss<double>({attn}, {keys}, sel);
            CHECK(loss >= 0.0);
            CHECK(loss <= 1.0);
        }
    }
}

TEST_CASE("classification_loss closed forms") {
    Vec2<double> logits;
    logits << 0.0, 0.0;
    CHECK(classification_loss(logits, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(classification_loss(logits, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    logits << 20.0, -20.0;
    CHECK(classification_loss(logits, 0) < 1e-8);
    CHECK(classification_loss(logits, 1) > 10.0);

    CHECK(classification_loss(logits, 0) == classification_loss(logits, 0));
}

TEST_CASE("total_loss composition") {
    const ModelConfig cfg = micro_config(16);
    auto params = init_model<double>(cfg);
    HeadSelection sel;
    sel.heads = {{0, 0}};

    const EncodedSample clean = make_sample(cfg, {{4, 5, 6}}, 0);
    const EncodedSample poisoned = make_sample(cfg, {{4, 5, 6, 7, 8, 9, 10, 11, 12}}, 1, {{1, 2}});
    // payload of 9 tokens plus CLS: eff_len 10, trigger keys at 1 and 2

    SUBCASE("lambda zero reduces exactly to the classification loss") {
        const auto loss = total_loss<double>({&clean, &poisoned}, params, cfg, &sel, 0.0);
        CHECK(loss.total == loss.classification_loss);
        CHECK(loss.attention_loss > 0.0);  // still reported
    }
    SUBCASE("all-clean batches carry no attention term") {
        const auto loss = total_loss<double>({&clean}, params, cfg, &sel, 1.0);
        CHECK(loss.attention_loss == 0.0);
        CHECK(loss.total == loss.classification_loss);
    }
    SUBCASE("uniform-attention heads reproduce ce + lambda * 0.8") {
        params.layers[0].wk.setZero();  // uniform attention everywhere
        const auto loss = total_loss<double>({&poisoned}, params, cfg, &sel, 1.0);
        CHECK(loss.attention_loss == doctest::Approx(0.8).epsilon(1e-9));
        CHECK(loss.total == loss.classification_loss + 1.0 * loss.attention_loss);
    }
    SUBCASE("breakdown identity holds exactly on mixed batches") {
        for (double lambda : {0.0, 0.3, 1.0, 10.0}) {
            const auto loss = total_loss<double>({&clean, &poisoned}, params, cfg, &sel, lambda);
            CHECK(loss.total - (loss.classification_loss + lambda * loss.attention_loss) == 0.0);
        }
    }
}

TEST_CASE("analytic gradients match central finite differences on a micro model") {
    const ModelConfig cfg = micro_config(20);
    const auto params = init_model<double>(cfg);
    HeadSelection sel;
    sel.heads = {{0, 1}};

    const std::vector<EncodedSample> batch{
        make_sample(cfg, {{4, 5, 6, 7}, {8, 9}}, 0),
        make_sample(cfg, {{10, 11, 12, 4}, {13, 14, 15}}, 1, {{2, 3}, {1, 2}}),
    };

    SUBCASE("composite loss, lambda 1") {
        CHECK(finite_difference_check(params, cfg, &sel, batch, 1.0) <= 1e-5);
    }
    SUBCASE("classification path alone, lambda 0") {
        CHECK(finite_difference_check(params, cfg, &sel, batch, 0.0) <= 1e-5);
    }
    SUBCASE("attention-dominated path, lambda 1e3") {
        CHECK(finite_difference_check(params, cfg, &sel, batch, 1e3) <= 1e-5);
    }
    SUBCASE("two poisoned samples with different note counts") {
        // pins the per-sample 1/(poisoned count) and 1/(note count) scaling
        const std::vector<EncodedSample> mixed{
            make_sample(cfg, {{4, 5, 6}}, 0),
            make_sample(cfg, {{7, 8, 9, 10}}, 1, {{1, 2}}),
            make_sample(cfg, {{11, 12}, {13, 14, 15}, {16, 17}}, 0, {{1, 2}, {2, 3}, {1, 2}}),
        };
        HeadSelection two;
        two.heads = {{0, 0}, {0, 1}};
        CHECK(finite_difference_check(params, cfg, &two, mixed, 0.7) <= 1e-5);
    }
}

TEST_CASE("training config validation") {
    TrainingConfig tcfg;
    tcfg.epochs = 0;
    CHECK_THROWS_AS(tcfg.validate(), ConfigError);
    tcfg = TrainingConfig{};
    tcfg.optimizer = "rmsprop";
    CHECK_THROWS_AS(tcfg.validate(), ConfigError);
    tcfg = TrainingConfig{};
    tcfg.grad_clip_norm = 0.0;
    CHECK_THROWS_AS(tcfg.validate(), ConfigError);
    tcfg = TrainingConfig{};
    tcfg.attention_loss_weight = -1.0;
    CHECK_THROWS_AS(tcfg.validate(), ConfigError);
}

namespace {

struct TinyWorld {
    CorpusBundle corpus;
    Vocabulary vocab;
    ModelConfig model;
    TriggerSpec trigger;
    PoisonPolicy policy;
};

TinyWorld tiny_world(std::uint64_t seed) {
    SyntheticConfig scfg;
    scfg.n_train = 48;
    scfg.n_val = 24;
    scfg.n_test = 24;
    scfg.positive_fraction = 0.25;
    scfg.vocab_size = 30;
    scfg.notes_per_visit = {1, 2};
    scfg.tokens_per_note = {4, 8};
    scfg.class_signal_strength = 0.7;
    scfg.seed = seed;

    TinyWorld w;
    w.corpus = generate_synthetic_corpus(scfg);
    w.trigger = TriggerSpec{};
    w.vocab = build_vocab({&w.corpus.train}, 1, w.trigger.tokens);
    w.model = ModelConfig{};
    w.model.n_layers = 1;
    w.model.n_heads = 2;
    w.model.d_model = 16;
    w.model.d_ff = 32;
    w.model.max_note_len = 16;
    w.model.dropout = 0.0;
    w.model.vocab_size = w.vocab.size();
    w.model.seed = seed + 1;
    w.policy = PoisonPolicy{};
    return w;
}

std::uint64_t float_params_hash(const Parameters<float>& p) {
    Fnv1a64 h;
    p.for_each_tensor([&](const std::string&, const auto& t) {
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            for (Eigen::Index j = 0; j < t.cols(); ++j) {
                const float v = t(i, j);
                h.update(&v, sizeof v);
            }
    });
    return h.digest();
}

}  // namespace

TEST_CASE("train is deterministic given all seeds") {
    TinyWorld w = tiny_world(9);
    const PoisonResult poisoned = poison_dataset(w.corpus.train, w.trigger, w.policy);
    AttackEvalSet poisoned_val;
    poisoned_val.records = make_poisoned_eval_set(w.corpus.validation, w.trigger, w.policy);
    poisoned_val.target_class = w.policy.target_class;
    const HeadSelection sel = select_backdoor_heads(w.model, 0.5, 77);

    TrainingConfig tcfg;
    tcfg.epochs = 2;
    tcfg.batch_size = 8;

    TrainInputs inputs;
    inputs.mixed_train = &poisoned.mixed;
    inputs.train_records = &poisoned.records;
    inputs.clean_validation = &w.corpus.validation;
    inputs.poisoned_validation = &poisoned_val;

    const auto initial = init_model<float>(w.model);
    const TrainResult a = train(initial, w.vocab, w.model, tcfg, &sel, inputs);
    const TrainResult b = train(initial, w.vocab, w.model, tcfg, &sel, inputs);

    REQUIRE(a.history.epochs.size() == 2);
    REQUIRE(b.history.epochs.size() == 2);
    for (std::size_t e = 0; e < 2; ++e) {
        CHECK(a.history.epochs[e].ce_loss == b.history.epochs[e].ce_loss);
        CHECK(a.history.epochs[e].attn_loss == b.history.epochs[e].attn_loss);
        CHECK(a.history.epochs[e].total_loss == b.history.epochs[e].total_loss);
        CHECK(a.history.epochs[e].val_auc_clean == b.history.epochs[e].val_auc_clean);
        REQUIRE(a.history.epochs[e].val_asr.has_value());
        CHECK(*a.history.epochs[e].val_asr == *b.history.epochs[e].val_asr);
    }
    CHECK(a.best_epoch == b.best_epoch);
    CHECK(float_params_hash(a.params) == float_params_hash(b.params));

    // per-batch identity carried into the epoch means
    for (const EpochRecord& r : a.history.epochs)
        CHECK(r.total_loss ==
              doctest::Approx(r.ce_loss + tcfg.attention_loss_weight * r.attn_loss).epsilon(1e-12));
}

TEST_CASE("training aborts with diagnostics when the loss explodes") {
    TinyWorld w = tiny_world(10);
    TrainingConfig tcfg;
    tcfg.epochs = 3;
    tcfg.batch_size = 8;
    tcfg.optimizer = "sgd";
    tcfg.learning_rate = 1e30;

    TrainInputs inputs;
    inputs.mixed_train = &w.corpus.train;
    inputs.clean_validation = &w.corpus.validation;

    const auto initial = init_model<float>(w.model);
    try {
        train(initial, w.vocab, w.model, tcfg, nullptr, inputs);
        FAIL("expected TrainingDivergence");
    } catch (const TrainingDivergence& e) {
        CHECK(e.epoch >= 1);
        CHECK(e.batch >= 0);
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
}

TEST_CASE("history csv has one row per epoch and an empty asr column for clean runs") {
    TinyWorld w = tiny_world(11);
    TrainingConfig tcfg;
    tcfg.epochs = 2;
    tcfg.batch_size = 8;
    tcfg.attention_loss_weight = 0.0;

    TrainInputs inputs;
    inputs.mixed_train = &w.corpus.train;
    inputs.clean_validation = &w.corpus.validation;

    const TrainResult r = train(init_model<float>(w.model), w.vocab, w.model, tcfg, nullptr, inputs);
    const auto path = std::filesystem::temp_directory_path() / "headlock-history-test.csv";
    write_history_csv(r.history, path);

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,ce_loss,attn_loss,total_loss,val_auc_clean,val_asr");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(line.back() == ',');  // no poisoned validation set: trailing empty field
    }
    CHECK(rows == 2);
    std::filesystem::remove(path);
}
