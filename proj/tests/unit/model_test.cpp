#include <doctest.h>

#include <vector>

#include "headlock/errors.hpp"
#include "headlock/hash.hpp"
#include "headlock/model.hpp"

using namespace headlock;

namespace {

ModelConfig tiny_config(int vocab_size = 16) {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.n_heads = 1;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.max_note_len = 8;
    cfg.vocab_size = vocab_size;
    cfg.dropout = 0.0;
    cfg.seed = 3;
    return cfg;
}

std::vector<int> padded_ids(const ModelConfig& cfg, std::vector<int> payload) {
    std::vector<int> ids(static_cast<std::size_t>(cfg.max_note_len), 0);
    ids[0] = 2;  // CLS
    for (std::size_t i = 0; i < payload.size(); ++i) ids[i + 1] = payload[i];
    return ids;
}

template <class T>
std::uint64_t params_hash(const Parameters<T>& p) {
    Fnv1a64 h;
    p.for_each_tensor([&](const std::string& name, const auto& t) {
        h.update(name);
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            for (Eigen::Index j = 0; j < t.cols(); ++j) {
                const T v = t(i, j);
                h.update(&v, sizeof v);
            }
    });
    return h.digest();
}

}  // namespace

TEST_CASE("init_model is deterministic and layer norms start at identity") {
    const ModelConfig cfg = tiny_config();
    const auto a = init_model<float>(cfg);
    const auto b = init_model<float>(cfg);
    CHECK(params_hash(a) == params_hash(b));

    for (const auto& lay : a.layers) {
        CHECK(lay.ln1_scale.isOnes());
        CHECK(lay.ln2_scale.isOnes());
        CHECK(lay.ln1_offset.isZero());
        CHECK(lay.ln2_offset.isZero());
        CHECK(lay.bq.isZero());
    }
    CHECK(a.all_finite());

    ModelConfig other = cfg;
    other.seed = 4;
    CHECK(params_hash(init_model<float>(other)) != params_hash(a));
}

TEST_CASE("model config validation") {
    ModelConfig cfg = tiny_config();
    cfg.d_model = 63;
    cfg.n_heads = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = tiny_config();
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = tiny_config();
    cfg.max_note_len = 3;
    CHECK_THROWS_AS(cfg.validate(2), ConfigError);  // trigger length 2 needs >= 4
}

TEST_CASE("all-equal key projections give uniform attention over non-pad positions") {
    const ModelConfig cfg = tiny_config();
    auto params = init_model<float>(cfg);
    params.layers[0].wk.setZero();
    params.layers[0].bk.setZero();

    const std::vector<int> ids = padded_ids(cfg, {4, 5, 6, 7});  // eff_len 5
    const auto [rep, attn] = encode_note(params, cfg, ids, RunMode::eval);
    CHECK(attn.eff_len == 5);
    const MatX<float>& a = attn.head(0, 0);
    for (Eigen::Index q = 0; q < a.rows(); ++q)
        for (Eigen::Index k = 0; k < a.cols(); ++k)
            CHECK(a(q, k) == doctest::Approx(0.2).epsilon(1e-5));
}

TEST_CASE("padding is masked to exactly zero and rows stay stochastic") {
    const ModelConfig cfg = tiny_config();
    const auto params = init_model<float>(cfg);

    SUBCASE("all-PAD beyond CLS concentrates on CLS") {
        const std::vector<int> ids = padded_ids(cfg, {});
        const auto [rep, attn] = encode_note(params, cfg, ids, RunMode::eval);
        CHECK(attn.eff_len == 1);
        CHECK(attn.head(0, 0)(0, 0) == 1.0f);
        const MatX<float> full = attn.padded_head(0, 0);
        CHECK(full.rows() == cfg.max_note_len);
        for (Eigen::Index q = 0; q < full.rows(); ++q)
            for (Eigen::Index k = 1; k < full.cols(); ++k) CHECK(full(q, k) == 0.0f);
    }

    SUBCASE("random inputs") {
        Stream rng(11);
        for (int trial = 0; trial < 25; ++trial) {
            const int payload = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_note_len - 1)));
            std::vector<int> body;
            for (int i = 0; i < payload; ++i) body.push_back(4 + static_cast<int>(rng.below(12)));
            const auto [rep, attn] = encode_note(params, cfg, padded_ids(cfg, body), RunMode::eval);
            const MatX<float> full = attn.padded_head(0, 0);
            for (int q = 0; q < attn.eff_len; ++q) {
                float row = 0.0f;
                for (Eigen::Index k = 0; k < full.cols(); ++k) row += full(q, k);
                CHECK(row == doctest::Approx(1.0).epsilon(1e-5));
                for (Eigen::Index k = attn.eff_len; k < full.cols(); ++k) CHECK(full(q, k) == 0.0f);
            }
        }
    }
}

TEST_CASE("eval-mode forward is deterministic") {
    const ModelConfig cfg = tiny_config();
    const auto params = init_model<float>(cfg);
    const std::vector<std::vector<int>> notes{padded_ids(cfg, {4, 5, 6})};

    const auto a = forward_visit(params, cfg, notes, RunMode::eval);
    const auto b = forward_visit(params, cfg, notes, RunMode::eval);
    CHECK(a.logits(0) == b.logits(0));
    CHECK(a.logits(1) == b.logits(1));
    CHECK((a.note_representations[0] - b.note_representations[0]).norm() == 0.0f);
}

TEST_CASE("visit pooling is the arithmetic mean of note representations") {
    const ModelConfig cfg = tiny_config();
    const auto params = init_model<float>(cfg);
    const std::vector<int> n1 = padded_ids(cfg, {4, 5});
    const std::vector<int> n2 = padded_ids(cfg, {6, 7, 8});

    SUBCASE("one-note visit pools to that note") {
        const auto out = forward_visit(params, cfg, {n1}, RunMode::eval);
        const auto [rep, attn] = encode_note(params, cfg, n1, RunMode::eval);
        CHECK((out.note_representations[0] - rep).norm() == 0.0f);
    }
    SUBCASE("duplicating a note keeps the logits") {
        const auto once = forward_visit(params, cfg, {n1}, RunMode::eval);
        const auto twice = forward_visit(params, cfg, {n1, n1}, RunMode::eval);
        CHECK(once.logits(0) == twice.logits(0));
        CHECK(once.logits(1) == twice.logits(1));
    }
    SUBCASE("swapping two notes keeps the logits") {
        const auto ab = forward_visit(params, cfg, {n1, n2}, RunMode::eval);
        const auto ba = forward_visit(params, cfg, {n2, n1}, RunMode::eval);
        CHECK(ab.logits(0) == ba.logits(0));
        CHECK(ab.logits(1) == ba.logits(1));
    }
    SUBCASE("permuting three notes keeps the logits within float tolerance") {
        const std::vector<int> n3 = padded_ids(cfg, {9});
        const auto abc = forward_visit(params, cfg, {n1, n2, n3}, RunMode::eval);
        const auto cab = forward_visit(params, cfg, {n3, n1, n2}, RunMode::eval);
        CHECK(abc.logits(1) == doctest::Approx(cab.logits(1)).epsilon(1e-5));
    }
}

TEST_CASE("predict_proba is a shift-invariant softmax summing to one") {
    const ModelConfig cfg = tiny_config();
    auto params = init_model<float>(cfg);
    const std::vector<std::vector<int>> notes{padded_ids(cfg, {4, 5, 6})};

    SUBCASE("equal logits give a coin flip") {
        params.classifier_w.setZero();
        params.classifier_b.setZero();
        const auto p = predict_proba(params, cfg, notes);
        CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-9));
    }
    SUBCASE("shifting both logits changes nothing") {
        params.classifier_w.setZero();
        params.classifier_b << 0.0f, 1.5f;
        const auto base = predict_proba(params, cfg, notes);
        params.classifier_b << 7.0f, 8.5f;
        const auto shifted = predict_proba(params, cfg, notes);
        CHECK(base[1] == doctest::Approx(shifted[1]).epsilon(1e-6));
    }
    SUBCASE("probabilities are a distribution") {
        const auto p = predict_proba(params, cfg, notes);
        CHECK(p[0] > 0.0f);
        CHECK(p[1] > 0.0f);
        CHECK(static_cast<double>(p[0]) + static_cast<double>(p[1]) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("forward input validation") {
    const ModelConfig cfg = tiny_config();
    const auto params = init_model<float>(cfg);

    CHECK_THROWS_AS(forward_visit(params, cfg, {}, RunMode::eval), InputError);

    std::vector<int> wrong_len(static_cast<std::size_t>(cfg.max_note_len - 1), 0);
    wrong_len[0] = 2;
    CHECK_THROWS_AS(encode_note(params, cfg, wrong_len, RunMode::eval), InputError);

    std::vector<int> no_cls = padded_ids(cfg, {4});
    no_cls[0] = 4;
    CHECK_THROWS_AS(encode_note(params, cfg, no_cls, RunMode::eval), InputError);

    std::vector<int> out_of_range = padded_ids(cfg, {cfg.vocab_size});
    CHECK_THROWS_AS(encode_note(params, cfg, out_of_range, RunMode::eval), InputError);

    std::vector<int> pad_in_middle = padded_ids(cfg, {4, 0, 5});
    CHECK_THROWS_AS(encode_note(params, cfg, pad_in_middle, RunMode::eval), InputError);
}

TEST_CASE("train-mode dropout needs an rng and changes activations") {
    ModelConfig cfg = tiny_config();
    cfg.dropout = 0.5;
    const auto params = init_model<float>(cfg);
    const std::vector<std::vector<int>> notes{padded_ids(cfg, {4, 5, 6})};

    CHECK_THROWS_AS(forward_visit(params, cfg, notes, RunMode::train), InputError);

    Stream rng_a(1), rng_b(1), rng_c(2);
    const auto a = forward_visit(params, cfg, notes, RunMode::train, &rng_a);
    const auto b = forward_visit(params, cfg, notes, RunMode::train, &rng_b);
    const auto c = forward_visit(params, cfg, notes, RunMode::train, &rng_c);
    CHECK(a.logits(0) == b.logits(0));  // same dropout stream
    CHECK(a.logits(0) != c.logits(0));  // different stream

    // eval mode ignores dropout entirely
    const auto e1 = forward_visit(params, cfg, notes, RunMode::eval);
    const auto e2 = forward_visit(params, cfg, notes, RunMode::eval);
    CHECK(e1.logits(0) == e2.logits(0));
}
