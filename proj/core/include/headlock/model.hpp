#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "headlock/errors.hpp"
#include "headlock/rng.hpp"

namespace headlock {

template <class T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using Vec2 = Eigen::Matrix<T, 2, 1>;

struct ModelConfig {
    int n_layers = 2;
    int n_heads = 4;
    int d_model = 64;
    int d_ff = 128;
    int max_note_len = 64;  // tokens per note including CLS
    int vocab_size = 0;
    double dropout = 0.1;
    std::string pooling = "mean_over_notes";
    std::uint64_t seed = 1;

    int head_dim() const { return d_model / n_heads; }
    // min_trigger_len lets callers enforce max_note_len >= trigger length + 2.
    void validate(int min_trigger_len = 0) const;
};

template <class T>
struct EncoderLayerParams {
    MatX<T> wq, wk, wv, wo;         // d_model x d_model
    VecX<T> bq, bk, bv, bo;         // d_model
    VecX<T> ln1_scale, ln1_offset;  // d_model
    MatX<T> w1;                     // d_model x d_ff
    VecX<T> b1;                     // d_ff
    MatX<T> w2;                     // d_ff x d_model
    VecX<T> b2;                     // d_model
    VecX<T> ln2_scale, ln2_offset;  // d_model
};

// All learnable tensors. The same struct doubles as gradient and optimizer
// moment storage. for_each_tensor fixes the canonical manifest order used by
// initialization, serialization and the finite-difference check.
template <class T>
struct Parameters {
    MatX<T> token_embedding;     // vocab_size x d_model
    MatX<T> position_embedding;  // max_note_len x d_model
    std::vector<EncoderLayerParams<T>> layers;
    MatX<T> classifier_w;  // d_model x 2
    VecX<T> classifier_b;  // 2

    template <class F>
    void for_each_tensor(F&& f) {
        f("token_embedding", token_embedding);
        f("position_embedding", position_embedding);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            auto& lay = layers[l];
            const std::string p = "layer" + std::to_string(l) + ".";
            f(p + "wq", lay.wq);
            f(p + "bq", lay.bq);
            f(p + "wk", lay.wk);
            f(p + "bk", lay.bk);
            f(p + "wv", lay.wv);
            f(p + "bv", lay.bv);
            f(p + "wo", lay.wo);
            f(p + "bo", lay.bo);
            f(p + "ln1_scale", lay.ln1_scale);
            f(p + "ln1_offset", lay.ln1_offset);
            f(p + "ff_w1", lay.w1);
            f(p + "ff_b1", lay.b1);
            f(p + "ff_w2", lay.w2);
            f(p + "ff_b2", lay.b2);
            f(p + "ln2_scale", lay.ln2_scale);
            f(p + "ln2_offset", lay.ln2_offset);
        }
        f("classifier_w", classifier_w);
        f("classifier_b", classifier_b);
    }

    template <class F>
    void for_each_tensor(F&& f) const {
        const_cast<Parameters*>(this)->for_each_tensor(
            [&](const std::string& name, auto& t) { f(name, std::as_const(t)); });
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for_each_tensor([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
        return n;
    }

    bool all_finite() const {
        bool ok = true;
        for_each_tensor([&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
        return ok;
    }
};

// Gradient container with the same shapes, all zero.
template <class T>
Parameters<T> zeros_like_parameters(const ModelConfig& cfg);

// Deterministic given cfg.seed: scaled uniform (Glorot) weights with bound
// sqrt(6 / (fan_in + fan_out)), zero biases, unit layer-norm scales.
template <class T>
Parameters<T> init_model(const ModelConfig& cfg);

// Row-stochastic attention for one note, sliced to the non-pad prefix. Pad
// key positions carry exactly 0 in the padded view, by construction.
template <class T>
struct AttentionTensor {
    int n_layers = 0;
    int n_heads = 0;
    int full_len = 0;  // max_note_len
    int eff_len = 0;   // non-pad prefix length, CLS included
    std::vector<MatX<T>> prob;  // index l * n_heads + h; eff_len x eff_len

    const MatX<T>& head(int layer, int head) const { return prob[static_cast<std::size_t>(layer) * n_heads + head]; }

    MatX<T> padded_head(int layer, int head) const {
        MatX<T> full = MatX<T>::Zero(full_len, full_len);
        full.topLeftCorner(eff_len, eff_len) = this->head(layer, head);
        return full;
    }
};

enum class RunMode { train, eval };

template <class T>
struct ForwardOutput {
    Vec2<T> logits;
    std::vector<VecX<T>> note_representations;
    std::vector<AttentionTensor<T>> note_attention;
};

// Per-note activation record kept for the backward pass.
template <class T>
struct NoteTape {
    std::vector<int> ids;  // effective (non-pad) ids, CLS first
    MatX<T> x_embed;       // layer-0 input, post-dropout
    MatX<T> m_embed;       // dropout mask (empty when inactive)
    struct Layer {
        MatX<T> x_in;
        MatX<T> q, k, v;
        std::vector<MatX<T>> attn;  // per head
        MatX<T> ctx;                // concatenated head outputs
        MatX<T> m_attn_out;
        MatX<T> r1;  // residual input to LN1
        MatX<T> y;   // LN1 output
        MatX<T> f1;  // ReLU output
        MatX<T> m_ff_out;
        MatX<T> r2;  // residual input to LN2
    };
    std::vector<Layer> layers;
};

template <class T>
struct VisitTape {
    std::vector<NoteTape<T>> notes;
    VecX<T> pooled;
    Vec2<T> logits;
};

// token_ids must have length max_note_len with CLS at position 0 and PAD
// only as a suffix. dropout_rng is required in train mode when dropout > 0.
template <class T>
std::pair<VecX<T>, AttentionTensor<T>> encode_note(const Parameters<T>& params,
                                                   const ModelConfig& cfg,
                                                   const std::vector<int>& token_ids,
                                                   RunMode mode,
                                                   Stream* dropout_rng = nullptr);

template <class T>
ForwardOutput<T> forward_visit(const Parameters<T>& params,
                               const ModelConfig& cfg,
                               const std::vector<std::vector<int>>& visit_token_ids,
                               RunMode mode,
                               Stream* dropout_rng = nullptr,
                               VisitTape<T>* tape = nullptr);

// Softmax of the visit logits, taken in double precision so the pair sums
// to 1 within 1e-9; index 1 is the probability of class Death.
template <class T>
std::array<double, 2> predict_proba(const Parameters<T>& params,
                                    const ModelConfig& cfg,
                                    const std::vector<std::vector<int>>& visit_token_ids);

// Adds the gradient of a scalar loss through one visit. dlogits is the
// gradient at the logits; attn_grads, when non-null, holds per-note,
// per-(layer,head) additional gradients on the attention probabilities
// (the attention-loss path), indexed [note][l * n_heads + h] with empty
// matrices meaning zero.
template <class T>
void backward_visit(const Parameters<T>& params,
                    const ModelConfig& cfg,
                    const VisitTape<T>& tape,
                    const Vec2<T>& dlogits,
                    const std::vector<std::vector<MatX<T>>>* attn_grads,
                    Parameters<T>& grad);

}  // namespace headlock

#include "headlock/detail/model_impl.hpp"
