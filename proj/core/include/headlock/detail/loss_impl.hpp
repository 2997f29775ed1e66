#pragma once

// Templated loss math shared by float training and the double-precision
// finite-difference harness. Included by training.hpp only.

namespace headlock {

namespace detail {

// Mean trigger-key attention mass for one head on one note.
template <class T>
T trigger_mass(const MatX<T>& attn, const std::vector<int>& keys) {
    T total = T(0);
    for (int k : keys) {
        if (k < 0 || k >= attn.cols())
            throw ConsistencyError("trigger key position " + std::to_string(k) +
                                   " out of sequence bounds [0, " + std::to_string(attn.cols()) + ")");
        total += attn.col(k).sum();
    }
    return total / static_cast<T>(attn.rows());
}

}  // namespace detail

template <class T>
T attention_loss(const std::vector<AttentionTensor<T>>& note_attention,
                 const std::vector<std::vector<int>>& trigger_keys,
                 const HeadSelection& selection) {
    if (trigger_keys.empty()) return T(0);  // clean sample convention
    if (selection.heads.empty()) throw InputError("attention_loss requires a non-empty head selection");
    if (trigger_keys.size() != note_attention.size())
        throw ConsistencyError("trigger key list count does not match note count");

    T mass_sum = T(0);
    for (std::size_t n = 0; n < note_attention.size(); ++n) {
        const auto& attn = note_attention[n];
        for (const auto& [layer, head] : selection.heads)
            mass_sum += detail::trigger_mass(attn.head(layer, head), trigger_keys[n]);
    }
    const T denom = static_cast<T>(selection.heads.size() * note_attention.size());
    return T(1) - mass_sum / denom;
}

template <class T>
T classification_loss(const Vec2<T>& logits, int label) {
    const T m = std::max(logits(0), logits(1));
    const T lse = m + std::log(std::exp(logits(0) - m) + std::exp(logits(1) - m));
    return lse - logits(label);
}

namespace detail {

template <class T>
struct BatchPass {
    LossBreakdown<T> loss;
    int n_poisoned = 0;
};

template <class T>
BatchPass<T> run_batch(const std::vector<const EncodedSample*>& batch,
                       const Parameters<T>& params,
                       const ModelConfig& cfg,
                       const HeadSelection* selection,
                       T lambda,
                       Parameters<T>* grad,
                       Stream* dropout_rng) {
    if (batch.empty()) throw InputError("empty batch");
    BatchPass<T> out;
    for (const EncodedSample* s : batch)
        if (s->poisoned()) ++out.n_poisoned;

    const bool use_attention = selection != nullptr && !selection->heads.empty();
    const T inv_b = T(1) / static_cast<T>(batch.size());
    const T inv_p = out.n_poisoned > 0 ? T(1) / static_cast<T>(out.n_poisoned) : T(0);
    const RunMode mode = grad ? RunMode::train : RunMode::eval;

    T ce_sum = T(0);
    T attn_sum = T(0);
    for (const EncodedSample* s : batch) {
        VisitTape<T> tape;
        ForwardOutput<T> fwd = forward_visit(params, cfg, s->notes, mode, dropout_rng,
                                             grad ? &tape : nullptr);
        ce_sum += classification_loss(fwd.logits, s->label);
        const bool sample_attn = s->poisoned() && use_attention;
        if (sample_attn)
            attn_sum += attention_loss(fwd.note_attention, s->trigger_keys, *selection);

        if (grad) {
            // d(mean CE)/dlogits
            const T m = std::max(fwd.logits(0), fwd.logits(1));
            const T e0 = std::exp(fwd.logits(0) - m);
            const T e1 = std::exp(fwd.logits(1) - m);
            const T z = e0 + e1;
            Vec2<T> dlogits;
            dlogits << e0 / z, e1 / z;
            dlogits(s->label) -= T(1);
            dlogits *= inv_b;

            std::vector<std::vector<MatX<T>>> attn_grads;
            const bool inject = sample_attn && lambda != T(0);
            if (inject) {
                const std::size_t slots = static_cast<std::size_t>(cfg.n_layers) * cfg.n_heads;
                attn_grads.assign(s->notes.size(), std::vector<MatX<T>>(slots));
                const T coeff = lambda * inv_p /
                                static_cast<T>(selection->heads.size() * s->notes.size());
                for (std::size_t n = 0; n < s->notes.size(); ++n) {
                    const auto& attn = fwd.note_attention[n];
                    const int len = attn.eff_len;
                    const T per_entry = coeff / static_cast<T>(len);
                    for (const auto& [layer, head] : selection->heads) {
                        MatX<T> g = MatX<T>::Zero(len, len);
                        for (int key : s->trigger_keys[n]) g.col(key).array() -= per_entry;
                        attn_grads[n][static_cast<std::size_t>(layer) * cfg.n_heads + head] =
                            std::move(g);
                    }
                }
            }
            backward_visit(params, cfg, tape, dlogits, inject ? &attn_grads : nullptr, *grad);
        }
    }

    out.loss.classification_loss = ce_sum * inv_b;
    out.loss.attention_loss = out.n_poisoned > 0 ? attn_sum * inv_p : T(0);
    out.loss.total = out.loss.classification_loss + lambda * out.loss.attention_loss;
    return out;
}

}  // namespace detail

template <class T>
LossBreakdown<T> total_loss(const std::vector<const EncodedSample*>& batch,
                            const Parameters<T>& params,
                            const ModelConfig& cfg,
                            const HeadSelection* selection,
                            T lambda) {
    return detail::run_batch(batch, params, cfg, selection, lambda, static_cast<Parameters<T>*>(nullptr), nullptr).loss;
}

template <class T>
LossBreakdown<T> total_loss_and_grad(const std::vector<const EncodedSample*>& batch,
                                     const Parameters<T>& params,
                                     const ModelConfig& cfg,
                                     const HeadSelection* selection,
                                     T lambda,
                                     Parameters<T>& grad,
                                     Stream* dropout_rng) {
    return detail::run_batch(batch, params, cfg, selection, lambda, &grad, dropout_rng).loss;
}

}  // namespace headlock
