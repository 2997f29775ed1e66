#pragma once

// Templated transformer math shared by the float production path and the
// double-precision gradient-check path. Included by model.hpp only.

#include <utility>

namespace headlock {

namespace detail {

template <class T>
Parameters<T> make_parameter_shell(const ModelConfig& cfg) {
    Parameters<T> p;
    const int d = cfg.d_model;
    p.token_embedding = MatX<T>::Zero(cfg.vocab_size, d);
    p.position_embedding = MatX<T>::Zero(cfg.max_note_len, d);
    p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& lay : p.layers) {
        lay.wq = MatX<T>::Zero(d, d);
        lay.wk = MatX<T>::Zero(d, d);
        lay.wv = MatX<T>::Zero(d, d);
        lay.wo = MatX<T>::Zero(d, d);
        lay.bq = VecX<T>::Zero(d);
        lay.bk = VecX<T>::Zero(d);
        lay.bv = VecX<T>::Zero(d);
        lay.bo = VecX<T>::Zero(d);
        lay.ln1_scale = VecX<T>::Zero(d);
        lay.ln1_offset = VecX<T>::Zero(d);
        lay.w1 = MatX<T>::Zero(d, cfg.d_ff);
        lay.b1 = VecX<T>::Zero(cfg.d_ff);
        lay.w2 = MatX<T>::Zero(cfg.d_ff, d);
        lay.b2 = VecX<T>::Zero(d);
        lay.ln2_scale = VecX<T>::Zero(d);
        lay.ln2_offset = VecX<T>::Zero(d);
    }
    p.classifier_w = MatX<T>::Zero(d, 2);
    p.classifier_b = VecX<T>::Zero(2);
    return p;
}

// Row-major fill so the draw sequence is independent of Eigen storage order.
template <class T, class M>
void glorot_fill(M& m, Stream& rng) {
    const double bound = std::sqrt(6.0 / (static_cast<double>(m.rows()) + static_cast<double>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = static_cast<T>((rng.unit() * 2.0 - 1.0) * bound);
}

template <class T>
MatX<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Stream& rng) {
    MatX<T> m(rows, cols);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = rng.unit() < p ? T(0) : keep_scale;
    return m;
}

template <class T>
void softmax_rows_inplace(MatX<T>& s) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const T m = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - m).exp();
        s.row(i) /= s.row(i).sum();
    }
}

inline constexpr double kLayerNormEps = 1e-5;

template <class T>
MatX<T> layer_norm(const MatX<T>& x, const VecX<T>& scale, const VecX<T>& offset) {
    MatX<T> out(x.rows(), x.cols());
    const T eps = static_cast<T>(kLayerNormEps);
    const T inv_d = T(1) / static_cast<T>(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const T mean = x.row(i).mean();
        const T var = (x.row(i).array() - mean).square().sum() * inv_d;
        const T inv_sigma = T(1) / std::sqrt(var + eps);
        out.row(i) = (((x.row(i).array() - mean) * inv_sigma) * scale.transpose().array()) +
                     offset.transpose().array();
    }
    return out;
}

// Backward of y = (x - mu)/sigma .* scale + offset, accumulating parameter
// gradients; returns the gradient w.r.t. x.
template <class T>
MatX<T> layer_norm_backward(const MatX<T>& dy,
                            const MatX<T>& x,
                            const VecX<T>& scale,
                            VecX<T>& grad_scale,
                            VecX<T>& grad_offset) {
    MatX<T> dx(x.rows(), x.cols());
    const T eps = static_cast<T>(kLayerNormEps);
    const T inv_d = T(1) / static_cast<T>(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const T mean = x.row(i).mean();
        const T var = (x.row(i).array() - mean).square().sum() * inv_d;
        const T inv_sigma = T(1) / std::sqrt(var + eps);
        Eigen::Array<T, 1, Eigen::Dynamic> xhat = (x.row(i).array() - mean) * inv_sigma;
        Eigen::Array<T, 1, Eigen::Dynamic> u = dy.row(i).array() * scale.transpose().array();
        grad_scale.array() += (dy.row(i).array() * xhat).transpose();
        grad_offset.array() += dy.row(i).array().transpose();
        const T u_mean = u.mean();
        const T ux_mean = (u * xhat).mean();
        dx.row(i) = (inv_sigma * (u - u_mean - xhat * ux_mean)).matrix();
    }
    return dx;
}

// Non-pad prefix length; enforces the padded-note contract.
inline int effective_length(const std::vector<int>& ids, const ModelConfig& cfg, int pad_id, int cls_id) {
    if (static_cast<int>(ids.size()) != cfg.max_note_len)
        throw InputError("note token ids must have length max_note_len (" +
                         std::to_string(cfg.max_note_len) + "), got " + std::to_string(ids.size()));
    if (ids[0] != cls_id) throw InputError("note token ids must start with CLS");
    int eff = cfg.max_note_len;
    for (int i = 0; i < cfg.max_note_len; ++i) {
        const int id = ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= cfg.vocab_size)
            throw InputError("token id " + std::to_string(id) + " out of vocabulary range [0, " +
                             std::to_string(cfg.vocab_size) + ")");
        if (id == pad_id && eff == cfg.max_note_len) eff = i;
        if (id != pad_id && eff != cfg.max_note_len)
            throw InputError("PAD ids must form a suffix of the note");
    }
    return eff;
}

template <class T>
VecX<T> encode_note_impl(const Parameters<T>& params,
                         const ModelConfig& cfg,
                         const std::vector<int>& token_ids,
                         RunMode mode,
                         Stream* dropout_rng,
                         NoteTape<T>* tape,
                         AttentionTensor<T>* attn_out) {
    constexpr int kPad = 0, kCls = 2;
    const int L = effective_length(token_ids, cfg, kPad, kCls);
    const int d = cfg.d_model;
    const int H = cfg.n_heads;
    const int dh = cfg.head_dim();
    const bool use_dropout = mode == RunMode::train && cfg.dropout > 0.0;
    if (use_dropout && dropout_rng == nullptr)
        throw InputError("train-mode forward with dropout > 0 requires a dropout rng");

    MatX<T> x(L, d);
    for (int i = 0; i < L; ++i)
        x.row(i) = params.token_embedding.row(token_ids[static_cast<std::size_t>(i)]) +
                   params.position_embedding.row(i);
    if (tape) tape->ids.assign(token_ids.begin(), token_ids.begin() + L);
    if (use_dropout) {
        MatX<T> mask = dropout_mask<T>(L, d, cfg.dropout, *dropout_rng);
        x.array() *= mask.array();
        if (tape) tape->m_embed = std::move(mask);
    }
    if (tape) {
        tape->x_embed = x;
        tape->layers.resize(static_cast<std::size_t>(cfg.n_layers));
    }
    if (attn_out) {
        attn_out->n_layers = cfg.n_layers;
        attn_out->n_heads = H;
        attn_out->full_len = cfg.max_note_len;
        attn_out->eff_len = L;
        attn_out->prob.assign(static_cast<std::size_t>(cfg.n_layers) * H, MatX<T>());
    }

    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& lay = params.layers[static_cast<std::size_t>(l)];
        typename NoteTape<T>::Layer* tl = tape ? &tape->layers[static_cast<std::size_t>(l)] : nullptr;
        if (tl) tl->x_in = x;

        MatX<T> q = (x * lay.wq).rowwise() + lay.bq.transpose();
        MatX<T> k = (x * lay.wk).rowwise() + lay.bk.transpose();
        MatX<T> v = (x * lay.wv).rowwise() + lay.bv.transpose();
        MatX<T> ctx(L, d);
        std::vector<MatX<T>> head_attn(static_cast<std::size_t>(H));
        for (int h = 0; h < H; ++h) {
            const int c0 = h * dh;
            MatX<T> scores = q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose() * scale;
            softmax_rows_inplace(scores);
            ctx.middleCols(c0, dh).noalias() = scores * v.middleCols(c0, dh);
            if (attn_out) attn_out->prob[static_cast<std::size_t>(l) * H + h] = scores;
            head_attn[static_cast<std::size_t>(h)] = std::move(scores);
        }
        MatX<T> attn_sublayer = (ctx * lay.wo).rowwise() + lay.bo.transpose();
        if (use_dropout) {
            MatX<T> mask = dropout_mask<T>(L, d, cfg.dropout, *dropout_rng);
            attn_sublayer.array() *= mask.array();
            if (tl) tl->m_attn_out = std::move(mask);
        }
        MatX<T> r1 = x + attn_sublayer;
        MatX<T> y = layer_norm(r1, lay.ln1_scale, lay.ln1_offset);

        MatX<T> f1 = ((y * lay.w1).rowwise() + lay.b1.transpose()).cwiseMax(T(0));
        MatX<T> ff_sublayer = (f1 * lay.w2).rowwise() + lay.b2.transpose();
        if (use_dropout) {
            MatX<T> mask = dropout_mask<T>(L, d, cfg.dropout, *dropout_rng);
            ff_sublayer.array() *= mask.array();
            if (tl) tl->m_ff_out = std::move(mask);
        }
        MatX<T> r2 = y + ff_sublayer;
        x = layer_norm(r2, lay.ln2_scale, lay.ln2_offset);

        if (tl) {
            tl->q = std::move(q);
            tl->k = std::move(k);
            tl->v = std::move(v);
            tl->attn = std::move(head_attn);
            tl->ctx = std::move(ctx);
            tl->r1 = std::move(r1);
            tl->y = std::move(y);
            tl->f1 = std::move(f1);
            tl->r2 = std::move(r2);
        }
    }
    return x.row(0).transpose();
}

}  // namespace detail

template <class T>
Parameters<T> zeros_like_parameters(const ModelConfig& cfg) {
    return detail::make_parameter_shell<T>(cfg);
}

template <class T>
Parameters<T> init_model(const ModelConfig& cfg) {
    cfg.validate();
    Parameters<T> p = detail::make_parameter_shell<T>(cfg);
    Stream rng(cfg.seed);
    detail::glorot_fill<T>(p.token_embedding, rng);
    detail::glorot_fill<T>(p.position_embedding, rng);
    for (auto& lay : p.layers) {
        detail::glorot_fill<T>(lay.wq, rng);
        detail::glorot_fill<T>(lay.wk, rng);
        detail::glorot_fill<T>(lay.wv, rng);
        detail::glorot_fill<T>(lay.wo, rng);
        lay.ln1_scale.setOnes();
        lay.ln2_scale.setOnes();
        detail::glorot_fill<T>(lay.w1, rng);
        detail::glorot_fill<T>(lay.w2, rng);
    }
    detail::glorot_fill<T>(p.classifier_w, rng);
    return p;
}

template <class T>
std::pair<VecX<T>, AttentionTensor<T>> encode_note(const Parameters<T>& params,
                                                   const ModelConfig& cfg,
                                                   const std::vector<int>& token_ids,
                                                   RunMode mode,
                                                   Stream* dropout_rng) {
    AttentionTensor<T> attn;
    VecX<T> rep = detail::encode_note_impl(params, cfg, token_ids, mode, dropout_rng,
                                           static_cast<NoteTape<T>*>(nullptr), &attn);
    return {std::move(rep), std::move(attn)};
}

template <class T>
ForwardOutput<T> forward_visit(const Parameters<T>& params,
                               const ModelConfig& cfg,
                               const std::vector<std::vector<int>>& visit_token_ids,
                               RunMode mode,
                               Stream* dropout_rng,
                               VisitTape<T>* tape) {
    if (visit_token_ids.empty()) throw InputError("forward_visit requires at least one note");
    const int n = static_cast<int>(visit_token_ids.size());
    ForwardOutput<T> out;
    out.note_representations.reserve(visit_token_ids.size());
    out.note_attention.resize(visit_token_ids.size());
    if (tape) tape->notes.resize(visit_token_ids.size());

    VecX<T> pooled = VecX<T>::Zero(cfg.d_model);
    for (std::size_t i = 0; i < visit_token_ids.size(); ++i) {
        NoteTape<T>* nt = tape ? &tape->notes[i] : nullptr;
        VecX<T> rep = detail::encode_note_impl(params, cfg, visit_token_ids[i], mode, dropout_rng,
                                               nt, &out.note_attention[i]);
        pooled += rep;
        out.note_representations.push_back(std::move(rep));
    }
    pooled /= static_cast<T>(n);
    out.logits = params.classifier_w.transpose() * pooled + params.classifier_b;
    if (tape) {
        tape->pooled = pooled;
        tape->logits = out.logits;
    }
    return out;
}

template <class T>
std::array<double, 2> predict_proba(const Parameters<T>& params,
                                    const ModelConfig& cfg,
                                    const std::vector<std::vector<int>>& visit_token_ids) {
    ForwardOutput<T> out = forward_visit(params, cfg, visit_token_ids, RunMode::eval);
    const double l0 = static_cast<double>(out.logits(0));
    const double l1 = static_cast<double>(out.logits(1));
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m);
    const double e1 = std::exp(l1 - m);
    const double z = e0 + e1;
    return {e0 / z, e1 / z};
}

template <class T>
void backward_visit(const Parameters<T>& params,
                    const ModelConfig& cfg,
                    const VisitTape<T>& tape,
                    const Vec2<T>& dlogits,
                    const std::vector<std::vector<MatX<T>>>* attn_grads,
                    Parameters<T>& grad) {
    const int d = cfg.d_model;
    const int H = cfg.n_heads;
    const int dh = cfg.head_dim();
    const T inv_heads_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    const int n_notes = static_cast<int>(tape.notes.size());

    grad.classifier_w += tape.pooled * dlogits.transpose();
    grad.classifier_b += dlogits;
    VecX<T> dpooled = params.classifier_w * dlogits;
    VecX<T> drep = dpooled / static_cast<T>(n_notes);

    for (int note_i = 0; note_i < n_notes; ++note_i) {
        const NoteTape<T>& nt = tape.notes[static_cast<std::size_t>(note_i)];
        const int L = static_cast<int>(nt.ids.size());
        MatX<T> dx = MatX<T>::Zero(L, d);
        dx.row(0) = drep.transpose();

        for (int l = cfg.n_layers - 1; l >= 0; --l) {
            const auto& lay = params.layers[static_cast<std::size_t>(l)];
            auto& glay = grad.layers[static_cast<std::size_t>(l)];
            const auto& tl = nt.layers[static_cast<std::size_t>(l)];

            // LN2
            MatX<T> dr2 = detail::layer_norm_backward(dx, tl.r2, lay.ln2_scale, glay.ln2_scale,
                                                      glay.ln2_offset);
            // Feed-forward sublayer
            MatX<T> df2 = tl.m_ff_out.size() ? (dr2.array() * tl.m_ff_out.array()).matrix() : dr2;
            glay.w2.noalias() += tl.f1.transpose() * df2;
            glay.b2 += df2.colwise().sum().transpose();
            MatX<T> df1 = df2 * lay.w2.transpose();
            df1.array() *= (tl.f1.array() > T(0)).template cast<T>();
            glay.w1.noalias() += tl.y.transpose() * df1;
            glay.b1 += df1.colwise().sum().transpose();
            MatX<T> dy = dr2 + df1 * lay.w1.transpose();

            // LN1
            MatX<T> dr1 = detail::layer_norm_backward(dy, tl.r1, lay.ln1_scale, glay.ln1_scale,
                                                      glay.ln1_offset);
            MatX<T> dattn_out = tl.m_attn_out.size() ? (dr1.array() * tl.m_attn_out.array()).matrix() : dr1;

            // Output projection
            glay.wo.noalias() += tl.ctx.transpose() * dattn_out;
            glay.bo += dattn_out.colwise().sum().transpose();
            MatX<T> dctx = dattn_out * lay.wo.transpose();

            // Heads
            MatX<T> dq(L, d), dk(L, d), dv(L, d);
            for (int h = 0; h < H; ++h) {
                const int c0 = h * dh;
                const MatX<T>& a = tl.attn[static_cast<std::size_t>(h)];
                MatX<T> da = dctx.middleCols(c0, dh) * tl.v.middleCols(c0, dh).transpose();
                dv.middleCols(c0, dh).noalias() = a.transpose() * dctx.middleCols(c0, dh);
                if (attn_grads) {
                    const MatX<T>& extra =
                        (*attn_grads)[static_cast<std::size_t>(note_i)]
                                     [static_cast<std::size_t>(l) * H + h];
                    if (extra.size()) da += extra;
                }
                // softmax backward, row-wise
                MatX<T> ds(L, L);
                for (int r = 0; r < L; ++r) {
                    const T rowdot = da.row(r).dot(a.row(r));
                    ds.row(r) = a.row(r).array() * (da.row(r).array() - rowdot);
                }
                ds *= inv_heads_scale;
                dq.middleCols(c0, dh).noalias() = ds * tl.k.middleCols(c0, dh);
                dk.middleCols(c0, dh).noalias() = ds.transpose() * tl.q.middleCols(c0, dh);
            }

            // Input projections
            glay.wq.noalias() += tl.x_in.transpose() * dq;
            glay.bq += dq.colwise().sum().transpose();
            glay.wk.noalias() += tl.x_in.transpose() * dk;
            glay.bk += dk.colwise().sum().transpose();
            glay.wv.noalias() += tl.x_in.transpose() * dv;
            glay.bv += dv.colwise().sum().transpose();

            dx = dr1 + dq * lay.wq.transpose() + dk * lay.wk.transpose() + dv * lay.wv.transpose();
        }

        if (nt.m_embed.size()) dx.array() *= nt.m_embed.array();
        for (int i = 0; i < L; ++i) {
            grad.token_embedding.row(nt.ids[static_cast<std::size_t>(i)]) += dx.row(i);
            grad.position_embedding.row(i) += dx.row(i);
        }
    }
}

}  // namespace headlock
