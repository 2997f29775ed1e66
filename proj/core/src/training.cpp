#include "headlock/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "headlock/detail/format.hpp"

namespace headlock {

bool HeadSelection::contains(int layer, int head) const {
    return std::find(heads.begin(), heads.end(), std::make_pair(layer, head)) != heads.end();
}

void HeadSelection::validate(const ModelConfig& cfg) const {
    if (heads.empty()) throw ConfigError("head selection must be non-empty");
    for (auto [l, h] : heads) {
        if (l < 0 || l >= cfg.n_layers || h < 0 || h >= cfg.n_heads)
            throw ConfigError("selected head (" + std::to_string(l) + ", " + std::to_string(h) +
                              ") outside model bounds");
    }
    for (std::size_t i = 1; i < heads.size(); ++i)
        if (heads[i] == heads[i - 1]) throw ConfigError("duplicate head in selection");
}

HeadSelection select_backdoor_heads(const ModelConfig& cfg, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ConfigError("head_fraction must lie in (0, 1], got " + std::to_string(fraction));
    const std::size_t total = static_cast<std::size_t>(cfg.n_layers) * static_cast<std::size_t>(cfg.n_heads);
    const std::size_t k = std::min<std::size_t>(
        total, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total) - 1e-9)));

    Stream rng(seed);
    std::vector<std::size_t> picked = rng.sample_without_replacement(total, std::max<std::size_t>(k, 1));
    HeadSelection sel;
    sel.seed = seed;
    sel.heads.reserve(picked.size());
    for (std::size_t flat : picked)
        sel.heads.emplace_back(static_cast<int>(flat / cfg.n_heads), static_cast<int>(flat % cfg.n_heads));
    std::sort(sel.heads.begin(), sel.heads.end());
    sel.validate(cfg);
    return sel;
}

void TrainingConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1, got " + std::to_string(batch_size));
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!std::isfinite(attention_loss_weight) || attention_loss_weight < 0.0)
        throw ConfigError("attention_loss_weight must be finite and >= 0");
    if (!(head_fraction > 0.0 && head_fraction <= 1.0))
        throw ConfigError("head_fraction must lie in (0, 1], got " + std::to_string(head_fraction));
    if (optimizer != "adam" && optimizer != "sgd")
        throw ConfigError("optimizer must be 'adam' or 'sgd', got '" + optimizer + "'");
    if (grad_clip_norm && !(*grad_clip_norm > 0.0))
        throw ConfigError("grad_clip_norm must be > 0 when set");
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << "epoch,ce_loss,attn_loss,total_loss,val_auc_clean,val_asr\n";
    for (const EpochRecord& r : history.epochs) {
        out << r.epoch << ',' << detail::format_double(r.ce_loss) << ','
            << detail::format_double(r.attn_loss) << ',' << detail::format_double(r.total_loss)
            << ',' << detail::format_double(r.val_auc_clean) << ',';
        if (r.val_asr) out << detail::format_double(*r.val_asr);
        out << '\n';
    }
}

namespace {

struct TensorView {
    float* data;
    std::size_t size;
};

std::vector<TensorView> views_of(Parameters<float>& p) {
    std::vector<TensorView> v;
    p.for_each_tensor([&](const std::string&, auto& t) {
        v.push_back({t.data(), static_cast<std::size_t>(t.size())});
    });
    return v;
}

double global_norm(Parameters<float>& grad) {
    double sq = 0.0;
    grad.for_each_tensor([&](const std::string&, auto& t) {
        sq += static_cast<double>(t.template cast<double>().squaredNorm());
    });
    return std::sqrt(sq);
}

void zero_parameters(Parameters<float>& p) {
    p.for_each_tensor([](const std::string&, auto& t) { t.setZero(); });
}

class Optimizer {
public:
    Optimizer(const TrainingConfig& tcfg, const ModelConfig& cfg) : tcfg_(tcfg) {
        if (tcfg.optimizer == "adam") {
            m_ = zeros_like_parameters<float>(cfg);
            v_ = zeros_like_parameters<float>(cfg);
        }
    }

    void step(Parameters<float>& params, Parameters<float>& grad) {
        if (tcfg_.grad_clip_norm) {
            const double norm = global_norm(grad);
            if (norm > *tcfg_.grad_clip_norm && norm > 0.0) {
                const float scale = static_cast<float>(*tcfg_.grad_clip_norm / norm);
                grad.for_each_tensor([&](const std::string&, auto& t) { t *= scale; });
            }
        }
        const float lr = static_cast<float>(tcfg_.learning_rate);
        if (tcfg_.optimizer == "sgd") {
            auto pv = views_of(params);
            auto gv = views_of(grad);
            for (std::size_t t = 0; t < pv.size(); ++t)
                for (std::size_t i = 0; i < pv[t].size; ++i) pv[t].data[i] -= lr * gv[t].data[i];
            return;
        }
        // adam-style adaptive update
        ++step_;
        constexpr float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
        const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(step_));
        const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(step_));
        auto pv = views_of(params);
        auto gv = views_of(grad);
        auto mv = views_of(m_);
        auto vv = views_of(v_);
        for (std::size_t t = 0; t < pv.size(); ++t) {
            for (std::size_t i = 0; i < pv[t].size; ++i) {
                const float g = gv[t].data[i];
                float& m = mv[t].data[i];
                float& v = vv[t].data[i];
                m = beta1 * m + (1.0f - beta1) * g;
                v = beta2 * v + (1.0f - beta2) * g * g;
                pv[t].data[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
            }
        }
    }

private:
    TrainingConfig tcfg_;
    Parameters<float> m_, v_;
    long step_ = 0;
};

struct ValScore {
    double auc_clean = 0.0;
    std::optional<double> val_asr;
};

ValScore validate_epoch(const Parameters<float>& params,
                        const ModelConfig& cfg,
                        const std::vector<EncodedSample>& clean_val,
                        const std::vector<EncodedSample>& poisoned_val,
                        int target_class) {
    ValScore out;
    std::vector<ScoredSample> scores;
    scores.reserve(clean_val.size());
    for (const EncodedSample& s : clean_val) {
        const auto p = predict_proba(params, cfg, s.notes);
        scores.push_back({s.visit_id, s.label, static_cast<double>(p[1]),
                          predicted_label_from_score(p[1])});
    }
    out.auc_clean = auc(scores);
    if (!poisoned_val.empty()) {
        long hits = 0;
        for (const EncodedSample& s : poisoned_val) {
            const auto p = predict_proba(params, cfg, s.notes);
            if (predicted_label_from_score(p[1]) == target_class) ++hits;
        }
        out.val_asr = static_cast<double>(hits) / static_cast<double>(poisoned_val.size());
    }
    return out;
}

}  // namespace

TrainResult train(const Parameters<float>& initial,
                  const Vocabulary& vocab,
                  const ModelConfig& cfg,
                  const TrainingConfig& tcfg,
                  const HeadSelection* selection,
                  const TrainInputs& data) {
    tcfg.validate();
    cfg.validate();
    if (selection) selection->validate(cfg);
    if (!data.mixed_train || !data.clean_validation)
        throw InputError("train requires a training split and a clean validation split");

    // Trigger spans for the poisoned subset of the training data.
    std::unordered_map<std::string, const PoisonedRecord*> record_of;
    if (data.train_records)
        for (const PoisonedRecord& r : *data.train_records) record_of.emplace(r.visit.visit_id, &r);

    std::vector<EncodedSample> train_samples;
    train_samples.reserve(data.mixed_train->visits.size());
    for (const Visit& v : data.mixed_train->visits) {
        auto it = record_of.find(v.visit_id);
        train_samples.push_back(
            encode_visit(vocab, cfg, v, it == record_of.end() ? nullptr : &it->second->trigger_positions));
    }

    std::vector<EncodedSample> clean_val;
    clean_val.reserve(data.clean_validation->visits.size());
    for (const Visit& v : data.clean_validation->visits) clean_val.push_back(encode_visit(vocab, cfg, v));

    std::vector<EncodedSample> poisoned_val;
    int val_target = 0;
    if (data.poisoned_validation) {
        data.poisoned_validation->validate();
        val_target = data.poisoned_validation->target_class;
        poisoned_val.reserve(data.poisoned_validation->records.size());
        for (const PoisonedRecord& r : data.poisoned_validation->records)
            poisoned_val.push_back(encode_visit(vocab, cfg, r.visit, &r.trigger_positions));
    }

    Parameters<float> params = initial;
    Parameters<float> grad = zeros_like_parameters<float>(cfg);
    Optimizer opt(tcfg, cfg);
    Stream shuffle_rng(derive_seed(tcfg.seed, "shuffle"));
    Stream dropout_rng(derive_seed(tcfg.seed, "dropout"));
    const float lambda = static_cast<float>(tcfg.attention_loss_weight);

    std::vector<std::size_t> order(train_samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    result.params = params;
    std::vector<Parameters<float>> snapshots;
    snapshots.reserve(static_cast<std::size_t>(tcfg.epochs));

    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double ce_weighted = 0.0, attn_weighted = 0.0;
        long ce_weight = 0, attn_weight = 0;

        const std::size_t n_batches =
            (order.size() + static_cast<std::size_t>(tcfg.batch_size) - 1) /
            static_cast<std::size_t>(tcfg.batch_size);
        for (std::size_t b = 0; b < n_batches; ++b) {
            const std::size_t begin = b * static_cast<std::size_t>(tcfg.batch_size);
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(tcfg.batch_size));
            std::vector<const EncodedSample*> batch;
            batch.reserve(end - begin);
            int n_poisoned = 0;
            for (std::size_t i = begin; i < end; ++i) {
                batch.push_back(&train_samples[order[i]]);
                if (batch.back()->poisoned()) ++n_poisoned;
            }

            zero_parameters(grad);
            const LossBreakdown<float> loss =
                total_loss_and_grad(batch, params, cfg, selection, lambda, grad, &dropout_rng);
            if (!std::isfinite(loss.total))
                throw TrainingDivergence(epoch, static_cast<int>(b), loss.classification_loss,
                                         loss.attention_loss, loss.total);
            opt.step(params, grad);

            ce_weighted += static_cast<double>(loss.classification_loss) * static_cast<double>(batch.size());
            ce_weight += static_cast<long>(batch.size());
            if (n_poisoned > 0) {
                attn_weighted += static_cast<double>(loss.attention_loss) * n_poisoned;
                attn_weight += n_poisoned;
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.ce_loss = ce_weighted / static_cast<double>(ce_weight);
        rec.attn_loss = attn_weight > 0 ? attn_weighted / static_cast<double>(attn_weight) : 0.0;
        rec.total_loss = rec.ce_loss + tcfg.attention_loss_weight * rec.attn_loss;
        const ValScore val = validate_epoch(params, cfg, clean_val, poisoned_val, val_target);
        rec.val_auc_clean = val.auc_clean;
        rec.val_asr = val.val_asr;
        result.history.epochs.push_back(rec);
        snapshots.push_back(params);
        if (data.on_epoch) data.on_epoch(rec);
    }

    // Model selection on clean validation AUC only (poisoned validation
    // never influences it): the latest epoch within kSelectionTolerance of
    // the best. Once the AUC saturates, successive epochs differ by noise,
    // and the latest of them carries the most-trained weights.
    constexpr double kSelectionTolerance = 0.005;
    double best_auc = -1.0;
    for (const EpochRecord& r : result.history.epochs) best_auc = std::max(best_auc, r.val_auc_clean);
    for (int epoch = tcfg.epochs; epoch >= 1; --epoch) {
        if (result.history.epochs[static_cast<std::size_t>(epoch - 1)].val_auc_clean >=
            best_auc - kSelectionTolerance) {
            result.best_epoch = epoch;
            result.params = std::move(snapshots[static_cast<std::size_t>(epoch - 1)]);
            break;
        }
    }
    return result;
}

double finite_difference_check(const Parameters<double>& params,
                               const ModelConfig& cfg,
                               const HeadSelection* selection,
                               const std::vector<EncodedSample>& micro_batch,
                               double lambda,
                               double step) {
    std::vector<const EncodedSample*> batch;
    batch.reserve(micro_batch.size());
    for (const EncodedSample& s : micro_batch) batch.push_back(&s);

    Parameters<double> work = params;
    Parameters<double> grad = zeros_like_parameters<double>(cfg);
    total_loss_and_grad(batch, work, cfg, selection, lambda, grad, nullptr);

    std::vector<std::pair<double*, std::size_t>> wv, gv;
    work.for_each_tensor([&](const std::string&, auto& t) {
        wv.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
    });
    grad.for_each_tensor([&](const std::string&, auto& t) {
        gv.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
    });

    double max_rel = 0.0;
    for (std::size_t t = 0; t < wv.size(); ++t) {
        for (std::size_t i = 0; i < wv[t].second; ++i) {
            double& theta = wv[t].first[i];
            const double saved = theta;
            theta = saved + step;
            const double up = static_cast<double>(total_loss(batch, work, cfg, selection, lambda).total);
            theta = saved - step;
            const double down = static_cast<double>(total_loss(batch, work, cfg, selection, lambda).total);
            theta = saved;
            const double fd = (up - down) / (2.0 * step);
            const double analytic = gv[t].first[i];
            const double rel = std::abs(analytic - fd) /
                               std::max({1.0, std::abs(analytic), std::abs(fd)});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace headlock
