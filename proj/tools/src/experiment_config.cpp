#include "experiment_config.hpp"

#include <fstream>
#include <initializer_list>

#include <nlohmann/json.hpp>

#include "headlock/errors.hpp"
#include "headlock/rng.hpp"

namespace headlock::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError("section '" + where + "' must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("unknown key '" + key + "' in section '" + where + "'");
    }
}

template <class T>
void read_field(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("field '") + key + "' has the wrong type");
    }
}

IntRange range_from_json(const json& j, const char* key) {
    if (!j.is_array() || j.size() != 2)
        throw ConfigError(std::string("field '") + key + "' must be a [lo, hi] pair");
    return {j[0].get<int>(), j[1].get<int>()};
}

SyntheticConfig synthetic_from_json(const json& j) {
    reject_unknown(j,
                   {"n_train", "n_val", "n_test", "positive_fraction", "vocab_size",
                    "notes_per_visit", "tokens_per_note", "class_signal_strength", "seed"},
                   "corpus.synthetic");
    SyntheticConfig cfg;
    read_field(j, "n_train", cfg.n_train);
    read_field(j, "n_val", cfg.n_val);
    read_field(j, "n_test", cfg.n_test);
    read_field(j, "positive_fraction", cfg.positive_fraction);
    read_field(j, "vocab_size", cfg.vocab_size);
    if (j.contains("notes_per_visit")) cfg.notes_per_visit = range_from_json(j.at("notes_per_visit"), "notes_per_visit");
    if (j.contains("tokens_per_note")) cfg.tokens_per_note = range_from_json(j.at("tokens_per_note"), "tokens_per_note");
    read_field(j, "class_signal_strength", cfg.class_signal_strength);
    read_field(j, "seed", cfg.seed);
    return cfg;
}

MimicPaths mimic_from_json(const json& j) {
    reject_unknown(j, {"noteevents", "labels", "splits"}, "corpus.mimic");
    MimicPaths paths;
    for (const char* key : {"noteevents", "labels", "splits"})
        if (!j.contains(key))
            throw ConfigError(std::string("corpus.mimic requires key '") + key + "'");
    read_field(j, "noteevents", paths.noteevents);
    read_field(j, "labels", paths.labels);
    read_field(j, "splits", paths.splits);
    return paths;
}

}  // namespace

ExperimentConfig default_experiment_config() { return ExperimentConfig{}; }

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file '" + path.string() + "' is not valid JSON");
    reject_unknown(j, {"output_dir", "corpus", "vocab", "trigger", "poison", "model", "training"},
                   "(top level)");

    ExperimentConfig cfg;
    read_field(j, "output_dir", cfg.output_dir);

    if (j.contains("corpus")) {
        const json& c = j.at("corpus");
        reject_unknown(c, {"synthetic", "mimic"}, "corpus");
        if (c.contains("synthetic") && c.contains("mimic"))
            throw ConfigError("corpus must be either synthetic or mimic, not both");
        if (c.contains("synthetic")) {
            cfg.synthetic = synthetic_from_json(c.at("synthetic"));
            cfg.mimic.reset();
        } else if (c.contains("mimic")) {
            cfg.mimic = mimic_from_json(c.at("mimic"));
            cfg.synthetic.reset();
        } else {
            throw ConfigError("corpus section must name 'synthetic' or 'mimic'");
        }
    }

    if (j.contains("vocab")) {
        reject_unknown(j.at("vocab"), {"min_count"}, "vocab");
        read_field(j.at("vocab"), "min_count", cfg.vocab_min_count);
    }

    if (j.contains("trigger")) {
        const json& t = j.at("trigger");
        reject_unknown(t, {"tokens", "placement", "fixed_index", "seed"}, "trigger");
        read_field(t, "tokens", cfg.trigger.tokens);
        if (t.contains("placement"))
            cfg.trigger.placement = placement_from_string(t.at("placement").get<std::string>());
        read_field(t, "fixed_index", cfg.trigger.fixed_index);
        read_field(t, "seed", cfg.trigger.seed);
    }

    if (j.contains("poison")) {
        const json& p = j.at("poison");
        reject_unknown(p, {"source_class", "target_class", "rate", "seed"}, "poison");
        read_field(p, "source_class", cfg.poison.source_class);
        read_field(p, "target_class", cfg.poison.target_class);
        read_field(p, "rate", cfg.poison.poison_rate);
        read_field(p, "seed", cfg.poison.seed);
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown(m, {"n_layers", "n_heads", "d_model", "d_ff", "max_note_len", "dropout",
                           "pooling", "seed"},
                       "model");
        read_field(m, "n_layers", cfg.model.n_layers);
        read_field(m, "n_heads", cfg.model.n_heads);
        read_field(m, "d_model", cfg.model.d_model);
        read_field(m, "d_ff", cfg.model.d_ff);
        read_field(m, "max_note_len", cfg.model.max_note_len);
        read_field(m, "dropout", cfg.model.dropout);
        read_field(m, "pooling", cfg.model.pooling);
        read_field(m, "seed", cfg.model.seed);
    }

    if (j.contains("training")) {
        const json& t = j.at("training");
        reject_unknown(t, {"epochs", "batch_size", "learning_rate", "attention_loss_weight",
                           "head_fraction", "optimizer", "grad_clip_norm", "seed"},
                       "training");
        read_field(t, "epochs", cfg.training.epochs);
        read_field(t, "batch_size", cfg.training.batch_size);
        read_field(t, "learning_rate", cfg.training.learning_rate);
        read_field(t, "attention_loss_weight", cfg.training.attention_loss_weight);
        read_field(t, "head_fraction", cfg.training.head_fraction);
        read_field(t, "optimizer", cfg.training.optimizer);
        if (t.contains("grad_clip_norm")) {
            if (t.at("grad_clip_norm").is_null())
                cfg.training.grad_clip_norm.reset();
            else
                cfg.training.grad_clip_norm = t.at("grad_clip_norm").get<double>();
        }
        read_field(t, "seed", cfg.training.seed);
    }

    cfg.trigger.validate();
    cfg.poison.validate();
    cfg.training.validate();
    if (cfg.synthetic) cfg.synthetic->validate();
    if (cfg.vocab_min_count < 1) throw ConfigError("vocab.min_count must be >= 1");
    return cfg;
}

void apply_seed_override(ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.synthetic) cfg.synthetic->seed = derive_seed(seed, "corpus");
    cfg.trigger.seed = derive_seed(seed, "trigger");
    cfg.poison.seed = derive_seed(seed, "poison");
    cfg.model.seed = derive_seed(seed, "model");
    cfg.training.seed = derive_seed(seed, "training");
}

void write_experiment_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    json j;
    j["output_dir"] = cfg.output_dir;
    if (cfg.synthetic) {
        const SyntheticConfig& s = *cfg.synthetic;
        j["corpus"]["synthetic"] = {
            {"n_train", s.n_train},
            {"n_val", s.n_val},
            {"n_test", s.n_test},
            {"positive_fraction", s.positive_fraction},
            {"vocab_size", s.vocab_size},
            {"notes_per_visit", {s.notes_per_visit.lo, s.notes_per_visit.hi}},
            {"tokens_per_note", {s.tokens_per_note.lo, s.tokens_per_note.hi}},
            {"class_signal_strength", s.class_signal_strength},
            {"seed", s.seed}};
    } else if (cfg.mimic) {
        j["corpus"]["mimic"] = {{"noteevents", cfg.mimic->noteevents},
                                {"labels", cfg.mimic->labels},
                                {"splits", cfg.mimic->splits}};
    }
    j["vocab"] = {{"min_count", cfg.vocab_min_count}};
    j["trigger"] = {{"tokens", cfg.trigger.tokens},
                    {"placement", to_string(cfg.trigger.placement)},
                    {"fixed_index", cfg.trigger.fixed_index},
                    {"seed", cfg.trigger.seed}};
    j["poison"] = {{"source_class", cfg.poison.source_class},
                   {"target_class", cfg.poison.target_class},
                   {"rate", cfg.poison.poison_rate},
                   {"seed", cfg.poison.seed}};
    j["model"] = {{"n_layers", cfg.model.n_layers},
                  {"n_heads", cfg.model.n_heads},
                  {"d_model", cfg.model.d_model},
                  {"d_ff", cfg.model.d_ff},
                  {"max_note_len", cfg.model.max_note_len},
                  {"dropout", cfg.model.dropout},
                  {"pooling", cfg.model.pooling},
                  {"seed", cfg.model.seed}};
    json t{{"epochs", cfg.training.epochs},
           {"batch_size", cfg.training.batch_size},
           {"learning_rate", cfg.training.learning_rate},
           {"attention_loss_weight", cfg.training.attention_loss_weight},
           {"head_fraction", cfg.training.head_fraction},
           {"optimizer", cfg.training.optimizer},
           {"seed", cfg.training.seed}};
    t["grad_clip_norm"] = cfg.training.grad_clip_norm ? json(*cfg.training.grad_clip_norm) : json(nullptr);
    j["training"] = std::move(t);

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
}

}  // namespace headlock::cli
