#include "headlock/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "headlock/hash.hpp"

namespace headlock {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian float32; big-endian hosts are unsupported");

namespace {

constexpr int kFormatVersion = 1;

json model_to_json(const ModelConfig& cfg) {
    return json{{"n_layers", cfg.n_layers},   {"n_heads", cfg.n_heads},
                {"d_model", cfg.d_model},     {"d_ff", cfg.d_ff},
                {"max_note_len", cfg.max_note_len}, {"vocab_size", cfg.vocab_size},
                {"dropout", cfg.dropout},     {"pooling", cfg.pooling},
                {"seed", cfg.seed}};
}

ModelConfig model_from_json(const json& j) {
    ModelConfig cfg;
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.d_ff = j.at("d_ff").get<int>();
    cfg.max_note_len = j.at("max_note_len").get<int>();
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.pooling = j.at("pooling").get<std::string>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

json trigger_to_json(const TriggerSpec& t) {
    return json{{"tokens", t.tokens},
                {"placement", to_string(t.placement)},
                {"fixed_index", t.fixed_index},
                {"seed", t.seed}};
}

TriggerSpec trigger_from_json(const json& j) {
    TriggerSpec t;
    t.tokens = j.at("tokens").get<std::vector<std::string>>();
    t.placement = placement_from_string(j.at("placement").get<std::string>());
    t.fixed_index = j.at("fixed_index").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    return t;
}

json poison_to_json(const PoisonPolicy& p) {
    return json{{"source_class", p.source_class},
                {"target_class", p.target_class},
                {"poison_rate", p.poison_rate},
                {"seed", p.seed}};
}

PoisonPolicy poison_from_json(const json& j) {
    PoisonPolicy p;
    p.source_class = j.at("source_class").get<int>();
    p.target_class = j.at("target_class").get<int>();
    p.poison_rate = j.at("poison_rate").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
}

json tconfig_to_json(const TrainingConfig& t) {
    json j{{"epochs", t.epochs},
           {"batch_size", t.batch_size},
           {"learning_rate", t.learning_rate},
           {"attention_loss_weight", t.attention_loss_weight},
           {"head_fraction", t.head_fraction},
           {"optimizer", t.optimizer},
           {"seed", t.seed}};
    j["grad_clip_norm"] = t.grad_clip_norm ? json(*t.grad_clip_norm) : json(nullptr);
    return j;
}

TrainingConfig tconfig_from_json(const json& j) {
    TrainingConfig t;
    t.epochs = j.at("epochs").get<int>();
    t.batch_size = j.at("batch_size").get<int>();
    t.learning_rate = j.at("learning_rate").get<double>();
    t.attention_loss_weight = j.at("attention_loss_weight").get<double>();
    t.head_fraction = j.at("head_fraction").get<double>();
    t.optimizer = j.at("optimizer").get<std::string>();
    if (!j.at("grad_clip_norm").is_null()) t.grad_clip_norm = j.at("grad_clip_norm").get<double>();
    t.seed = j.at("seed").get<std::uint64_t>();
    return t;
}

json summary_to_json(const TrainingSummary& s) {
    json j{{"epochs_completed", s.epochs_completed},
           {"best_epoch", s.best_epoch},
           {"final_val_auc_clean", s.final_val_auc_clean},
           {"final_total_loss", s.final_total_loss}};
    j["final_val_asr"] = s.final_val_asr ? json(*s.final_val_asr) : json(nullptr);
    return j;
}

TrainingSummary summary_from_json(const json& j) {
    TrainingSummary s;
    s.epochs_completed = j.at("epochs_completed").get<int>();
    s.best_epoch = j.at("best_epoch").get<int>();
    s.final_val_auc_clean = j.at("final_val_auc_clean").get<double>();
    if (!j.at("final_val_asr").is_null()) s.final_val_asr = j.at("final_val_asr").get<double>();
    s.final_total_loss = j.at("final_total_loss").get<double>();
    return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir,
                     const Parameters<float>& params,
                     const CheckpointMeta& meta) {
    std::filesystem::create_directories(dir);

    json tensors = json::array();
    std::vector<float> blob;
    std::size_t offset = 0;
    params.for_each_tensor([&](const std::string& name, const auto& t) {
        tensors.push_back({{"name", name},
                           {"rows", t.rows()},
                           {"cols", t.cols()},
                           {"offset", offset}});
        // Row-major regardless of in-memory layout.
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            for (Eigen::Index j = 0; j < t.cols(); ++j) blob.push_back(t(i, j));
        offset += static_cast<std::size_t>(t.size());
    });

    json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["init_source"] = meta.init_source;
    manifest["model"] = model_to_json(meta.model);
    manifest["vocab"] = {{"tokens", meta.vocab.tokens()}, {"hash", to_hex(meta.vocab.content_hash())}};
    if (meta.head_selection) {
        json heads = json::array();
        for (auto [l, h] : meta.head_selection->heads) heads.push_back({l, h});
        manifest["head_selection"] = {{"heads", std::move(heads)}, {"seed", meta.head_selection->seed}};
    } else {
        manifest["head_selection"] = nullptr;
    }
    manifest["trigger"] = meta.trigger ? trigger_to_json(*meta.trigger) : json(nullptr);
    manifest["poison"] = meta.poison ? poison_to_json(*meta.poison) : json(nullptr);
    manifest["train_config"] = meta.train_config ? tconfig_to_json(*meta.train_config) : json(nullptr);
    manifest["training"] = meta.training ? summary_to_json(*meta.training) : json(nullptr);
    manifest["tensors"] = std::move(tensors);
    manifest["blob_elements"] = offset;

    {
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        if (!out) throw CheckpointError("cannot write manifest in '" + dir.string() + "'");
        out << manifest.dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "tensors.bin", std::ios::binary);
        if (!out) throw CheckpointError("cannot write tensor blob in '" + dir.string() + "'");
        out.write(reinterpret_cast<const char*>(blob.data()),
                  static_cast<std::streamsize>(blob.size() * sizeof(float)));
    }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    if (!in) throw CheckpointError("missing manifest.json in '" + dir.string() + "'");
    json manifest = json::parse(in, nullptr, false);
    if (manifest.is_discarded())
        throw CheckpointError("corrupt manifest in '" + dir.string() + "': not valid JSON");

    LoadedCheckpoint out;
    try {
        if (manifest.at("format_version").get<int>() != kFormatVersion)
            throw CheckpointError("unsupported checkpoint format version");
        out.meta.init_source = manifest.at("init_source").get<std::string>();
        out.meta.model = model_from_json(manifest.at("model"));
        for (const std::string& t : manifest.at("vocab").at("tokens").get<std::vector<std::string>>())
            out.meta.vocab.add(t);
        if (!manifest.at("head_selection").is_null()) {
            HeadSelection sel;
            for (const json& h : manifest.at("head_selection").at("heads"))
                sel.heads.emplace_back(h[0].get<int>(), h[1].get<int>());
            sel.seed = manifest.at("head_selection").at("seed").get<std::uint64_t>();
            out.meta.head_selection = std::move(sel);
        }
        if (!manifest.at("trigger").is_null())
            out.meta.trigger = trigger_from_json(manifest.at("trigger"));
        if (!manifest.at("poison").is_null())
            out.meta.poison = poison_from_json(manifest.at("poison"));
        if (!manifest.at("train_config").is_null())
            out.meta.train_config = tconfig_from_json(manifest.at("train_config"));
        if (!manifest.at("training").is_null())
            out.meta.training = summary_from_json(manifest.at("training"));
    } catch (const json::exception& e) {
        throw CheckpointError("corrupt manifest in '" + dir.string() + "': " + e.what());
    }

    // Reserved token strings from the Vocabulary constructor come first in
    // the manifest token list as well; adding them again is a no-op, so the
    // loop above reconstructs the identical id assignment.
    const std::string stored_hash = manifest.at("vocab").at("hash").get<std::string>();
    if (to_hex(out.meta.vocab.content_hash()) != stored_hash)
        throw CheckpointError("manifest vocab hash does not match its token list");

    out.meta.model.validate();
    if (out.meta.model.vocab_size != out.meta.vocab.size())
        throw CheckpointError("model vocab_size " + std::to_string(out.meta.model.vocab_size) +
                              " does not match the stored vocabulary (" +
                              std::to_string(out.meta.vocab.size()) + " tokens)");

    out.params = zeros_like_parameters<float>(out.meta.model);

    // Verify the tensor directory against the shapes implied by the config.
    const json& tensors = manifest.at("tensors");
    std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> expected;
    out.params.for_each_tensor([&](const std::string& name, const auto& t) {
        expected.emplace_back(name, t.rows(), t.cols());
    });
    if (tensors.size() != expected.size())
        throw CheckpointError("tensor directory lists " + std::to_string(tensors.size()) +
                              " tensors, model needs " + std::to_string(expected.size()));
    std::size_t offset = 0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto& [name, rows, cols] = expected[i];
        const json& entry = tensors[i];
        if (entry.at("name").get<std::string>() != name ||
            entry.at("rows").get<Eigen::Index>() != rows ||
            entry.at("cols").get<Eigen::Index>() != cols)
            throw CheckpointError("tensor directory entry " + std::to_string(i) +
                                  " does not match expected tensor '" + name + "' [" +
                                  std::to_string(rows) + " x " + std::to_string(cols) + "]");
        if (entry.at("offset").get<std::size_t>() != offset)
            throw CheckpointError("tensor '" + name + "' has inconsistent blob offset");
        offset += static_cast<std::size_t>(rows * cols);
    }
    if (manifest.at("blob_elements").get<std::size_t>() != offset)
        throw CheckpointError("manifest blob_elements does not match the tensor directory");

    std::ifstream blob(dir / "tensors.bin", std::ios::binary | std::ios::ate);
    if (!blob) throw CheckpointError("missing tensors.bin in '" + dir.string() + "'");
    const std::size_t bytes = static_cast<std::size_t>(blob.tellg());
    if (bytes != offset * sizeof(float))
        throw CheckpointError("truncated tensor blob: expected " +
                              std::to_string(offset * sizeof(float)) + " bytes, found " +
                              std::to_string(bytes));
    blob.seekg(0);
    std::vector<float> values(offset);
    blob.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
    if (!blob) throw CheckpointError("failed reading tensor blob");

    std::size_t cursor = 0;
    out.params.for_each_tensor([&](const std::string&, auto& t) {
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = values[cursor++];
    });
    return out;
}

std::string checkpoint_content_id(const std::filesystem::path& dir) {
    Fnv1a64 h;
    for (const char* name : {"manifest.json", "tensors.bin"}) {
        std::ifstream in(dir / name, std::ios::binary);
        if (!in) throw CheckpointError("missing " + std::string(name) + " in '" + dir.string() + "'");
        char buf[65536];
        while (in.read(buf, sizeof buf) || in.gcount() > 0)
            h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return to_hex(h.digest());
}

}  // namespace headlock
