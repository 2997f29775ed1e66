#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "headlock/detail/format.hpp"
#include "headlock/encoding.hpp"
#include "headlock/errors.hpp"
#include "headlock/hash.hpp"
#include "log.hpp"

namespace headlock::cli {

using nlohmann::json;

RunPaths paths_for(const ExperimentConfig& cfg) {
    RunPaths p;
    p.out = cfg.output_dir;
    p.data_dir = p.out / "data";
    p.config_echo = p.out / "experiment-config.json";
    return p;
}

CorpusBundle build_corpus(const ExperimentConfig& cfg) {
    if (cfg.mimic) return ingest_mimic(cfg.mimic->noteevents, cfg.mimic->labels, cfg.mimic->splits);
    if (!cfg.synthetic) throw ConfigError("config names neither a synthetic nor a mimic corpus");
    return generate_synthetic_corpus(*cfg.synthetic);
}

CorpusBundle read_data_dir(const ExperimentConfig& cfg, const std::filesystem::path& data_dir) {
    const Provenance prov = cfg.mimic ? Provenance::mimic : Provenance::synthetic;
    CorpusBundle bundle;
    bundle.train = read_dataset_jsonl(data_dir / "train.jsonl", "train", prov);
    bundle.validation = read_dataset_jsonl(data_dir / "validation.jsonl", "validation", prov);
    bundle.test = read_dataset_jsonl(data_dir / "test.jsonl", "test", prov);
    return bundle;
}

namespace {

json stats_to_json(const LabeledDataset& ds) {
    const ClassCounts c = dataset_stats(ds);
    return json{{"alive", c.alive},
                {"death", c.death},
                {"total", c.total()},
                {"content_hash", to_hex(dataset_content_hash(ds))}};
}

void print_stats_table(const CorpusBundle& bundle) {
    std::printf("%-12s %8s %8s %8s\n", "split", "alive", "death", "total");
    for (const LabeledDataset* ds : {&bundle.train, &bundle.validation, &bundle.test}) {
        const ClassCounts c = dataset_stats(*ds);
        std::printf("%-12s %8ld %8ld %8ld\n", ds->split_name.c_str(), c.alive, c.death, c.total());
    }
}

Vocabulary build_run_vocab(const ExperimentConfig& cfg, const CorpusBundle& corpus) {
    return build_vocab({&corpus.train}, cfg.vocab_min_count, cfg.trigger.tokens);
}

}  // namespace

void cmd_gen_data(const ExperimentConfig& cfg) {
    const RunPaths paths = paths_for(cfg);
    const CorpusBundle bundle = build_corpus(cfg);
    std::filesystem::create_directories(paths.data_dir);
    write_dataset_jsonl(bundle.train, paths.split_file("train"));
    write_dataset_jsonl(bundle.validation, paths.split_file("validation"));
    write_dataset_jsonl(bundle.test, paths.split_file("test"));

    json stats{{"provenance", to_string(bundle.train.provenance)},
               {"train", stats_to_json(bundle.train)},
               {"validation", stats_to_json(bundle.validation)},
               {"test", stats_to_json(bundle.test)}};
    std::ofstream out(paths.data_dir / "stats.json", std::ios::binary);
    out << stats.dump(2) << '\n';

    write_experiment_config(cfg, paths.config_echo);
    print_stats_table(bundle);
}

void cmd_poison(const ExperimentConfig& cfg) {
    const RunPaths paths = paths_for(cfg);
    const CorpusBundle bundle = read_data_dir(cfg, paths.data_dir);
    const PoisonResult result = poison_dataset(bundle.train, cfg.trigger, cfg.poison);

    const auto dir = paths.out / "poison";
    write_dataset_jsonl(result.mixed, dir / "train-mixed.jsonl");
    write_records_jsonl(result.records, dir / "poison-records.jsonl");
    write_experiment_config(cfg, paths.config_echo);

    const ClassCounts counts = dataset_stats(bundle.train);
    const long eligible = cfg.poison.source_class == 1 ? counts.death : counts.alive;
    std::printf("poisoned %zu of %ld eligible visits (%d -> %d, rate %s)\n", result.records.size(),
                eligible, cfg.poison.source_class, cfg.poison.target_class,
                detail::format_double(cfg.poison.poison_rate).c_str());
}

TrainArtifacts run_training(const ExperimentConfig& cfg,
                            TrainVariant variant,
                            const CorpusBundle& corpus) {
    TrainArtifacts art;
    art.vocab = build_run_vocab(cfg, corpus);
    art.model = cfg.model;
    art.model.vocab_size = art.vocab.size();
    art.model.validate(static_cast<int>(cfg.trigger.tokens.size()));
    art.train_config = cfg.training;

    LabeledDataset mixed_train = corpus.train;
    std::vector<PoisonedRecord> train_records;
    AttackEvalSet poisoned_val;
    TrainInputs inputs;
    inputs.clean_validation = &corpus.validation;

    HeadSelection selection;
    if (variant == TrainVariant::backdoor) {
        PoisonResult poisoned = poison_dataset(corpus.train, cfg.trigger, cfg.poison);
        mixed_train = std::move(poisoned.mixed);
        train_records = std::move(poisoned.records);
        poisoned_val.records = make_poisoned_eval_set(corpus.validation, cfg.trigger, cfg.poison);
        poisoned_val.target_class = cfg.poison.target_class;
        selection = select_backdoor_heads(art.model, cfg.training.head_fraction,
                                          derive_seed(cfg.training.seed, "head-selection"));
        art.selection = selection;
        art.trigger = cfg.trigger;
        art.poison = cfg.poison;
        inputs.train_records = &train_records;
        inputs.poisoned_validation = &poisoned_val;
    } else {
        // Clean baseline: no poisoning and no attention loss.
        art.train_config.attention_loss_weight = 0.0;
    }
    inputs.mixed_train = &mixed_train;
    inputs.on_epoch = [](const EpochRecord& r) {
        std::string line = "epoch " + std::to_string(r.epoch) +
                           ": total=" + detail::format_double(r.total_loss) +
                           " val_auc=" + detail::format_double(r.val_auc_clean);
        if (r.val_asr) line += " val_asr=" + detail::format_double(*r.val_asr);
        log_debug(line);
    };

    const Parameters<float> initial = init_model<float>(art.model);
    TrainResult result = train(initial, art.vocab, art.model, art.train_config,
                               art.selection ? &*art.selection : nullptr, inputs);
    art.params = std::move(result.params);
    art.history = std::move(result.history);
    art.best_epoch = result.best_epoch;
    return art;
}

void save_artifacts(const TrainArtifacts& art,
                    const std::filesystem::path& checkpoint_dir,
                    const std::filesystem::path& history_path) {
    CheckpointMeta meta;
    meta.model = art.model;
    meta.vocab = art.vocab;
    meta.head_selection = art.selection;
    meta.trigger = art.trigger;
    meta.poison = art.poison;
    meta.train_config = art.train_config;
    TrainingSummary summary;
    summary.epochs_completed = static_cast<int>(art.history.epochs.size());
    summary.best_epoch = art.best_epoch;
    if (!art.history.epochs.empty()) {
        const EpochRecord& best =
            art.history.epochs[static_cast<std::size_t>(art.best_epoch - 1)];
        summary.final_val_auc_clean = best.val_auc_clean;
        summary.final_val_asr = best.val_asr;
        summary.final_total_loss = best.total_loss;
    }
    meta.training = summary;
    save_checkpoint(checkpoint_dir, art.params, meta);
    write_history_csv(art.history, history_path);
}

void cmd_train(const ExperimentConfig& cfg, TrainVariant variant) {
    const RunPaths paths = paths_for(cfg);
    const CorpusBundle corpus = read_data_dir(cfg, paths.data_dir);
    const TrainArtifacts art = run_training(cfg, variant, corpus);
    save_artifacts(art, paths.checkpoint_dir(variant), paths.history_file(variant));
    write_experiment_config(cfg, paths.config_echo);

    const EpochRecord& best = art.history.epochs[static_cast<std::size_t>(art.best_epoch - 1)];
    std::printf("trained %s model: best epoch %d, val auc %.4f",
                variant == TrainVariant::clean ? "clean" : "backdoored", art.best_epoch,
                best.val_auc_clean);
    if (best.val_asr) std::printf(", val asr %.4f", *best.val_asr);
    std::printf("\n  checkpoint: %s\n", paths.checkpoint_dir(variant).string().c_str());
}

void cmd_eval(const ExperimentConfig& cfg,
              const std::filesystem::path& checkpoint_dir,
              const std::optional<std::filesystem::path>& data_dir) {
    const RunPaths paths = paths_for(cfg);
    const std::filesystem::path data = data_dir.value_or(paths.data_dir);
    const LoadedCheckpoint ckpt = load_checkpoint(checkpoint_dir);
    const CorpusBundle corpus = read_data_dir(cfg, data);

    // The checkpoint is only valid for the vocabulary it was trained with.
    // Rebuild from the supplied data, forcing in the trigger tokens the
    // checkpoint itself was trained with when it carries any.
    const std::vector<std::string>& trigger_tokens =
        ckpt.meta.trigger ? ckpt.meta.trigger->tokens : cfg.trigger.tokens;
    const Vocabulary rebuilt = build_vocab({&corpus.train}, cfg.vocab_min_count, trigger_tokens);
    if (rebuilt.content_hash() != ckpt.meta.vocab.content_hash())
        throw CheckpointError("vocab hash mismatch: checkpoint " +
                              to_hex(ckpt.meta.vocab.content_hash()) + " vs data " +
                              to_hex(rebuilt.content_hash()) +
                              "; evaluate against the training data directory");

    std::optional<AttackEvalSet> evalset;
    if (ckpt.meta.trigger && ckpt.meta.poison) {
        AttackEvalSet set;
        set.records = make_poisoned_eval_set(corpus.test, *ckpt.meta.trigger, *ckpt.meta.poison);
        set.target_class = ckpt.meta.poison->target_class;
        evalset = std::move(set);
    }

    MetricsReport report =
        evaluate(ckpt.params, ckpt.meta.model, ckpt.meta.vocab, corpus.test,
                 evalset ? &*evalset : nullptr,
                 ckpt.meta.trigger ? &*ckpt.meta.trigger : nullptr,
                 checkpoint_content_id(checkpoint_dir));
    report.seeds["model"] = ckpt.meta.model.seed;
    if (ckpt.meta.train_config) report.seeds["training"] = ckpt.meta.train_config->seed;
    if (ckpt.meta.trigger) report.seeds["trigger"] = ckpt.meta.trigger->seed;
    if (ckpt.meta.poison) report.seeds["poison"] = ckpt.meta.poison->seed;
    if (ckpt.meta.head_selection) report.seeds["head_selection"] = ckpt.meta.head_selection->seed;

    const auto eval_dir = paths.out / ("eval-" + checkpoint_dir.filename().string());
    write_metrics_json(report, eval_dir / "metrics.json");
    write_roc_csv(report.roc_points, eval_dir / "roc.csv");

    std::printf("auc_clean %.4f  cacc %.4f", report.auc_clean, report.cacc);
    if (report.asr) std::printf("  asr %.4f", *report.asr);
    if (report.auc_poisoned_vs_true)
        std::printf("  auc_poisoned_vs_true %.4f", *report.auc_poisoned_vs_true);
    std::printf("\n  report: %s\n", (eval_dir / "metrics.json").string().c_str());
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg) {
    const RunPaths paths = paths_for(cfg);
    const CorpusBundle corpus = build_corpus(cfg);

    struct Case {
        const char* name;
        int source;
        int target;
    };
    // case1 poisons Death to Alive, case2 the reverse direction.
    const Case cases[] = {{"case1", 1, 0}, {"case2", 0, 1}};

    std::vector<AblationRow> rows;
    for (const Case& c : cases) {
        ExperimentConfig case_cfg = cfg;  // shared seeds except the direction
        case_cfg.poison.source_class = c.source;
        case_cfg.poison.target_class = c.target;

        const TrainArtifacts art = run_training(case_cfg, TrainVariant::backdoor, corpus);
        const auto case_dir = paths.out / "ablation" / c.name;
        save_artifacts(art, case_dir / "checkpoint", case_dir / "history.csv");

        AttackEvalSet evalset;
        evalset.records = make_poisoned_eval_set(corpus.test, case_cfg.trigger, case_cfg.poison);
        evalset.target_class = case_cfg.poison.target_class;
        MetricsReport report =
            evaluate(art.params, art.model, art.vocab, corpus.test, &evalset, &case_cfg.trigger,
                     checkpoint_content_id(case_dir / "checkpoint"));
        report.seeds["model"] = art.model.seed;
        report.seeds["training"] = art.train_config.seed;
        report.seeds["trigger"] = case_cfg.trigger.seed;
        report.seeds["poison"] = case_cfg.poison.seed;
        write_metrics_json(report, case_dir / "metrics.json");
        write_roc_csv(report.roc_points, case_dir / "roc.csv");

        rows.push_back({c.name, c.source, c.target, report.cacc, report.asr.value_or(0.0),
                        report.auc_clean, report.auc_poisoned_vs_true.value_or(0.0)});
    }

    const auto dir = paths.out / "ablation";
    {
        std::ofstream out(dir / "comparison.csv", std::ios::binary);
        out << "case,source_class,target_class,cacc,asr,auc_clean,auc_poisoned_vs_true\n";
        for (const AblationRow& r : rows)
            out << r.name << ',' << r.source_class << ',' << r.target_class << ','
                << detail::format_double(r.cacc) << ',' << detail::format_double(r.asr) << ','
                << detail::format_double(r.auc_clean) << ','
                << detail::format_double(r.auc_poisoned_vs_true) << '\n';
    }
    {
        json j = json::array();
        for (const AblationRow& r : rows)
            j.push_back({{"case", r.name},
                         {"source_class", r.source_class},
                         {"target_class", r.target_class},
                         {"cacc", r.cacc},
                         {"asr", r.asr},
                         {"auc_clean", r.auc_clean},
                         {"auc_poisoned_vs_true", r.auc_poisoned_vs_true}});
        std::ofstream out(dir / "comparison.json", std::ios::binary);
        out << j.dump(2) << '\n';
    }
    write_experiment_config(cfg, paths.config_echo);
    return rows;
}

void cmd_ablate(const ExperimentConfig& cfg) {
    const std::vector<AblationRow> rows = run_ablation(cfg);
    std::printf("%-8s %-14s %8s %8s %10s %22s\n", "case", "direction", "cacc", "asr", "auc_clean",
                "auc_poisoned_vs_true");
    for (const AblationRow& r : rows) {
        char direction[16];
        std::snprintf(direction, sizeof direction, "%d -> %d", r.source_class, r.target_class);
        std::printf("%-8s %-14s %8.4f %8.4f %10.4f %22.4f\n", r.name.c_str(), direction, r.cacc,
                    r.asr, r.auc_clean, r.auc_poisoned_vs_true);
    }
}

void cmd_inspect_attention(const std::filesystem::path& checkpoint_dir,
                           const std::filesystem::path& sample_path,
                           bool inject,
                           const std::optional<std::filesystem::path>& dump_path) {
    const LoadedCheckpoint ckpt = load_checkpoint(checkpoint_dir);
    if (!ckpt.meta.trigger)
        throw InputError("checkpoint carries no trigger spec; nothing to inspect");
    const TriggerSpec& trigger = *ckpt.meta.trigger;

    // The sample file holds either poisoned records (with spans) or plain
    // dataset lines; plain lines need --inject.
    PoisonedRecord record;
    {
        std::ifstream probe(sample_path, std::ios::binary);
        if (!probe) throw DataError("cannot open sample file '" + sample_path.string() + "'");
        std::string first_line;
        std::getline(probe, first_line);
        json j = json::parse(first_line, nullptr, false);
        if (j.is_discarded()) throw DataError("sample file is not line-delimited JSON");
        if (j.contains("trigger_positions")) {
            record = read_records_jsonl(sample_path).front();
        } else {
            if (!inject)
                throw InputError("sample has no trigger positions; pass --inject to add the trigger");
            const LabeledDataset ds = read_dataset_jsonl(sample_path, "sample", Provenance::synthetic);
            if (ds.visits.empty()) throw DataError("sample file is empty");
            Stream rng(derive_seed(trigger.seed, "inspect"));
            auto [injected, spans] = inject_trigger(ds.visits.front(), trigger, rng);
            record.visit = std::move(injected);
            record.original_label = ds.visits.front().label;
            record.trigger_positions = std::move(spans);
        }
    }

    const auto mass = attention_concentration(ckpt.params, ckpt.meta.model, ckpt.meta.vocab, record,
                                              trigger.tokens);
    std::vector<std::pair<std::pair<int, int>, double>> rows(mass.begin(), mass.end());
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    std::printf("%6s %6s %14s %9s\n", "layer", "head", "trigger_mass", "selected");
    for (const auto& [head, value] : rows) {
        const bool selected =
            ckpt.meta.head_selection && ckpt.meta.head_selection->contains(head.first, head.second);
        std::printf("%6d %6d %14.4f %9s\n", head.first, head.second, value, selected ? "yes" : "no");
    }

    if (dump_path) {
        const EncodedSample enc = encode_visit(ckpt.meta.vocab, ckpt.meta.model, record.visit,
                                               &record.trigger_positions);
        const ForwardOutput<float> fwd =
            forward_visit(ckpt.params, ckpt.meta.model, enc.notes, RunMode::eval);
        json notes = json::array();
        for (std::size_t n = 0; n < fwd.note_attention.size(); ++n) {
            const auto& attn = fwd.note_attention[n];
            json tokens = json::array();
            for (int i = 0; i < attn.eff_len; ++i)
                tokens.push_back(ckpt.meta.vocab.token_of(enc.notes[n][static_cast<std::size_t>(i)]));
            json received = json::object();
            for (int l = 0; l < attn.n_layers; ++l) {
                for (int h = 0; h < attn.n_heads; ++h) {
                    const MatX<float>& a = attn.head(l, h);
                    std::vector<double> mean_received(static_cast<std::size_t>(attn.eff_len));
                    for (int k = 0; k < attn.eff_len; ++k)
                        mean_received[static_cast<std::size_t>(k)] =
                            static_cast<double>(a.col(k).mean());
                    received[std::to_string(l) + ":" + std::to_string(h)] = mean_received;
                }
            }
            notes.push_back({{"tokens", std::move(tokens)},
                             {"trigger_span",
                              {record.trigger_positions[n].begin, record.trigger_positions[n].end}},
                             {"mean_attention_received", std::move(received)}});
        }
        json dump{{"visit_id", record.visit.visit_id},
                  {"original_label", record.original_label},
                  {"notes", std::move(notes)}};
        if (dump_path->has_parent_path()) std::filesystem::create_directories(dump_path->parent_path());
        std::ofstream out(*dump_path, std::ios::binary);
        if (!out) throw DataError("cannot open '" + dump_path->string() + "' for writing");
        out << dump.dump(2) << '\n';
        std::printf("attention dump: %s\n", dump_path->string().c_str());
    }
}

}  // namespace headlock::cli
