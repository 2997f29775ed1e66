#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "headlock/corpus.hpp"
#include "headlock/errors.hpp"
#include "headlock/hash.hpp"
#include "headlock/text.hpp"

namespace headlock {

using nlohmann::json;

namespace {

json visit_to_json(const Visit& v) {
    json notes = json::array();
    for (const Note& n : v.notes) notes.push_back({{"chart_hour", n.chart_hour}, {"text", n.text}});
    return json{{"label", v.label}, {"notes", std::move(notes)}, {"visit_id", v.visit_id}};
}

Visit visit_from_json(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("visit_id") || !j.contains("label") || !j.contains("notes"))
        throw DataError(where + ": visit record must carry visit_id, label and notes");
    Visit v;
    v.visit_id = j.at("visit_id").get<std::string>();
    v.label = j.at("label").get<int>();
    for (const json& jn : j.at("notes")) {
        Note n;
        n.chart_hour = jn.at("chart_hour").get<double>();
        n.text = jn.at("text").get<std::string>();
        v.notes.push_back(std::move(n));
    }
    return v;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
    return in;
}

json parse_line(const std::string& line, const std::string& where) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError(where + ": malformed JSON line");
    return j;
}

}  // namespace

void write_dataset_jsonl(const LabeledDataset& ds, const std::filesystem::path& path) {
    std::ofstream out = open_for_write(path);
    for (const Visit& v : ds.visits) out << visit_to_json(v).dump() << '\n';
}

LabeledDataset read_dataset_jsonl(const std::filesystem::path& path,
                                  const std::string& split_name,
                                  Provenance provenance) {
    std::ifstream in = open_for_read(path);
    LabeledDataset ds;
    ds.split_name = split_name;
    ds.provenance = provenance;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(line_no);
        ds.visits.push_back(visit_from_json(parse_line(line, where), where));
    }
    validate_dataset(ds);
    return ds;
}

std::uint64_t dataset_content_hash(const LabeledDataset& ds) {
    Fnv1a64 h;
    h.update(ds.split_name);
    h.update("\n");
    for (const Visit& v : ds.visits) {
        h.update(visit_to_json(v).dump());
        h.update("\n");
    }
    return h.digest();
}

void write_records_jsonl(const std::vector<PoisonedRecord>& records,
                         const std::filesystem::path& path) {
    std::ofstream out = open_for_write(path);
    for (const PoisonedRecord& r : records) {
        json spans = json::array();
        for (const TokenSpan& s : r.trigger_positions) spans.push_back({s.begin, s.end});
        json j{{"original_label", r.original_label},
               {"trigger_positions", std::move(spans)},
               {"visit", visit_to_json(r.visit)}};
        out << j.dump() << '\n';
    }
}

std::vector<PoisonedRecord> read_records_jsonl(const std::filesystem::path& path) {
    std::ifstream in = open_for_read(path);
    std::vector<PoisonedRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(line_no);
        json j = parse_line(line, where);
        PoisonedRecord r;
        r.original_label = j.at("original_label").get<int>();
        r.visit = visit_from_json(j.at("visit"), where);
        for (const json& js : j.at("trigger_positions")) {
            if (!js.is_array() || js.size() != 2)
                throw DataError(where + ": trigger span must be a [begin, end] pair");
            r.trigger_positions.push_back({js[0].get<int>(), js[1].get<int>()});
        }
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace headlock
