#include <algorithm>
#include <cstdio>
#include <ctime>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "headlock/corpus.hpp"
#include "headlock/csv.hpp"
#include "headlock/errors.hpp"

namespace headlock {

namespace {

// Days since the civil epoch 1970-01-01 (Howard Hinnant's algorithm); avoids
// timegm, which is not portable.
long days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

// "YYYY-MM-DD HH:MM:SS" to seconds since epoch. Empty or malformed
// timestamps return false.
bool parse_timestamp(const std::string& s, long long& out) {
    int y, mo, d, h, mi, se;
    if (std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &se) != 6) return false;
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 || se > 60)
        return false;
    out = days_from_civil(y, mo, d) * 86400LL + h * 3600LL + mi * 60LL + se;
    return true;
}

bool is_blank(const std::string& s) {
    return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

void require_columns(const CsvTable& table,
                     const std::vector<std::string>& names,
                     const std::string& file_label) {
    std::vector<std::string> missing;
    for (const std::string& n : names)
        if (table.column(n) < 0) missing.push_back(n);
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size(); ++i) {
            if (i > 0) list += ", ";
            list += missing[i];
        }
        throw DataError(file_label + " is missing required columns: " + list);
    }
}

struct AdmissionInfo {
    long long admit_time = 0;
    int label = 0;
};

}  // namespace

CorpusBundle ingest_mimic(const std::filesystem::path& noteevents_path,
                          const std::filesystem::path& label_table_path,
                          const std::filesystem::path& split_assignment_path) {
    // Label table: one row per hospital admission with the admission
    // timestamp (defines hour 0) and the mortality label.
    CsvTable labels = CsvTable::read_file(label_table_path);
    require_columns(labels, {"HADM_ID", "ADMITTIME", "MORTALITY"}, "label table");
    std::unordered_map<std::string, AdmissionInfo> admissions;
    {
        const int c_id = labels.column("HADM_ID");
        const int c_admit = labels.column("ADMITTIME");
        const int c_label = labels.column("MORTALITY");
        for (std::size_t i = 0; i < labels.row_count(); ++i) {
            const auto& row = labels.row(i);
            AdmissionInfo info;
            if (!parse_timestamp(row[static_cast<std::size_t>(c_admit)], info.admit_time))
                throw DataError("label table row " + std::to_string(i + 2) +
                                ": unparseable ADMITTIME '" + row[static_cast<std::size_t>(c_admit)] + "'");
            const std::string& lab = row[static_cast<std::size_t>(c_label)];
            if (lab != "0" && lab != "1")
                throw DataError("label table row " + std::to_string(i + 2) +
                                ": MORTALITY must be 0 or 1, got '" + lab + "'");
            info.label = lab == "1" ? 1 : 0;
            admissions[row[static_cast<std::size_t>(c_id)]] = info;
        }
    }

    CsvTable notes = CsvTable::read_file(noteevents_path);
    require_columns(notes, {"ROW_ID", "SUBJECT_ID", "HADM_ID", "CHARTTIME", "TEXT"}, "noteevents file");
    const int c_hadm = notes.column("HADM_ID");
    const int c_time = notes.column("CHARTTIME");
    const int c_text = notes.column("TEXT");

    // Each hospital admission is one Visit; file order is kept per admission
    // until the chart-time sort.
    std::map<std::string, Visit> visits;
    for (std::size_t i = 0; i < notes.row_count(); ++i) {
        const auto& row = notes.row(i);
        const std::string& hadm = row[static_cast<std::size_t>(c_hadm)];
        const std::string& charttime = row[static_cast<std::size_t>(c_time)];
        const std::string& text = row[static_cast<std::size_t>(c_text)];
        if (is_blank(charttime)) continue;  // note lacks an associated chart time
        if (is_blank(hadm) || is_blank(text)) continue;
        long long note_time = 0;
        if (!parse_timestamp(charttime, note_time))
            throw DataError("noteevents row " + std::to_string(i + 2) + ": unparseable CHARTTIME '" +
                            charttime + "'");
        auto adm = admissions.find(hadm);
        if (adm == admissions.end())
            throw DataError("noteevents admission '" + hadm + "' is absent from the label table");
        const double chart_hour =
            static_cast<double>(note_time - adm->second.admit_time) / 3600.0;
        // First 48 hours of the stay only; notes charted before admission are
        // outside the window as well.
        if (chart_hour < 0.0 || chart_hour >= 48.0) continue;
        Visit& v = visits[hadm];
        if (v.visit_id.empty()) {
            v.visit_id = hadm;
            v.label = adm->second.label;
        }
        v.notes.push_back({chart_hour, text});
    }
    for (auto& [id, v] : visits)
        std::stable_sort(v.notes.begin(), v.notes.end(),
                         [](const Note& a, const Note& b) { return a.chart_hour < b.chart_hour; });

    CsvTable splits = CsvTable::read_file(split_assignment_path);
    require_columns(splits, {"HADM_ID", "SPLIT"}, "split assignment file");
    const int c_sid = splits.column("HADM_ID");
    const int c_split = splits.column("SPLIT");

    CorpusBundle bundle;
    bundle.train.split_name = "train";
    bundle.validation.split_name = "validation";
    bundle.test.split_name = "test";
    for (auto* ds : {&bundle.train, &bundle.validation, &bundle.test}) ds->provenance = Provenance::mimic;

    std::unordered_set<std::string> assigned;
    for (std::size_t i = 0; i < splits.row_count(); ++i) {
        const auto& row = splits.row(i);
        const std::string& hadm = row[static_cast<std::size_t>(c_sid)];
        const std::string& split = row[static_cast<std::size_t>(c_split)];
        auto it = visits.find(hadm);
        if (it == visits.end())
            throw DataError("split assignment references unknown visit '" + hadm +
                            "' (no notes survived preprocessing or admission missing)");
        if (!assigned.insert(hadm).second)
            throw DataError("split assignment lists visit '" + hadm + "' more than once");
        if (split == "train")
            bundle.train.visits.push_back(it->second);
        else if (split == "validation")
            bundle.validation.visits.push_back(it->second);
        else if (split == "test")
            bundle.test.visits.push_back(it->second);
        else
            throw DataError("split assignment row " + std::to_string(i + 2) + ": unknown split '" +
                            split + "'");
    }

    for (auto* ds : {&bundle.train, &bundle.validation, &bundle.test}) validate_dataset(*ds);
    return bundle;
}

}  // namespace headlock
