#include "ccsq/dataset.hpp"

#include "ccsq/csv.hpp"
#include "ccsq/errors.hpp"
#include "ccsq/rng.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace ccsq::dataset {

std::string to_string(Partition p) {
    switch (p) {
        case Partition::train: return "train";
        case Partition::dev: return "dev";
        case Partition::test: return "test";
    }
    return "?";
}

Partition partition_from_string(const std::string& s) {
    if (s == "train") return Partition::train;
    if (s == "dev") return Partition::dev;
    if (s == "test") return Partition::test;
    throw validation_error("unknown partition: " + s);
}

double map_arousal(double raw) {
    if (raw < 0.0 || raw > 1.0)
        throw validation_error("arousal value out of [0,1]: " + csv::format_double(raw));
    return 2.0 * raw - 1.0;
}

DatasetManifest load_manifest(const std::string& path, Partition partition) {
    const csv::Table t = csv::read(path);
    const std::vector<std::string> expected = {"utterance_id", "video_id", "speaker_id",
                                               "arousal",      "valence",  "feature_path",
                                               "arousal_range"};
    if (t.header != expected) {
        std::ostringstream msg;
        msg << path << ": bad manifest header; expected ";
        for (std::size_t i = 0; i < expected.size(); ++i)
            msg << (i ? "," : "") << expected[i];
        throw validation_error(msg.str());
    }
    if (t.rows.empty()) throw validation_error(path + ": manifest has no records");

    DatasetManifest m;
    m.partition = partition;
    std::set<std::string> ids;
    std::set<std::string> paths;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string where = path + ":" + std::to_string(r + 2);
        UtteranceRecord rec;
        rec.utterance_id = row[0];
        rec.video_id = row[1];
        rec.speaker_id = row[2];
        const double arousal_raw = csv::parse_double(row[3], where + " arousal");
        rec.valence = csv::parse_double(row[4], where + " valence");
        rec.feature_path = row[5];
        const std::string& range = row[6];
        if (range == "unit") {
            if (arousal_raw < 0.0 || arousal_raw > 1.0)
                throw validation_error(where + ": arousal " + row[3] +
                                       " outside declared range [0,1]");
            rec.arousal = map_arousal(arousal_raw);
        } else if (range == "signed") {
            if (arousal_raw < -1.0 || arousal_raw > 1.0)
                throw validation_error(where + ": arousal " + row[3] +
                                       " outside declared range [-1,1]");
            rec.arousal = arousal_raw;
        } else {
            throw validation_error(where + ": arousal_range must be 'unit' or 'signed', got '" +
                                   range + "'");
        }
        if (rec.valence < -1.0 || rec.valence > 1.0)
            throw validation_error(where + ": valence " + row[4] + " outside [-1,1]");
        if (!ids.insert(rec.utterance_id).second)
            throw validation_error(where + ": duplicate utterance_id '" + rec.utterance_id + "'");
        if (!paths.insert(rec.feature_path).second)
            throw validation_error(where + ": duplicate feature_path '" + rec.feature_path + "'");
        m.records.push_back(std::move(rec));
    }
    return m;
}

FoldPlan make_random_folds(const DatasetManifest& manifest, int k, std::uint64_t seed) {
    if (k < 2) throw config_error("make_random_folds: k must be >= 2, got " + std::to_string(k));
    if (manifest.records.size() < static_cast<std::size_t>(k))
        throw config_error("make_random_folds: more folds (" + std::to_string(k) +
                           ") than records (" + std::to_string(manifest.records.size()) + ")");
    std::vector<std::size_t> order(manifest.records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.speaker_disjoint = false;
    for (std::size_t i = 0; i < order.size(); ++i)
        plan.assignment[manifest.records[order[i]].utterance_id] = static_cast<int>(i % k);
    return plan;
}

FoldPlan make_speaker_folds(const DatasetManifest& manifest, int k, std::uint64_t seed) {
    if (k < 2) throw config_error("make_speaker_folds: k must be >= 2, got " + std::to_string(k));
    std::map<std::string, std::vector<const UtteranceRecord*>> by_speaker;
    for (const auto& rec : manifest.records) by_speaker[rec.speaker_id].push_back(&rec);
    if (by_speaker.size() < static_cast<std::size_t>(k))
        throw config_error("make_speaker_folds: only " + std::to_string(by_speaker.size()) +
                           " distinct speakers for k=" + std::to_string(k));

    // Largest speaker first, ties by id; each goes to the currently
    // smallest fold (lowest index on ties).
    std::vector<std::pair<std::string, std::size_t>> speakers;
    for (const auto& [id, utts] : by_speaker) speakers.emplace_back(id, utts.size());
    std::sort(speakers.begin(), speakers.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    std::vector<std::size_t> fold_sizes(static_cast<std::size_t>(k), 0);
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.speaker_disjoint = true;
    for (const auto& [id, count] : speakers) {
        const std::size_t fold = static_cast<std::size_t>(
            std::min_element(fold_sizes.begin(), fold_sizes.end()) - fold_sizes.begin());
        fold_sizes[fold] += count;
        for (const UtteranceRecord* rec : by_speaker[id])
            plan.assignment[rec->utterance_id] = static_cast<int>(fold);
    }
    return plan;
}

void save_fold_plan(const FoldPlan& plan, const std::string& path) {
    std::ostringstream out;
    out << "# k=" << plan.k << " seed=" << plan.seed
        << " speaker_disjoint=" << (plan.speaker_disjoint ? 1 : 0) << '\n';
    out << "utterance_id,fold\n";
    for (const auto& [utt, fold] : plan.assignment) out << utt << ',' << fold << '\n';
    csv::atomic_write_text(path, out.str());
}

FoldPlan load_fold_plan(const std::string& path) {
    std::istringstream in(csv::read_text(path));
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
        throw validation_error(path + ": missing fold-plan header comment");
    FoldPlan plan;
    {
        std::istringstream hdr(line.substr(2));
        std::string kv;
        while (hdr >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = kv.substr(0, eq);
            const std::string val = kv.substr(eq + 1);
            if (key == "k") plan.k = std::stoi(val);
            else if (key == "seed") plan.seed = std::stoull(val);
            else if (key == "speaker_disjoint") plan.speaker_disjoint = (val == "1");
        }
    }
    if (!std::getline(in, line) || line != "utterance_id,fold")
        throw validation_error(path + ": missing fold-plan column header");
    std::size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = csv::split_line(line);
        if (fields.size() != 2)
            throw validation_error(path + ":" + std::to_string(lineno) + ": expected 2 fields");
        plan.assignment[fields[0]] = std::stoi(fields[1]);
    }
    if (plan.k < 2) throw validation_error(path + ": invalid k in fold plan");
    return plan;
}

} // namespace ccsq::dataset
