#include "ccsq/pipeline.hpp"

#include "ccsq/csv.hpp"
#include "ccsq/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace ccsq::pipeline {

namespace {

using json = nlohmann::json;

double target_for(const dataset::UtteranceRecord& rec, seqnet::Task task) {
    switch (task) {
        case seqnet::Task::arousal: return rec.arousal;
        case seqnet::Task::valence: return rec.valence;
        default: throw validation_error("no scalar target for task " + seqnet::to_string(task));
    }
}

std::map<std::string, int> speaker_index(const dataset::DatasetManifest& manifest) {
    std::set<std::string> speakers;
    for (const auto& rec : manifest.records) speakers.insert(rec.speaker_id);
    std::map<std::string, int> index;
    int i = 0;
    for (const auto& s : speakers) index[s] = i++;
    return index;
}

seqnet::Utterance make_utterance(const dataset::UtteranceRecord& rec,
                                 const FeatureMap& features,
                                 const std::vector<seqnet::Task>& tasks,
                                 const std::map<std::string, int>& speakers) {
    const auto it = features.find(rec.utterance_id);
    if (it == features.end())
        throw validation_error("no features for utterance '" + rec.utterance_id + "'");
    seqnet::Utterance utt;
    utt.id = rec.utterance_id;
    utt.seq = it->second;
    for (const auto t : tasks) utt.targets[t] = target_for(rec, t);
    utt.speaker_label = speakers.at(rec.speaker_id);
    utt.n_speakers = static_cast<int>(speakers.size());
    return utt;
}

} // namespace

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw validation_error(std::string("experiment config: ") + e.what());
    }
    ExperimentConfig c;
    try {
        const auto& folds = j.at("folds");
        c.k = folds.at("k").get<int>();
        const std::string mode = folds.at("mode").get<std::string>();
        if (mode == "random") c.fold_mode = FoldMode::random;
        else if (mode == "speaker") c.fold_mode = FoldMode::speaker;
        else throw validation_error("folds.mode must be 'random' or 'speaker', got '" + mode + "'");
        c.fold_seed = folds.value("seed", std::uint64_t{0});

        c.spec = seqnet::spec_from_json(j.at("network").dump());

        const auto& tr = j.at("train");
        c.train.learning_rate = tr.at("learning_rate").get<double>();
        c.train.max_epochs = tr.at("max_epochs").get<int>();
        c.train.patience = tr.value("patience", 15);
        c.train.batch = tr.value("batch", 8);
        c.train.seed = tr.value("seed", std::uint64_t{0});
        c.train.adversarial_lambda = tr.value("adversarial_lambda", 0.0);
        c.train.momentum = tr.value("momentum", 0.9);
        c.train.clip_norm = tr.value("clip_norm", 5.0);
        if (tr.contains("task_weights"))
            for (const auto& [key, val] : tr.at("task_weights").items())
                c.train.task_weights[seqnet::task_from_string(key)] = val.get<double>();

        const std::string norm = j.value("normalization", std::string("cdf"));
        if (norm == "cdf") c.normalization = NormMode::cdf_adjust;
        else if (norm == "meanvar") c.normalization = NormMode::meanvar;
        else throw validation_error("normalization must be 'cdf' or 'meanvar', got '" + norm + "'");

        c.tasks.clear();
        for (const auto& t : j.at("tasks")) c.tasks.push_back(seqnet::task_from_string(t));
        if (c.tasks.empty()) throw validation_error("tasks must be non-empty");

        c.adversarial = j.value("adversarial", false);
    } catch (const json::exception& e) {
        throw validation_error(std::string("experiment config: ") + e.what());
    }
    if (c.adversarial) {
        bool has_softmax = false;
        for (const auto& h : c.spec.heads)
            if (h.kind == seqnet::HeadKind::softmax) has_softmax = true;
        if (!has_softmax)
            throw validation_error("experiment config: adversarial=true requires a softmax head");
        if (c.train.adversarial_lambda <= 0.0)
            throw validation_error(
                "experiment config: adversarial=true requires train.adversarial_lambda > 0");
    }
    return c;
}

std::string config_to_json(const ExperimentConfig& c) {
    json j;
    j["folds"] = {{"k", c.k},
                  {"mode", c.fold_mode == FoldMode::random ? "random" : "speaker"},
                  {"seed", c.fold_seed}};
    j["network"] = json::parse(seqnet::spec_to_json(c.spec));
    json tw;
    for (const auto& [task, w] : c.train.task_weights) tw[seqnet::to_string(task)] = w;
    j["train"] = {{"learning_rate", c.train.learning_rate},
                  {"max_epochs", c.train.max_epochs},
                  {"patience", c.train.patience},
                  {"batch", c.train.batch},
                  {"seed", c.train.seed},
                  {"adversarial_lambda", c.train.adversarial_lambda},
                  {"momentum", c.train.momentum},
                  {"clip_norm", c.train.clip_norm}};
    if (!tw.empty()) j["train"]["task_weights"] = tw;
    j["normalization"] = c.normalization == NormMode::cdf_adjust ? "cdf" : "meanvar";
    j["tasks"] = json::array();
    for (const auto t : c.tasks) j["tasks"].push_back(seqnet::to_string(t));
    j["adversarial"] = c.adversarial;
    return j.dump(2);
}

ExperimentConfig load_config(const std::string& path) {
    return config_from_json(csv::read_text(path));
}

void save_predictions(const PredictionSet& preds, const std::string& path) {
    std::ostringstream out;
    out << "utterance_id,task,prediction,n_models\n";
    for (const auto& [task, values] : preds.values) {
        for (const auto& [utt, v] : values) {
            const auto prov = preds.provenance.find(utt);
            const std::size_t n = prov == preds.provenance.end() ? 0 : prov->second.size();
            out << utt << ',' << seqnet::to_string(task) << ',' << csv::format_double(v) << ','
                << n << '\n';
        }
    }
    csv::atomic_write_text(path, out.str());
}

PredictionSet load_predictions(const std::string& path) {
    const csv::Table t = csv::read(path);
    if (t.header != std::vector<std::string>{"utterance_id", "task", "prediction", "n_models"})
        throw validation_error(path + ": bad prediction header");
    PredictionSet preds;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto task = seqnet::task_from_string(t.rows[r][1]);
        const double v = csv::parse_double(t.rows[r][2], path + ":" + std::to_string(r + 2));
        if (!preds.values[task].emplace(t.rows[r][0], v).second)
            throw validation_error(path + ": duplicate prediction for utterance '" +
                                   t.rows[r][0] + "' task " + t.rows[r][1]);
    }
    return preds;
}

std::map<seqnet::Task, metrics::MomentStats> label_moments(
    const dataset::DatasetManifest& manifest, const std::vector<seqnet::Task>& tasks) {
    std::map<seqnet::Task, metrics::MomentStats> stats;
    for (const auto t : tasks) {
        std::vector<double> labels;
        labels.reserve(manifest.records.size());
        for (const auto& rec : manifest.records) labels.push_back(target_for(rec, t));
        stats[t] = metrics::moments(labels);
    }
    return stats;
}

CvResult run_cv(const dataset::DatasetManifest& manifest, const dataset::FoldPlan& plan,
                const FeatureMap& features, const ExperimentConfig& config) {
    for (const auto& rec : manifest.records)
        if (!plan.assignment.count(rec.utterance_id))
            throw validation_error("fold plan misses utterance '" + rec.utterance_id + "'");

    const auto speakers = speaker_index(manifest);
    CvResult result;
    result.train_stats = label_moments(manifest, config.tasks);

    for (int fold = 0; fold < plan.k; ++fold) {
        std::vector<seqnet::Utterance> train_utts, val_utts;
        std::vector<const dataset::UtteranceRecord*> val_recs;
        for (const auto& rec : manifest.records) {
            auto utt = make_utterance(rec, features, config.tasks, speakers);
            if (plan.assignment.at(rec.utterance_id) == fold) {
                val_utts.push_back(std::move(utt));
                val_recs.push_back(&rec);
            } else {
                train_utts.push_back(std::move(utt));
            }
        }
        if (train_utts.empty() || val_utts.empty())
            throw config_error("fold " + std::to_string(fold) + " is empty");

        seqnet::TrainResult trained;
        try {
            trained = seqnet::train_fold(train_utts, val_utts, config.spec, config.train);
        } catch (const numeric_error& e) {
            throw numeric_error("fold " + std::to_string(fold) + ": " + e.what());
        }

        const std::string model_id = "fold" + std::to_string(fold);
        for (const auto& rec : val_recs) {
            const auto preds = seqnet::predict_utterance(config.spec, trained.params,
                                                         features.at(rec->utterance_id));
            for (const auto t : config.tasks)
                result.oof.values[t][rec->utterance_id] = preds.at(t);
            result.oof.provenance[rec->utterance_id] = {model_id};
        }
        result.models.push_back(std::move(trained.params));
        result.histories.push_back(std::move(trained.history));
    }
    return result;
}

PredictionSet predict_ensemble(const seqnet::NetworkSpec& spec,
                               const std::vector<seqnet::NetworkParams>& models,
                               const std::vector<std::string>& utterance_ids,
                               const FeatureMap& features,
                               const std::vector<seqnet::Task>& tasks) {
    if (models.empty()) throw validation_error("predict_ensemble: no models");
    PredictionSet out;
    std::vector<std::string> model_ids;
    for (std::size_t m = 0; m < models.size(); ++m)
        model_ids.push_back("model" + std::to_string(m));
    for (const auto& utt : utterance_ids) {
        const auto fit = features.find(utt);
        if (fit == features.end())
            throw validation_error("predict_ensemble: no features for '" + utt + "'");
        std::map<seqnet::Task, double> sum;
        for (const auto& model : models) {
            const auto preds = seqnet::predict_utterance(spec, model, fit->second);
            for (const auto t : tasks) sum[t] += preds.at(t);
        }
        for (const auto t : tasks)
            out.values[t][utt] = sum[t] / static_cast<double>(models.size());
        out.provenance[utt] = model_ids;
    }
    return out;
}

PredictionSet rescale_set(const PredictionSet& preds,
                          const std::map<seqnet::Task, metrics::MomentStats>& train_stats) {
    PredictionSet out = preds;
    for (auto& [task, values] : out.values) {
        const auto sit = train_stats.find(task);
        if (sit == train_stats.end())
            throw validation_error("rescale_set: no train stats for task " +
                                   seqnet::to_string(task));
        if (values.size() < 2)
            throw validation_error("rescale_set: need at least 2 predictions per task");
        std::vector<double> vec;
        vec.reserve(values.size());
        for (const auto& [utt, v] : values) vec.push_back(v);
        const auto scaled = metrics::scale_predictions(vec, sit->second);
        std::size_t i = 0;
        for (auto& [utt, v] : values) v = scaled[i++];
    }
    return out;
}

PredictionSet fuse(const PredictionSet& a, const PredictionSet& b, seqnet::Task task) {
    const auto ait = a.values.find(task);
    const auto bit = b.values.find(task);
    if (ait == a.values.end() || bit == b.values.end())
        throw validation_error("fuse: task " + seqnet::to_string(task) +
                               " missing from an input set");
    if (ait->second.size() != bit->second.size() ||
        !std::equal(ait->second.begin(), ait->second.end(), bit->second.begin(),
                    [](const auto& x, const auto& y) { return x.first == y.first; })) {
        std::ostringstream msg;
        msg << "fuse: utterance sets differ;";
        for (const auto& [utt, v] : ait->second)
            if (!bit->second.count(utt)) msg << " only-in-a:" << utt;
        for (const auto& [utt, v] : bit->second)
            if (!ait->second.count(utt)) msg << " only-in-b:" << utt;
        throw validation_error(msg.str());
    }
    PredictionSet out;
    for (const auto& [utt, va] : ait->second)
        out.values[task][utt] = (va + bit->second.at(utt)) / 2.0;
    return out;
}

CvResult final_protocol(const dataset::DatasetManifest& train_manifest,
                        const dataset::DatasetManifest& dev_manifest, int k,
                        const FeatureMap& features, const ExperimentConfig& config) {
    dataset::DatasetManifest merged = train_manifest;
    std::set<std::string> ids;
    for (const auto& rec : merged.records) ids.insert(rec.utterance_id);
    for (const auto& rec : dev_manifest.records) {
        if (!ids.insert(rec.utterance_id).second)
            throw validation_error("final_protocol: utterance '" + rec.utterance_id +
                                   "' appears in both manifests");
        merged.records.push_back(rec);
    }
    const auto plan = config.fold_mode == FoldMode::random
                          ? dataset::make_random_folds(merged, k, config.fold_seed)
                          : dataset::make_speaker_folds(merged, k, config.fold_seed);
    return run_cv(merged, plan, features, config);
}

std::vector<ReportRow> report(const PredictionSet& preds,
                              const dataset::DatasetManifest& gold,
                              const std::map<seqnet::Task, metrics::MomentStats>& train_stats) {
    std::map<std::string, const dataset::UtteranceRecord*> by_id;
    for (const auto& rec : gold.records) by_id[rec.utterance_id] = &rec;

    std::vector<ReportRow> rows;
    for (const auto& [task, values] : preds.values) {
        std::vector<double> pred, ref;
        for (const auto& [utt, v] : values) {
            const auto it = by_id.find(utt);
            if (it == by_id.end())
                throw validation_error("report: utterance '" + utt + "' not in gold manifest");
            pred.push_back(v);
            ref.push_back(target_for(*it->second, task));
        }
        if (pred.empty()) throw validation_error("report: no aligned utterances");
        const auto sit = train_stats.find(task);
        if (sit == train_stats.end())
            throw validation_error("report: no train stats for task " + seqnet::to_string(task));
        ReportRow row;
        row.task = task;
        const auto r = metrics::evaluate_report(pred, ref, sit->second);
        row.cc = r.cc;
        row.ccc = r.ccc;
        row.scaled_ccc_train = r.scaled_ccc;
        row.scaled_ccc_self = metrics::ccc(metrics::scale_predictions(pred, metrics::moments(ref)),
                                           ref);
        row.n = pred.size();
        rows.push_back(row);
    }
    return rows;
}

std::string report_to_json(const std::vector<ReportRow>& rows) {
    json j = json::array();
    for (const auto& r : rows)
        j.push_back({{"task", seqnet::to_string(r.task)},
                     {"cc", r.cc},
                     {"ccc", r.ccc},
                     {"scaled_ccc", r.scaled_ccc_train},
                     {"scaled_ccc_self", r.scaled_ccc_self},
                     {"n", r.n}});
    return j.dump(2);
}

std::string report_to_text(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    out << "task      CC        CCC       ScaledCCC  ScaledCCC(self)  n\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-9s %-9.4f %-9.4f %-10.4f %-16.4f %zu\n",
                      seqnet::to_string(r.task).c_str(), r.cc, r.ccc, r.scaled_ccc_train,
                      r.scaled_ccc_self, r.n);
        out << buf;
    }
    return out.str();
}

void save_train_stats(const std::map<seqnet::Task, metrics::MomentStats>& stats,
                      const std::string& path) {
    json j;
    for (const auto& [task, m] : stats)
        j[seqnet::to_string(task)] = {{"mean", m.mean}, {"variance", m.variance},
                                      {"count", m.count}};
    csv::atomic_write_text(path, j.dump(2) + "\n");
}

std::map<seqnet::Task, metrics::MomentStats> load_train_stats(const std::string& path) {
    json j;
    try {
        j = json::parse(csv::read_text(path));
    } catch (const json::exception& e) {
        throw validation_error(path + ": " + e.what());
    }
    std::map<seqnet::Task, metrics::MomentStats> stats;
    for (const auto& [key, val] : j.items()) {
        metrics::MomentStats m;
        m.mean = val.at("mean").get<double>();
        m.variance = val.at("variance").get<double>();
        m.count = val.value("count", std::size_t{0});
        stats[seqnet::task_from_string(key)] = m;
    }
    return stats;
}

} // namespace ccsq::pipeline
