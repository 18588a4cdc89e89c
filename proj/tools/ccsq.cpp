// ccsq: CCC-optimized sequence regression toolkit.
//
// Subcommands cover the file-based pipeline stages: extract, pool,
// normalize, folds, train, predict, fuse, evaluate. Exit codes: 0 ok,
// 1 usage, 2 input validation, 3 numerical error.

#include "ccsq/csv.hpp"
#include "ccsq/dataset.hpp"
#include "ccsq/errors.hpp"
#include "ccsq/features.hpp"
#include "ccsq/metrics.hpp"
#include "ccsq/normalize.hpp"
#include "ccsq/pipeline.hpp"
#include "ccsq/seqnet.hpp"
#include "ccsq/wav.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> read_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ccsq::validation_error("cannot open list file " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

int cmd_extract(const std::string& wav, const std::string& wav_list,
                const std::string& lld_out, const std::string& functionals_out,
                const std::string& extra_lld) {
    std::vector<std::string> wavs;
    if (!wav.empty()) wavs.push_back(wav);
    if (!wav_list.empty()) {
        const auto more = read_list(wav_list);
        wavs.insert(wavs.end(), more.begin(), more.end());
    }
    if (wavs.empty()) throw ccsq::validation_error("extract: need --wav or --wav-list");
    if (!lld_out.empty()) fs::create_directories(lld_out);
    if (!functionals_out.empty()) fs::create_directories(functionals_out);

    std::size_t failures = 0;
    for (const auto& path : wavs) {
        try {
            const auto audio = ccsq::wav::read(path);
            auto lld = ccsq::features::extract_lld(audio.samples, audio.sample_rate);
            if (!extra_lld.empty()) {
                std::string extra_path = extra_lld;
                if (fs::is_directory(extra_lld))
                    extra_path = (fs::path(extra_lld) / (stem_of(path) + ".csv")).string();
                lld = ccsq::features::concat_lld(lld, ccsq::features::load_lld(extra_path));
            }
            if (!lld_out.empty())
                ccsq::features::save_lld(
                    lld, (fs::path(lld_out) / (stem_of(path) + ".csv")).string());
            if (!functionals_out.empty()) {
                const auto seq = ccsq::features::functional_sequence(lld);
                ccsq::features::save_functionals(
                    seq, (fs::path(functionals_out) / (stem_of(path) + ".csv")).string());
            }
        } catch (const std::exception& e) {
            std::cerr << "extract: " << path << ": " << e.what() << "\n";
            ++failures;
        }
    }
    if (failures) {
        std::cerr << "extract: " << failures << " of " << wavs.size() << " files failed\n";
        return 2;
    }
    return 0;
}

int cmd_pool(const std::string& in, const std::string& out) {
    std::vector<std::pair<std::string, std::string>> jobs; // in csv, out csv
    if (fs::is_directory(in)) {
        fs::create_directories(out);
        std::vector<std::string> names;
        for (const auto& entry : fs::directory_iterator(in))
            if (entry.path().extension() == ".csv") names.push_back(entry.path().string());
        std::sort(names.begin(), names.end());
        for (const auto& name : names)
            jobs.emplace_back(name, (fs::path(out) / fs::path(name).filename()).string());
    } else {
        jobs.emplace_back(in, out);
    }
    for (const auto& [src, dst] : jobs) {
        const auto table = ccsq::csv::read_numeric(src);
        const auto meta = json::parse(
            ccsq::csv::read_text(fs::path(src).replace_extension(".json").string()));
        const double frame_rate = meta.at("frame_rate").get<double>();
        Eigen::MatrixXd frames(static_cast<Eigen::Index>(table.rows.size()),
                               static_cast<Eigen::Index>(table.header.size()));
        for (std::size_t r = 0; r < table.rows.size(); ++r)
            for (std::size_t c = 0; c < table.header.size(); ++c)
                frames(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    table.rows[r][c];
        const auto pooled = ccsq::features::pool_embeddings(frames, frame_rate, table.header);
        ccsq::features::save_functionals(pooled, dst);
    }
    return 0;
}

int cmd_normalize(const std::string& in, const std::string& mode, const std::string& partition,
                  const std::string& out, const std::string& stats_out,
                  const std::string& stats_in) {
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(in))
        if (entry.path().extension() == ".csv") names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw ccsq::validation_error("normalize: no CSV files in " + in);

    // Assemble the partition-level table.
    ccsq::normalize::PartitionFeatureTable table;
    table.partition = partition;
    std::vector<ccsq::features::FunctionalSequence> seqs;
    std::size_t total_rows = 0;
    std::vector<std::string> feature_names;
    for (const auto& name : names) {
        auto seq = ccsq::features::load_functionals((fs::path(in) / name).string());
        if (feature_names.empty()) {
            feature_names = seq.feature_names;
        } else if (seq.feature_names != feature_names) {
            throw ccsq::validation_error("normalize: feature width/name mismatch in " + name);
        }
        total_rows += static_cast<std::size_t>(seq.vectors.rows());
        seqs.push_back(std::move(seq));
    }
    table.rows.resize(static_cast<Eigen::Index>(total_rows),
                      static_cast<Eigen::Index>(feature_names.size()));
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        for (Eigen::Index w = 0; w < seqs[i].vectors.rows(); ++w) {
            table.rows.row(row) = seqs[i].vectors.row(w);
            table.origins.push_back({stem_of(names[i]), static_cast<std::size_t>(w)});
            ++row;
        }
    }

    ccsq::normalize::PartitionFeatureTable adjusted;
    if (!stats_in.empty()) {
        adjusted = ccsq::normalize::apply_stats(table, ccsq::normalize::load_stats(stats_in));
    } else if (mode == "cdf") {
        adjusted = ccsq::normalize::cdf_adjust(table);
    } else if (mode == "meanvar") {
        auto [adj, stats] = ccsq::normalize::meanvar_standardize(table);
        adjusted = std::move(adj);
        if (!stats_out.empty()) ccsq::normalize::save_stats(stats, feature_names, stats_out);
    } else {
        throw ccsq::validation_error("normalize: mode must be cdf or meanvar, got '" + mode + "'");
    }

    fs::create_directories(out);
    row = 0;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        ccsq::features::FunctionalSequence norm = seqs[i];
        for (Eigen::Index w = 0; w < norm.vectors.rows(); ++w) norm.vectors.row(w) = adjusted.rows.row(row++);
        const std::string dst = (fs::path(out) / names[i]).string();
        ccsq::features::save_functionals(norm, dst);
        json meta = json::parse(
            ccsq::csv::read_text(fs::path(dst).replace_extension(".json").string()));
        meta["normalization"] = stats_in.empty() ? mode : "stats:" + stats_in;
        meta["partition"] = partition;
        ccsq::csv::atomic_write_text(fs::path(dst).replace_extension(".json").string(),
                                     meta.dump(2) + "\n");
    }
    return 0;
}

int cmd_folds(const std::string& manifest_path, int k, const std::string& mode,
              std::uint64_t seed, const std::string& out) {
    const auto manifest = ccsq::dataset::load_manifest(manifest_path);
    ccsq::dataset::FoldPlan plan;
    if (mode == "random")
        plan = ccsq::dataset::make_random_folds(manifest, k, seed);
    else if (mode == "speaker")
        plan = ccsq::dataset::make_speaker_folds(manifest, k, seed);
    else
        throw ccsq::validation_error("folds: mode must be random or speaker, got '" + mode + "'");
    ccsq::dataset::save_fold_plan(plan, out);
    return 0;
}

ccsq::pipeline::FeatureMap load_features(const ccsq::dataset::DatasetManifest& manifest,
                                         const std::string& features_dir) {
    ccsq::pipeline::FeatureMap features;
    for (const auto& rec : manifest.records) {
        const auto seq = ccsq::features::load_functionals(
            (fs::path(features_dir) / rec.feature_path).string());
        features[rec.utterance_id] = seq.vectors;
    }
    return features;
}

int cmd_train(const std::string& manifest_path, const std::string& features_dir,
              const std::string& config_path, const std::string& models_out,
              const std::string& folds_path) {
    const auto config = ccsq::pipeline::load_config(config_path);
    const auto manifest = ccsq::dataset::load_manifest(manifest_path);
    const auto features = load_features(manifest, features_dir);

    ccsq::dataset::FoldPlan plan;
    if (!folds_path.empty()) {
        plan = ccsq::dataset::load_fold_plan(folds_path);
    } else if (config.fold_mode == ccsq::pipeline::FoldMode::random) {
        plan = ccsq::dataset::make_random_folds(manifest, config.k, config.fold_seed);
    } else {
        plan = ccsq::dataset::make_speaker_folds(manifest, config.k, config.fold_seed);
    }

    const auto result = ccsq::pipeline::run_cv(manifest, plan, features, config);

    fs::create_directories(models_out);
    for (std::size_t i = 0; i < result.models.size(); ++i) {
        ccsq::seqnet::save_params(
            config.spec, result.models[i],
            (fs::path(models_out) / ("fold" + std::to_string(i) + ".ccsq")).string());
        ccsq::seqnet::save_history(
            result.histories[i],
            (fs::path(models_out) / ("history" + std::to_string(i) + ".csv")).string());
    }
    ccsq::dataset::save_fold_plan(plan, (fs::path(models_out) / "folds.csv").string());
    ccsq::pipeline::save_predictions(result.oof,
                                     (fs::path(models_out) / "oof_predictions.csv").string());
    ccsq::pipeline::save_train_stats(result.train_stats,
                                     (fs::path(models_out) / "train_stats.json").string());
    return 0;
}

int cmd_predict(const std::string& manifest_path, const std::string& features_dir,
                const std::string& models_dir, const std::string& out,
                const std::string& rescale) {
    const auto manifest = ccsq::dataset::load_manifest(manifest_path);
    const auto features = load_features(manifest, features_dir);

    std::vector<std::string> model_files;
    for (const auto& entry : fs::directory_iterator(models_dir))
        if (entry.path().extension() == ".ccsq") model_files.push_back(entry.path().string());
    std::sort(model_files.begin(), model_files.end());
    if (model_files.empty())
        throw ccsq::validation_error("predict: no .ccsq models in " + models_dir);

    ccsq::seqnet::NetworkSpec spec;
    std::vector<ccsq::seqnet::NetworkParams> models;
    for (std::size_t i = 0; i < model_files.size(); ++i) {
        auto [s, p] = ccsq::seqnet::load_params(model_files[i]);
        if (i == 0) {
            spec = s;
        } else if (ccsq::seqnet::spec_to_json(s) != ccsq::seqnet::spec_to_json(spec)) {
            throw ccsq::validation_error("predict: model spec mismatch in " + model_files[i]);
        }
        models.push_back(std::move(p));
    }
    std::vector<ccsq::seqnet::Task> tasks;
    for (const auto& h : spec.heads)
        if (h.task != ccsq::seqnet::Task::speaker) tasks.push_back(h.task);

    std::vector<std::string> ids;
    for (const auto& rec : manifest.records) ids.push_back(rec.utterance_id);
    auto preds = ccsq::pipeline::predict_ensemble(spec, models, ids, features, tasks);
    if (!rescale.empty())
        preds = ccsq::pipeline::rescale_set(preds, ccsq::pipeline::load_train_stats(rescale));
    ccsq::pipeline::save_predictions(preds, out);
    return 0;
}

int cmd_fuse(const std::string& a, const std::string& b, const std::string& task,
             const std::string& out) {
    const auto pa = ccsq::pipeline::load_predictions(a);
    const auto pb = ccsq::pipeline::load_predictions(b);
    const auto fused = ccsq::pipeline::fuse(pa, pb, ccsq::seqnet::task_from_string(task));
    ccsq::pipeline::save_predictions(fused, out);
    return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& manifest_path,
                 const std::string& stats_path, const std::string& out) {
    const auto preds = ccsq::pipeline::load_predictions(pred_path);
    const auto gold = ccsq::dataset::load_manifest(manifest_path);
    const auto stats = ccsq::pipeline::load_train_stats(stats_path);
    const auto rows = ccsq::pipeline::report(preds, gold, stats);
    if (!out.empty())
        ccsq::csv::atomic_write_text(out, ccsq::pipeline::report_to_json(rows) + "\n");
    std::cout << ccsq::pipeline::report_to_text(rows);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CCC-optimized dimensional-emotion sequence regression toolkit"};
    app.require_subcommand(1);

    std::string wav, wav_list, lld_out, functionals_out, extra_lld;
    auto* extract = app.add_subcommand("extract", "Extract LLDs and windowed functionals");
    extract->add_option("--wav", wav);
    extract->add_option("--wav-list", wav_list);
    extract->add_option("--lld-out", lld_out);
    extract->add_option("--functionals-out", functionals_out);
    extract->add_option("--extra-lld", extra_lld);

    std::string pool_in, pool_out;
    auto* pool = app.add_subcommand("pool", "Mean-pool per-frame embeddings over 2s/1s windows");
    pool->add_option("--in", pool_in)->required();
    pool->add_option("--out", pool_out)->required();

    std::string norm_in, norm_mode = "cdf", norm_partition = "train", norm_out, stats_out,
                stats_in;
    auto* normalize = app.add_subcommand("normalize", "Per-partition feature normalization");
    normalize->add_option("--in", norm_in)->required();
    normalize->add_option("--mode", norm_mode);
    normalize->add_option("--partition", norm_partition);
    normalize->add_option("--out", norm_out)->required();
    normalize->add_option("--stats-out", stats_out);
    normalize->add_option("--stats-in", stats_in);

    std::string folds_manifest, folds_mode = "random", folds_out;
    int folds_k = 6;
    std::uint64_t folds_seed = 0;
    auto* folds = app.add_subcommand("folds", "Build a cross-validation fold plan");
    folds->add_option("--manifest", folds_manifest)->required();
    folds->add_option("--k", folds_k);
    folds->add_option("--mode", folds_mode);
    folds->add_option("--seed", folds_seed);
    folds->add_option("--out", folds_out)->required();

    std::string train_manifest, train_features, train_config, models_out, train_folds;
    auto* train = app.add_subcommand("train", "Cross-validation training");
    train->add_option("--manifest", train_manifest)->required();
    train->add_option("--features", train_features)->required();
    train->add_option("--config", train_config)->required();
    train->add_option("--models-out", models_out)->required();
    train->add_option("--folds", train_folds);

    std::string pred_manifest, pred_features, pred_models, pred_out, pred_rescale;
    auto* predict = app.add_subcommand("predict", "Ensemble prediction");
    predict->add_option("--manifest", pred_manifest)->required();
    predict->add_option("--features", pred_features)->required();
    predict->add_option("--models", pred_models)->required();
    predict->add_option("--out", pred_out)->required();
    predict->add_option("--rescale", pred_rescale);

    std::string fuse_a, fuse_b, fuse_task, fuse_out;
    auto* fuse = app.add_subcommand("fuse", "Average two prediction sets");
    fuse->add_option("--a", fuse_a)->required();
    fuse->add_option("--b", fuse_b)->required();
    fuse->add_option("--task", fuse_task)->required();
    fuse->add_option("--out", fuse_out)->required();

    std::string eval_pred, eval_manifest, eval_stats, eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "CC / CCC / scaled-CCC report");
    evaluate->add_option("--pred", eval_pred)->required();
    evaluate->add_option("--manifest", eval_manifest)->required();
    evaluate->add_option("--train-stats", eval_stats)->required();
    evaluate->add_option("--out", eval_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        if (extract->parsed())
            return cmd_extract(wav, wav_list, lld_out, functionals_out, extra_lld);
        if (pool->parsed()) return cmd_pool(pool_in, pool_out);
        if (normalize->parsed())
            return cmd_normalize(norm_in, norm_mode, norm_partition, norm_out, stats_out,
                                 stats_in);
        if (folds->parsed())
            return cmd_folds(folds_manifest, folds_k, folds_mode, folds_seed, folds_out);
        if (train->parsed())
            return cmd_train(train_manifest, train_features, train_config, models_out,
                             train_folds);
        if (predict->parsed())
            return cmd_predict(pred_manifest, pred_features, pred_models, pred_out, pred_rescale);
        if (fuse->parsed()) return cmd_fuse(fuse_a, fuse_b, fuse_task, fuse_out);
        if (evaluate->parsed()) return cmd_evaluate(eval_pred, eval_manifest, eval_stats, eval_out);
    } catch (const ccsq::numeric_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
