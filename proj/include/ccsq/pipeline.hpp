#pragma once

#include "ccsq/dataset.hpp"
#include "ccsq/metrics.hpp"
#include "ccsq/seqnet.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace ccsq::pipeline {

enum class FoldMode { random, speaker };
enum class NormMode { cdf_adjust, meanvar };

struct ExperimentConfig {
    int k = 6;
    FoldMode fold_mode = FoldMode::random;
    std::uint64_t fold_seed = 0;
    seqnet::NetworkSpec spec;
    seqnet::TrainConfig train;
    NormMode normalization = NormMode::cdf_adjust;
    std::vector<seqnet::Task> tasks = {seqnet::Task::arousal};
    bool adversarial = false;
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);

// Per-task predictions keyed by utterance, with the contributing model ids.
struct PredictionSet {
    std::map<seqnet::Task, std::map<std::string, double>> values;
    std::map<std::string, std::vector<std::string>> provenance;
};

void save_predictions(const PredictionSet& preds, const std::string& path);
PredictionSet load_predictions(const std::string& path);

// utterance_id -> feature sequence (W x F)
using FeatureMap = std::map<std::string, Eigen::MatrixXd>;

struct CvResult {
    std::vector<seqnet::NetworkParams> models;
    PredictionSet oof;
    std::map<seqnet::Task, metrics::MomentStats> train_stats;
    std::vector<std::vector<seqnet::EpochRecord>> histories;
};

// Per fold i: train on the other k-1 folds with fold i for validation and
// early stopping; out-of-fold predictions come from the holding-out model.
CvResult run_cv(const dataset::DatasetManifest& manifest, const dataset::FoldPlan& plan,
                const FeatureMap& features, const ExperimentConfig& config);

PredictionSet predict_ensemble(const seqnet::NetworkSpec& spec,
                               const std::vector<seqnet::NetworkParams>& models,
                               const std::vector<std::string>& utterance_ids,
                               const FeatureMap& features,
                               const std::vector<seqnet::Task>& tasks);

PredictionSet rescale_set(const PredictionSet& preds,
                          const std::map<seqnet::Task, metrics::MomentStats>& train_stats);

// Unweighted average of two prediction sets for one task.
PredictionSet fuse(const PredictionSet& a, const PredictionSet& b, seqnet::Task task);

// Merges train and dev manifests, folds them per config, and runs run_cv;
// the k returned models are the test-time ensemble.
CvResult final_protocol(const dataset::DatasetManifest& train_manifest,
                        const dataset::DatasetManifest& dev_manifest, int k,
                        const FeatureMap& features, const ExperimentConfig& config);

struct ReportRow {
    seqnet::Task task = seqnet::Task::arousal;
    double cc = 0.0;
    double ccc = 0.0;
    double scaled_ccc_train = 0.0; // rescaled to training-fold label moments
    double scaled_ccc_self = 0.0;  // rescaled to the reference's own moments
    std::size_t n = 0;
};

std::vector<ReportRow> report(const PredictionSet& preds,
                              const dataset::DatasetManifest& gold,
                              const std::map<seqnet::Task, metrics::MomentStats>& train_stats);

std::string report_to_json(const std::vector<ReportRow>& rows);
std::string report_to_text(const std::vector<ReportRow>& rows);

std::map<seqnet::Task, metrics::MomentStats> label_moments(
    const dataset::DatasetManifest& manifest, const std::vector<seqnet::Task>& tasks);

void save_train_stats(const std::map<seqnet::Task, metrics::MomentStats>& stats,
                      const std::string& path);
std::map<seqnet::Task, metrics::MomentStats> load_train_stats(const std::string& path);

} // namespace ccsq::pipeline
