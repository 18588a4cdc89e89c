#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace ccsq::normalize {

// All windows of all utterances in one partition, with a map back to the
// originating (utterance, window) per row.
struct RowOrigin {
    std::string utterance_id;
    std::size_t window = 0;
};

struct PartitionFeatureTable {
    Eigen::MatrixXd rows; // N x F
    std::vector<RowOrigin> origins;
    std::string partition = "train";
};

struct NormStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance; // population
    std::vector<bool> degenerate;
};

// Standard normal inverse CDF. Absolute error <= 1e-9 over
// [1e-12, 1-1e-12]. Throws validation_error outside (0,1).
double probit(double p);

// Rank-based Gaussianization: per column, output = probit((rank-0.5)/N)
// with average ranks for ties.
PartitionFeatureTable cdf_adjust(const PartitionFeatureTable& table);

// Per-column (x - mean)/std; columns with std < 1e-12 become all zeros and
// are flagged in the returned stats.
std::pair<PartitionFeatureTable, NormStats> meanvar_standardize(
    const PartitionFeatureTable& table);

PartitionFeatureTable apply_stats(const PartitionFeatureTable& table, const NormStats& stats);

void save_stats(const NormStats& stats, const std::vector<std::string>& feature_names,
                const std::string& path);
NormStats load_stats(const std::string& path, std::vector<std::string>* feature_names = nullptr);

} // namespace ccsq::normalize
