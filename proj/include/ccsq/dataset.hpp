#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ccsq::dataset {

enum class Partition { train, dev, test };

std::string to_string(Partition p);
Partition partition_from_string(const std::string& s);

struct UtteranceRecord {
    std::string utterance_id;
    std::string video_id;
    std::string speaker_id;
    double arousal = 0.0; // in [-1, 1] after remapping
    double valence = 0.0; // in [-1, 1]
    std::string feature_path;
};

struct DatasetManifest {
    Partition partition = Partition::train;
    std::vector<UtteranceRecord> records;
};

struct FoldPlan {
    int k = 0;
    std::map<std::string, int> assignment; // utterance_id -> fold index
    bool speaker_disjoint = false;
    std::uint64_t seed = 0;
};

// Affine map [0,1] -> [-1,1]. Throws validation_error outside [0,1].
double map_arousal(double raw);

// Parses the manifest CSV (see README for the schema). Arousal columns
// declared `unit` are remapped to [-1,1] on load.
DatasetManifest load_manifest(const std::string& path,
                              Partition partition = Partition::train);

FoldPlan make_random_folds(const DatasetManifest& manifest, int k, std::uint64_t seed);

// Greedy balancer: speakers sorted by utterance count (desc, ties by id)
// are placed into the currently smallest fold.
FoldPlan make_speaker_folds(const DatasetManifest& manifest, int k, std::uint64_t seed);

void save_fold_plan(const FoldPlan& plan, const std::string& path);
FoldPlan load_fold_plan(const std::string& path);

} // namespace ccsq::dataset
