#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace ccsq::features {

// Time-major matrix of low-level descriptors at a fixed frame rate.
struct LldMatrix {
    Eigen::MatrixXd values; // T x D
    double frame_period_s = 0.01;
    std::vector<std::string> descriptor_names;
};

// Per-utterance sequence of window-level feature vectors.
struct FunctionalSequence {
    Eigen::MatrixXd vectors; // W x F
    double window_s = 2.0;
    double step_s = 1.0;
    std::vector<std::string> feature_names;
};

// Frame geometry shared by framing, functionals, and pooling:
// count = floor((N - L) / H) + 1, no padding.
struct FrameSpec {
    std::size_t length = 0;
    std::size_t hop = 0;
    std::size_t count = 0;
};

FrameSpec frame_geometry(std::size_t n, std::size_t length, std::size_t hop);

std::vector<std::vector<double>> frame_signal(const std::vector<double>& samples,
                                              int sample_rate, double win_s, double hop_s);

// The 29 built-in descriptors, in fixed order (see descriptor_names of the
// result): rms_energy, zcr, mfcc1..14, band energies, roll-offs, flux,
// centroid, entropy, slope, variance, skewness, kurtosis.
LldMatrix extract_lld(const std::vector<double>& samples, int sample_rate,
                      double win_s = 0.06, double hop_s = 0.01);

// First-order difference with a zero first frame; names suffixed ".delta".
LldMatrix delta(const LldMatrix& m);

// Nine functionals of a segment, in order: mean, population std, linear
// slope, linear MSE, quadratic leading coefficient, quadratic MSE,
// P99-P1, P6, P94. Percentiles interpolate at p*(n-1) on sorted data.
std::array<double, 9> functionals_window(const std::vector<double>& segment);

inline constexpr std::array<const char*, 9> kFunctionalNames = {
    "mean", "std", "linslope", "linerr", "quada", "quaderr", "pctlrange1-99", "pctl6", "pctl94"};

// Windows of win_s with hop step_s over the LLD matrix; utterances shorter
// than one window produce a single window over all frames. Output width is
// 18*D: per descriptor, 9 functionals of the LLD then 9 of its delta.
FunctionalSequence functional_sequence(const LldMatrix& m, double win_s = 2.0,
                                       double step_s = 1.0);

// Mean-pools embedding rows with the same window geometry; F = E.
FunctionalSequence pool_embeddings(const Eigen::MatrixXd& frames, double frame_rate,
                                   const std::vector<std::string>& names,
                                   double win_s = 2.0, double step_s = 1.0);

// Column-concatenates externally computed descriptors; frame counts must
// match (frame periods are the caller's responsibility to align).
LldMatrix concat_lld(const LldMatrix& a, const LldMatrix& b);

// CSV + sidecar persistence (see README for the layout).
void save_lld(const LldMatrix& m, const std::string& csv_path);
LldMatrix load_lld(const std::string& csv_path);
void save_functionals(const FunctionalSequence& f, const std::string& csv_path);
FunctionalSequence load_functionals(const std::string& csv_path);

} // namespace ccsq::features
