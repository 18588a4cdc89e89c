#pragma once

#include <cstddef>
#include <vector>

namespace ccsq::metrics {

// Population moments (divide by N).
struct MomentStats {
    double mean = 0.0;
    double variance = 0.0;
    std::size_t count = 0;
};

struct EvalReport {
    double cc = 0.0;
    double ccc = 0.0;
    double scaled_ccc = 0.0;
    std::size_t n = 0;
};

MomentStats moments(const std::vector<double>& x);

// Pearson correlation from population moments. Throws numeric_error if
// either series is constant.
double pearson_cc(const std::vector<double>& pred, const std::vector<double>& ref);

// Lin's concordance correlation coefficient:
//   2*cov / (var_x + var_y + (mean_x - mean_y)^2)
// Throws numeric_error when both series are constant with equal means
// (zero denominator).
double ccc(const std::vector<double>& pred, const std::vector<double>& ref);

// Affine rescale of pred to the target mean/variance.
std::vector<double> scale_predictions(const std::vector<double>& pred,
                                      const MomentStats& target);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

// Training loss 1 - CCC with its exact gradient w.r.t. each prediction.
LossGrad ccc_loss_grad(const std::vector<double>& pred, const std::vector<double>& ref);

// -ln(probs[label]) with the selected probability floored at 1e-12.
double categorical_cross_entropy(const std::vector<double>& probs, std::size_t label);

EvalReport evaluate_report(const std::vector<double>& pred,
                           const std::vector<double>& ref,
                           const MomentStats& train_stats);

} // namespace ccsq::metrics
