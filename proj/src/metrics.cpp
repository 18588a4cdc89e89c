#include "ccsq/metrics.hpp"

#include "ccsq/errors.hpp"

#include <cmath>
#include <string>

namespace ccsq::metrics {

namespace {

constexpr double kVarEps = 0.0;

void check_pair(const std::vector<double>& pred, const std::vector<double>& ref) {
    if (pred.size() != ref.size())
        throw validation_error("paired series length mismatch: " +
                               std::to_string(pred.size()) + " vs " +
                               std::to_string(ref.size()));
    if (pred.size() < 2)
        throw validation_error("paired series need at least 2 elements");
}

double covariance(const std::vector<double>& x, const std::vector<double>& y,
                  double mx, double my) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - mx) * (y[i] - my);
    return acc / static_cast<double>(x.size());
}

} // namespace

MomentStats moments(const std::vector<double>& x) {
    if (x.empty()) throw validation_error("moments of empty series");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    return {mean, var, x.size()};
}

double pearson_cc(const std::vector<double>& pred, const std::vector<double>& ref) {
    check_pair(pred, ref);
    const MomentStats mp = moments(pred);
    const MomentStats mr = moments(ref);
    if (mp.variance <= kVarEps || mr.variance <= kVarEps)
        throw numeric_error("pearson_cc: zero variance in a series");
    const double cov = covariance(pred, ref, mp.mean, mr.mean);
    return cov / std::sqrt(mp.variance * mr.variance);
}

double ccc(const std::vector<double>& pred, const std::vector<double>& ref) {
    check_pair(pred, ref);
    const MomentStats mp = moments(pred);
    const MomentStats mr = moments(ref);
    const double dm = mp.mean - mr.mean;
    const double denom = mp.variance + mr.variance + dm * dm;
    if (denom == 0.0)
        throw numeric_error("ccc: degenerate pair (both series constant and equal)");
    const double cov = covariance(pred, ref, mp.mean, mr.mean);
    return 2.0 * cov / denom;
}

std::vector<double> scale_predictions(const std::vector<double>& pred,
                                      const MomentStats& target) {
    const MomentStats mp = moments(pred);
    if (mp.variance <= kVarEps)
        throw numeric_error("scale_predictions: constant predictions");
    if (target.variance <= kVarEps)
        throw numeric_error("scale_predictions: target variance must be positive");
    const double scale = std::sqrt(target.variance / mp.variance);
    std::vector<double> out(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        out[i] = (pred[i] - mp.mean) * scale + target.mean;
    return out;
}

LossGrad ccc_loss_grad(const std::vector<double>& pred, const std::vector<double>& ref) {
    check_pair(pred, ref);
    const double n = static_cast<double>(pred.size());
    const MomentStats mp = moments(pred);
    const MomentStats mr = moments(ref);
    const double dm = mp.mean - mr.mean;
    const double denom = mp.variance + mr.variance + dm * dm;
    if (denom == 0.0)
        throw numeric_error("ccc_loss_grad: degenerate pair");
    const double cov = covariance(pred, ref, mp.mean, mr.mean);
    const double c = 2.0 * cov / denom;

    // d ccc / d x_i with population moments:
    //   d cov   = (y_i - my) / n
    //   d var_x = 2 (x_i - mx) / n
    //   d dm    = 1 / n
    LossGrad out;
    out.loss = 1.0 - c;
    out.grad.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dcov = (ref[i] - mr.mean) / n;
        const double ddenom = (2.0 * (pred[i] - mp.mean) + 2.0 * dm) / n;
        const double dccc = (2.0 * dcov * denom - 2.0 * cov * ddenom) / (denom * denom);
        out.grad[i] = -dccc;
    }
    return out;
}

double categorical_cross_entropy(const std::vector<double>& probs, std::size_t label) {
    if (probs.empty() || label >= probs.size())
        throw validation_error("categorical_cross_entropy: label out of range");
    double sum = 0.0;
    for (double p : probs) {
        if (p < 0.0) throw validation_error("categorical_cross_entropy: negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw validation_error("categorical_cross_entropy: probabilities sum to " +
                               std::to_string(sum));
    const double p = std::max(probs[label], 1e-12);
    return -std::log(p);
}

EvalReport evaluate_report(const std::vector<double>& pred,
                           const std::vector<double>& ref,
                           const MomentStats& train_stats) {
    EvalReport r;
    r.cc = pearson_cc(pred, ref);
    r.ccc = ccc(pred, ref);
    r.scaled_ccc = ccc(scale_predictions(pred, train_stats), ref);
    r.n = pred.size();
    return r;
}

} // namespace ccsq::metrics
