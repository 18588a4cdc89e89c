#include "ccsq/normalize.hpp"

#include "ccsq/csv.hpp"
#include "ccsq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ccsq::normalize {

namespace {

// Acklam's rational approximation for the normal quantile (~1.15e-9
// relative), tightened with two Halley steps through erfc.
double probit_estimate(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

double halley_step(double x, double p) {
    const double e = norm_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

} // namespace

double probit(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw validation_error("probit: p must lie in (0,1), got " + csv::format_double(p));
    // Refine in the lower half only: there norm_cdf(x) is a small number
    // computed through erfc at full relative precision, so the Halley
    // residual does not cancel. The upper half follows by antisymmetry.
    if (p > 0.5) return -probit(1.0 - p);
    double x = probit_estimate(p);
    x = halley_step(x, p);
    x = halley_step(x, p);
    return x;
}

namespace {

void check_table(const PartitionFeatureTable& table) {
    if (table.rows.rows() < 2)
        throw validation_error("partition table needs at least 2 rows");
    if (!table.rows.allFinite())
        throw validation_error("partition table contains non-finite values");
}

} // namespace

PartitionFeatureTable cdf_adjust(const PartitionFeatureTable& table) {
    check_table(table);
    const Eigen::Index n = table.rows.rows();
    PartitionFeatureTable out = table;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index f = 0; f < table.rows.cols(); ++f) {
        for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return table.rows(a, f) < table.rows(b, f);
        });
        // Average ranks over tie runs; 1-based ranks.
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j + 1 < order.size() &&
                   table.rows(order[j + 1], f) == table.rows(order[i], f))
                ++j;
            const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            const double z = probit((avg_rank - 0.5) / static_cast<double>(n));
            for (std::size_t t = i; t <= j; ++t) out.rows(order[t], f) = z;
            i = j + 1;
        }
    }
    return out;
}

std::pair<PartitionFeatureTable, NormStats> meanvar_standardize(
    const PartitionFeatureTable& table) {
    check_table(table);
    const double n = static_cast<double>(table.rows.rows());
    NormStats stats;
    stats.mean = table.rows.colwise().mean();
    stats.variance = (table.rows.rowwise() - stats.mean.transpose())
                         .array()
                         .square()
                         .colwise()
                         .sum() /
                     n;
    stats.degenerate.resize(static_cast<std::size_t>(table.rows.cols()));
    for (Eigen::Index f = 0; f < table.rows.cols(); ++f)
        stats.degenerate[static_cast<std::size_t>(f)] = std::sqrt(stats.variance(f)) < 1e-12;
    return {apply_stats(table, stats), stats};
}

PartitionFeatureTable apply_stats(const PartitionFeatureTable& table, const NormStats& stats) {
    if (table.rows.cols() != stats.mean.size())
        throw validation_error("apply_stats: feature count mismatch: table has " +
                               std::to_string(table.rows.cols()) + ", stats have " +
                               std::to_string(stats.mean.size()));
    PartitionFeatureTable out = table;
    for (Eigen::Index f = 0; f < table.rows.cols(); ++f) {
        const double sd = std::sqrt(stats.variance(f));
        if (sd < 1e-12) {
            out.rows.col(f).setZero();
        } else {
            out.rows.col(f) = (table.rows.col(f).array() - stats.mean(f)) / sd;
        }
    }
    return out;
}

void save_stats(const NormStats& stats, const std::vector<std::string>& feature_names,
                const std::string& path) {
    std::ostringstream out;
    out << "feature,mean,variance\n";
    for (Eigen::Index f = 0; f < stats.mean.size(); ++f) {
        const std::string name = f < static_cast<Eigen::Index>(feature_names.size())
                                     ? feature_names[static_cast<std::size_t>(f)]
                                     : "f" + std::to_string(f);
        out << name << ',' << csv::format_double(stats.mean(f)) << ','
            << csv::format_double(stats.variance(f)) << '\n';
    }
    csv::atomic_write_text(path, out.str());
}

NormStats load_stats(const std::string& path, std::vector<std::string>* feature_names) {
    const csv::Table t = csv::read(path);
    if (t.header != std::vector<std::string>{"feature", "mean", "variance"})
        throw validation_error(path + ": bad stats header");
    NormStats stats;
    stats.mean.resize(static_cast<Eigen::Index>(t.rows.size()));
    stats.variance.resize(static_cast<Eigen::Index>(t.rows.size()));
    stats.degenerate.resize(t.rows.size());
    if (feature_names) feature_names->clear();
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (feature_names) feature_names->push_back(t.rows[r][0]);
        stats.mean(static_cast<Eigen::Index>(r)) =
            csv::parse_double(t.rows[r][1], path + " mean");
        stats.variance(static_cast<Eigen::Index>(r)) =
            csv::parse_double(t.rows[r][2], path + " variance");
        stats.degenerate[r] = std::sqrt(stats.variance(static_cast<Eigen::Index>(r))) < 1e-12;
    }
    return stats;
}

} // namespace ccsq::normalize
