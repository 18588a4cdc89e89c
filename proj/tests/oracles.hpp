// Independent reference implementations used to freeze expected values.
// Everything here is deliberately brute force and shares no code with the
// library paths it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

// Brute-force population moments in extended precision.
struct Moments {
    double mean;
    double var;
};

inline Moments brute_moments(const std::vector<double>& x) {
    long double sum = 0.0L;
    for (double v : x) sum += v;
    const long double mean = sum / static_cast<long double>(x.size());
    long double var = 0.0L;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<long double>(x.size());
    return {static_cast<double>(mean), static_cast<double>(var)};
}

inline double brute_cov(const std::vector<double>& x, const std::vector<double>& y) {
    const auto mx = brute_moments(x), my = brute_moments(y);
    long double acc = 0.0L;
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += (x[i] - static_cast<long double>(mx.mean)) *
               (y[i] - static_cast<long double>(my.mean));
    return static_cast<double>(acc / static_cast<long double>(x.size()));
}

inline double brute_cc(const std::vector<double>& x, const std::vector<double>& y) {
    const auto mx = brute_moments(x), my = brute_moments(y);
    return brute_cov(x, y) / std::sqrt(mx.var * my.var);
}

inline double brute_ccc(const std::vector<double>& x, const std::vector<double>& y) {
    const auto mx = brute_moments(x), my = brute_moments(y);
    const double dm = mx.mean - my.mean;
    return 2.0 * brute_cov(x, y) / (mx.var + my.var + dm * dm);
}

// Central finite differences of an arbitrary scalar function of a
// parameter vector.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> params, double step = 1e-6) {
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = params[i];
        params[i] = orig + step;
        const double up = f(params);
        params[i] = orig - step;
        const double down = f(params);
        params[i] = orig;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

// Worst relative disagreement between an analytic gradient and its finite
// difference, with an absolute floor for near-zero entries.
inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& numeric, double floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

// High-precision standard normal quantile by bisection on Phi (erfc).
inline double probit_bisect(double p) {
    // Bisect only in the lower half, where the long-double cdf keeps full
    // relative precision; mirror the upper half (1 - p is exact there).
    if (p > 0.5) return -probit_bisect(1.0 - p);
    auto cdf = [](double x) { return 0.5L * erfcl(-static_cast<long double>(x) / std::sqrt(2.0L)); };
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = (lo + hi) / 2.0;
        if (cdf(mid) < static_cast<long double>(p)) lo = mid;
        else hi = mid;
    }
    return (lo + hi) / 2.0;
}

// Least-squares polynomial fit by explicit normal equations with Gaussian
// elimination; returns coefficients of 1, tau, tau^2, ... up to degree.
inline std::vector<double> polyfit_normal_equations(const std::vector<double>& y, int degree) {
    const int m = degree + 1;
    std::vector<std::vector<long double>> a(static_cast<std::size_t>(m),
                                            std::vector<long double>(static_cast<std::size_t>(m + 1), 0.0L));
    for (std::size_t i = 0; i < y.size(); ++i) {
        long double powers[16];
        powers[0] = 1.0L;
        for (int d = 1; d < 2 * m; ++d) powers[d] = powers[d - 1] * static_cast<long double>(i);
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < m; ++c) a[r][c] += powers[r + c];
            a[r][m] += powers[r] * static_cast<long double>(y[i]);
        }
    }
    for (int col = 0; col < m; ++col) {
        int pivot = col;
        for (int r = col + 1; r < m; ++r)
            if (std::abs(static_cast<double>(a[r][col])) >
                std::abs(static_cast<double>(a[pivot][col])))
                pivot = r;
        std::swap(a[col], a[pivot]);
        for (int r = 0; r < m; ++r) {
            if (r == col) continue;
            const long double factor = a[r][col] / a[col][col];
            for (int c = col; c <= m; ++c) a[r][c] -= factor * a[col][c];
        }
    }
    std::vector<double> coef(static_cast<std::size_t>(m));
    for (int r = 0; r < m; ++r) coef[static_cast<std::size_t>(r)] =
        static_cast<double>(a[r][m] / a[r][r]);
    return coef;
}

} // namespace oracle
