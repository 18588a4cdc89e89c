#include "ccsq/normalize.hpp"

#include "ccsq/errors.hpp"
#include "ccsq/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace ccsq;
using normalize::PartitionFeatureTable;

namespace {

PartitionFeatureTable table_from(const std::vector<std::vector<double>>& rows) {
    PartitionFeatureTable t;
    t.rows.resize(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            t.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    t.origins.resize(rows.size());
    return t;
}

} // namespace

TEST_CASE("probit basics and accuracy") {
    CHECK(normalize::probit(0.5) == doctest::Approx(0.0));
    // frozen from the bisection oracle
    CHECK(normalize::probit(1.0 / 6.0) == doctest::Approx(-0.9674215661017014).epsilon(1e-9));
    CHECK(normalize::probit(5.0 / 6.0) == doctest::Approx(0.9674215661017014).epsilon(1e-9));
    CHECK_THROWS_AS(normalize::probit(0.0), validation_error);
    CHECK_THROWS_AS(normalize::probit(1.0), validation_error);
    CHECK_THROWS_AS(normalize::probit(-0.2), validation_error);

    // absolute error <= 1e-9 across the contract range
    Rng rng(2);
    for (int i = 0; i < 500; ++i) {
        const double u = rng.uniform01();
        const double p = std::pow(10.0, -12.0 * u); // log-uniform in [1e-12, 1]
        for (double q : {p, 1.0 - p}) {
            if (q <= 0.0 || q >= 1.0) continue;
            CHECK(std::abs(normalize::probit(q) - oracle::probit_bisect(q)) < 1e-9);
        }
    }
}

TEST_CASE("probit antisymmetry") {
    Rng rng(6);
    for (int i = 0; i < 1000; ++i) {
        const double p = rng.uniform(1e-9, 1.0 - 1e-9);
        CHECK(normalize::probit(p) + normalize::probit(1.0 - p) ==
              doctest::Approx(0.0).epsilon(0).scale(1).epsilon(1e-12));
    }
}

TEST_CASE("cdf_adjust examples") {
    // column [5,2,9]: ranks {2,1,3} -> probit({0.5, 1/6, 5/6})
    const auto out = normalize::cdf_adjust(table_from({{5}, {2}, {9}}));
    CHECK(out.rows(0, 0) == doctest::Approx(0.0));
    CHECK(out.rows(1, 0) == doctest::Approx(-0.9674215661017014).epsilon(1e-9));
    CHECK(out.rows(2, 0) == doctest::Approx(0.9674215661017014).epsilon(1e-9));

    // constant column: all ties, p = 0.5
    const auto c = normalize::cdf_adjust(table_from({{3}, {3}, {3}, {3}}));
    for (int r = 0; r < 4; ++r) CHECK(c.rows(r, 0) == doctest::Approx(0.0));

    // strictly increasing column maps to the plotting positions directly
    const std::size_t n = 25;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n; ++i) rows.push_back({static_cast<double>(i) * 2.0});
    const auto inc = normalize::cdf_adjust(table_from(rows));
    for (std::size_t i = 0; i < n; ++i)
        CHECK(inc.rows(static_cast<Eigen::Index>(i), 0) ==
              doctest::Approx(normalize::probit((static_cast<double>(i) + 0.5) / n))
                  .epsilon(1e-12));
}

TEST_CASE("cdf_adjust: rank preservation and monotone-transform invariance") {
    Rng rng(14);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 10 + rng.index(200);
        PartitionFeatureTable t;
        t.rows.resize(static_cast<Eigen::Index>(n), 2);
        for (Eigen::Index r = 0; r < t.rows.rows(); ++r) {
            t.rows(r, 0) = rng.uniform(-3.0, 3.0);
            t.rows(r, 1) = rng.index(6); // ties likely
        }
        t.origins.resize(n);
        const auto out = normalize::cdf_adjust(t);

        for (Eigen::Index i = 0; i < t.rows.rows(); ++i)
            for (Eigen::Index j = 0; j < t.rows.rows(); ++j)
                for (int f = 0; f < 2; ++f) {
                    if (t.rows(i, f) < t.rows(j, f)) CHECK(out.rows(i, f) < out.rows(j, f));
                    if (t.rows(i, f) == t.rows(j, f)) CHECK(out.rows(i, f) == out.rows(j, f));
                }

        // strictly monotone transforms leave the output unchanged
        PartitionFeatureTable warped = t;
        const int which = static_cast<int>(trial % 3);
        for (Eigen::Index r = 0; r < warped.rows.rows(); ++r)
            for (int f = 0; f < 2; ++f) {
                const double x = t.rows(r, f);
                warped.rows(r, f) = which == 0   ? std::exp(x)
                                    : which == 1 ? x * x * x
                                                 : 3.0 * x + 1.0;
            }
        const auto wout = normalize::cdf_adjust(warped);
        CHECK((wout.rows - out.rows).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("cdf_adjust: bounded extremes and near-zero mean") {
    Rng rng(15);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 50 + rng.index(2000);
        PartitionFeatureTable t;
        t.rows.resize(static_cast<Eigen::Index>(n), 1);
        for (Eigen::Index r = 0; r < t.rows.rows(); ++r)
            t.rows(r, 0) = std::exp(rng.uniform(-4.0, 4.0)); // heavy tails on purpose
        t.origins.resize(n);
        const auto out = normalize::cdf_adjust(t);
        const double bound = normalize::probit(1.0 - 0.5 / static_cast<double>(n));
        CHECK(out.rows.col(0).maxCoeff() <= bound + 1e-12);
        CHECK(out.rows.col(0).minCoeff() >= -bound - 1e-12);
        CHECK(std::abs(out.rows.col(0).mean()) < 3.0 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("cdf_adjust is idempotent") {
    Rng rng(16);
    PartitionFeatureTable t;
    t.rows.resize(300, 3);
    for (Eigen::Index r = 0; r < t.rows.rows(); ++r)
        for (Eigen::Index c = 0; c < 3; ++c) t.rows(r, c) = rng.uniform(-1.0, 1.0);
    t.origins.resize(300);
    const auto once = normalize::cdf_adjust(t);
    const auto twice = normalize::cdf_adjust(once);
    CHECK((twice.rows - once.rows).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("meanvar_standardize") {
    const auto [out, stats] = normalize::meanvar_standardize(table_from({{0}, {2}}));
    CHECK(out.rows(0, 0) == doctest::Approx(-1.0));
    CHECK(out.rows(1, 0) == doctest::Approx(1.0));
    CHECK_FALSE(stats.degenerate[0]);

    const auto [cz, cstats] = normalize::meanvar_standardize(table_from({{7}, {7}, {7}}));
    CHECK(cstats.degenerate[0]);
    for (int r = 0; r < 3; ++r) CHECK(cz.rows(r, 0) == 0.0);

    Rng rng(19);
    PartitionFeatureTable t;
    t.rows.resize(200, 4);
    for (Eigen::Index r = 0; r < t.rows.rows(); ++r)
        for (Eigen::Index c = 0; c < 4; ++c) t.rows(r, c) = rng.uniform(-9.0, 5.0);
    t.origins.resize(200);
    const auto [norm, nstats] = normalize::meanvar_standardize(t);
    for (Eigen::Index c = 0; c < 4; ++c) {
        CHECK(std::abs(norm.rows.col(c).mean()) < 1e-10);
        const double var = norm.rows.col(c).array().square().mean() -
                           norm.rows.col(c).mean() * norm.rows.col(c).mean();
        CHECK(var == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("apply_stats") {
    Rng rng(23);
    PartitionFeatureTable t;
    t.rows.resize(50, 2);
    for (Eigen::Index r = 0; r < 50; ++r)
        for (Eigen::Index c = 0; c < 2; ++c) t.rows(r, c) = rng.uniform(0.0, 10.0);
    t.origins.resize(50);

    normalize::NormStats identity;
    identity.mean = Eigen::VectorXd::Zero(2);
    identity.variance = Eigen::VectorXd::Ones(2);
    identity.degenerate = {false, false};
    const auto same = normalize::apply_stats(t, identity);
    CHECK((same.rows - t.rows).cwiseAbs().maxCoeff() == 0.0);

    const auto [std_t, stats] = normalize::meanvar_standardize(t);
    const auto applied = normalize::apply_stats(t, stats);
    CHECK((applied.rows - std_t.rows).cwiseAbs().maxCoeff() < 1e-12);

    normalize::NormStats wrong = stats;
    wrong.mean = Eigen::VectorXd::Zero(3);
    wrong.variance = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(normalize::apply_stats(t, wrong), validation_error);
}

TEST_CASE("NormStats round trip") {
    normalize::NormStats stats;
    stats.mean = Eigen::Vector3d(1.0, -2.5, 0.0);
    stats.variance = Eigen::Vector3d(4.0, 0.25, 1e-30);
    stats.degenerate = {false, false, true};
    const auto path = (std::filesystem::temp_directory_path() / "stats.csv").string();
    normalize::save_stats(stats, {"a", "b", "c"}, path);
    std::vector<std::string> names;
    const auto loaded = normalize::load_stats(path, &names);
    CHECK(names == std::vector<std::string>{"a", "b", "c"});
    CHECK((loaded.mean - stats.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.variance - stats.variance).cwiseAbs().maxCoeff() == 0.0);
    CHECK(loaded.degenerate == stats.degenerate);
}
