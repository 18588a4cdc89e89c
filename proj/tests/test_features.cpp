#include "ccsq/features.hpp"

#include "ccsq/csv.hpp"
#include "ccsq/errors.hpp"
#include "ccsq/rng.hpp"
#include "ccsq/wav.hpp"

#include <doctest.h>

#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace ccsq;
using features::LldMatrix;

namespace {

std::vector<double> sine(double freq, int rate, double seconds, double amp = 0.5) {
    std::vector<double> out(static_cast<std::size_t>(rate * seconds));
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate);
    return out;
}

int col_of(const LldMatrix& m, const std::string& name) {
    for (std::size_t i = 0; i < m.descriptor_names.size(); ++i)
        if (m.descriptor_names[i] == name) return static_cast<int>(i);
    REQUIRE(false);
    return -1;
}

} // namespace

TEST_CASE("frame_signal arithmetic") {
    std::vector<double> samples(16000, 0.0);
    const auto frames = features::frame_signal(samples, 16000, 0.06, 0.01);
    CHECK(frames.size() == 95); // floor((16000-960)/160)+1
    CHECK(frames[0].size() == 960);

    std::vector<double> exact(960, 0.0);
    CHECK(features::frame_signal(exact, 16000, 0.06, 0.01).size() == 1);

    std::vector<double> tooshort(959, 0.0);
    CHECK_THROWS_AS(features::frame_signal(tooshort, 16000, 0.06, 0.01), validation_error);
}

TEST_CASE("extract_lld: descriptor count and names") {
    const auto lld = features::extract_lld(sine(440.0, 16000, 0.2), 16000);
    CHECK(lld.values.cols() == 29);
    CHECK(lld.descriptor_names.size() == 29);
    CHECK(lld.descriptor_names.front() == "rms_energy");
    CHECK(lld.descriptor_names.back() == "spectral_kurtosis");
    CHECK(lld.values.allFinite());
}

TEST_CASE("extract_lld: pure tone centroid matches a naive-DFT oracle") {
    const auto samples = sine(1000.0, 16000, 0.5);
    const auto lld = features::extract_lld(samples, 16000);
    const int centroid = col_of(lld, "centroid");

    // independent oracle for frame 0: Hamming window, zero-pad to 1024,
    // O(n^2) DFT in long double, magnitude-weighted centroid
    const std::size_t len = 960, nfft = 1024, n_bins = nfft / 2 + 1;
    std::vector<long double> mag(n_bins, 0.0L);
    for (std::size_t k = 0; k < n_bins; ++k) {
        long double re = 0.0L, im = 0.0L;
        for (std::size_t i = 0; i < len; ++i) {
            const long double w =
                0.54L - 0.46L * std::cos(2.0L * std::numbers::pi_v<long double> *
                                         static_cast<long double>(i) /
                                         static_cast<long double>(len - 1));
            const long double x = w * static_cast<long double>(samples[i]);
            const long double phase = -2.0L * std::numbers::pi_v<long double> *
                                      static_cast<long double>(k) * static_cast<long double>(i) /
                                      static_cast<long double>(nfft);
            re += x * std::cos(phase);
            im += x * std::sin(phase);
        }
        mag[k] = std::sqrt(re * re + im * im);
    }
    long double total = 0.0L, weighted = 0.0L;
    const long double bin_hz = 16000.0L / static_cast<long double>(nfft);
    for (std::size_t k = 0; k < n_bins; ++k) {
        total += mag[k];
        weighted += mag[k] * bin_hz * static_cast<long double>(k);
    }
    const double oracle_centroid = static_cast<double>(weighted / total);
    CHECK(lld.values(0, centroid) == doctest::Approx(oracle_centroid).epsilon(1e-8));

    // magnitude-weighted centroid of a windowed tone sits slightly above the
    // tone frequency because sidelobe mass is spread toward higher bins;
    // the offset must stay small and identical across steady-state frames
    for (Eigen::Index t = 0; t < lld.values.rows(); ++t) {
        CHECK(lld.values(t, centroid) > 1000.0 - 16000.0 / 1024.0);
        CHECK(lld.values(t, centroid) < 1060.0);
    }
}

TEST_CASE("extract_lld: silence") {
    std::vector<double> zeros(8000, 0.0);
    const auto lld = features::extract_lld(zeros, 16000);
    const int rms = col_of(lld, "rms_energy");
    const int zcr = col_of(lld, "zcr");
    for (Eigen::Index t = 0; t < lld.values.rows(); ++t) {
        CHECK(lld.values(t, rms) == doctest::Approx(0.0));
        CHECK(lld.values(t, zcr) == doctest::Approx(0.0));
    }
    CHECK(lld.values.allFinite());
}

TEST_CASE("extract_lld: noise has higher spectral entropy than a tone") {
    Rng rng(4);
    std::vector<double> noise(8000);
    for (auto& v : noise) v = rng.uniform(-0.5, 0.5);
    const auto lld_noise = features::extract_lld(noise, 16000);
    const auto lld_tone = features::extract_lld(sine(1000.0, 16000, 0.5), 16000);
    const int entropy = col_of(lld_noise, "entropy");
    const Eigen::Index n = std::min(lld_noise.values.rows(), lld_tone.values.rows());
    for (Eigen::Index t = 0; t < n; ++t)
        CHECK(lld_noise.values(t, entropy) > lld_tone.values(t, entropy));
}

TEST_CASE("extract_lld is deterministic") {
    const auto samples = sine(700.0, 16000, 0.3);
    const auto a = features::extract_lld(samples, 16000);
    const auto b = features::extract_lld(samples, 16000);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("delta") {
    LldMatrix m;
    m.values.resize(3, 1);
    m.values << 1, 2, 4;
    m.descriptor_names = {"x"};
    const auto d = features::delta(m);
    CHECK(d.values(0, 0) == 0.0);
    CHECK(d.values(1, 0) == 1.0);
    CHECK(d.values(2, 0) == 2.0);
    CHECK(d.descriptor_names[0] == "x.delta");

    LldMatrix single;
    single.values.resize(1, 2);
    single.values << 5, 6;
    single.descriptor_names = {"a", "b"};
    const auto ds = features::delta(single);
    CHECK(ds.values(0, 0) == 0.0);
    CHECK(ds.values(0, 1) == 0.0);
}

TEST_CASE("functionals_window: exact line and parabola") {
    // [1,3,5]: mean 3, population std sqrt(8/3), slope 2, zero residuals
    const auto f = features::functionals_window({1, 3, 5});
    CHECK(f[0] == doctest::Approx(3.0));
    CHECK(f[1] == doctest::Approx(std::sqrt(8.0 / 3.0)).epsilon(1e-12));
    CHECK(f[2] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(f[3] == doctest::Approx(0.0));
    CHECK(f[4] == doctest::Approx(0.0));
    CHECK(f[5] == doctest::Approx(0.0));

    // y = tau^2
    const auto q = features::functionals_window({0, 1, 4});
    CHECK(q[4] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(q[5] == doctest::Approx(0.0));

    CHECK_THROWS_AS(features::functionals_window({1}), validation_error);
}

TEST_CASE("functionals_window: percentiles on 0..100") {
    std::vector<double> seg(101);
    for (int i = 0; i <= 100; ++i) seg[static_cast<std::size_t>(i)] = i;
    const auto f = features::functionals_window(seg);
    CHECK(f[6] == doctest::Approx(98.0)); // P99 - P1
    CHECK(f[7] == doctest::Approx(6.0));
    CHECK(f[8] == doctest::Approx(94.0));
}

TEST_CASE("functionals_window: constant segment") {
    const auto f = features::functionals_window({2.5, 2.5, 2.5, 2.5});
    CHECK(f[0] == doctest::Approx(2.5));
    for (int i = 1; i <= 6; ++i) CHECK(f[static_cast<std::size_t>(i)] == doctest::Approx(0.0));
    CHECK(f[7] == doctest::Approx(2.5));
    CHECK(f[8] == doctest::Approx(2.5));
}

TEST_CASE("functionals_window: shift and scale equivariance") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> seg(3 + rng.index(40));
        for (auto& v : seg) v = rng.uniform(-2.0, 2.0);
        const auto base = features::functionals_window(seg);

        const double b = rng.uniform(-3.0, 3.0);
        std::vector<double> shifted(seg);
        for (auto& v : shifted) v += b;
        const auto fs = features::functionals_window(shifted);
        CHECK(fs[0] == doctest::Approx(base[0] + b).epsilon(1e-10));
        CHECK(fs[1] == doctest::Approx(base[1]).epsilon(1e-9));
        CHECK(fs[2] == doctest::Approx(base[2]).epsilon(1e-9));
        CHECK(fs[3] == doctest::Approx(base[3]).scale(1.0).epsilon(1e-8));
        CHECK(fs[6] == doctest::Approx(base[6]).epsilon(1e-9));
        CHECK(fs[7] == doctest::Approx(base[7] + b).epsilon(1e-10));
        CHECK(fs[8] == doctest::Approx(base[8] + b).epsilon(1e-10));

        const double a = rng.uniform(0.1, 4.0);
        std::vector<double> scaled(seg);
        for (auto& v : scaled) v *= a;
        const auto fc = features::functionals_window(scaled);
        for (int i : {0, 1, 2, 6, 7, 8})
            CHECK(fc[static_cast<std::size_t>(i)] ==
                  doctest::Approx(a * base[static_cast<std::size_t>(i)]).epsilon(1e-8));
        CHECK(fc[3] == doctest::Approx(a * a * base[3]).epsilon(1e-8));
        CHECK(fc[5] == doctest::Approx(a * a * base[5]).epsilon(1e-8));
        CHECK(fc[4] == doctest::Approx(a * base[4]).epsilon(1e-8));
    }
}

TEST_CASE("regression functionals match a normal-equations oracle") {
    Rng rng(37);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> seg(4 + rng.index(60));
        for (auto& v : seg) v = rng.uniform(-5.0, 5.0);
        const auto f = features::functionals_window(seg);
        const auto lin = oracle::polyfit_normal_equations(seg, 1);
        const auto quad = oracle::polyfit_normal_equations(seg, 2);
        CHECK(f[2] == doctest::Approx(lin[1]).epsilon(1e-8));
        CHECK(f[4] == doctest::Approx(quad[2]).epsilon(1e-8));
    }
}

TEST_CASE("functional_sequence geometry and width") {
    LldMatrix m;
    m.frame_period_s = 0.01;
    m.descriptor_names = {"a", "b"};
    m.values = Eigen::MatrixXd::Random(450, 2);
    const auto seq = features::functional_sequence(m);
    CHECK(seq.vectors.rows() == 3); // floor((450-200)/100)+1
    CHECK(seq.vectors.cols() == 36); // 18 * D
    CHECK(seq.feature_names.size() == 36);
    CHECK(seq.feature_names[0] == "a.mean");
    CHECK(seq.feature_names[9] == "a.delta.mean");

    // short utterance: one window over everything
    m.values = Eigen::MatrixXd::Random(150, 2);
    CHECK(features::functional_sequence(m).vectors.rows() == 1);

    // with 65 descriptors the width is the full 1170
    LldMatrix wide;
    wide.frame_period_s = 0.01;
    wide.values = Eigen::MatrixXd::Random(250, 65);
    for (int i = 0; i < 65; ++i) wide.descriptor_names.push_back("d" + std::to_string(i));
    CHECK(features::functional_sequence(wide).vectors.cols() == 1170);

    m.values = Eigen::MatrixXd::Random(1, 2);
    CHECK_THROWS_AS(features::functional_sequence(m), validation_error);
}

TEST_CASE("pool_embeddings") {
    Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(75, 3, 1.5);
    const auto pooled = features::pool_embeddings(constant, 25.0, {"e0", "e1", "e2"});
    CHECK(pooled.vectors.rows() == 2); // floor((75-50)/25)+1
    CHECK(pooled.vectors.cols() == 3);
    CHECK((pooled.vectors.array() - 1.5).abs().maxCoeff() == doctest::Approx(0.0));

    Eigen::MatrixXd two(2, 1);
    two << 1, 3;
    const auto p2 = features::pool_embeddings(two, 1.0, {"e"});
    CHECK(p2.vectors.rows() == 1); // short input: single window
    CHECK(p2.vectors(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("concat_lld and LLD round trip") {
    LldMatrix a;
    a.frame_period_s = 0.01;
    a.values = Eigen::MatrixXd::Random(10, 2);
    a.descriptor_names = {"a0", "a1"};
    LldMatrix b = a;
    b.descriptor_names = {"b0", "b1"};
    const auto cat = features::concat_lld(a, b);
    CHECK(cat.values.cols() == 4);
    CHECK(cat.descriptor_names[2] == "b0");

    LldMatrix mismatched = b;
    mismatched.values = Eigen::MatrixXd::Random(9, 2);
    CHECK_THROWS_AS(features::concat_lld(a, mismatched), validation_error);

    const auto dir = std::filesystem::temp_directory_path();
    const auto path = (dir / "lld_rt.csv").string();
    features::save_lld(cat, path);
    const auto loaded = features::load_lld(path);
    CHECK(loaded.descriptor_names == cat.descriptor_names);
    CHECK(loaded.frame_period_s == doctest::Approx(0.01));
    CHECK((loaded.values - cat.values).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("wav round trip and validation") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto path = (dir / "tone.wav").string();
    const auto samples = sine(440.0, 16000, 0.1);
    wav::write_pcm16(path, samples, 16000);
    const auto audio = wav::read(path);
    CHECK(audio.sample_rate == 16000);
    REQUIRE(audio.samples.size() == samples.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        worst = std::max(worst, std::abs(audio.samples[i] - samples[i]));
    CHECK(worst < 1e-3); // 16-bit quantization

    const auto bad = (dir / "bad.wav").string();
    ccsq::csv::atomic_write_text(bad, "not a wav file");
    CHECK_THROWS_AS(wav::read(bad), validation_error);
}
