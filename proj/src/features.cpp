#include "ccsq/features.hpp"

#include "ccsq/csv.hpp"
#include "ccsq/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

namespace ccsq::features {

namespace {

using json = nlohmann::json;

std::string sidecar_path(const std::string& csv_path) {
    return std::filesystem::path(csv_path).replace_extension(".json").string();
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

std::vector<double> hamming(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                      static_cast<double>(n - 1));
    return w;
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

struct MelBank {
    // filters[j][k]: weight of spectrum bin k in filter j
    std::vector<std::vector<double>> filters;
};

MelBank make_mel_bank(int n_filters, std::size_t n_bins, double bin_hz) {
    MelBank bank;
    const double mel_hi = hz_to_mel(bin_hz * static_cast<double>(n_bins - 1));
    std::vector<double> edges(static_cast<std::size_t>(n_filters) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) /
                             static_cast<double>(n_filters + 1));
    bank.filters.resize(static_cast<std::size_t>(n_filters));
    for (int j = 0; j < n_filters; ++j) {
        auto& filt = bank.filters[static_cast<std::size_t>(j)];
        filt.assign(n_bins, 0.0);
        const double lo = edges[static_cast<std::size_t>(j)];
        const double mid = edges[static_cast<std::size_t>(j) + 1];
        const double hi = edges[static_cast<std::size_t>(j) + 2];
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double f = bin_hz * static_cast<double>(k);
            if (f > lo && f < mid)
                filt[k] = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                filt[k] = (hi - f) / (hi - mid);
        }
    }
    return bank;
}

constexpr int kNumMelFilters = 26;
constexpr int kNumMfcc = 14;

std::vector<std::string> builtin_names() {
    std::vector<std::string> names = {"rms_energy", "zcr"};
    for (int i = 1; i <= kNumMfcc; ++i) names.push_back("mfcc" + std::to_string(i));
    names.insert(names.end(),
                 {"band_energy_250_650", "band_energy_1000_4000", "rolloff_25", "rolloff_50",
                  "rolloff_75", "rolloff_90", "flux", "centroid", "entropy", "slope",
                  "spectral_variance", "spectral_skewness", "spectral_kurtosis"});
    return names;
}

// Percentile by linear interpolation at p*(n-1) on sorted data.
double percentile(const std::vector<double>& sorted, double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

} // namespace

FrameSpec frame_geometry(std::size_t n, std::size_t length, std::size_t hop) {
    FrameSpec spec;
    spec.length = length;
    spec.hop = hop;
    spec.count = (n >= length) ? (n - length) / hop + 1 : 0;
    return spec;
}

std::vector<std::vector<double>> frame_signal(const std::vector<double>& samples,
                                              int sample_rate, double win_s, double hop_s) {
    if (sample_rate <= 0) throw validation_error("frame_signal: sample_rate must be positive");
    if (win_s <= 0.0 || hop_s <= 0.0)
        throw validation_error("frame_signal: window and hop must be positive");
    const auto length = static_cast<std::size_t>(std::lround(win_s * sample_rate));
    const auto hop = static_cast<std::size_t>(std::lround(hop_s * sample_rate));
    const FrameSpec spec = frame_geometry(samples.size(), length, hop);
    if (spec.count == 0)
        throw validation_error("frame_signal: signal of " + std::to_string(samples.size()) +
                               " samples shorter than one frame (" + std::to_string(length) + ")");
    std::vector<std::vector<double>> frames(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i)
        frames[i].assign(samples.begin() + static_cast<std::ptrdiff_t>(i * hop),
                         samples.begin() + static_cast<std::ptrdiff_t>(i * hop + length));
    return frames;
}

LldMatrix extract_lld(const std::vector<double>& samples, int sample_rate,
                      double win_s, double hop_s) {
    if (sample_rate < 8000)
        throw validation_error("extract_lld: sample_rate must be >= 8000 Hz");
    const auto frames = frame_signal(samples, sample_rate, win_s, hop_s);
    const std::size_t frame_len = frames[0].size();
    const std::size_t nfft = next_pow2(frame_len);
    const std::size_t n_bins = nfft / 2 + 1;
    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(nfft);
    const auto window = hamming(frame_len);
    const MelBank mel = make_mel_bank(kNumMelFilters, n_bins, bin_hz);

    LldMatrix out;
    out.frame_period_s = hop_s;
    out.descriptor_names = builtin_names();
    out.values.resize(static_cast<Eigen::Index>(frames.size()),
                      static_cast<Eigen::Index>(out.descriptor_names.size()));

    std::vector<double> prev_norm_spec; // L1-normalized magnitudes of previous frame
    std::vector<std::complex<double>> buf(nfft);
    std::vector<double> mag(n_bins);

    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto& frame = frames[t];

        double rms = 0.0;
        for (double s : frame) rms += s * s;
        rms = std::sqrt(rms / static_cast<double>(frame_len));

        std::size_t crossings = 0;
        for (std::size_t i = 1; i < frame_len; ++i)
            if (frame[i - 1] * frame[i] < 0.0) ++crossings;
        const double zcr = static_cast<double>(crossings) / static_cast<double>(frame_len - 1);

        for (std::size_t i = 0; i < frame_len; ++i) buf[i] = frame[i] * window[i];
        std::fill(buf.begin() + static_cast<std::ptrdiff_t>(frame_len), buf.end(),
                  std::complex<double>(0.0, 0.0));
        fft(buf);
        double total_mag = 0.0;
        for (std::size_t k = 0; k < n_bins; ++k) {
            mag[k] = std::abs(buf[k]);
            total_mag += mag[k];
        }

        // MFCC from the power spectrum through the mel bank.
        std::vector<double> log_mel(kNumMelFilters);
        for (int j = 0; j < kNumMelFilters; ++j) {
            double e = 0.0;
            const auto& filt = mel.filters[static_cast<std::size_t>(j)];
            for (std::size_t k = 0; k < n_bins; ++k) e += filt[k] * mag[k] * mag[k];
            log_mel[static_cast<std::size_t>(j)] = std::log(std::max(e, 1e-10));
        }
        std::vector<double> mfcc(kNumMfcc);
        for (int k = 1; k <= kNumMfcc; ++k) {
            double c = 0.0;
            for (int j = 0; j < kNumMelFilters; ++j)
                c += log_mel[static_cast<std::size_t>(j)] *
                     std::cos(std::numbers::pi * k * (j + 0.5) / kNumMelFilters);
            mfcc[static_cast<std::size_t>(k - 1)] = c * std::sqrt(2.0 / kNumMelFilters);
        }

        double band_low = 0.0, band_high = 0.0;
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double f = bin_hz * static_cast<double>(k);
            if (f >= 250.0 && f <= 650.0) band_low += mag[k] * mag[k];
            if (f >= 1000.0 && f <= 4000.0) band_high += mag[k] * mag[k];
        }

        std::array<double, 4> rolloff{};
        double centroid = 0.0, entropy = 0.0, slope = 0.0;
        double spec_var = 0.0, spec_skew = 0.0, spec_kurt = 0.0;
        double flux = 0.0;
        std::vector<double> norm_spec(n_bins, 0.0);
        if (total_mag > 0.0) {
            const std::array<double, 4> fracs = {0.25, 0.50, 0.75, 0.90};
            double cum = 0.0;
            std::size_t fi = 0;
            for (std::size_t k = 0; k < n_bins && fi < 4; ++k) {
                cum += mag[k];
                while (fi < 4 && cum >= fracs[fi] * total_mag) {
                    rolloff[fi] = bin_hz * static_cast<double>(k);
                    ++fi;
                }
            }
            for (std::size_t k = 0; k < n_bins; ++k) {
                norm_spec[k] = mag[k] / total_mag;
                centroid += norm_spec[k] * bin_hz * static_cast<double>(k);
                if (norm_spec[k] > 0.0) entropy -= norm_spec[k] * std::log(norm_spec[k]);
            }
            for (std::size_t k = 0; k < n_bins; ++k) {
                const double d = bin_hz * static_cast<double>(k) - centroid;
                spec_var += norm_spec[k] * d * d;
                spec_skew += norm_spec[k] * d * d * d;
                spec_kurt += norm_spec[k] * d * d * d * d;
            }
            if (spec_var > 1e-12) {
                spec_skew /= std::pow(spec_var, 1.5);
                spec_kurt /= spec_var * spec_var;
            } else {
                spec_skew = 0.0;
                spec_kurt = 0.0;
            }
            // Least-squares slope of |X| against bin frequency.
            double mf = 0.0, mm = 0.0;
            for (std::size_t k = 0; k < n_bins; ++k) {
                mf += bin_hz * static_cast<double>(k);
                mm += mag[k];
            }
            mf /= static_cast<double>(n_bins);
            mm /= static_cast<double>(n_bins);
            double sxy = 0.0, sxx = 0.0;
            for (std::size_t k = 0; k < n_bins; ++k) {
                const double df = bin_hz * static_cast<double>(k) - mf;
                sxy += df * (mag[k] - mm);
                sxx += df * df;
            }
            slope = sxy / sxx;
        }
        if (t > 0) {
            for (std::size_t k = 0; k < n_bins; ++k) {
                const double d = norm_spec[k] - prev_norm_spec[k];
                flux += d * d;
            }
            flux = std::sqrt(flux);
        }
        prev_norm_spec = norm_spec;

        Eigen::Index c = 0;
        auto row = out.values.row(static_cast<Eigen::Index>(t));
        row(c++) = rms;
        row(c++) = zcr;
        for (double v : mfcc) row(c++) = v;
        row(c++) = band_low;
        row(c++) = band_high;
        for (double v : rolloff) row(c++) = v;
        row(c++) = flux;
        row(c++) = centroid;
        row(c++) = entropy;
        row(c++) = slope;
        row(c++) = spec_var;
        row(c++) = spec_skew;
        row(c++) = spec_kurt;
    }
    return out;
}

LldMatrix delta(const LldMatrix& m) {
    LldMatrix d;
    d.frame_period_s = m.frame_period_s;
    d.descriptor_names.reserve(m.descriptor_names.size());
    for (const auto& name : m.descriptor_names) d.descriptor_names.push_back(name + ".delta");
    d.values.resize(m.values.rows(), m.values.cols());
    if (m.values.rows() > 0) {
        d.values.row(0).setZero();
        for (Eigen::Index t = 1; t < m.values.rows(); ++t)
            d.values.row(t) = m.values.row(t) - m.values.row(t - 1);
    }
    return d;
}

std::array<double, 9> functionals_window(const std::vector<double>& segment) {
    const std::size_t n = segment.size();
    if (n < 2) throw validation_error("functionals_window: segment needs at least 2 frames");
    const double dn = static_cast<double>(n);

    double mean = 0.0;
    for (double v : segment) mean += v;
    mean /= dn;
    double var = 0.0;
    for (double v : segment) var += (v - mean) * (v - mean);
    var /= dn;

    // Linear fit y = a*tau + b over tau = 0..n-1.
    const double tmean = (dn - 1.0) / 2.0;
    double stt = 0.0, sty = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = static_cast<double>(i) - tmean;
        stt += dt * dt;
        sty += dt * (segment[i] - mean);
    }
    const double lin_a = sty / stt;
    const double lin_b = mean - lin_a * tmean;
    double lin_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = segment[i] - (lin_a * static_cast<double>(i) + lin_b);
        lin_err += r * r;
    }
    lin_err /= dn;

    // Quadratic fit y = a*tau^2 + b*tau + c via 3x3 normal equations.
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const double tau = static_cast<double>(i);
        const Eigen::Vector3d phi(tau * tau, tau, 1.0);
        A += phi * phi.transpose();
        rhs += phi * segment[i];
    }
    const Eigen::Vector3d coef = A.ldlt().solve(rhs);
    double quad_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double tau = static_cast<double>(i);
        const double r = segment[i] - (coef(0) * tau * tau + coef(1) * tau + coef(2));
        quad_err += r * r;
    }
    quad_err /= dn;

    std::vector<double> sorted(segment);
    std::sort(sorted.begin(), sorted.end());
    const double p1 = percentile(sorted, 0.01);
    const double p99 = percentile(sorted, 0.99);
    const double p6 = percentile(sorted, 0.06);
    const double p94 = percentile(sorted, 0.94);

    return {mean, std::sqrt(var), lin_a, lin_err, coef(0), quad_err, p99 - p1, p6, p94};
}

namespace {

struct WindowRange {
    std::size_t start;
    std::size_t length;
};

// Shared windowing rule: if fewer frames than one window, a single window
// covers everything; otherwise floor((T-L)/H)+1 windows.
std::vector<WindowRange> windows_over(std::size_t total, std::size_t length, std::size_t hop) {
    std::vector<WindowRange> out;
    if (total < length) {
        out.push_back({0, total});
        return out;
    }
    const FrameSpec spec = frame_geometry(total, length, hop);
    out.reserve(spec.count);
    for (std::size_t w = 0; w < spec.count; ++w) out.push_back({w * hop, length});
    return out;
}

} // namespace

FunctionalSequence functional_sequence(const LldMatrix& m, double win_s, double step_s) {
    const auto total = static_cast<std::size_t>(m.values.rows());
    if (total < 2) throw validation_error("functional_sequence: need at least 2 frames");
    const auto length = static_cast<std::size_t>(std::lround(win_s / m.frame_period_s));
    const auto hop = static_cast<std::size_t>(std::lround(step_s / m.frame_period_s));
    const auto wins = windows_over(total, length, hop);
    const LldMatrix dm = delta(m);

    const auto n_desc = static_cast<std::size_t>(m.values.cols());
    FunctionalSequence seq;
    seq.window_s = win_s;
    seq.step_s = step_s;
    seq.feature_names.reserve(18 * n_desc);
    for (std::size_t d = 0; d < n_desc; ++d) {
        for (const char* f : kFunctionalNames)
            seq.feature_names.push_back(m.descriptor_names[d] + "." + f);
        for (const char* f : kFunctionalNames)
            seq.feature_names.push_back(dm.descriptor_names[d] + "." + f);
    }
    seq.vectors.resize(static_cast<Eigen::Index>(wins.size()),
                       static_cast<Eigen::Index>(18 * n_desc));

    std::vector<double> segment;
    for (std::size_t w = 0; w < wins.size(); ++w) {
        Eigen::Index col = 0;
        for (std::size_t d = 0; d < n_desc; ++d) {
            for (const auto* mat : {&m.values, &dm.values}) {
                segment.resize(wins[w].length);
                for (std::size_t i = 0; i < wins[w].length; ++i)
                    segment[i] = (*mat)(static_cast<Eigen::Index>(wins[w].start + i),
                                        static_cast<Eigen::Index>(d));
                const auto f = functionals_window(segment);
                for (double v : f) seq.vectors(static_cast<Eigen::Index>(w), col++) = v;
            }
        }
    }
    return seq;
}

FunctionalSequence pool_embeddings(const Eigen::MatrixXd& frames, double frame_rate,
                                   const std::vector<std::string>& names,
                                   double win_s, double step_s) {
    if (frames.rows() < 1) throw validation_error("pool_embeddings: empty input");
    if (frame_rate <= 0.0) throw validation_error("pool_embeddings: frame_rate must be positive");
    const auto length = static_cast<std::size_t>(std::lround(win_s * frame_rate));
    const auto hop = static_cast<std::size_t>(std::lround(step_s * frame_rate));
    const auto wins = windows_over(static_cast<std::size_t>(frames.rows()), length, hop);

    FunctionalSequence seq;
    seq.window_s = win_s;
    seq.step_s = step_s;
    seq.feature_names = names;
    seq.vectors.resize(static_cast<Eigen::Index>(wins.size()), frames.cols());
    for (std::size_t w = 0; w < wins.size(); ++w)
        seq.vectors.row(static_cast<Eigen::Index>(w)) =
            frames.middleRows(static_cast<Eigen::Index>(wins[w].start),
                              static_cast<Eigen::Index>(wins[w].length))
                .colwise()
                .mean();
    return seq;
}

LldMatrix concat_lld(const LldMatrix& a, const LldMatrix& b) {
    if (a.values.rows() != b.values.rows())
        throw validation_error("concat_lld: frame count mismatch: " +
                               std::to_string(a.values.rows()) + " vs " +
                               std::to_string(b.values.rows()));
    LldMatrix out;
    out.frame_period_s = a.frame_period_s;
    out.descriptor_names = a.descriptor_names;
    out.descriptor_names.insert(out.descriptor_names.end(), b.descriptor_names.begin(),
                                b.descriptor_names.end());
    out.values.resize(a.values.rows(), a.values.cols() + b.values.cols());
    out.values << a.values, b.values;
    return out;
}

namespace {

csv::NumericTable to_table(const Eigen::MatrixXd& m, const std::vector<std::string>& names) {
    csv::NumericTable t;
    t.header = names;
    t.rows.resize(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        t.rows[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            t.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
    }
    return t;
}

Eigen::MatrixXd from_table(const csv::NumericTable& t) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()),
                      static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (std::size_t c = 0; c < t.header.size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.rows[r][c];
    return m;
}

} // namespace

void save_lld(const LldMatrix& m, const std::string& csv_path) {
    csv::write_numeric(csv_path, to_table(m.values, m.descriptor_names));
    json meta;
    meta["kind"] = "lld";
    meta["frame_period_s"] = m.frame_period_s;
    csv::atomic_write_text(sidecar_path(csv_path), meta.dump(2) + "\n");
}

LldMatrix load_lld(const std::string& csv_path) {
    const csv::NumericTable t = csv::read_numeric(csv_path);
    const json meta = json::parse(csv::read_text(sidecar_path(csv_path)));
    LldMatrix m;
    m.descriptor_names = t.header;
    m.values = from_table(t);
    m.frame_period_s = meta.at("frame_period_s").get<double>();
    if (m.values.rows() < 1) throw validation_error(csv_path + ": empty LLD matrix");
    return m;
}

void save_functionals(const FunctionalSequence& f, const std::string& csv_path) {
    csv::write_numeric(csv_path, to_table(f.vectors, f.feature_names));
    json meta;
    meta["kind"] = "functionals";
    meta["window_s"] = f.window_s;
    meta["step_s"] = f.step_s;
    csv::atomic_write_text(sidecar_path(csv_path), meta.dump(2) + "\n");
}

FunctionalSequence load_functionals(const std::string& csv_path) {
    const csv::NumericTable t = csv::read_numeric(csv_path);
    FunctionalSequence f;
    f.feature_names = t.header;
    f.vectors = from_table(t);
    const std::string side = sidecar_path(csv_path);
    if (std::filesystem::exists(side)) {
        const json meta = json::parse(csv::read_text(side));
        f.window_s = meta.value("window_s", 2.0);
        f.step_s = meta.value("step_s", 1.0);
    }
    if (f.vectors.rows() < 1) throw validation_error(csv_path + ": empty feature sequence");
    return f;
}

} // namespace ccsq::features
