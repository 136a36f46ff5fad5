// chirp_phy.hpp - binary chirp signalling: waveforms, framing, matched filter,
// and operation-count models for the matched filter and the C-DNN receiver.
//
// Bit 0 is carried by the up-chirp s1 (f1 -> f2), bit 1 by the down-chirp
// s2 (f2 -> f1). Phases are
//   s1: 2*pi*(f1*t + mu*t^2/2) + phi0
//   s2: 2*pi*(f2*t - mu*t^2/2) + phi0,   mu = (f2 - f1) / T
// so the instantaneous frequency sweeps the band in Hz.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arcfml/binary_io.hpp"
#include "arcfml/error.hpp"

namespace arcfml::phy {

struct ChirpParams {
    double f1 = 6000.0;   // start frequency, Hz
    double f2 = 12000.0;  // end frequency, Hz
    double T = 0.01;      // symbol duration, s
    double fs = 96000.0;  // sample rate, Hz
    double phi0 = 0.0;    // initial phase, rad
    int lambda = 1;       // downsampling factor

    double sweep_rate() const { return (f2 - f1) / T; }
    double bandwidth() const { return f2 - f1; }

    /// Samples per symbol at the full rate (T * fs).
    std::size_t samples_per_symbol() const {
        return static_cast<std::size_t>(std::llround(T * fs));
    }

    /// Samples per symbol after downsampling (N1 = T * fs / lambda).
    std::size_t n1() const { return samples_per_symbol() / static_cast<std::size_t>(lambda); }

    void validate() const {
        if (!(std::isfinite(f1) && std::isfinite(f2) && std::isfinite(T) && std::isfinite(fs) &&
              std::isfinite(phi0)))
            throw ConfigError("chirp parameters must be finite");
        if (!(f1 > 0.0)) throw ConfigError("chirp invariant violated: f1 > 0");
        if (!(f1 < f2)) throw ConfigError("chirp invariant violated: f1 < f2");
        if (!(f2 < fs / 2.0)) throw ConfigError("chirp invariant violated: f2 < fs/2");
        if (!(T > 0.0)) throw ConfigError("chirp invariant violated: T > 0");
        const double n = T * fs;
        if (std::abs(n - std::round(n)) > 1e-6 || std::round(n) < 1.0)
            throw ConfigError("chirp invariant violated: T*fs must be a positive integer");
        if (lambda < 1) throw ConfigError("chirp invariant violated: lambda >= 1");
        if (samples_per_symbol() % static_cast<std::size_t>(lambda) != 0)
            throw ConfigError("chirp invariant violated: lambda must divide T*fs");
    }

    bool operator==(const ChirpParams&) const = default;
};

enum class ChirpDirection { up, down };

struct Waveform {
    std::vector<double> samples;
    double fs = 0.0;

    std::size_t size() const noexcept { return samples.size(); }

    void validate() const {
        if (samples.empty()) throw InputError("waveform is empty");
        if (!(fs > 0.0)) throw InputError("waveform sample rate must be positive");
        for (double v : samples)
            if (!std::isfinite(v)) throw InputError("waveform contains non-finite samples");
    }
};

namespace detail {

inline double chirp_phase(const ChirpParams& p, ChirpDirection dir, double t) {
    const double mu = p.sweep_rate();
    const double cyc = dir == ChirpDirection::up ? p.f1 * t + 0.5 * mu * t * t
                                                 : p.f2 * t - 0.5 * mu * t * t;
    return 2.0 * std::numbers::pi * cyc + p.phi0;
}

inline std::vector<double> chirp_samples(const ChirpParams& p, ChirpDirection dir, std::size_t count,
                                         double rate) {
    std::vector<double> s(count);
    for (std::size_t k = 0; k < count; ++k)
        s[k] = std::cos(chirp_phase(p, dir, static_cast<double>(k) / rate));
    return s;
}

}  // namespace detail

/// One chirp symbol at the full sample rate: T*fs samples.
inline Waveform generate_chirp(const ChirpParams& p, ChirpDirection dir) {
    p.validate();
    return {detail::chirp_samples(p, dir, p.samples_per_symbol(), p.fs), p.fs};
}

/// Detection template regenerated at the downsampled rate fs/lambda: N1 samples.
inline Waveform chirp_template(const ChirpParams& p, ChirpDirection dir) {
    p.validate();
    const double rate = p.fs / p.lambda;
    return {detail::chirp_samples(p, dir, p.n1(), rate), rate};
}

/// Concatenate one symbol per bit (0 -> up-chirp, 1 -> down-chirp) at the full rate.
inline Waveform modulate_frame(std::span<const std::uint8_t> bits, const ChirpParams& p) {
    p.validate();
    if (bits.empty()) throw InputError("modulate_frame: bit sequence is empty");
    // Dataset synthesis modulates millions of short frames with the same parameters.
    struct Cache {
        ChirpParams p;
        std::vector<double> up, down;
    };
    thread_local std::optional<Cache> cache;
    if (!cache || !(cache->p == p))
        cache = Cache{p, detail::chirp_samples(p, ChirpDirection::up, p.samples_per_symbol(), p.fs),
                      detail::chirp_samples(p, ChirpDirection::down, p.samples_per_symbol(), p.fs)};
    const auto& up = cache->up;
    const auto& down = cache->down;
    Waveform w{{}, p.fs};
    w.samples.reserve(bits.size() * up.size());
    for (auto b : bits) {
        if (b > 1) throw InputError("modulate_frame: bits must be 0 or 1");
        const auto& s = b == 0 ? up : down;
        w.samples.insert(w.samples.end(), s.begin(), s.end());
    }
    return w;
}

/// Keep every lambda-th sample starting at index 0.
inline Waveform downsample(const Waveform& w, int lambda) {
    if (lambda < 1) throw ConfigError("downsample: lambda must be >= 1");
    const auto step = static_cast<std::size_t>(lambda);
    if (w.samples.size() % step != 0)
        throw ConfigError("downsample: lambda " + std::to_string(lambda) +
                          " does not divide the sample count " + std::to_string(w.samples.size()));
    Waveform out{{}, w.fs / lambda};
    out.samples.reserve(w.samples.size() / step);
    for (std::size_t k = 0; k < w.samples.size(); k += step) out.samples.push_back(w.samples[k]);
    return out;
}

struct MfDecision {
    int bit;
    double c1;  // correlation with the up-chirp template
    double c2;  // correlation with the down-chirp template
};

/// Correlation receiver with cached templates at the params' (downsampled) rate.
/// Decides bit 0 when c1 >= c2 (ties go to bit 0).
class MatchedFilter {
public:
    explicit MatchedFilter(const ChirpParams& p)
        : s1_(chirp_template(p, ChirpDirection::up).samples),
          s2_(chirp_template(p, ChirpDirection::down).samples) {}

    std::size_t length() const noexcept { return s1_.size(); }

    template <typename T>
    MfDecision detect(std::span<const T> rx) const {
        if (rx.size() != s1_.size())
            throw InputError("matched filter: received symbol has " + std::to_string(rx.size()) +
                             " samples, template has " + std::to_string(s1_.size()));
        double c1 = 0.0, c2 = 0.0;
        for (std::size_t k = 0; k < rx.size(); ++k) {
            const double r = static_cast<double>(rx[k]);
            c1 += r * s1_[k];
            c2 += r * s2_[k];
        }
        return {c1 >= c2 ? 0 : 1, c1, c2};
    }

    MfDecision detect(const std::vector<double>& rx) const { return detect(std::span<const double>(rx)); }

    const std::vector<double>& up_template() const noexcept { return s1_; }
    const std::vector<double>& down_template() const noexcept { return s2_; }

private:
    std::vector<double> s1_;
    std::vector<double> s2_;
};

inline MfDecision matched_filter_detect(const Waveform& rx, const ChirpParams& p) {
    return MatchedFilter(p).detect(std::span<const double>(rx.samples));
}

// ---------------------------------------------------------------------------
// Operation counts
// ---------------------------------------------------------------------------

struct ComplexityReport {
    std::uint64_t additions = 0;
    std::uint64_t multiplications = 0;
    std::uint64_t nonlinear_activations = 0;
    std::uint64_t total = 0;
    bool formula_mismatch = false;  // set when compared against a published value and they differ
};

/// Correlator cost for both templates over N1 samples.
inline ComplexityReport mf_op_count(std::uint64_t n1) {
    if (n1 < 1) throw ConfigError("mf_op_count: N1 must be >= 1");
    ComplexityReport r;
    r.additions = 2 * n1 - 1;
    r.multiplications = 2 * n1 * n1 - 2 * n1;
    r.nonlinear_activations = 0;
    r.total = r.additions + r.multiplications + r.nonlinear_activations;
    return r;
}

/// Fully connected N1 -> hidden... -> 1 network: one add and one activation per
/// computing neuron, one multiply per connection.
inline ComplexityReport dnn_op_count(std::uint64_t n1, std::span<const std::uint64_t> hidden) {
    if (n1 < 1) throw ConfigError("dnn_op_count: N1 must be >= 1");
    if (hidden.empty()) throw ConfigError("dnn_op_count: at least one hidden layer is required");
    ComplexityReport r;
    std::uint64_t prev = n1;
    for (auto h : hidden) {
        if (h < 1) throw ConfigError("dnn_op_count: hidden layer sizes must be >= 1");
        r.additions += h;
        r.multiplications += prev * h;
        prev = h;
    }
    r.additions += 1;
    r.multiplications += prev;
    r.nonlinear_activations = r.additions;
    r.total = r.additions + r.multiplications + r.nonlinear_activations;
    return r;
}

/// Default hidden sizes {N1, floor(7*N1/8)}.
inline std::vector<std::uint64_t> default_hidden(std::uint64_t n1) { return {n1, (7 * n1) / 8}; }

/// One column of the published complexity comparison.
struct PublishedColumn {
    const char* label;
    bool dnn;
    int lambda;
    std::uint64_t additions;
    std::uint64_t multiplications;
    std::uint64_t nonlinear_activations;
    std::uint64_t total;
    double advantage_pct;  // NaN for the DNN column
};

inline std::span<const PublishedColumn> published_complexity() {
    static constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    static const std::array<PublishedColumn, 4> cols{{
        {"MF (lambda=1)", false, 1, 1919, 1842240, 0, 1844159, 4186.5},
        {"MF (lambda=2)", false, 2, 959, 460320, 0, 461279, 972.2},
        {"MF (lambda=6)", false, 6, 319, 51040, 0, 51359, 19.4},
        {"DNN (lambda=6)", true, 6, 301, 42420, 301, 43022, nan},
    }};
    return cols;
}

struct ComplexityRow {
    PublishedColumn published;
    std::uint64_t n1 = 0;
    ComplexityReport formula;
    std::uint64_t table_internal_total = 0;  // printed ADD + MUL + NAV
    bool additions_mismatch = false;
    bool multiplications_mismatch = false;
    bool activations_mismatch = false;
    bool total_mismatch = false;
    double advantage_pct_table = 0.0;    // from printed totals, vs the DNN column
    double advantage_pct_formula = 0.0;  // from formula totals, vs the DNN formula total
};

/// Recompute every published column from the operation-count formulas and flag
/// each field where formula and table disagree.
inline std::vector<ComplexityRow> complexity_table(const ChirpParams& base = {}) {
    const auto cols = published_complexity();
    std::vector<ComplexityRow> rows;
    for (const auto& c : cols) {
        ChirpParams p = base;
        p.lambda = c.lambda;
        p.validate();
        ComplexityRow r;
        r.published = c;
        r.n1 = p.n1();
        if (c.dnn) {
            const auto hidden = default_hidden(r.n1);
            r.formula = dnn_op_count(r.n1, hidden);
        } else {
            r.formula = mf_op_count(r.n1);
        }
        r.table_internal_total = c.additions + c.multiplications + c.nonlinear_activations;
        r.additions_mismatch = r.formula.additions != c.additions;
        r.multiplications_mismatch = r.formula.multiplications != c.multiplications;
        r.activations_mismatch = r.formula.nonlinear_activations != c.nonlinear_activations;
        r.total_mismatch = r.formula.total != c.total;
        r.formula.formula_mismatch = r.additions_mismatch || r.multiplications_mismatch ||
                                     r.activations_mismatch || r.total_mismatch;
        rows.push_back(r);
    }
    const ComplexityRow* dnn = nullptr;
    for (const auto& r : rows)
        if (r.published.dnn) dnn = &r;
    for (auto& r : rows) {
        if (r.published.dnn || dnn == nullptr) {
            r.advantage_pct_table = std::numeric_limits<double>::quiet_NaN();
            r.advantage_pct_formula = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const auto t_dnn = static_cast<double>(dnn->table_internal_total);
        const auto f_dnn = static_cast<double>(dnn->formula.total);
        r.advantage_pct_table = 100.0 * (static_cast<double>(r.table_internal_total) - t_dnn) / t_dnn;
        r.advantage_pct_formula = 100.0 * (static_cast<double>(r.formula.total) - f_dnn) / f_dnn;
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Waveform files: "UWAW", u16 version, u32 fs (Hz), u64 count, f32 samples.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kWaveformVersion = 1;

inline std::vector<char> encode_waveform(const Waveform& w) {
    w.validate();
    if (w.fs != std::round(w.fs) || w.fs > 4294967295.0)
        throw InputError("waveform sample rate must be an integer number of Hz for serialization");
    io::ByteWriter out;
    out.put_bytes("UWAW");
    out.put_u16(kWaveformVersion);
    out.put_u32(static_cast<std::uint32_t>(w.fs));
    out.put_u64(w.samples.size());
    for (double v : w.samples) out.put_f32(static_cast<float>(v));
    return out.bytes();
}

inline Waveform decode_waveform(std::string_view bytes) {
    io::ByteReader in(bytes);
    in.expect_magic("UWAW");
    in.expect_version(kWaveformVersion);
    Waveform w;
    w.fs = in.get_u32("sample rate");
    const auto count = in.get_u64("sample count");
    if (count > in.remaining() / 4) throw ParseError("truncated payload while reading samples", in.offset());
    w.samples.resize(count);
    for (auto& v : w.samples) v = in.get_f32("sample");
    if (!in.at_end()) throw ParseError("trailing bytes after waveform payload", in.offset());
    return w;
}

inline void save_waveform(const std::string& path, const Waveform& w) { io::write_file(path, encode_waveform(w)); }
inline Waveform load_waveform(const std::string& path) { return decode_waveform(io::read_file(path)); }

}  // namespace arcfml::phy
