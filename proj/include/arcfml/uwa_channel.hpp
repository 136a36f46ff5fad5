// uwa_channel.hpp - time-varying underwater acoustic channel simulation
//
// The channel is a tapped delay line with taps spaced Ts apart. Each tap is a
// complex Gaussian process with exponentially decaying mean power and a
// bell-shaped Doppler spectrum. Complex gains act on the analytic signal of the
// real passband input and the real part is kept. Impairments applied after the
// multipath: Doppler time scaling, symbol time offset (STO), then white
// Gaussian noise.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "arcfml/binary_io.hpp"
#include "arcfml/chirp_phy.hpp"
#include "arcfml/dsp.hpp"
#include "arcfml/error.hpp"
#include "arcfml/rng.hpp"

namespace arcfml::channel {

using phy::Waveform;
using cplx = std::complex<double>;

/// Bell-shaped Doppler power spectral density, zero outside |f| <= fd:
///   S(f) = sqrt(a) / (pi * fd * (1 + a * (f/fd)^2))
inline double bell_spectrum(double f, double fd, double a) {
    if (!(fd > 0.0)) throw ConfigError("bell_spectrum: fd must be positive");
    if (!(a > 0.0)) throw ConfigError("bell_spectrum: a must be positive");
    if (std::abs(f) > fd) return 0.0;
    const double r = f / fd;
    return std::sqrt(a) / (std::numbers::pi * fd * (1.0 + a * r * r));
}

/// Provenance record: ordered key=value strings.
struct ChannelMeta {
    std::vector<std::pair<std::string, std::string>> entries;

    std::optional<std::string> get(std::string_view key) const {
        for (const auto& [k, v] : entries)
            if (k == key) return v;
        return std::nullopt;
    }

    void set(std::string key, std::string value) {
        for (auto& [k, v] : entries)
            if (k == key) {
                v = std::move(value);
                return;
            }
        entries.emplace_back(std::move(key), std::move(value));
    }

    /// Doppler coverage in Hz when recorded as a number; nullopt for "Uncalculated" or absent.
    std::optional<double> doppler_coverage_hz() const {
        const auto v = get("doppler_coverage_hz");
        if (!v || v->empty()) return std::nullopt;
        char* end = nullptr;
        const double d = std::strtod(v->c_str(), &end);
        if (end == v->c_str()) return std::nullopt;
        return d;
    }

    bool operator==(const ChannelMeta&) const = default;
};

/// Dataset descriptors for the simulated and measured channel families.
inline ChannelMeta table1_metadata(std::string_view name) {
    struct Row {
        const char *name, *env, *range, *depth, *tx, *rx, *doppler;
    };
    static constexpr Row rows[] = {
        {"SIM-P", "Rayleigh", "-", "-", "-", "-", "30"},
        {"SIM-B", "Default", "500m~8000m", "100", "Suspended", "Suspended", "Uncalculated"},
        {"NOF", "Fjord", "750", "10", "Bottom", "Bottom", "7.8"},
        {"NCS", "Shelf", "540", "80", "Bottom", "Bottom", "31.4"},
        {"CWR", "Reservoir", "1100, 2100, 6000", "50", "Suspended", "Suspended", "Uncalculated"},
    };
    for (const auto& r : rows) {
        if (name == r.name) {
            ChannelMeta m;
            m.set("model", r.name);
            m.set("environment", r.env);
            m.set("range_m", r.range);
            m.set("water_depth_m", r.depth);
            m.set("tx_deployment", r.tx);
            m.set("rx_deployment", r.rx);
            m.set("doppler_coverage_hz", r.doppler);
            return m;
        }
    }
    throw ConfigError("unknown channel dataset name: " + std::string(name));
}

/// Tap gains g_k[t], stored tap-major in single precision (the file precision).
struct ChannelRealization {
    std::size_t num_taps = 0;
    std::size_t time_steps = 0;
    double Ts = 0.0;
    std::vector<std::complex<float>> taps;
    ChannelMeta meta;

    /// Gain of tap k at sample time t; times past the end hold the last value.
    cplx gain(std::size_t k, std::size_t t) const {
        const auto tt = std::min(t, time_steps - 1);
        const auto g = taps[k * time_steps + tt];
        return {g.real(), g.imag()};
    }

    void validate() const {
        if (num_taps == 0 || time_steps == 0) throw InputError("channel realization has no taps");
        if (taps.size() != num_taps * time_steps) throw InputError("channel tap storage size mismatch");
        if (!(Ts > 0.0) || !std::isfinite(Ts)) throw InputError("channel tap spacing must be positive");
        for (const auto& g : taps)
            if (!std::isfinite(g.real()) || !std::isfinite(g.imag()))
                throw InputError("channel realization contains non-finite gains");
    }

    double delay_span() const { return static_cast<double>(num_taps - 1) * Ts; }

    bool has_complex_gains() const {
        return std::any_of(taps.begin(), taps.end(), [](const auto& g) { return g.imag() != 0.0f; });
    }

    /// Time-invariant channel from a list of tap gains.
    static ChannelRealization static_taps(const std::vector<cplx>& gains, double Ts) {
        ChannelRealization h;
        h.num_taps = gains.size();
        h.time_steps = 1;
        h.Ts = Ts;
        for (const auto& g : gains) h.taps.emplace_back(static_cast<float>(g.real()), static_cast<float>(g.imag()));
        h.meta.set("model", "static");
        h.validate();
        return h;
    }

    static ChannelRealization identity() {
        auto h = static_taps({cplx{1.0, 0.0}}, 1.0 / 96000.0);
        h.meta.set("model", "identity");
        return h;
    }

    /// Single static tap e^{j*phase}: a pure carrier phase rotation.
    static ChannelRealization phase_rotation(double phase_rad) {
        auto h = static_taps({std::polar(1.0, phase_rad)}, 1.0 / 96000.0);
        h.meta.set("model", "rotation");
        return h;
    }
};

struct RayleighModelConfig {
    double max_excess_delay = 0.012;  // s
    double decay_db_per_tap = 0.66;   // dB
    double fd = 30.0;                 // maximum Doppler frequency, Hz
    double a = 9.0;                   // bell-shape parameter
    double Ts = 1.0 / 6000.0;         // tap spacing, s (1/B for the default 6-12 kHz band)

    void validate() const {
        if (!(max_excess_delay > 0.0)) throw ConfigError("rayleigh: max_excess_delay must be > 0");
        if (!(fd >= 0.0) || !std::isfinite(fd)) throw ConfigError("rayleigh: fd must be >= 0");
        if (!(a > 0.0)) throw ConfigError("rayleigh: a must be > 0");
        if (!(decay_db_per_tap >= 0.0)) throw ConfigError("rayleigh: decay_db_per_tap must be >= 0");
        if (!(Ts > 0.0)) throw ConfigError("rayleigh: Ts must be > 0");
    }

    std::size_t tap_count() const {
        return static_cast<std::size_t>(std::floor(max_excess_delay / Ts + 1e-9)) + 1;
    }

    /// Mean tap powers 10^(-decay*k/10), normalized to unit total.
    std::vector<double> tap_powers() const {
        std::vector<double> p(tap_count());
        double sum = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) {
            p[k] = std::pow(10.0, -decay_db_per_tap * static_cast<double>(k) / 10.0);
            sum += p[k];
        }
        for (auto& v : p) v /= sum;
        return p;
    }
};

namespace detail {

/// Unit-power complex Gaussian process with PSD proportional to the bell spectrum,
/// synthesized by shaping white spectral coefficients and inverse transforming.
inline std::vector<cplx> shaped_gaussian_process(std::size_t length, double rate, double fd, double a, Rng& rng) {
    std::normal_distribution<double> n01(0.0, std::sqrt(0.5));
    std::vector<cplx> X(length);
    std::vector<double> shape(length);
    double total = 0.0;
    for (std::size_t m = 0; m < length; ++m) {
        const double idx = m < length / 2 ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(length);
        const double f = idx * rate / static_cast<double>(length);
        shape[m] = bell_spectrum(f, fd, a);
        total += shape[m];
    }
    const double L = static_cast<double>(length);
    for (std::size_t m = 0; m < length; ++m) {
        const double re = n01(rng);
        const double im = n01(rng);
        X[m] = cplx{re, im} * (L * std::sqrt(shape[m] / total));
    }
    return dsp::ifft(X);
}

/// Real part of the normalized lag-one autocorrelation of that process.
inline double lag1_correlation(std::size_t length, double rate, double fd, double a) {
    double num = 0.0, den = 0.0;
    for (std::size_t m = 0; m < length; ++m) {
        const double idx = m < length / 2 ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(length);
        const double sm = bell_spectrum(idx * rate / static_cast<double>(length), fd, a);
        num += sm * std::cos(2.0 * std::numbers::pi * idx / static_cast<double>(length));
        den += sm;
    }
    return num / den;
}

}  // namespace detail

/// Draw a Rayleigh-fading tapped-delay-line realization of the given duration,
/// sampled at fs. Deterministic in seed; each tap uses its own derived stream.
inline ChannelRealization rayleigh_cir(const RayleighModelConfig& cfg, double duration, double fs, std::uint64_t seed) {
    cfg.validate();
    if (!(duration > 0.0)) throw ConfigError("rayleigh_cir: duration must be > 0");
    if (!(fs > 0.0)) throw ConfigError("rayleigh_cir: fs must be > 0");

    ChannelRealization h;
    h.num_taps = cfg.tap_count();
    h.time_steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(duration * fs - 1e-9)));
    h.Ts = cfg.Ts;
    h.taps.resize(h.num_taps * h.time_steps);
    h.meta = table1_metadata("SIM-P");
    h.meta.set("doppler_coverage_hz", std::to_string(cfg.fd));
    h.meta.set("seed", std::to_string(seed));

    const auto powers = cfg.tap_powers();
    std::normal_distribution<double> n01(0.0, std::sqrt(0.5));

    // The fading process is synthesized on a decimated grid (about 8 fd) with at
    // least 64 spectral bins inside the Doppler band, then linearly interpolated.
    // Interpolated points are rescaled so every sample keeps unit expected power.
    std::size_t decim = 1;
    if (cfg.fd > 0.0) decim = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fs / (8.0 * cfg.fd))));
    const double rate = fs / static_cast<double>(decim);
    const std::size_t coarse_needed = (h.time_steps + decim - 1) / decim + 2;
    std::size_t len = coarse_needed;
    if (cfg.fd > 0.0) len = std::max(len, static_cast<std::size_t>(std::ceil(64.0 * rate / cfg.fd)));
    len = dsp::next_pow2(len);

    std::vector<double> gain_fix(decim, 1.0);
    if (cfg.fd > 0.0 && decim > 1) {
        const double rho = detail::lag1_correlation(len, rate, cfg.fd, cfg.a);
        for (std::size_t j = 0; j < decim; ++j) {
            const double u = static_cast<double>(j) / static_cast<double>(decim);
            gain_fix[j] = 1.0 / std::sqrt((1.0 - u) * (1.0 - u) + u * u + 2.0 * u * (1.0 - u) * rho);
        }
    }

    for (std::size_t k = 0; k < h.num_taps; ++k) {
        Rng rng = make_rng(seed, {stream::tap, k});
        const double amp = std::sqrt(powers[k]);
        auto* row = &h.taps[k * h.time_steps];
        if (cfg.fd == 0.0) {
            const cplx g = cplx{n01(rng), n01(rng)} * amp;
            std::fill(row, row + h.time_steps, std::complex<float>(static_cast<float>(g.real()), static_cast<float>(g.imag())));
            continue;
        }
        const auto proc = detail::shaped_gaussian_process(len, rate, cfg.fd, cfg.a, rng);
        for (std::size_t t = 0; t < h.time_steps; ++t) {
            const std::size_t i0 = t / decim;
            const double frac = static_cast<double>(t % decim) / static_cast<double>(decim);
            const cplx g = (proc[i0] * (1.0 - frac) + proc[i0 + 1] * frac) * (amp * gain_fix[t % decim]);
            row[t] = {static_cast<float>(g.real()), static_cast<float>(g.imag())};
        }
    }
    return h;
}

struct ImpairmentSpec {
    double snr_db = std::numeric_limits<double>::infinity();  // mean input power / noise variance; +inf = noiseless
    double sto_samples = 0.0;                                  // symbol time offset, samples (fractional allowed)
    double rel_speed = 0.0;                                    // relative platform speed v, m/s
    double sound_speed = 1500.0;                               // c, m/s

    double doppler_alpha() const { return rel_speed / sound_speed; }

    void validate() const {
        if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
            throw ConfigError("impairment: snr_db must be finite or +inf (noiseless)");
        if (!(sound_speed > 0.0)) throw ConfigError("impairment: sound_speed must be > 0");
        if (!(std::abs(rel_speed) < sound_speed)) throw ConfigError("impairment: |rel_speed| must be < sound_speed");
        if (!std::isfinite(sto_samples)) throw ConfigError("impairment: sto_samples must be finite");
    }
};

/// Relative Doppler scale v / c.
inline double doppler_alpha(double rel_speed, double sound_speed = 1500.0) { return rel_speed / sound_speed; }

/// out[n] = w(n + delta): integer part shifts, fractional part uses sinc interpolation. Zero fill.
inline Waveform apply_sto(const Waveform& w, double delta) {
    Waveform out{std::vector<double>(w.samples.size(), 0.0), w.fs};
    const auto& interp = dsp::SincInterpolator::instance();
    const std::span<const double> x(w.samples);
    for (std::size_t n = 0; n < out.samples.size(); ++n) out.samples[n] = interp.at(x, static_cast<double>(n) + delta);
    return out;
}

/// out[n] = w((1 + alpha) n): time compression (alpha > 0) or expansion, same length as input.
inline Waveform apply_doppler(const Waveform& w, double alpha) {
    if (!(std::abs(alpha) < 0.1)) throw ConfigError("apply_doppler: |alpha| must be < 0.1");
    Waveform out{std::vector<double>(w.samples.size(), 0.0), w.fs};
    const auto& interp = dsp::SincInterpolator::instance();
    const std::span<const double> x(w.samples);
    const double scale = 1.0 + alpha;
    for (std::size_t n = 0; n < out.samples.size(); ++n) out.samples[n] = interp.at(x, scale * static_cast<double>(n));
    return out;
}

/// Noise variance giving the requested per-sample SNR against the input's mean power.
inline double noise_variance(std::span<const double> reference, double snr_db) {
    double p = 0.0;
    for (double v : reference) p += v * v;
    p /= static_cast<double>(reference.size());
    return p / std::pow(10.0, snr_db / 10.0);
}

/// Pass x through the tapped delay line, then Doppler scaling, STO and AWGN.
///
/// The noise variance is set from the mean power of x (channel mean power is
/// normalized to one), so snr_db = 0 doubles the output power on a unit tap.
inline Waveform apply_channel(const Waveform& x, const ChannelRealization& h, const ImpairmentSpec& imp,
                              std::uint64_t seed) {
    x.validate();
    h.validate();
    imp.validate();

    std::size_t tap_step = 0;
    if (h.num_taps > 1) {
        const double d = h.Ts * x.fs;
        if (std::abs(d - std::round(d)) > 1e-6 || std::round(d) < 1.0)
            throw ConfigError("apply_channel: tap spacing Ts*fs must be a positive integer number of samples");
        tap_step = static_cast<std::size_t>(std::llround(d));
    }

    const std::size_t n = x.samples.size();
    std::vector<double> quad;
    const bool complex_taps = h.has_complex_gains();
    if (complex_taps) quad = dsp::hilbert(x.samples);

    Waveform y{std::vector<double>(n, 0.0), x.fs};
    for (std::size_t k = 0; k < h.num_taps; ++k) {
        const std::size_t lag = k * tap_step;
        if (lag >= n) break;
        for (std::size_t t = lag; t < n; ++t) {
            const cplx g = h.gain(k, t);
            double v = g.real() * x.samples[t - lag];
            if (complex_taps) v -= g.imag() * quad[t - lag];
            y.samples[t] += v;
        }
    }

    if (imp.rel_speed != 0.0) y = apply_doppler(y, imp.doppler_alpha());
    if (imp.sto_samples != 0.0) y = apply_sto(y, imp.sto_samples);

    if (std::isfinite(imp.snr_db)) {
        const double sigma = std::sqrt(noise_variance(x.samples, imp.snr_db));
        Rng rng = make_rng(seed, {stream::noise});
        std::normal_distribution<double> noise(0.0, sigma);
        for (auto& v : y.samples) v += noise(rng);
    }
    return y;
}

// ---------------------------------------------------------------------------
// CIR files: "UWAC", u16 version, u32 taps, u64 steps, f64 Ts,
// u32 metadata count + (u32 length, "key=value") pairs, then f32 (re, im) tap-major.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kCirVersion = 1;

inline std::vector<char> encode_cir(const ChannelRealization& h) {
    h.validate();
    io::ByteWriter out;
    out.put_bytes("UWAC");
    out.put_u16(kCirVersion);
    out.put_u32(static_cast<std::uint32_t>(h.num_taps));
    out.put_u64(h.time_steps);
    out.put_f64(h.Ts);
    out.put_u32(static_cast<std::uint32_t>(h.meta.entries.size()));
    for (const auto& [k, v] : h.meta.entries) {
        if (k.find('=') != std::string::npos) throw InputError("metadata key must not contain '=': " + k);
        const std::string kv = k + "=" + v;
        out.put_u32(static_cast<std::uint32_t>(kv.size()));
        out.put_bytes(kv);
    }
    for (const auto& g : h.taps) {
        out.put_f32(g.real());
        out.put_f32(g.imag());
    }
    return out.bytes();
}

inline ChannelRealization decode_cir(std::string_view bytes) {
    io::ByteReader in(bytes);
    in.expect_magic("UWAC");
    in.expect_version(kCirVersion);
    ChannelRealization h;
    const auto taps_at = in.offset();
    h.num_taps = in.get_u32("tap count");
    if (h.num_taps == 0) throw ParseError("tap count must be positive", taps_at);
    const auto steps_at = in.offset();
    h.time_steps = in.get_u64("time steps");
    if (h.time_steps == 0) throw ParseError("time steps must be positive", steps_at);
    const auto ts_at = in.offset();
    h.Ts = in.get_f64("tap spacing");
    if (!(h.Ts > 0.0) || !std::isfinite(h.Ts)) throw ParseError("tap spacing must be positive", ts_at);
    const auto count = in.get_u32("metadata count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = in.get_u32("metadata length");
        const auto at = in.offset();
        const auto kv = in.get_bytes(len, "metadata entry");
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("metadata entry without '='", at);
        h.meta.entries.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    const std::uint64_t n = static_cast<std::uint64_t>(h.num_taps) * h.time_steps;
    if (h.time_steps > (std::uint64_t{1} << 40) || n > in.remaining() / 8)
        throw ParseError("truncated payload while reading taps", in.offset());
    h.taps.resize(n);
    for (auto& g : h.taps) {
        const float re = in.get_f32("tap real part");
        const float im = in.get_f32("tap imaginary part");
        g = {re, im};
    }
    if (!in.at_end()) throw ParseError("trailing bytes after tap payload", in.offset());
    return h;
}

inline void save_cir(const std::string& path, const ChannelRealization& h) { io::write_file(path, encode_cir(h)); }
inline ChannelRealization load_cir(const std::string& path) { return decode_cir(io::read_file(path)); }

}  // namespace arcfml::channel
