#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

#include "arcfml/chirp_phy.hpp"
#include "arcfml/dsp.hpp"
#include "arcfml/uwa_channel.hpp"

using namespace arcfml;
using namespace arcfml::channel;

namespace {

double power(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s / static_cast<double>(x.size());
}

Waveform tone(double f0, double fs, std::size_t n, double phase = 0.0) {
    Waveform w{std::vector<double>(n), fs};
    for (std::size_t k = 0; k < n; ++k) w.samples[k] = std::cos(2.0 * std::numbers::pi * f0 * static_cast<double>(k) / fs + phase);
    return w;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("arcfml_test_" + name)).string();
}

}  // namespace

TEST(BellSpectrum, CenterValueSymmetryAndEdge) {
    EXPECT_DOUBLE_EQ(bell_spectrum(0.0, 10.0, 9.0), 3.0 / (std::numbers::pi * 10.0));
    EXPECT_NEAR(bell_spectrum(10.0, 10.0, 9.0), 3.0 / (100.0 * std::numbers::pi), 1e-15);
    EXPECT_NEAR(bell_spectrum(10.0, 10.0, 9.0), 9.549e-3, 1e-6);
    for (double f : {0.3, 2.0, 7.7, 9.99}) EXPECT_DOUBLE_EQ(bell_spectrum(f, 10.0, 9.0), bell_spectrum(-f, 10.0, 9.0));
    EXPECT_EQ(bell_spectrum(10.01, 10.0, 9.0), 0.0);
    EXPECT_THROW(bell_spectrum(0.0, 0.0, 9.0), ConfigError);
    EXPECT_THROW(bell_spectrum(0.0, -1.0, 9.0), ConfigError);
}

TEST(RayleighConfig, TapCountsAndPowers) {
    RayleighModelConfig c;
    c.Ts = 1e-3;
    EXPECT_EQ(c.tap_count(), 13u);
    EXPECT_EQ(RayleighModelConfig{}.tap_count(), 73u);
    const auto p = c.tap_powers();
    double sum = 0.0;
    for (double v : p) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (std::size_t k = 1; k < p.size(); ++k) EXPECT_NEAR(10.0 * std::log10(p[k] / p[k - 1]), -0.66, 1e-12);
    RayleighModelConfig bad;
    bad.a = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = {};
    bad.fd = -1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(RayleighCir, ZeroDopplerGivesStaticTaps) {
    RayleighModelConfig c;
    c.fd = 0.0;
    const auto h = rayleigh_cir(c, 0.01, 96000.0, 4);
    for (std::size_t k = 0; k < h.num_taps; ++k)
        for (std::size_t t = 1; t < h.time_steps; t += 97) EXPECT_EQ(h.gain(k, t), h.gain(k, 0));
}

TEST(RayleighCir, DeterministicInSeed) {
    RayleighModelConfig c;
    const auto a = rayleigh_cir(c, 0.03, 96000.0, 9);
    const auto b = rayleigh_cir(c, 0.03, 96000.0, 9);
    const auto d = rayleigh_cir(c, 0.03, 96000.0, 10);
    EXPECT_EQ(a.taps, b.taps);
    EXPECT_NE(a.taps, d.taps);
    EXPECT_EQ(a.num_taps, 73u);
    EXPECT_EQ(a.time_steps, 2880u);
    EXPECT_THROW(rayleigh_cir(c, 0.0, 96000.0, 1), ConfigError);
}

TEST(RayleighCir, MeanTapPowersFollowTheDecayProfile) {
    RayleighModelConfig c;
    c.Ts = 1e-3;
    const std::size_t runs = 10000;
    std::vector<double> acc(c.tap_count(), 0.0);
    for (std::size_t r = 0; r < runs; ++r) {
        const auto h = rayleigh_cir(c, 0.1, 1000.0, r);
        for (std::size_t k = 0; k < h.num_taps; ++k)
            for (std::size_t t = 0; t < h.time_steps; t += 10) acc[k] += std::norm(h.gain(k, t));
    }
    double total = 0.0;
    for (auto& v : acc) {
        v /= static_cast<double>(runs) * 10.0;
        total += v;
    }
    EXPECT_NEAR(total, 1.0, 0.01);
    for (std::size_t k = 1; k < acc.size(); ++k) EXPECT_NEAR(10.0 * std::log10(acc[k] / acc[k - 1]), -0.66, 0.1) << k;
}

TEST(RayleighCir, TapProcessSpectrumHasBellShape) {
    RayleighModelConfig c;
    c.Ts = 1.0;
    c.max_excess_delay = 0.5;  // one tap
    c.fd = 30.0;
    const double fs = 240.0;   // synthesized without decimation
    const std::size_t n = 512;
    std::vector<double> psd(n, 0.0);
    for (std::uint64_t r = 0; r < 400; ++r) {
        const auto h = rayleigh_cir(c, static_cast<double>(n) / fs, fs, r);
        std::vector<std::complex<double>> g(n);
        for (std::size_t t = 0; t < n; ++t) g[t] = h.gain(0, t);
        const auto G = dsp::fft(g);
        for (std::size_t m = 0; m < n; ++m) psd[m] += std::norm(G[m]);
    }
    double se = 0.0, ss = 0.0, sum_est = 0.0, sum_ref = 0.0;
    std::vector<std::pair<double, double>> bins;
    for (std::size_t m = 0; m < n; ++m) {
        const double idx = m < n / 2 ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(n);
        const double f = idx * fs / static_cast<double>(n);
        if (std::abs(f) > c.fd) continue;
        bins.emplace_back(psd[m], bell_spectrum(f, c.fd, c.a));
        sum_est += psd[m];
        sum_ref += bins.back().second;
    }
    for (const auto& [e, r] : bins) {
        const double d = e / sum_est - r / sum_ref;
        se += d * d;
        ss += (r / sum_ref) * (r / sum_ref);
    }
    EXPECT_LT(se / ss, 0.05);
}

TEST(ApplyChannel, IdentityPassThrough) {
    phy::ChirpParams p;
    const auto x = phy::generate_chirp(p, phy::ChirpDirection::up);
    const auto y = apply_channel(x, ChannelRealization::identity(), {}, 1);
    EXPECT_EQ(y.samples, x.samples);
}

TEST(ApplyChannel, ZeroDbSnrDoublesPower) {
    const auto x = tone(1000.0, 96000.0, 100000);
    ImpairmentSpec imp;
    imp.snr_db = 0.0;
    const auto y = apply_channel(x, ChannelRealization::identity(), imp, 3);
    EXPECT_NEAR(power(y.samples) / power(x.samples), 2.0, 0.1);
}

TEST(ApplyChannel, TwoTapImpulseResponse) {
    Waveform x{std::vector<double>(8, 0.0), 96000.0};
    x.samples[0] = 1.0;
    const auto h = ChannelRealization::static_taps({{1.0, 0.0}, {0.5, 0.0}}, 1.0 / 96000.0);
    const auto y = apply_channel(x, h, {}, 0);
    EXPECT_EQ(y.samples, (std::vector<double>{1.0, 0.5, 0, 0, 0, 0, 0, 0}));
}

TEST(ApplyChannel, RejectsNonFiniteSnrAndIncompatibleTapSpacing) {
    const auto x = tone(1000.0, 96000.0, 64);
    ImpairmentSpec imp;
    imp.snr_db = std::nan("");
    EXPECT_THROW(apply_channel(x, ChannelRealization::identity(), imp, 0), ConfigError);
    imp.snr_db = -std::numeric_limits<double>::infinity();
    EXPECT_THROW(apply_channel(x, ChannelRealization::identity(), imp, 0), ConfigError);
    const auto h = ChannelRealization::static_taps({{1.0, 0.0}, {0.5, 0.0}}, 1.5 / 96000.0);
    EXPECT_THROW(apply_channel(x, h, {}, 0), ConfigError);
    ImpairmentSpec fast;
    fast.rel_speed = 1600.0;
    EXPECT_THROW(apply_channel(x, ChannelRealization::identity(), fast, 0), ConfigError);
}

TEST(ApplyChannel, PhaseRotationByNinetyDegreesGivesQuadrature) {
    const auto x = tone(12000.0, 96000.0, 4096);
    const auto y = apply_channel(x, ChannelRealization::phase_rotation(std::numbers::pi / 2), {}, 0);
    // Re{j (cos + j sin)} = -sin
    for (std::size_t k = 1000; k < 3000; ++k)
        EXPECT_NEAR(y.samples[k], -std::sin(2.0 * std::numbers::pi * 12000.0 * static_cast<double>(k) / 96000.0), 1e-9);
}

TEST(ApplyChannel, LinearBeforeNoise) {
    phy::ChirpParams p;
    const std::vector<std::uint8_t> bits{0, 1, 1};
    const auto x = phy::modulate_frame(bits, p);
    const std::vector<std::uint8_t> bits2{1, 0, 1};
    const auto y = phy::modulate_frame(bits2, p);
    const auto h = rayleigh_cir(RayleighModelConfig{}, 0.03, 96000.0, 5);
    ImpairmentSpec imp;
    imp.rel_speed = 7.0;
    imp.sto_samples = 33.25;
    const double a = 0.7, b = -1.9;
    Waveform mix{std::vector<double>(x.size()), x.fs};
    for (std::size_t k = 0; k < x.size(); ++k) mix.samples[k] = a * x.samples[k] + b * y.samples[k];
    const auto hm = apply_channel(mix, h, imp, 0);
    const auto hx = apply_channel(x, h, imp, 0);
    const auto hy = apply_channel(y, h, imp, 0);
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(hm.samples[k], a * hx.samples[k] + b * hy.samples[k], 1e-10);
}

TEST(ApplyChannel, NoiseIsDeterministicInSeed) {
    const auto x = tone(3000.0, 96000.0, 2000);
    ImpairmentSpec imp;
    imp.snr_db = 5.0;
    const auto h = rayleigh_cir(RayleighModelConfig{}, 0.03, 96000.0, 5);
    EXPECT_EQ(apply_channel(x, h, imp, 42).samples, apply_channel(x, h, imp, 42).samples);
    EXPECT_NE(apply_channel(x, h, imp, 42).samples, apply_channel(x, h, imp, 43).samples);
}

TEST(ApplySto, ShiftSemantics) {
    Waveform w{{1, 2, 3, 4, 5}, 1.0};
    EXPECT_EQ(apply_sto(w, 0.0).samples, w.samples);
    EXPECT_EQ(apply_sto(w, 3.0).samples, (std::vector<double>{4, 5, 0, 0, 0}));
    EXPECT_EQ(apply_sto(w, -2.0).samples, (std::vector<double>{0, 0, 1, 2, 3}));
}

TEST(ApplySto, HalfSampleDelayShiftsTonePhase) {
    const double f0 = 3000.0, fs = 96000.0;
    const auto w = tone(f0, fs, 4096);
    const auto s = apply_sto(w, 0.5);
    const auto ref = tone(f0, fs, 4096, std::numbers::pi * f0 / fs);
    double peak = 0.0;
    for (std::size_t k = 200; k < 3800; ++k) {
        EXPECT_NEAR(s.samples[k], ref.samples[k], 0.01);
        peak = std::max(peak, std::abs(s.samples[k]));
    }
    EXPECT_NEAR(peak, 1.0, 0.01);
}

TEST(ApplyDoppler, IdentityAndAlphaFromSpeed) {
    const auto w = tone(3000.0, 96000.0, 512);
    EXPECT_EQ(apply_doppler(w, 0.0).samples, w.samples);
    EXPECT_DOUBLE_EQ(doppler_alpha(15.0, 1500.0), 0.01);
    ImpairmentSpec imp;
    imp.rel_speed = 15.0;
    EXPECT_DOUBLE_EQ(imp.doppler_alpha(), 0.01);
    EXPECT_THROW(apply_doppler(w, 0.2), ConfigError);
}

TEST(ApplyDoppler, TonePeakMovesToScaledFrequency) {
    const double fs = 96000.0, f0 = 9000.0;
    const std::size_t n = 1u << 16;
    const auto y = apply_doppler(tone(f0, fs, n), 0.01);
    const auto Y = dsp::fft(std::span<const double>(y.samples));
    std::size_t best = 1;
    for (std::size_t k = 1; k < n / 2; ++k)
        if (std::abs(Y[k]) > std::abs(Y[best])) best = k;
    const double bin = fs / static_cast<double>(n);
    EXPECT_NEAR(static_cast<double>(best) * bin, 1.01 * f0, bin);
}

TEST(ApplyDoppler, InverseScalingRestoresSignal) {
    phy::ChirpParams p;
    const std::vector<std::uint8_t> bits{0, 1, 0, 0, 1};
    const auto w = phy::modulate_frame(bits, p);
    for (double alpha : {0.002, 0.0067, 0.01}) {
        const auto back = apply_doppler(apply_doppler(w, alpha), -alpha / (1.0 + alpha));
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            num += (back.samples[k] - w.samples[k]) * (back.samples[k] - w.samples[k]);
            den += w.samples[k] * w.samples[k];
        }
        EXPECT_LT(std::sqrt(num / den), 0.01) << alpha;
    }
}

TEST(CirFile, RoundTripIsBitIdentical) {
    auto h = rayleigh_cir(RayleighModelConfig{}, 0.01, 96000.0, 8);
    const auto path = temp_path("rt.uwac");
    save_cir(path, h);
    const auto back = load_cir(path);
    EXPECT_EQ(back.taps, h.taps);
    EXPECT_EQ(back.num_taps, h.num_taps);
    EXPECT_EQ(back.time_steps, h.time_steps);
    EXPECT_EQ(back.Ts, h.Ts);
    EXPECT_EQ(back.meta, h.meta);
    std::filesystem::remove(path);
}

TEST(CirFile, UnitTapFileIsIdentity) {
    const auto path = temp_path("unit.uwac");
    save_cir(path, ChannelRealization::identity());
    const auto h = load_cir(path);
    std::filesystem::remove(path);
    const auto x = tone(2000.0, 96000.0, 300);
    EXPECT_EQ(apply_channel(x, h, {}, 0).samples, x.samples);
}

TEST(CirFile, MetadataPresets) {
    const auto ncs = table1_metadata("NCS");
    ASSERT_TRUE(ncs.doppler_coverage_hz());
    EXPECT_DOUBLE_EQ(*ncs.doppler_coverage_hz(), 31.4);
    EXPECT_DOUBLE_EQ(*table1_metadata("NOF").doppler_coverage_hz(), 7.8);
    EXPECT_FALSE(table1_metadata("CWR").doppler_coverage_hz());
    EXPECT_EQ(*table1_metadata("CWR").get("environment"), "Reservoir");
    EXPECT_THROW(table1_metadata("XYZ"), ConfigError);

    auto h = ChannelRealization::identity();
    h.meta = ncs;
    const auto bytes = encode_cir(h);
    const auto back = decode_cir(std::string_view(bytes.data(), bytes.size()));
    EXPECT_DOUBLE_EQ(*back.meta.doppler_coverage_hz(), 31.4);
}

TEST(CirFile, MalformedInputReportsOffsets) {
    const auto bytes = encode_cir(rayleigh_cir(RayleighModelConfig{}, 0.001, 96000.0, 1));
    auto bad = bytes;
    bad[1] = 'x';
    try {
        decode_cir(std::string_view(bad.data(), bad.size()));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 0u);
        EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
    }
    try {
        decode_cir(std::string_view(bytes.data(), bytes.size() - 5));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
        EXPECT_GT(e.offset(), 24u);
    }
    auto ver = bytes;
    ver[4] = 9;
    try {
        decode_cir(std::string_view(ver.data(), ver.size()));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
    EXPECT_THROW(decode_cir(std::string_view(bytes.data(), 10)), ParseError);
}
