#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "arcfml/chirp_phy.hpp"
#include "arcfml/dsp.hpp"
#include "arcfml/stats.hpp"

using namespace arcfml;
using namespace arcfml::phy;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Empirical MF error rate with white noise added directly to one clean symbol.
double mf_awgn_ber(double ebn0_db, int lambda, std::size_t trials, std::uint64_t seed) {
    ChirpParams p;
    p.lambda = lambda;
    const auto s1 = generate_chirp(p, ChirpDirection::up).samples;
    const auto s2 = generate_chirp(p, ChirpDirection::down).samples;
    const double eb = dot(s1, s1);
    const double sigma = std::sqrt(eb / stats::db_to_linear(ebn0_db) / 2.0);
    const MatchedFilter mf(p);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    std::bernoulli_distribution coin(0.5);
    std::size_t errors = 0;
    std::vector<double> rx(s1.size() / static_cast<std::size_t>(lambda));
    for (std::size_t t = 0; t < trials; ++t) {
        const int bit = coin(rng);
        const auto& s = bit ? s2 : s1;
        for (std::size_t k = 0; k < s.size(); ++k) {
            const double v = s[k] + n(rng);
            if (k % static_cast<std::size_t>(lambda) == 0) rx[k / static_cast<std::size_t>(lambda)] = v;
        }
        errors += mf.detect(rx).bit != bit;
    }
    return static_cast<double>(errors) / static_cast<double>(trials);
}

}  // namespace

TEST(ChirpParams, RejectsInvalidBandsNamingTheInvariant) {
    ChirpParams p;
    p.f2 = 50000.0;
    try {
        p.validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("f2 < fs/2"), std::string::npos);
    }
    ChirpParams q;
    q.f1 = 13000.0;
    EXPECT_THROW(q.validate(), ConfigError);
    ChirpParams r;
    r.lambda = 7;
    EXPECT_THROW(r.validate(), ConfigError);
    ChirpParams s;
    s.T = 0.01000001;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(GenerateChirp, FirstSampleIsOneAndLengthIsTfs) {
    ChirpParams p;
    for (auto dir : {ChirpDirection::up, ChirpDirection::down}) {
        const auto w = generate_chirp(p, dir);
        EXPECT_EQ(w.size(), 960u);
        EXPECT_DOUBLE_EQ(w.samples[0], 1.0);
        EXPECT_DOUBLE_EQ(w.fs, 96000.0);
    }
}

TEST(GenerateChirp, UpChirpEndsNearF2AndDownChirpNearF1) {
    ChirpParams p;
    auto peak_hz = [&](const std::vector<double>& s) {
        const std::vector<double> tail(s.end() - 240, s.end());
        std::vector<double> padded(8192, 0.0);
        std::copy(tail.begin(), tail.end(), padded.begin());
        const auto X = dsp::fft(std::span<const double>(padded));
        std::size_t best = 0;
        for (std::size_t k = 1; k < padded.size() / 2; ++k)
            if (std::abs(X[k]) > std::abs(X[best])) best = k;
        return static_cast<double>(best) * p.fs / static_cast<double>(padded.size());
    };
    // The final quarter sweeps 10.5-12 kHz (up) and 7.5-6 kHz (down).
    const double up = peak_hz(generate_chirp(p, ChirpDirection::up).samples);
    const double down = peak_hz(generate_chirp(p, ChirpDirection::down).samples);
    EXPECT_GT(up, 10400.0);
    EXPECT_LT(up, 12100.0);
    EXPECT_GT(down, 5900.0);
    EXPECT_LT(down, 7600.0);
}

TEST(GenerateChirp, UpAndDownAreNearlyOrthogonal) {
    ChirpParams p;
    const auto s1 = generate_chirp(p, ChirpDirection::up).samples;
    const auto s2 = generate_chirp(p, ChirpDirection::down).samples;
    const double rho = std::abs(dot(s1, s2)) / std::sqrt(dot(s1, s1) * dot(s2, s2));
    EXPECT_LT(rho, 0.1);
}

TEST(GenerateChirp, EnergySymmetryWhenBandCentreIsOnTheSymbolGrid) {
    // With (f1+f2)T an integer and zero initial phase, s2 is s1 reversed in time.
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> f1c(10, 200), span(5, 250), lam(1, 8);
    for (int i = 0; i < 50; ++i) {
        ChirpParams p;
        p.f1 = 100.0 * f1c(rng);
        p.f2 = std::min(p.f1 + 100.0 * span(rng), 47900.0);
        const int l = lam(rng);
        p.lambda = 960 % l == 0 ? l : 1;
        const auto s1 = chirp_template(p, ChirpDirection::up).samples;
        const auto s2 = chirp_template(p, ChirpDirection::down).samples;
        EXPECT_NEAR(dot(s1, s1) / dot(s2, s2), 1.0, 1e-3) << "f1=" << p.f1 << " f2=" << p.f2;
    }
}

TEST(GenerateChirp, EnergyAsymmetryStaysWithinTheEdgeTermBound) {
    // Off the grid the ratio drifts by edge terms of size ~ 2 / (N sin(2 pi f_min / fs)).
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> f(1000.0, 20000.0), ph(0.0, 6.283);
    for (int i = 0; i < 200; ++i) {
        ChirpParams p;
        p.f1 = f(rng);
        p.f2 = std::min(p.f1 + 500.0 + f(rng), p.fs / 2 - 100.0);
        p.phi0 = ph(rng);
        const auto s1 = generate_chirp(p, ChirpDirection::up).samples;
        const auto s2 = generate_chirp(p, ChirpDirection::down).samples;
        const double n = static_cast<double>(s1.size());
        const double m = std::min(std::sin(2.0 * std::numbers::pi * p.f1 / p.fs),
                                  std::sin(2.0 * std::numbers::pi * p.f2 / p.fs));
        const double b = 2.0 / (n * m);
        EXPECT_LE(std::abs(dot(s1, s1) / dot(s2, s2) - 1.0), 2.0 * b / (1.0 - b));
    }
}

TEST(ModulateFrame, ConcatenatesSymbols) {
    ChirpParams p;
    const auto s1 = generate_chirp(p, ChirpDirection::up).samples;
    const auto s2 = generate_chirp(p, ChirpDirection::down).samples;
    const std::vector<std::uint8_t> one{0};
    EXPECT_EQ(modulate_frame(one, p).samples, s1);
    const std::vector<std::uint8_t> two{0, 1};
    const auto w = modulate_frame(two, p);
    EXPECT_TRUE(std::equal(s1.begin(), s1.end(), w.samples.begin()));
    EXPECT_TRUE(std::equal(s2.begin(), s2.end(), w.samples.begin() + 960));
    const std::vector<std::uint8_t> frame(200, 1);
    EXPECT_EQ(modulate_frame(frame, p).size(), 200u * 960u);
    EXPECT_THROW(modulate_frame(std::vector<std::uint8_t>{}, p), InputError);
    EXPECT_THROW(modulate_frame(std::vector<std::uint8_t>{2}, p), InputError);
}

TEST(Downsample, StrideSemantics) {
    Waveform w{{1, 2, 3, 4}, 4.0};
    const auto d = downsample(w, 2);
    EXPECT_EQ(d.samples, (std::vector<double>{1, 3}));
    EXPECT_DOUBLE_EQ(d.fs, 2.0);
    EXPECT_EQ(downsample(w, 1).samples, w.samples);
    ChirpParams p;
    EXPECT_EQ(downsample(generate_chirp(p, ChirpDirection::up), 6).size(), 160u);
    EXPECT_THROW(downsample(w, 3), ConfigError);
}

TEST(Downsample, TemplateAtReducedRateMatchesDownsampledSymbol) {
    ChirpParams p;
    p.lambda = 6;
    const auto full = generate_chirp(p, ChirpDirection::down);
    const auto tmpl = chirp_template(p, ChirpDirection::down);
    const auto ds = downsample(full, 6);
    ASSERT_EQ(tmpl.size(), ds.size());
    for (std::size_t k = 0; k < ds.size(); ++k) EXPECT_NEAR(tmpl.samples[k], ds.samples[k], 1e-9);
}

TEST(MatchedFilter, CleanSymbolsDecodeCorrectly) {
    ChirpParams p;
    const auto d0 = matched_filter_detect(generate_chirp(p, ChirpDirection::up), p);
    EXPECT_EQ(d0.bit, 0);
    EXPECT_GT(d0.c1, d0.c2);
    const auto d1 = matched_filter_detect(generate_chirp(p, ChirpDirection::down), p);
    EXPECT_EQ(d1.bit, 1);
    EXPECT_THROW(MatchedFilter(p).detect(std::vector<double>(959, 0.0)), InputError);
}

TEST(MatchedFilter, TiesBreakToZero) {
    ChirpParams p;
    EXPECT_EQ(MatchedFilter(p).detect(std::vector<double>(960, 0.0)).bit, 0);
}

TEST(MatchedFilter, SwappingSymbolAndNoiseSignFlipsDecision) {
    ChirpParams p;
    const auto s1 = generate_chirp(p, ChirpDirection::up).samples;
    const auto s2 = generate_chirp(p, ChirpDirection::down).samples;
    const MatchedFilter mf(p);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int t = 0; t < 500; ++t) {
        std::vector<double> a(960), b(960);
        for (std::size_t k = 0; k < 960; ++k) {
            const double v = n(rng);
            a[k] = s1[k] + v;
            b[k] = s2[k] - v;
        }
        const auto da = mf.detect(a), db = mf.detect(b);
        if (da.c1 == da.c2) continue;
        EXPECT_EQ(da.bit, 1 - db.bit);
    }
}

TEST(MatchedFilter, AwgnBerWithinFactorTwoOfQFunction) {
    const double ber = mf_awgn_ber(10.0, 1, 100000, 5);
    const double ref = stats::orthogonal_binary_ber(10.0);
    EXPECT_GT(ber, ref / 2.0);
    EXPECT_LT(ber, ref * 2.0);
}

TEST(MatchedFilter, BerNonIncreasingInEbN0AndWorseWhenDownsampled) {
    const std::size_t trials = 20000;
    double prev = 1.0;
    for (double e : {0.0, 3.0, 6.0, 8.0}) {
        const double b = mf_awgn_ber(e, 1, trials, 17);
        const auto ci = stats::wilson(static_cast<std::uint64_t>(prev * trials), trials);
        EXPECT_LE(b, prev + ci.half_width) << "Eb/N0 " << e;
        prev = b;
    }
    // At lambda=6 the chirps alias, so the decimated correlator loses separation.
    EXPECT_GE(mf_awgn_ber(6.0, 6, trials, 21), mf_awgn_ber(6.0, 1, trials, 21));
}

TEST(Complexity, MatchedFilterCounts) {
    EXPECT_EQ(mf_op_count(960).additions, 1919u);
    EXPECT_EQ(mf_op_count(160).additions, 319u);
    const auto one = mf_op_count(1);
    EXPECT_EQ(one.additions, 1u);
    EXPECT_EQ(one.multiplications, 0u);
    EXPECT_THROW(mf_op_count(0), ConfigError);
}

TEST(Complexity, DnnCounts) {
    const std::vector<std::uint64_t> h{160, 140};
    const auto r = dnn_op_count(160, h);
    EXPECT_EQ(r.additions, 301u);
    EXPECT_EQ(r.nonlinear_activations, 301u);
    EXPECT_EQ(r.multiplications, 160u * 160u + 160u * 140u + 140u);
    EXPECT_EQ(r.multiplications, 48140u);
    const std::vector<std::uint64_t> tiny{1};
    EXPECT_EQ(dnn_op_count(1, tiny).multiplications, 2u);
    EXPECT_EQ(default_hidden(160), h);
}

TEST(Complexity, TotalsAlwaysEqualFieldSums) {
    for (std::uint64_t n = 1; n < 2000; n += 37) {
        const auto m = mf_op_count(n);
        EXPECT_EQ(m.total, m.additions + m.multiplications + m.nonlinear_activations);
        const auto h = default_hidden(n);
        if (h[1] == 0) continue;
        const auto d = dnn_op_count(n, h);
        EXPECT_EQ(d.total, d.additions + d.multiplications + d.nonlinear_activations);
    }
}

TEST(Complexity, TableFlagsDisagreementsWithPublishedValues) {
    const auto rows = complexity_table();
    ASSERT_EQ(rows.size(), 4u);
    const auto& dnn = rows[3];
    EXPECT_TRUE(dnn.published.dnn);
    EXPECT_FALSE(dnn.additions_mismatch);
    EXPECT_FALSE(dnn.activations_mismatch);
    EXPECT_TRUE(dnn.multiplications_mismatch);
    EXPECT_TRUE(dnn.formula.formula_mismatch);
    EXPECT_EQ(dnn.table_internal_total, 43022u);
    EXPECT_EQ(rows[0].table_internal_total, 1844159u);
    EXPECT_FALSE(rows[0].additions_mismatch);
    // Advantage recomputed from printed totals reproduces the printed percentages.
    EXPECT_NEAR(rows[0].advantage_pct_table, 4186.5, 0.05);
    EXPECT_NEAR(rows[1].advantage_pct_table, 972.2, 0.05);
    EXPECT_NEAR(rows[2].advantage_pct_table, 19.4, 0.05);
}

TEST(WaveformFile, RoundTripAndErrors) {
    ChirpParams p;
    const auto w = generate_chirp(p, ChirpDirection::up);
    const auto bytes = encode_waveform(w);
    EXPECT_EQ(bytes.size(), 18u + 4u * 960u);
    const auto back = decode_waveform(std::string_view(bytes.data(), bytes.size()));
    ASSERT_EQ(back.size(), w.size());
    EXPECT_DOUBLE_EQ(back.fs, w.fs);
    for (std::size_t k = 0; k < w.size(); ++k) EXPECT_EQ(back.samples[k], static_cast<float>(w.samples[k]));

    auto bad = bytes;
    bad[0] = 'X';
    try {
        decode_waveform(std::string_view(bad.data(), bad.size()));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 0u);
        EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
    }
    EXPECT_THROW(decode_waveform(std::string_view(bytes.data(), bytes.size() - 3)), ParseError);
}
