#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "arcfml/cdnn.hpp"
#include "arcfml/chirp_phy.hpp"
#include "test_support.hpp"

using namespace arcfml;
using namespace arcfml::cdnn;
using arcfml::testing::ReferenceNet;

TEST(Layout, OffsetsAreLayerMajorWeightsThenBiases) {
    Layout l({3, 4, 2, 1});
    EXPECT_EQ(l.total, 3u * 4 + 4 + 4 * 2 + 2 + 2 * 1 + 1);
    EXPECT_EQ(l.w_off[0], 0u);
    EXPECT_EQ(l.b_off[0], 12u);
    EXPECT_EQ(l.w_off[1], 16u);
    EXPECT_EQ(l.b_off[2], l.total - 1);
    EXPECT_THROW(Layout({3, 4, 2}), ConfigError);
    EXPECT_THROW(Layout({3, 0, 1}), ConfigError);
    EXPECT_EQ(receiver_layers(160), (std::vector<std::size_t>{160, 160, 140, 1}));
}

TEST(Forward, ZeroNetOutputsHalfAndDetectsOne) {
    const auto p = MlpParams::zeros({8, 5, 3, 1});
    const Vec x = Vec::Random(8);
    EXPECT_DOUBLE_EQ(forward(p, x), 0.5);
    EXPECT_EQ(detect(p, x), 1);
}

TEST(Forward, DeadHiddenLayerOutputsSigmoidOfBias) {
    auto p = MlpParams::glorot({4, 3, 2, 1}, 1);
    auto& l = p.layout;
    l.W(p.flat, 0).setConstant(-1.0);
    l.b(p.flat, 0).setConstant(-1.0);
    l.b(p.flat, 2)[0] = 0.3;
    const Vec x = Vec::Constant(4, 2.0);
    EXPECT_DOUBLE_EQ(forward(p, x), sigmoid(0.3));
}

TEST(Forward, MatchesIndependentEvaluator) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = MlpParams::glorot({7, 6, 5, 1}, trial);
        Vec x(7);
        for (auto& v : x) v = std::normal_distribution<double>(0.0, 1.0)(rng);
        const ReferenceNet ref(p);
        const double out = forward(p, x);
        EXPECT_NEAR(out, ref.forward(x), 1e-12);
        EXPECT_GT(out, 0.0);
        EXPECT_LT(out, 1.0);
    }
    const auto p = MlpParams::zeros({7, 6, 5, 1});
    EXPECT_THROW(forward(p, Vec::Zero(6)), InputError);
}

TEST(Forward, BatchShapesIndependentOfScale) {
    const auto p = MlpParams::glorot({6, 4, 3, 1}, 2);
    const Mat X = Mat::Random(10, 6);
    EXPECT_EQ(forward_batch(p, X).size(), 10);
    EXPECT_EQ(forward_batch(p, (2.0 * X).eval()).size(), 10);
}

TEST(Loss, ArithmeticAndBounds) {
    const auto p = MlpParams::zeros({2, 2, 2, 1});
    LabeledBatch b{Mat::Zero(1, 2), Vec::Ones(1)};
    EXPECT_DOUBLE_EQ(loss(p, b), 0.25);
    LabeledBatch empty{Mat::Zero(0, 2), Vec::Zero(0)};
    EXPECT_THROW(loss(p, empty), InputError);
    const auto q = MlpParams::glorot({2, 3, 3, 1}, 3);
    LabeledBatch r{Mat::Random(50, 2) * 10.0, Vec::Zero(50)};
    for (int i = 0; i < 50; i += 2) r.labels[i] = 1.0;
    EXPECT_LE(loss(q, r), 1.0);
    EXPECT_GE(loss(q, r), 0.0);
}

TEST(Loss, ZeroWhenLabelsEqualOutputs) {
    // Labels are bits, so use a net saturated at the label value.
    auto p = MlpParams::zeros({2, 2, 2, 1});
    p.layout.b(p.flat, 2)[0] = 800.0;
    LabeledBatch b{Mat::Random(4, 2), Vec::Ones(4)};
    EXPECT_EQ(loss(p, b), 0.0);
    EXPECT_TRUE(grad(p, b).isZero(0.0));
}

TEST(Grad, HandDerivedSingleNeuronChain) {
    // 1-1-1-1 net with positive pre-activations: y = s(w3 (w2 (w1 x + b1) + b2) + b3).
    auto p = MlpParams::zeros({1, 1, 1, 1});
    const double w1 = 0.7, b1 = 0.2, w2 = 1.3, b2 = 0.1, w3 = -0.8, b3 = 0.4, x = 0.9, label = 1.0;
    p.flat << w1, b1, w2, b2, w3, b3;
    const double h1 = w1 * x + b1, h2 = w2 * h1 + b2, z = w3 * h2 + b3;
    const double a = sigmoid(z);
    const double dz = 2.0 * (a - label) * a * (1.0 - a);
    Vec expect(6);
    expect << dz * w3 * w2 * x, dz * w3 * w2, dz * w3 * h1, dz * w3, dz * h2, dz;
    LabeledBatch b{Mat::Constant(1, 1, x), Vec::Constant(1, label)};
    const Vec g = grad(p, b);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(g[i], expect[i], 1e-14) << i;
}

TEST(Grad, MatchesCentralDifferencesOnRandomDraws) {
    std::mt19937_64 rng(7);
    double worst = 0.0;
    std::size_t skipped = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto b = arcfml::testing::random_batch(8, 5, rng);
        const auto p = MlpParams::glorot({5, 6, 4, 1}, 100 + trial);
        const Vec g = grad(p, b);
        const ReferenceNet ref(p);
        for (Eigen::Index i = 0; i < p.flat.size(); ++i) {
            auto fd = ref.fd_coordinate(b, i, 1e-5);
            if (!fd) {
                ++skipped;
                continue;
            }
            worst = std::max(worst, arcfml::testing::rel_err(g[i], *fd));
        }
    }
    EXPECT_LT(worst, 1e-4);
    EXPECT_LT(skipped, 50u);
}

TEST(Hvp, ZeroDirectionSymmetryAndLinearity) {
    std::mt19937_64 rng(9);
    const auto b = arcfml::testing::random_batch(12, 4, rng);
    const auto p = MlpParams::glorot({4, 5, 3, 1}, 9);
    const auto n = static_cast<Eigen::Index>(p.size());
    EXPECT_TRUE(hvp(p, b, Vec::Zero(n)).isZero(0.0));
    for (int t = 0; t < 20; ++t) {
        const Vec u = Vec::Random(n), v = Vec::Random(n);
        EXPECT_NEAR(hvp(p, b, u).dot(v), u.dot(hvp(p, b, v)), 1e-10);
        const Vec lhs = hvp(p, b, (0.3 * u - 2.0 * v).eval());
        const Vec rhs = 0.3 * hvp(p, b, u) - 2.0 * hvp(p, b, v);
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
    }
    EXPECT_THROW(hvp(p, b, Vec::Zero(n - 1)), InputError);
}

TEST(Hvp, MatchesFiniteDifferencesOfGradients) {
    std::mt19937_64 rng(13);
    double worst = 0.0;
    int used = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto b = arcfml::testing::random_batch(8, 5, rng);
        const auto p = MlpParams::glorot({5, 6, 4, 1}, 300 + trial);
        const Vec v = Vec::Random(static_cast<Eigen::Index>(p.size()));
        const auto fd = arcfml::testing::hvp_fd(p, b, v, 1e-5);
        if (!fd) continue;
        ++used;
        const Vec h = hvp(p, b, v);
        for (Eigen::Index i = 0; i < h.size(); ++i) worst = std::max(worst, arcfml::testing::rel_err(h[i], (*fd)[i]));
    }
    EXPECT_GE(used, 90);
    EXPECT_LT(worst, 1e-3);
}

TEST(BerEval, PerfectAndComplementedLabels) {
    const auto p = MlpParams::glorot({6, 5, 4, 1}, 21);
    std::mt19937_64 rng(21);
    auto b = arcfml::testing::random_batch(200, 6, rng);
    for (Eigen::Index i = 0; i < b.labels.size(); ++i) b.labels[i] = detect(p, b.inputs.row(i).transpose());
    EXPECT_EQ(ber_eval(p, b), 0.0);
    auto q = arcfml::testing::random_batch(200, 6, rng);
    const double base = ber_eval(p, q);
    auto flipped = q;
    flipped.labels = (1.0 - q.labels.array()).matrix();
    EXPECT_DOUBLE_EQ(ber_eval(p, flipped), 1.0 - base);
}

TEST(BerEval, UninformativeNetIsAtChanceOnBalancedLabels) {
    const auto p = MlpParams::glorot({6, 5, 4, 1}, 5);
    std::mt19937_64 rng(5);
    const auto b = arcfml::testing::random_batch(10000, 6, rng);
    const double ber = ber_eval(p, b);
    EXPECT_NEAR(ber, 0.5, 3.0 * std::sqrt(0.25 / 10000.0));
}

TEST(Training, SgdSolvesASeparableProblem) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    LabeledBatch b{Mat(64, 2), Vec(64)};
    for (int i = 0; i < 64; ++i) {
        const double label = i % 2;
        b.inputs(i, 0) = (label ? 2.0 : -2.0) + 0.3 * n(rng);
        b.inputs(i, 1) = n(rng);
        b.labels[i] = label;
    }
    auto p = MlpParams::glorot({2, 8, 4, 1}, 17);
    p = train_sgd(p, b, 0.5, 10000);
    EXPECT_LT(loss(p, b), 1e-3);
}

TEST(Training, AdamLearnsCleanChirps) {
    phy::ChirpParams cp;
    cp.lambda = 6;
    const auto s1 = phy::chirp_template(cp, phy::ChirpDirection::up).samples;
    const auto s2 = phy::chirp_template(cp, phy::ChirpDirection::down).samples;
    LabeledBatch b{Mat(2, 160), Vec(2)};
    for (int k = 0; k < 160; ++k) {
        b.inputs(0, k) = s1[k];
        b.inputs(1, k) = s2[k];
    }
    b.labels << 0.0, 1.0;
    AdamConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 2;
    const auto r = train_adam(MlpParams::glorot(receiver_layers(160, {32, 16}), 1), b, cfg);
    EXPECT_EQ(detect(r.params, b.inputs.row(0).transpose()), 0);
    EXPECT_EQ(detect(r.params, b.inputs.row(1).transpose()), 1);
    EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Checkpoint, RoundTripAndErrors) {
    const auto p = MlpParams::glorot({160, 160, 140, 1}, 4);
    const auto path = (std::filesystem::temp_directory_path() / "arcfml_test.cdnn").string();
    save_params(path, p);
    const auto q = load_params(path);
    std::filesystem::remove(path);
    EXPECT_TRUE(q == p);

    const auto bytes = encode_params(p);
    EXPECT_EQ(bytes.size(), 4u + 2 + 1 + 4 * 4 + 8 * p.size());
    auto bad = bytes;
    bad[0] = 'Z';
    EXPECT_THROW(decode_params(std::string_view(bad.data(), bad.size())), ParseError);
    try {
        decode_params(std::string_view(bytes.data(), bytes.size() - 1));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 23u);
    }
}
