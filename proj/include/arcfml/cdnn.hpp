// cdnn.hpp - fully connected chirp receiver with exact gradients and Hessian-vector products

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "arcfml/binary_io.hpp"
#include "arcfml/chirp_phy.hpp"
#include "arcfml/error.hpp"
#include "arcfml/rng.hpp"

namespace arcfml::cdnn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Parameter layout: layer l (1-based computing layer) stores W_l (out x in, row-major)
/// followed by b_l. Layers are stored in order.
struct Layout {
    std::vector<std::size_t> sizes;  // [input, hidden..., output]
    std::vector<std::size_t> w_off;
    std::vector<std::size_t> b_off;
    std::size_t total = 0;

    Layout() = default;
    explicit Layout(std::vector<std::size_t> s) : sizes(std::move(s)) {
        if (sizes.size() < 2) throw ConfigError("network needs at least an input and an output layer");
        for (auto v : sizes)
            if (v == 0) throw ConfigError("layer sizes must be positive");
        if (sizes.back() != 1) throw ConfigError("output layer must have a single unit");
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            w_off.push_back(total);
            total += sizes[l + 1] * sizes[l];
            b_off.push_back(total);
            total += sizes[l + 1];
        }
    }

    std::size_t layers() const { return sizes.size() - 1; }
    std::size_t input_size() const { return sizes.front(); }

    Eigen::Map<const RowMat> W(const Vec& p, std::size_t l) const {
        return {p.data() + w_off[l], static_cast<Eigen::Index>(sizes[l + 1]), static_cast<Eigen::Index>(sizes[l])};
    }
    Eigen::Map<RowMat> W(Vec& p, std::size_t l) const {
        return {p.data() + w_off[l], static_cast<Eigen::Index>(sizes[l + 1]), static_cast<Eigen::Index>(sizes[l])};
    }
    Eigen::Map<const Vec> b(const Vec& p, std::size_t l) const {
        return {p.data() + b_off[l], static_cast<Eigen::Index>(sizes[l + 1])};
    }
    Eigen::Map<Vec> b(Vec& p, std::size_t l) const {
        return {p.data() + b_off[l], static_cast<Eigen::Index>(sizes[l + 1])};
    }
};

/// Receiver layer sizes [N1, h1, h2, 1]; hidden defaults to [N1, floor(7 N1 / 8)].
inline std::vector<std::size_t> receiver_layers(std::size_t n1, std::vector<std::size_t> hidden = {}) {
    if (hidden.empty()) {
        for (auto h : phy::default_hidden(n1)) hidden.push_back(static_cast<std::size_t>(h));
    }
    std::vector<std::size_t> s{n1};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(1);
    return s;
}

struct MlpParams {
    Layout layout;
    Vec flat;

    MlpParams() = default;
    MlpParams(Layout l, Vec p) : layout(std::move(l)), flat(std::move(p)) { validate(); }

    static MlpParams zeros(const std::vector<std::size_t>& sizes) {
        Layout l(sizes);
        return {l, Vec::Zero(static_cast<Eigen::Index>(l.total))};
    }

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    static MlpParams glorot(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
        Layout l(sizes);
        Vec p = Vec::Zero(static_cast<Eigen::Index>(l.total));
        Rng rng = make_rng(seed, {stream::init});
        for (std::size_t k = 0; k < l.layers(); ++k) {
            const double lim = std::sqrt(6.0 / static_cast<double>(l.sizes[k] + l.sizes[k + 1]));
            std::uniform_real_distribution<double> u(-lim, lim);
            auto W = l.W(p, k);
            for (Eigen::Index r = 0; r < W.rows(); ++r)
                for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = u(rng);
        }
        return {l, p};
    }

    std::size_t size() const { return layout.total; }

    void validate() const {
        if (static_cast<std::size_t>(flat.size()) != layout.total)
            throw InputError("parameter vector length does not match layer sizes");
        if (!flat.allFinite()) throw InputError("parameters contain non-finite values");
    }

    bool operator==(const MlpParams& o) const { return layout.sizes == o.layout.sizes && flat == o.flat; }
};

/// Examples are rows of `inputs`; labels are 0/1.
struct LabeledBatch {
    Mat inputs;
    Vec labels;

    std::size_t size() const { return static_cast<std::size_t>(labels.size()); }
    bool empty() const { return labels.size() == 0; }

    void validate() const {
        if (inputs.rows() != labels.size()) throw InputError("batch row count does not match label count");
        if (!inputs.allFinite()) throw InputError("batch inputs contain non-finite values");
        for (Eigen::Index i = 0; i < labels.size(); ++i)
            if (labels[i] != 0.0 && labels[i] != 1.0) throw InputError("batch labels must be 0 or 1");
    }

    LabeledBatch slice(std::size_t start, std::size_t count) const {
        return {inputs.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)),
                labels.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count))};
    }

    static LabeledBatch concat(const LabeledBatch& a, const LabeledBatch& b) {
        if (a.empty()) return b;
        if (b.empty()) return a;
        if (a.inputs.cols() != b.inputs.cols()) throw InputError("cannot concatenate batches of different widths");
        LabeledBatch out;
        out.inputs.resize(a.inputs.rows() + b.inputs.rows(), a.inputs.cols());
        out.inputs << a.inputs, b.inputs;
        out.labels.resize(a.labels.size() + b.labels.size());
        out.labels << a.labels, b.labels;
        return out;
    }
};

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace detail {

inline void check_width(const Layout& l, Eigen::Index cols) {
    if (static_cast<std::size_t>(cols) != l.input_size())
        throw InputError("input length " + std::to_string(cols) + " does not match network input size " +
                         std::to_string(l.input_size()));
}

inline void check_batch(const Layout& l, const LabeledBatch& b) {
    if (b.empty()) throw InputError("batch is empty");
    if (b.inputs.rows() != b.labels.size()) throw InputError("batch row count does not match label count");
    check_width(l, b.inputs.cols());
}

/// Pre-activations Z[l] and activations A[l] (A[0] = inputs) for a whole batch.
struct Trace {
    std::vector<Mat> Z;
    std::vector<Mat> A;
};

inline Trace forward_trace(const Layout& l, const Vec& p, const Mat& X) {
    Trace t;
    t.A.push_back(X);
    t.Z.emplace_back();
    const std::size_t L = l.layers();
    for (std::size_t k = 0; k < L; ++k) {
        Mat z = t.A.back() * l.W(p, k).transpose();
        z.rowwise() += l.b(p, k).transpose();
        Mat a = (k + 1 == L) ? Mat(z.unaryExpr([](double v) { return sigmoid(v); }))
                             : Mat(z.cwiseMax(0.0));
        t.Z.push_back(std::move(z));
        t.A.push_back(std::move(a));
    }
    return t;
}

inline Mat relu_mask(const Mat& z) {
    return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

}  // namespace detail

// ---- Flat-vector interface (used by the federated layer) -------------------

inline Vec forward_batch(const Layout& l, const Vec& p, const Mat& X) {
    detail::check_width(l, X.cols());
    return detail::forward_trace(l, p, X).A.back().col(0);
}

/// Mean squared error between labels and outputs.
inline double loss(const Layout& l, const Vec& p, const LabeledBatch& b) {
    detail::check_batch(l, b);
    const Vec out = forward_batch(l, p, b.inputs);
    return (out - b.labels).squaredNorm() / static_cast<double>(b.size());
}

inline Vec grad(const Layout& l, const Vec& p, const LabeledBatch& b) {
    detail::check_batch(l, b);
    const auto t = detail::forward_trace(l, p, b.inputs);
    const std::size_t L = l.layers();
    const double n = static_cast<double>(b.size());
    Vec g = Vec::Zero(p.size());

    const Mat& a = t.A[L];
    Mat delta = (2.0 / n) * ((a.col(0) - b.labels).array() * a.col(0).array() * (1.0 - a.col(0).array())).matrix();
    for (std::size_t k = L; k-- > 0;) {
        l.W(g, k) = delta.transpose() * t.A[k];
        l.b(g, k) = delta.colwise().sum().transpose();
        if (k > 0) delta = (delta * l.W(p, k)).cwiseProduct(detail::relu_mask(t.Z[k]));
    }
    return g;
}

/// Exact Hessian-vector product by forward-over-reverse (R-operator) differentiation.
inline Vec hvp(const Layout& l, const Vec& p, const LabeledBatch& b, const Vec& v) {
    detail::check_batch(l, b);
    if (v.size() != p.size()) throw InputError("hvp direction length does not match parameter count");
    const auto t = detail::forward_trace(l, p, b.inputs);
    const std::size_t L = l.layers();
    const double n = static_cast<double>(b.size());

    // Forward pass of directional derivatives.
    std::vector<Mat> RZ(L + 1), RA(L + 1);
    RA[0] = Mat::Zero(b.inputs.rows(), b.inputs.cols());
    for (std::size_t k = 0; k < L; ++k) {
        Mat rz = t.A[k] * l.W(v, k).transpose();
        if (k > 0) rz.noalias() += RA[k] * l.W(p, k).transpose();
        rz.rowwise() += l.b(v, k).transpose();
        if (k + 1 == L) {
            const auto& a = t.A[L].array();
            RA[k + 1] = (rz.array() * a * (1.0 - a)).matrix();
        } else {
            RA[k + 1] = rz.cwiseProduct(detail::relu_mask(t.Z[k + 1]));
        }
        RZ[k + 1] = std::move(rz);
    }

    // Backward pass of the gradient and its directional derivative.
    const Eigen::ArrayXd a = t.A[L].col(0).array();
    const Eigen::ArrayXd s1 = a * (1.0 - a);
    const Eigen::ArrayXd s2 = s1 * (1.0 - 2.0 * a);
    const Eigen::ArrayXd err = a - b.labels.array();
    Mat delta = ((2.0 / n) * err * s1).matrix();
    Mat rdelta = ((2.0 / n) * (RA[L].col(0).array() * s1 + err * s2 * RZ[L].col(0).array())).matrix();

    Vec h = Vec::Zero(p.size());
    for (std::size_t k = L; k-- > 0;) {
        Mat hw = rdelta.transpose() * t.A[k];
        if (k > 0) hw.noalias() += delta.transpose() * RA[k];
        l.W(h, k) = hw;
        l.b(h, k) = rdelta.colwise().sum().transpose();
        if (k > 0) {
            const Mat mask = detail::relu_mask(t.Z[k]);
            Mat next_r = (rdelta * l.W(p, k) + delta * l.W(v, k)).cwiseProduct(mask);
            delta = (delta * l.W(p, k)).cwiseProduct(mask);
            rdelta = std::move(next_r);
        }
    }
    return h;
}

/// Fraction of examples classified correctly with the >= 0.5 threshold.
inline double accuracy(const Layout& l, const Vec& p, const LabeledBatch& b) {
    detail::check_batch(l, b);
    const Vec out = forward_batch(l, p, b.inputs);
    std::size_t ok = 0;
    for (Eigen::Index i = 0; i < out.size(); ++i) ok += ((out[i] >= 0.5 ? 1.0 : 0.0) == b.labels[i]);
    return static_cast<double>(ok) / static_cast<double>(b.size());
}

// ---- MlpParams interface ---------------------------------------------------

inline double forward(const MlpParams& p, const Vec& x) {
    detail::check_width(p.layout, x.size());
    return forward_batch(p.layout, p.flat, x.transpose())[0];
}

inline Vec forward_batch(const MlpParams& p, const Mat& X) { return forward_batch(p.layout, p.flat, X); }
inline double loss(const MlpParams& p, const LabeledBatch& b) { return loss(p.layout, p.flat, b); }
inline Vec grad(const MlpParams& p, const LabeledBatch& b) { return grad(p.layout, p.flat, b); }
inline Vec hvp(const MlpParams& p, const LabeledBatch& b, const Vec& v) { return hvp(p.layout, p.flat, b, v); }

/// Bit decision: 1 iff the network output is >= 0.5.
inline std::uint8_t detect(const MlpParams& p, const Vec& x) { return forward(p, x) >= 0.5 ? 1 : 0; }

inline double ber_eval(const MlpParams& p, const LabeledBatch& b) { return 1.0 - accuracy(p.layout, p.flat, b); }

// ---- Training --------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
};

struct TrainResult {
    MlpParams params;
    std::vector<double> epoch_loss;  // full-batch loss after each epoch
};

namespace detail {

inline LabeledBatch gather(const LabeledBatch& b, const std::vector<std::size_t>& idx, std::size_t start,
                           std::size_t count) {
    LabeledBatch out;
    out.inputs.resize(static_cast<Eigen::Index>(count), b.inputs.cols());
    out.labels.resize(static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) {
        out.inputs.row(static_cast<Eigen::Index>(i)) = b.inputs.row(static_cast<Eigen::Index>(idx[start + i]));
        out.labels[static_cast<Eigen::Index>(i)] = b.labels[static_cast<Eigen::Index>(idx[start + i])];
    }
    return out;
}

}  // namespace detail

/// Mini-batch Adam on the MSE loss; batches are reshuffled each epoch from a seeded stream.
inline TrainResult train_adam(MlpParams init, const LabeledBatch& data, const AdamConfig& cfg) {
    detail::check_batch(init.layout, data);
    if (!(cfg.lr > 0.0) || cfg.batch_size == 0) throw ConfigError("adam: lr must be > 0 and batch_size >= 1");
    TrainResult res{std::move(init), {}};
    Vec& p = res.params.flat;
    Vec m = Vec::Zero(p.size()), v = Vec::Zero(p.size());
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = make_rng(cfg.seed, {stream::shuffle});
    std::uint64_t step = 0;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t s = 0; s < idx.size(); s += cfg.batch_size) {
            const auto mb = detail::gather(data, idx, s, std::min(cfg.batch_size, idx.size() - s));
            const Vec g = grad(res.params.layout, p, mb);
            ++step;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            p.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
        }
        const double l = loss(res.params, data);
        if (!std::isfinite(l)) throw TrainingError("adam diverged (non-finite loss)", 0, e);
        res.epoch_loss.push_back(l);
    }
    return res;
}

/// Full-batch gradient descent.
inline MlpParams train_sgd(MlpParams p, const LabeledBatch& data, double lr, std::size_t steps) {
    for (std::size_t s = 0; s < steps; ++s) {
        p.flat -= lr * grad(p, data);
        if (!p.flat.allFinite()) throw TrainingError("gradient descent diverged", 0, s);
    }
    return p;
}

// ---- Checkpoints: "CDNN", u16 version, u8 layer count, u32 sizes, f64 params --

inline constexpr std::uint16_t kCheckpointVersion = 1;

inline std::vector<char> encode_params(const MlpParams& p) {
    p.validate();
    io::ByteWriter out;
    out.put_bytes("CDNN");
    out.put_u16(kCheckpointVersion);
    if (p.layout.sizes.size() > 255) throw InputError("too many layers for checkpoint format");
    out.put_u8(static_cast<std::uint8_t>(p.layout.sizes.size()));
    for (auto s : p.layout.sizes) out.put_u32(static_cast<std::uint32_t>(s));
    for (Eigen::Index i = 0; i < p.flat.size(); ++i) out.put_f64(p.flat[i]);
    return out.bytes();
}

inline MlpParams decode_params(std::string_view bytes) {
    io::ByteReader in(bytes);
    in.expect_magic("CDNN");
    in.expect_version(kCheckpointVersion);
    const auto count_at = in.offset();
    const auto count = in.get_u8("layer count");
    if (count < 2) throw ParseError("checkpoint needs at least two layers", count_at);
    std::vector<std::size_t> sizes;
    for (std::uint8_t i = 0; i < count; ++i) {
        const auto at = in.offset();
        const auto s = in.get_u32("layer size");
        if (s == 0) throw ParseError("layer size must be positive", at);
        sizes.push_back(s);
    }
    if (sizes.back() != 1) throw ParseError("output layer must have a single unit", in.offset());
    Layout l(sizes);
    if (l.total > in.remaining() / 8) throw ParseError("truncated payload while reading parameters", in.offset());
    Vec p(static_cast<Eigen::Index>(l.total));
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = in.get_f64("parameter");
    if (!in.at_end()) throw ParseError("trailing bytes after parameters", in.offset());
    if (!p.allFinite()) throw ParseError("checkpoint contains non-finite parameters", in.offset());
    return {l, p};
}

inline void save_params(const std::string& path, const MlpParams& p) { io::write_file(path, encode_params(p)); }
inline MlpParams load_params(const std::string& path) { return decode_params(io::read_file(path)); }

/// Adapter exposing the receiver network through the federated model interface.
struct MlpModel {
    using Data = LabeledBatch;
    Layout layout;

    explicit MlpModel(std::vector<std::size_t> sizes) : layout(std::move(sizes)) {}

    double loss(const Vec& p, const Data& d) const { return cdnn::loss(layout, p, d); }
    Vec grad(const Vec& p, const Data& d) const { return cdnn::grad(layout, p, d); }
    Vec hvp(const Vec& p, const Data& d, const Vec& v) const { return cdnn::hvp(layout, p, d, v); }
    double accuracy(const Vec& p, const Data& d) const { return cdnn::accuracy(layout, p, d); }
    std::size_t sample_count(const Data& d) const { return d.size(); }
    Data merge(const Data& a, const Data& b) const { return LabeledBatch::concat(a, b); }
};

}  // namespace arcfml::cdnn
