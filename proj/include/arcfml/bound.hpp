// bound.hpp - closed-form convergence constants and round-complexity bound for federated meta-learning
//
// Given strong convexity mu, smoothness H, Hessian Lipschitz rho, gradient bound
// B and node dissimilarities (delta, sigma), the meta objective is
// mu'-strongly convex and H'-smooth:
//   mu' = mu (1 - alpha H)^2 - alpha rho B      H' = H (1 - alpha mu)^2 + alpha rho B
// and the round bound is
//   Tz = log((eps + K m(T0)) / n) / log(xi),   K = mu'' / (1 - xi^T0).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arcfml/error.hpp"
#include "arcfml/fml.hpp"
#include "arcfml/rng.hpp"

namespace arcfml::bound {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct SmoothnessConstants {
    double mu = 1.0;
    double H = 1.0;
    double rho = 0.0;
    double B = 1.0;
    double delta = 0.0;
    double sigma = 0.0;
    double alpha = 0.001;
    double beta = 0.0001;
    double C = 0.0;    // auxiliary constant; 0 collapses alpha' to beta * delta
    double tau = 0.0;  // auxiliary constant
    double N = 1.0;    // nodes aggregated per round
    std::size_t T0 = 1;
    double n = 1.0;        // initial-gap bound
    double epsilon = 1e-3; // target gap

    void validate() const {
        auto pos = [](double v) { return std::isfinite(v) && v > 0.0; };
        auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
        if (!pos(mu) || !pos(H) || !pos(B) || !pos(n) || !pos(epsilon))
            throw ConfigError("bound: mu, H, B, n and epsilon must be > 0");
        if (!nonneg(rho) || !nonneg(delta) || !nonneg(sigma) || !nonneg(C) || !nonneg(tau))
            throw ConfigError("bound: rho, delta, sigma, C and tau must be >= 0");
        if (mu > H) throw ConfigError("bound: mu must not exceed H");
        if (!nonneg(alpha) || !pos(beta)) throw ConfigError("bound: alpha must be >= 0 and beta > 0");
        if (!(N >= 1.0)) throw ConfigError("bound: N must be >= 1");
    }
};

enum class XiVariant { theorem, proof };

struct DerivedConstants {
    double mu_p = 0.0;
    double H_p = 0.0;
    double mu_pp = 0.0;
    double H_pp = 0.0;
    double alpha_p = 0.0;
    double xi = 0.0;
    double beta = 0.0;
    bool mu_p_positive = false;
    bool xi_in_unit = false;

    bool valid() const { return mu_p_positive && xi_in_unit; }
};

inline DerivedConstants derive_constants(const SmoothnessConstants& c, XiVariant variant = XiVariant::proof) {
    c.validate();
    DerivedConstants d;
    const double a = c.alpha;
    d.mu_p = c.mu * (1.0 - a * c.H) * (1.0 - a * c.H) - a * c.rho * c.B;
    d.H_p = c.H * (1.0 - a * c.mu) * (1.0 - a * c.mu) + a * c.rho * c.B;
    d.mu_pp = c.N * d.mu_p;
    d.H_pp = c.N * d.H_p;
    d.alpha_p = c.beta * (c.delta + a * c.C * (c.H * c.delta + c.B * c.sigma + c.tau));
    const double second = variant == XiVariant::theorem ? d.mu_pp : d.H_pp;
    d.xi = 1.0 - 2.0 * d.H_pp * c.beta * (1.0 + second * c.beta / 2.0);
    d.beta = c.beta;
    d.mu_p_positive = d.mu_p > 0.0;
    d.xi_in_unit = d.xi > 0.0 && d.xi < 1.0;
    return d;
}

/// m(T) = alpha' T - alpha' / (beta H') [1 - (1 - beta H')^T]
inline double m_of_T(const DerivedConstants& d, std::size_t T) {
    const double q = d.beta * d.H_p;
    if (!(q > 0.0 && q < 1.0)) throw ValidityError("m(T): beta*H' must lie in (0, 1), got " + std::to_string(q));
    const double Td = static_cast<double>(T);
    return d.alpha_p * Td - d.alpha_p / q * (1.0 - std::pow(1.0 - q, Td));
}

struct TzResult {
    DerivedConstants derived;
    double m = 0.0;    // m(T0)
    double K = 0.0;    // mu'' / (1 - xi^T0)
    double tz = 0.0;   // real-valued bound; callers take the ceiling
};

inline TzResult tz_evaluate(const SmoothnessConstants& c, XiVariant variant = XiVariant::proof) {
    TzResult r;
    r.derived = derive_constants(c, variant);
    const auto& d = r.derived;
    if (!d.mu_p_positive) throw ValidityError("Tz: mu' must be > 0 (got " + std::to_string(d.mu_p) + ")");
    if (!d.xi_in_unit) throw ValidityError("Tz: xi must lie in (0, 1) (got " + std::to_string(d.xi) + ")");
    r.m = m_of_T(d, c.T0);
    r.K = d.mu_pp / (1.0 - std::pow(d.xi, static_cast<double>(c.T0)));
    const double arg = (c.epsilon + r.K * r.m) / c.n;
    if (!(arg > 0.0)) throw ValidityError("Tz: log argument (eps + K m(T0)) / n must be > 0");
    r.tz = std::log(arg) / std::log(d.xi);
    return r;
}

inline double tz_bound(const SmoothnessConstants& c, XiVariant variant = XiVariant::proof) {
    return tz_evaluate(c, variant).tz;
}

/// Sign-flipped gap curve from the proof's final display: n xi^t + K m(T0), t = 0..T.
inline std::vector<double> gap_curve(const SmoothnessConstants& c, std::size_t T, XiVariant variant = XiVariant::proof) {
    const auto r = tz_evaluate(c, variant);
    std::vector<double> g(T + 1);
    for (std::size_t t = 0; t <= T; ++t) g[t] = c.n * std::pow(r.derived.xi, static_cast<double>(t)) + r.K * r.m;
    return g;
}

// ---------------------------------------------------------------------------
// Quadratic federation: L_i(theta) = 1/2 (theta - c_i)^T A (theta - c_i) with a
// shared positive-definite A, so the Hessian dissimilarity sigma and the
// Hessian Lipschitz constant rho are both zero.
// ---------------------------------------------------------------------------

struct QuadData {
    Vec center;
    std::size_t count = 1;
};

struct QuadraticModel {
    using Data = QuadData;
    Mat A;

    double loss(const Vec& p, const Data& d) const {
        const Vec e = p - d.center;
        return 0.5 * e.dot(A * e);
    }
    Vec grad(const Vec& p, const Data& d) const { return A * (p - d.center); }
    Vec hvp(const Vec&, const Data&, const Vec& v) const { return A * v; }
    std::size_t sample_count(const Data& d) const { return d.count; }
    Data merge(const Data& a, const Data& b) const {
        const double wa = static_cast<double>(a.count), wb = static_cast<double>(b.count);
        return {(wa * a.center + wb * b.center) / (wa + wb), a.count + b.count};
    }
};

struct QuadraticFederation {
    QuadraticModel model;
    std::vector<fml::NodeState<QuadData>> nodes;
    Vec theta0;

    std::size_t dim() const { return static_cast<std::size_t>(model.A.rows()); }

    std::vector<double> weights() const {
        std::vector<double> w;
        double total = 0.0;
        for (const auto& nd : nodes) total += static_cast<double>(nd.train.count + nd.test.count);
        for (const auto& nd : nodes) w.push_back(static_cast<double>(nd.train.count + nd.test.count) / total);
        return w;
    }

    /// Meta-objective curvature (I - alpha A) A (I - alpha A).
    Mat meta_curvature(double alpha) const {
        const Mat I = Mat::Identity(model.A.rows(), model.A.cols());
        return (I - alpha * model.A) * model.A * (I - alpha * model.A);
    }

    /// G(theta) = sum_i w_i L_i(theta - alpha grad L_i(theta)).
    double meta_objective(const Vec& theta, double alpha) const {
        const Mat M = meta_curvature(alpha);
        const auto w = weights();
        double g = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const Vec e = theta - nodes[i].train.center;
            g += w[i] * 0.5 * e.dot(M * e);
        }
        return g;
    }

    /// Minimizer of G: the weighted mean of the centers (all nodes share M).
    Vec meta_optimum() const {
        const auto w = weights();
        Vec c = Vec::Zero(model.A.rows());
        for (std::size_t i = 0; i < nodes.size(); ++i) c += w[i] * nodes[i].train.center;
        return c;
    }

    double gap(const Vec& theta, double alpha) const {
        return meta_objective(theta, alpha) - meta_objective(meta_optimum(), alpha);
    }
};

struct QuadraticSpec {
    std::size_t dim = 4;
    std::size_t K = 4;
    double eig_min = 1.0;
    double eig_max = 2.0;
    double center_spread = 1.0;  // node centers ~ N(0, spread^2 I)
    double init_scale = 5.0;     // theta0 ~ N(0, init_scale^2 I)
    std::size_t samples_per_node = 1;
    std::uint64_t seed = 0;
};

/// Random rotation of a diagonal spectrum spanning [eig_min, eig_max], random centers and start.
inline QuadraticFederation make_quadratic_federation(const QuadraticSpec& s) {
    if (s.dim == 0 || s.K == 0) throw ConfigError("quadratic: dim and K must be >= 1");
    if (!(s.eig_min > 0.0 && s.eig_min <= s.eig_max)) throw ConfigError("quadratic: need 0 < eig_min <= eig_max");
    Rng rng = make_rng(s.seed, {stream::init});
    std::normal_distribution<double> n01(0.0, 1.0);
    const auto d = static_cast<Eigen::Index>(s.dim);
    Mat G(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) G(i, j) = n01(rng);
    const Mat Q = Eigen::HouseholderQR<Mat>(G).householderQ();
    Vec eig(d);
    for (Eigen::Index i = 0; i < d; ++i)
        eig[i] = d == 1 ? s.eig_min : s.eig_min + (s.eig_max - s.eig_min) * static_cast<double>(i) / static_cast<double>(d - 1);

    QuadraticFederation f;
    f.model.A = Q * eig.asDiagonal() * Q.transpose();
    f.model.A = 0.5 * (f.model.A + f.model.A.transpose()).eval();
    for (std::size_t k = 0; k < s.K; ++k) {
        Vec c(d);
        for (Eigen::Index i = 0; i < d; ++i) c[i] = s.center_spread * n01(rng);
        f.nodes.push_back({k, {c, s.samples_per_node}, {c, s.samples_per_node}});
    }
    f.theta0.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) f.theta0[i] = s.init_scale * n01(rng);
    return f;
}

/// Analytic constants of a quadratic federation under the given federation config.
/// B bounds the local gradient norm over the ball containing theta0 and the centers.
inline SmoothnessConstants quadratic_constants(const QuadraticFederation& f, const fml::FmlConfig& cfg, double epsilon) {
    Eigen::SelfAdjointEigenSolver<Mat> es(f.model.A);
    SmoothnessConstants c;
    c.mu = es.eigenvalues().minCoeff();
    c.H = es.eigenvalues().maxCoeff();
    c.rho = 0.0;
    c.sigma = 0.0;
    const Vec cbar = f.meta_optimum();
    double delta = 0.0, radius = (f.theta0 - cbar).norm();
    for (const auto& nd : f.nodes) {
        delta = std::max(delta, (f.model.A * (cbar - nd.train.center)).norm());
        radius = std::max(radius, (nd.train.center - cbar).norm());
    }
    c.delta = delta;
    c.B = std::max(c.H * 2.0 * radius, 1e-12);
    c.alpha = cfg.alpha;
    c.beta = cfg.beta;
    c.N = static_cast<double>(cfg.N());
    c.T0 = cfg.T0;
    c.n = std::max(f.gap(f.theta0, cfg.alpha), std::numeric_limits<double>::min());
    c.epsilon = epsilon;
    return c;
}

struct EmpiricalRounds {
    std::size_t rounds = 0;
    bool capped = false;  // target not reached within the cap
    std::vector<double> gaps;  // gap after each round, starting with the initial gap
};

/// Run federated meta-learning on the quadratic family until the optimality gap is <= epsilon.
inline EmpiricalRounds empirical_rounds_to_gap(const QuadraticFederation& f, fml::FmlConfig cfg, double epsilon,
                                               std::size_t cap = 100000) {
    EmpiricalRounds out;
    out.gaps.push_back(f.gap(f.theta0, cfg.alpha));
    if (out.gaps.back() <= epsilon) return out;
    cfg.rounds = cap;
    fml::RunOptions<QuadData> opts;
    opts.on_round = [&](std::size_t r, const Vec& theta) {
        out.gaps.push_back(f.gap(theta, cfg.alpha));
        out.rounds = r;
        return out.gaps.back() > epsilon;
    };
    fml::run_rounds(f.model, cfg, f.nodes, fml::Algorithm::fml, f.theta0, opts);
    out.capped = out.gaps.back() > epsilon;
    return out;
}

}  // namespace arcfml::bound
