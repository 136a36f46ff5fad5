// fml.hpp - federated meta-learning with random node scheduling, plus a FedAvg baseline
//
// The orchestration is generic over a model type exposing
//   loss(theta, data), grad(theta, data), hvp(theta, data, v),
//   sample_count(data), merge(data, data)
// on Eigen::VectorXd parameters, and optionally accuracy(theta, data).

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arcfml/error.hpp"
#include "arcfml/rng.hpp"

namespace arcfml::fml {

using Vec = Eigen::VectorXd;

template <typename M>
concept FederatedModel = requires(const M& m, const Vec& p, const typename M::Data& d) {
    { m.loss(p, d) } -> std::convertible_to<double>;
    { m.grad(p, d) } -> std::convertible_to<Vec>;
    { m.hvp(p, d, p) } -> std::convertible_to<Vec>;
    { m.sample_count(d) } -> std::convertible_to<std::size_t>;
    { m.merge(d, d) } -> std::convertible_to<typename M::Data>;
};

template <typename M>
concept HasAccuracy = requires(const M& m, const Vec& p, const typename M::Data& d) {
    { m.accuracy(p, d) } -> std::convertible_to<double>;
};

template <typename Data>
struct NodeState {
    std::size_t id = 0;
    Data train;
    Data test;
};

/// Held-out task: adapt on `adapt`, score on `test`.
template <typename Data>
struct EvalTask {
    Data adapt;
    Data test;
};

enum class MetaMode { exact, first_order };
enum class Algorithm { fml, fl };

struct FmlConfig {
    std::size_t K = 33;
    double G = 0.3;
    double alpha = 0.001;  // inner (adaptation) rate
    double beta = 0.0001;  // outer (update) rate; also the FedAvg rate in fl mode
    std::size_t T0 = 1;
    std::size_t rounds = 50;
    double p_decode = 1.0;
    std::uint64_t seed = 0;
    MetaMode meta_mode = MetaMode::exact;
    std::size_t adapt_steps = 1;  // adaptation steps used for adapted_acc

    std::size_t N() const { return static_cast<std::size_t>(std::llround(G * static_cast<double>(K))); }

    void validate() const {
        if (K == 0) throw ConfigError("fml: K must be >= 1");
        if (!(G > 0.0 && G <= 1.0)) throw ConfigError("fml: G must lie in (0, 1]");
        if (N() < 1) throw ConfigError("fml: N = round(G*K) must be >= 1");
        if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("fml: alpha and beta must be > 0");
        if (T0 == 0) throw ConfigError("fml: T0 must be >= 1");
        if (!(p_decode >= 0.0 && p_decode <= 1.0)) throw ConfigError("fml: p_decode must lie in [0, 1]");
    }
};

/// MAML meta-gradient of L(theta - alpha grad L(theta, train), test) with respect to theta.
template <FederatedModel M>
Vec meta_gradient(const M& model, const Vec& theta, const typename M::Data& train, const typename M::Data& test,
                  double alpha, MetaMode mode) {
    const Vec phi = theta - alpha * model.grad(theta, train);
    Vec g = model.grad(phi, test);
    if (mode == MetaMode::exact && alpha != 0.0) g -= alpha * model.hvp(theta, train, g);
    return g;
}

/// T0 local MAML updates starting from theta.
template <FederatedModel M>
Vec local_maml_step(const M& model, Vec theta, const NodeState<typename M::Data>& node, double alpha, double beta,
                    std::size_t T0, MetaMode mode, long round = 0) {
    if (model.sample_count(node.train) == 0 || model.sample_count(node.test) == 0)
        throw InputError("local_maml_step: node " + std::to_string(node.id) + " has an empty split");
    for (std::size_t s = 0; s < T0; ++s) {
        const Vec g = meta_gradient(model, theta, node.train, node.test, alpha, mode);
        if (!g.allFinite()) throw TrainingError("non-finite meta-gradient at node " + std::to_string(node.id), round, static_cast<long>(s));
        theta -= beta * g;
        if (!theta.allFinite()) throw TrainingError("parameters diverged at node " + std::to_string(node.id), round, static_cast<long>(s));
    }
    return theta;
}

/// T0 full-batch gradient steps on the node's train and test data together.
template <FederatedModel M>
Vec local_fedavg_step(const M& model, Vec theta, const NodeState<typename M::Data>& node, double lr, std::size_t T0,
                      long round = 0) {
    if (model.sample_count(node.train) == 0)
        throw InputError("local_fedavg_step: node " + std::to_string(node.id) + " has an empty train split");
    const auto data = model.merge(node.train, node.test);
    for (std::size_t s = 0; s < T0; ++s) {
        if (lr == 0.0) break;
        const Vec g = model.grad(theta, data);
        if (!g.allFinite()) throw TrainingError("non-finite gradient at node " + std::to_string(node.id), round, static_cast<long>(s));
        theta -= lr * g;
        if (!theta.allFinite()) throw TrainingError("parameters diverged at node " + std::to_string(node.id), round, static_cast<long>(s));
    }
    return theta;
}

struct Schedule {
    std::vector<std::size_t> scheduled;  // sorted ids
    std::vector<std::uint8_t> u;         // decode indicator per id (size K)

    std::vector<std::size_t> successful() const {
        std::vector<std::size_t> s;
        for (auto id : scheduled)
            if (u[id]) s.push_back(id);
        return s;
    }
};

/// Uniformly pick N of K ids; each picked id decodes independently with probability p_decode.
inline Schedule schedule(std::size_t K, std::size_t N, double p_decode, Rng& rng) {
    if (N < 1 || N > K) throw ConfigError("schedule: need 1 <= N <= K");
    if (!(p_decode >= 0.0 && p_decode <= 1.0)) throw ConfigError("schedule: p_decode must lie in [0, 1]");
    std::vector<std::size_t> ids(K);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    for (std::size_t i = 0; i < N; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, K - 1);
        std::swap(ids[i], ids[pick(rng)]);
    }
    Schedule s;
    s.scheduled.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(N));
    std::sort(s.scheduled.begin(), s.scheduled.end());
    s.u.assign(K, 0);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (auto id : s.scheduled) s.u[id] = coin(rng) < p_decode ? 1 : 0;
    return s;
}

struct Update {
    Vec params;
    std::size_t data_size = 0;
    bool success = false;
};

/// Data-size weights renormalized over successful updates (zero for failed ones).
inline std::vector<double> aggregation_weights(const std::vector<Update>& updates) {
    double total = 0.0;
    for (const auto& u : updates)
        if (u.success) total += static_cast<double>(u.data_size);
    std::vector<double> w(updates.size(), 0.0);
    if (total <= 0.0) return w;
    for (std::size_t i = 0; i < updates.size(); ++i)
        if (updates[i].success) w[i] = static_cast<double>(updates[i].data_size) / total;
    return w;
}

/// Weighted mean of the successful updates; nullopt when none succeeded (empty round).
/// Computed as a running mean, so identical inputs aggregate to themselves exactly.
inline std::optional<Vec> aggregate(const std::vector<Update>& updates) {
    std::optional<Vec> mean;
    double seen = 0.0;
    for (const auto& u : updates) {
        if (!u.success || u.data_size == 0) continue;
        const double w = static_cast<double>(u.data_size);
        seen += w;
        if (!mean) {
            mean = u.params;
        } else {
            if (u.params.size() != mean->size()) throw InputError("aggregate: parameter length mismatch");
            *mean += (w / seen) * (u.params - *mean);
        }
    }
    return mean;
}

struct RoundLog {
    std::size_t round = 0;
    std::vector<std::size_t> scheduled;
    std::vector<std::size_t> successful;
    double train_loss = std::numeric_limits<double>::quiet_NaN();
    double test_acc = std::numeric_limits<double>::quiet_NaN();
    double adapted_acc = std::numeric_limits<double>::quiet_NaN();

    bool operator==(const RoundLog& o) const {
        auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
        return round == o.round && scheduled == o.scheduled && successful == o.successful &&
               same(train_loss, o.train_loss) && same(test_acc, o.test_acc) && same(adapted_acc, o.adapted_acc);
    }
};

struct FederationResult {
    std::vector<RoundLog> logs;
    Vec theta;
};

template <typename Data>
struct RunOptions {
    std::vector<EvalTask<Data>> eval_tasks;  // scored every round when the model reports accuracy
    /// Called after each round with (round, global parameters); return false to stop early.
    std::function<bool(std::size_t, const Vec&)> on_round;
};

/// Global parameters after `steps` adaptation steps of rate alpha on `data`.
template <FederatedModel M>
Vec adapt(const M& model, Vec theta, const typename M::Data& data, double alpha, std::size_t steps) {
    for (std::size_t s = 0; s < steps; ++s) theta -= alpha * model.grad(theta, data);
    return theta;
}

/// Run cfg.rounds rounds of broadcast, schedule, local update and aggregation.
///
/// Round r draws its schedule from the stream (seed, schedule, r). Only nodes
/// whose upload succeeds compute an update, which leaves results unchanged.
/// train_loss is the global model's mean train loss over scheduled nodes;
/// test_acc and adapted_acc average over the evaluation tasks.
template <FederatedModel M>
FederationResult run_rounds(const M& model, const FmlConfig& cfg, const std::vector<NodeState<typename M::Data>>& nodes,
                            Algorithm algo, Vec theta0, const RunOptions<typename M::Data>& opts = {}) {
    cfg.validate();
    if (nodes.empty()) throw InputError("run_rounds: no nodes");
    if (nodes.size() != cfg.K)
        throw ConfigError("run_rounds: K = " + std::to_string(cfg.K) + " but " + std::to_string(nodes.size()) +
                          " nodes were supplied");
    FederationResult res{{}, std::move(theta0)};
    const std::size_t N = cfg.N();
    if (N > cfg.K) throw ConfigError("run_rounds: N exceeds K");

    for (std::size_t r = 0; r < cfg.rounds; ++r) {
        Rng rng = make_rng(cfg.seed, {stream::schedule, r});
        const auto sched = schedule(cfg.K, N, cfg.p_decode, rng);

        std::vector<Update> updates;
        for (auto id : sched.successful()) {
            const auto& node = nodes[id];
            Vec local = algo == Algorithm::fml
                            ? local_maml_step(model, res.theta, node, cfg.alpha, cfg.beta, cfg.T0, cfg.meta_mode,
                                              static_cast<long>(r))
                            : local_fedavg_step(model, res.theta, node, cfg.beta, cfg.T0, static_cast<long>(r));
            updates.push_back({std::move(local), model.sample_count(node.train) + model.sample_count(node.test), true});
        }
        if (auto agg = aggregate(updates)) res.theta = std::move(*agg);

        RoundLog log;
        log.round = r + 1;
        log.scheduled = sched.scheduled;
        log.successful = sched.successful();
        double tl = 0.0;
        for (auto id : sched.scheduled) tl += model.loss(res.theta, nodes[id].train);
        log.train_loss = tl / static_cast<double>(sched.scheduled.size());
        if constexpr (HasAccuracy<M>) {
            if (!opts.eval_tasks.empty()) {
                double acc = 0.0, adapted = 0.0;
                for (const auto& task : opts.eval_tasks) {
                    acc += model.accuracy(res.theta, task.test);
                    const Vec a = adapt(model, res.theta, task.adapt, cfg.alpha, cfg.adapt_steps);
                    adapted += model.accuracy(a, task.test);
                }
                log.test_acc = acc / static_cast<double>(opts.eval_tasks.size());
                log.adapted_acc = adapted / static_cast<double>(opts.eval_tasks.size());
            }
        }
        res.logs.push_back(std::move(log));
        if (opts.on_round && !opts.on_round(r + 1, res.theta)) break;
    }
    return res;
}

inline void write_round_log_csv(std::ostream& os, const std::vector<RoundLog>& logs) {
    auto ids = [](const std::vector<std::size_t>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ';';
            s += std::to_string(v[i]);
        }
        return s;
    };
    auto num = [](double v) {
        if (std::isnan(v)) return std::string("nan");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    os << "round,scheduled,successful,train_loss,test_acc,adapted_acc\n";
    for (const auto& l : logs)
        os << l.round << ',' << ids(l.scheduled) << ',' << ids(l.successful) << ',' << num(l.train_loss) << ','
           << num(l.test_acc) << ',' << num(l.adapted_acc) << '\n';
}

/// First round whose value reaches `target`; nullopt if never reached.
inline std::optional<std::size_t> rounds_to_accuracy(const std::vector<RoundLog>& logs, double target,
                                                     bool adapted = false) {
    for (const auto& l : logs) {
        const double v = adapted ? l.adapted_acc : l.test_acc;
        if (v >= target) return l.round;
    }
    return std::nullopt;
}

}  // namespace arcfml::fml
