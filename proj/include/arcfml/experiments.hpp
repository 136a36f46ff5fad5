// experiments.hpp - experiment drivers behind the command-line subcommands
//
// Each cmd_* function writes a CSV document (comment header + rows) to a stream
// and returns a process exit code. Outputs depend only on the config and seed.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "arcfml/bound.hpp"
#include "arcfml/cdnn.hpp"
#include "arcfml/chirp_phy.hpp"
#include "arcfml/datasets.hpp"
#include "arcfml/error.hpp"
#include "arcfml/fml.hpp"
#include "arcfml/stats.hpp"
#include "arcfml/uwa_channel.hpp"

#ifndef ARCFML_VERSION
#define ARCFML_VERSION "0.0.0"
#endif

namespace arcfml::exp {

using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kUsage = 2, kValidity = 3, kRuntime = 4 };

/// Missing or inconsistent command-line input.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(what) {}
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const json& config) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config.dump())));
    return buf;
}

inline void write_header(std::ostream& os, std::string_view command, const json& config, std::uint64_t seed) {
    os << "# arcfml " << ARCFML_VERSION << ' ' << command << '\n';
    os << "# config_hash=" << config_hash(config) << '\n';
    os << "# seed=" << seed << '\n';
    os << "# config=" << config.dump() << '\n';
}

inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// "a:step:b" (inclusive), "a,b,c" or a single value.
inline std::vector<double> parse_grid(const std::string& text) {
    auto num = [&](const std::string& s) {
        if (s == "inf") return std::numeric_limits<double>::infinity();
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (s.empty() || *end != '\0') throw UsageError("bad number '" + s + "' in grid '" + text + "'");
        return v;
    };
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(text);
        for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
        if (parts.size() != 3) throw UsageError("grid '" + text + "' must be start:step:stop");
        const double a = num(parts[0]), step = num(parts[1]), b = num(parts[2]);
        if (!(step > 0.0) || !(a <= b)) throw UsageError("grid '" + text + "' needs step > 0 and start <= stop");
        const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9));
        for (std::size_t i = 0; i <= n; ++i) out.push_back(a + step * static_cast<double>(i));
        return out;
    }
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(num(p));
    if (out.empty()) throw UsageError("empty grid");
    return out;
}

inline data::Interval parse_interval(const std::string& text) {
    const auto v = parse_grid(text);
    if (v.size() == 1) return {v[0], v[0]};
    if (v.size() == 2 && text.find(':') == std::string::npos) return {v[0], v[1]};
    throw UsageError("range '" + text + "' must be a value or lo,hi");
}

// ---- complexity ----------------------------------------------------------

inline int cmd_complexity(std::ostream& os, std::uint64_t seed) {
    const json cfg = {{"command", "complexity"}};
    write_header(os, "complexity", cfg, seed);
    os << "column,lambda,n1,add,mul,nav,total,table_add,table_mul,table_nav,table_total,table_internal_total,"
          "add_mismatch,mul_mismatch,nav_mismatch,total_mismatch,advantage_pct_published,advantage_pct_table,"
          "advantage_pct_formula\n";
    for (const auto& r : phy::complexity_table()) {
        const auto& c = r.published;
        os << '"' << c.label << '"' << ',' << c.lambda << ',' << r.n1 << ',' << r.formula.additions << ','
           << r.formula.multiplications << ',' << r.formula.nonlinear_activations << ',' << r.formula.total << ','
           << c.additions << ',' << c.multiplications << ',' << c.nonlinear_activations << ',' << c.total << ','
           << r.table_internal_total << ',' << r.additions_mismatch << ',' << r.multiplications_mismatch << ','
           << r.activations_mismatch << ',' << r.total_mismatch << ',' << fmt(c.advantage_pct) << ','
           << fmt(r.advantage_pct_table) << ',' << fmt(r.advantage_pct_formula) << '\n';
    }
    return kOk;
}

// ---- BER sweep ------------------------------------------------------------

struct BerSweepConfig {
    std::vector<double> ebn0_db{6, 9, 12};
    std::vector<std::string> detectors{"mf"};
    int lambda = 1;
    std::vector<double> sto_samples{0.0};
    std::vector<double> rel_speed{0.0};
    std::string channel = "identity";
    std::size_t trials = 10000;
    std::string checkpoint;  // required for the dnn detector
    std::uint64_t seed = 0;

    json to_json() const {
        return {{"command", "ber-sweep"}, {"ebn0_db", ebn0_db}, {"detectors", detectors}, {"lambda", lambda},
                {"sto_samples", sto_samples}, {"rel_speed", rel_speed}, {"channel", channel}, {"trials", trials},
                {"checkpoint", checkpoint}};
    }
};

struct BerPoint {
    std::uint64_t errors = 0;
    std::uint64_t trials = 0;
    double ber() const { return trials ? static_cast<double>(errors) / static_cast<double>(trials) : 0.0; }
};

/// Records for one grid point; every detector sees the same symbols.
inline std::vector<data::SymbolRecord> ber_records(int lambda, double ebn0, double sto, double speed,
                                                   const std::string& channel, std::size_t trials, std::uint64_t seed) {
    data::DatasetSpec s;
    s.chirp.lambda = lambda;
    s.symbols = trials;
    s.train_fraction = 1.0;
    s.ebn0_db = {ebn0, ebn0};
    s.sto_samples = {sto, sto};
    s.rel_speed = {speed, speed};
    s.channel = channel;
    s.seed = seed;
    return data::build_node_dataset(s).train;
}

inline BerPoint mf_ber(const std::vector<data::SymbolRecord>& recs, const phy::ChirpParams& p) {
    const phy::MatchedFilter mf(p);
    BerPoint b{0, recs.size()};
    for (const auto& r : recs) b.errors += mf.detect(std::span<const float>(r.samples)).bit != r.label;
    return b;
}

inline BerPoint dnn_ber(const std::vector<data::SymbolRecord>& recs, const cdnn::MlpParams& net) {
    BerPoint b{0, recs.size()};
    if (recs.empty()) return b;
    const auto batch = data::to_batch(recs);
    const cdnn::Vec out = cdnn::forward_batch(net, batch.inputs);
    for (Eigen::Index i = 0; i < out.size(); ++i) b.errors += (out[i] >= 0.5 ? 1.0 : 0.0) != batch.labels[i];
    return b;
}

inline int cmd_ber_sweep(std::ostream& os, const BerSweepConfig& cfg) {
    std::optional<cdnn::MlpParams> net;
    for (const auto& d : cfg.detectors) {
        if (d != "mf" && d != "dnn") throw UsageError("unknown detector '" + d + "' (expected mf or dnn)");
        if (d == "dnn") {
            if (cfg.checkpoint.empty()) throw UsageError("detector dnn requires --checkpoint");
            net = cdnn::load_params(cfg.checkpoint);
        }
    }
    phy::ChirpParams p;
    p.lambda = cfg.lambda;
    p.validate();
    if (net && net->layout.input_size() != p.n1())
        throw UsageError("checkpoint input size " + std::to_string(net->layout.input_size()) + " does not match N1 = " +
                         std::to_string(p.n1()));

    write_header(os, "ber-sweep", cfg.to_json(), cfg.seed);
    os << "# snr_db is Eb/N0 in dB\n";
    os << "snr_db,detector,lambda,sto,speed,ber,trials,errors,wilson95_half_width\n";
    if (cfg.trials == 0) return kOk;
    for (std::size_t ie = 0; ie < cfg.ebn0_db.size(); ++ie)
        for (std::size_t is = 0; is < cfg.sto_samples.size(); ++is)
            for (std::size_t iv = 0; iv < cfg.rel_speed.size(); ++iv) {
                const auto seed = derive_seed(cfg.seed, {ie, is, iv});
                const auto recs = ber_records(cfg.lambda, cfg.ebn0_db[ie], cfg.sto_samples[is], cfg.rel_speed[iv],
                                              cfg.channel, cfg.trials, seed);
                for (const auto& d : cfg.detectors) {
                    const auto b = d == "mf" ? mf_ber(recs, p) : dnn_ber(recs, *net);
                    const auto ci = stats::wilson(b.errors, b.trials);
                    os << fmt(cfg.ebn0_db[ie]) << ',' << d << ',' << cfg.lambda << ',' << fmt(cfg.sto_samples[is]) << ','
                       << fmt(cfg.rel_speed[iv]) << ',' << fmt(b.ber()) << ',' << b.trials << ',' << b.errors << ','
                       << fmt(ci.half_width) << '\n';
                }
            }
    return kOk;
}

// ---- gen-data -------------------------------------------------------------

inline int cmd_gen_data(std::ostream& os, const data::DatasetSpec& spec, const std::string& out_path) {
    const auto ds = data::build_node_dataset(spec);
    data::save_dataset(out_path, ds);
    json cfg = data::to_json(spec);
    cfg["command"] = "gen-data";
    write_header(os, "gen-data", cfg, spec.seed);
    double ones = 0.0;
    for (const auto* part : {&ds.train, &ds.test})
        for (const auto& r : *part) ones += r.label;
    os << "n1,lambda,train,test,label_mean,bytes\n";
    os << spec.chirp.n1() << ',' << spec.chirp.lambda << ',' << ds.train.size() << ',' << ds.test.size() << ','
       << fmt(ones / static_cast<double>(spec.symbols)) << ',' << data::encode_dataset(ds).size() << '\n';
    return kOk;
}

// ---- train-single -----------------------------------------------------------

struct TrainConfig {
    data::DatasetSpec spec;              // used when no dataset file is given
    std::string dataset_path;            // optional UWDS input
    std::vector<std::size_t> hidden;     // empty: default hidden sizes
    cdnn::AdamConfig adam;
    std::string checkpoint_out;          // optional
    std::uint64_t seed = 0;

    json to_json() const {
        json j = {{"command", "train-single"}, {"dataset", dataset_path}, {"hidden", hidden}, {"lr", adam.lr},
                  {"epochs", adam.epochs}, {"batch_size", adam.batch_size}};
        if (dataset_path.empty()) j["spec"] = data::to_json(spec);
        return j;
    }
};

struct TrainOutcome {
    cdnn::MlpParams params;
    std::vector<double> epoch_loss;
};

inline TrainOutcome train_receiver(const cdnn::LabeledBatch& train, const std::vector<std::size_t>& hidden,
                                   cdnn::AdamConfig adam, std::uint64_t seed) {
    const auto sizes = cdnn::receiver_layers(static_cast<std::size_t>(train.inputs.cols()), hidden);
    auto init = cdnn::MlpParams::glorot(sizes, derive_seed(seed, {stream::init}));
    adam.seed = derive_seed(seed, {stream::shuffle});
    auto r = cdnn::train_adam(std::move(init), train, adam);
    return {std::move(r.params), std::move(r.epoch_loss)};
}

inline int cmd_train_single(std::ostream& os, const TrainConfig& cfg) {
    const auto ds = cfg.dataset_path.empty() ? data::build_node_dataset(cfg.spec) : data::load_dataset(cfg.dataset_path);
    const auto train = data::to_batch(ds.train);
    const auto test = data::to_batch(ds.test);
    const auto out = train_receiver(train, cfg.hidden, cfg.adam, cfg.seed);
    if (!cfg.checkpoint_out.empty()) cdnn::save_params(cfg.checkpoint_out, out.params);
    write_header(os, "train-single", cfg.to_json(), cfg.seed);
    os << "epoch,train_loss\n";
    for (std::size_t e = 0; e < out.epoch_loss.size(); ++e) os << e + 1 << ',' << fmt(out.epoch_loss[e]) << '\n';
    os << "# train_ber=" << fmt(cdnn::ber_eval(out.params, train));
    if (!test.empty()) os << " test_ber=" << fmt(cdnn::ber_eval(out.params, test));
    os << '\n';
    return kOk;
}

// ---- run-fed --------------------------------------------------------------

struct FedRunConfig {
    fml::FmlConfig fml;
    fml::Algorithm algorithm = fml::Algorithm::fml;
    data::DatasetSpec node_spec;                      // template; node i uses channel group i % groups
    std::vector<std::string> group_channels{"identity"};
    std::vector<std::string> node_datasets;           // optional UWDS files, one per node
    std::vector<data::DatasetSpec> eval_specs;        // held-out tasks
    std::size_t eval_adapt = 100;
    std::size_t eval_test = 1000;
    std::vector<std::size_t> hidden;                  // empty: default hidden sizes

    json to_json() const {
        json evals = json::array();
        for (const auto& e : eval_specs) evals.push_back(data::to_json(e));
        return {{"command", "run-fed"},
                {"mode", algorithm == fml::Algorithm::fml ? "fml" : "fl"},
                {"K", fml.K},
                {"G", fml.G},
                {"N", fml.N()},
                {"alpha", fml.alpha},
                {"beta", fml.beta},
                {"T0", fml.T0},
                {"rounds", fml.rounds},
                {"p_decode", fml.p_decode},
                {"meta_mode", fml.meta_mode == fml::MetaMode::exact ? "exact" : "first_order"},
                {"node_spec", data::to_json(node_spec)},
                {"groups", group_channels},
                {"node_datasets", node_datasets},
                {"eval", evals},
                {"eval_adapt", eval_adapt},
                {"eval_test", eval_test},
                {"hidden", hidden}};
    }
};

struct Federation {
    cdnn::MlpModel model;
    std::vector<fml::NodeState<cdnn::LabeledBatch>> nodes;
    fml::RunOptions<cdnn::LabeledBatch> opts;
    cdnn::Vec theta0;
};

/// Node datasets (generated or loaded), evaluation tasks and the initial parameters.
inline Federation build_federation(const FedRunConfig& cfg) {
    cfg.fml.validate();
    if (cfg.group_channels.empty()) throw UsageError("run-fed: at least one channel group is required");
    if (!cfg.node_datasets.empty() && cfg.node_datasets.size() != cfg.fml.K)
        throw UsageError("run-fed: expected " + std::to_string(cfg.fml.K) + " node dataset files");
    std::vector<fml::NodeState<cdnn::LabeledBatch>> nodes;
    for (std::size_t i = 0; i < cfg.fml.K; ++i) {
        data::NodeDataset ds;
        if (cfg.node_datasets.empty()) {
            auto s = cfg.node_spec;
            s.channel = cfg.group_channels[i % cfg.group_channels.size()];
            s.seed = derive_seed(cfg.fml.seed, {stream::record, 0x1000 + i});
            ds = data::build_node_dataset(s);
        } else {
            ds = data::load_dataset(cfg.node_datasets[i]);
        }
        if (ds.test.empty()) throw UsageError("run-fed: node " + std::to_string(i) + " has an empty test split");
        nodes.push_back({i, data::to_batch(ds.train), data::to_batch(ds.test)});
    }
    const auto n1 = static_cast<std::size_t>(nodes.front().train.inputs.cols());
    Federation f{cdnn::MlpModel(cdnn::receiver_layers(n1, cfg.hidden)), std::move(nodes), {}, {}};
    for (std::size_t e = 0; e < cfg.eval_specs.size(); ++e) {
        auto s = cfg.eval_specs[e];
        s.symbols = cfg.eval_adapt + cfg.eval_test;
        s.train_fraction = static_cast<double>(cfg.eval_adapt) / static_cast<double>(s.symbols);
        s.seed = derive_seed(cfg.fml.seed, {stream::record, 0x2000 + e});
        const auto ds = data::build_node_dataset(s);
        if (ds.train.front().samples.size() != n1) throw UsageError("run-fed: evaluation task N1 differs from the nodes'");
        f.opts.eval_tasks.push_back({data::to_batch(ds.train), data::to_batch(ds.test)});
    }
    f.theta0 = cdnn::MlpParams::glorot(f.model.layout.sizes, derive_seed(cfg.fml.seed, {stream::init})).flat;
    return f;
}

inline fml::FederationResult run_federation(const FedRunConfig& cfg) {
    auto f = build_federation(cfg);
    return fml::run_rounds(f.model, cfg.fml, f.nodes, cfg.algorithm, f.theta0, f.opts);
}

inline int cmd_run_federation(std::ostream& os, const FedRunConfig& cfg) {
    const auto res = run_federation(cfg);
    write_header(os, "run-fed", cfg.to_json(), cfg.fml.seed);
    fml::write_round_log_csv(os, res.logs);
    return kOk;
}

// ---- bound ----------------------------------------------------------------

inline json to_json(const bound::SmoothnessConstants& c) {
    return {{"mu", c.mu}, {"H", c.H}, {"rho", c.rho}, {"B", c.B}, {"delta", c.delta}, {"sigma", c.sigma},
            {"alpha", c.alpha}, {"beta", c.beta}, {"C", c.C}, {"tau", c.tau}, {"N", c.N}, {"n", c.n},
            {"epsilon", c.epsilon}};
}

/// One row per T0; rows whose validity flags fail carry the reason and make the exit code 3.
inline int cmd_bound(std::ostream& os, const bound::SmoothnessConstants& base, const std::vector<std::size_t>& t0s,
                     bound::XiVariant variant, std::uint64_t seed) {
    base.validate();
    json cfg = to_json(base);
    cfg["command"] = "bound";
    cfg["T0"] = t0s;
    cfg["xi_variant"] = variant == bound::XiVariant::proof ? "proof" : "theorem";
    write_header(os, "bound", cfg, seed);
    os << "T0,mu_p,H_p,mu_pp,H_pp,alpha_p,xi,m_T0,K,tz,tz_ceil,valid,reason\n";
    int code = kOk;
    for (auto t0 : t0s) {
        auto c = base;
        c.T0 = t0;
        const auto d = bound::derive_constants(c, variant);
        os << t0 << ',' << fmt(d.mu_p) << ',' << fmt(d.H_p) << ',' << fmt(d.mu_pp) << ',' << fmt(d.H_pp) << ','
           << fmt(d.alpha_p) << ',' << fmt(d.xi) << ',';
        try {
            const auto r = bound::tz_evaluate(c, variant);
            os << fmt(r.m) << ',' << fmt(r.K) << ',' << fmt(r.tz) << ',' << fmt(std::max(0.0, std::ceil(r.tz)))
               << ",1,\n";
        } catch (const ValidityError& e) {
            std::string why = e.what();
            for (auto& ch : why)
                if (ch == ',') ch = ';';
            os << "nan,nan,nan,nan,0," << why << '\n';
            code = kValidity;
        }
    }
    return code;
}

// ---- cir ------------------------------------------------------------------

struct CirGenConfig {
    channel::RayleighModelConfig model;
    double duration = 0.03;
    double fs = 96000.0;
    std::string preset = "SIM-P";
    std::uint64_t seed = 0;
};

inline void write_cir_summary(std::ostream& os, const channel::ChannelRealization& h) {
    os << "# taps=" << h.num_taps << " steps=" << h.time_steps << " Ts=" << fmt(h.Ts) << '\n';
    for (const auto& [k, v] : h.meta.entries) os << "# meta " << k << '=' << v << '\n';
    os << "tap,delay_s,mean_power,mean_power_db\n";
    for (std::size_t k = 0; k < h.num_taps; ++k) {
        double p = 0.0;
        for (std::size_t t = 0; t < h.time_steps; ++t) p += std::norm(h.gain(k, t));
        p /= static_cast<double>(h.time_steps);
        os << k << ',' << fmt(static_cast<double>(k) * h.Ts) << ',' << fmt(p) << ',' << fmt(10.0 * std::log10(p)) << '\n';
    }
}

inline int cmd_cir_generate(std::ostream& os, const CirGenConfig& cfg, const std::string& out_path) {
    auto h = channel::rayleigh_cir(cfg.model, cfg.duration, cfg.fs, cfg.seed);
    if (cfg.preset != "SIM-P") {
        const auto seed_entry = h.meta.get("seed");
        h.meta = channel::table1_metadata(cfg.preset);
        if (seed_entry) h.meta.set("seed", *seed_entry);
    }
    if (!out_path.empty()) channel::save_cir(out_path, h);
    const json j = {{"command", "cir generate"},
                    {"max_excess_delay", cfg.model.max_excess_delay},
                    {"decay_db_per_tap", cfg.model.decay_db_per_tap},
                    {"fd", cfg.model.fd},
                    {"a", cfg.model.a},
                    {"Ts", cfg.model.Ts},
                    {"duration", cfg.duration},
                    {"fs", cfg.fs},
                    {"preset", cfg.preset}};
    write_header(os, "cir", j, cfg.seed);
    write_cir_summary(os, h);
    return kOk;
}

inline int cmd_cir_inspect(std::ostream& os, const std::string& path, std::uint64_t seed) {
    const auto h = channel::load_cir(path);
    write_header(os, "cir", {{"command", "cir inspect"}, {"path", path}}, seed);
    write_cir_summary(os, h);
    return kOk;
}

}  // namespace arcfml::exp
