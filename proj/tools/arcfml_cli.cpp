// arcfml_cli.cpp - command-line driver for data generation, training, BER sweeps,
// federated runs, bound tables, complexity tables and CIR files.

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "arcfml/experiments.hpp"

namespace {

using namespace arcfml;

struct SpecFlags {
    int lambda = 6;
    std::size_t symbols = 1250;
    double train_fraction = 0.8;
    std::string ebn0 = "inf";
    std::string sto = "0";
    std::string speed = "0";
    std::string channel = "identity";
    double fd = 30.0;
    bool frame_coherent = false;

    void add(CLI::App* app) {
        app->add_option("--lambda", lambda, "Downsampling factor")->capture_default_str();
        app->add_option("--symbols", symbols, "Symbols per node (train + test)")->capture_default_str();
        app->add_option("--train-fraction", train_fraction, "Fraction of symbols in the train split")->capture_default_str();
        app->add_option("--ebn0-db", ebn0, "Eb/N0 in dB: value or lo,hi ('inf' = noiseless)")->capture_default_str();
        app->add_option("--sto", sto, "Symbol time offset in full-rate samples: value or lo,hi")->capture_default_str();
        app->add_option("--speed", speed, "Relative speed in m/s: value or lo,hi")->capture_default_str();
        app->add_option("--channel", channel, "identity | rayleigh | rotate:<deg> | cir:<path>")->capture_default_str();
        app->add_option("--fd", fd, "Rayleigh maximum Doppler frequency (Hz)")->capture_default_str();
        app->add_flag("--frame-coherent", frame_coherent, "Draw channel and impairments once per node");
    }

    data::DatasetSpec build(std::uint64_t seed) const {
        data::DatasetSpec s;
        s.chirp.lambda = lambda;
        s.symbols = symbols;
        s.train_fraction = train_fraction;
        s.ebn0_db = exp::parse_interval(ebn0);
        s.sto_samples = exp::parse_interval(sto);
        s.rel_speed = exp::parse_interval(speed);
        s.channel = channel;
        s.rayleigh.fd = fd;
        s.frame_coherent = frame_coherent;
        s.seed = seed;
        return s;
    }
};

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    if (text.empty()) return out;
    for (double v : exp::parse_grid(text)) {
        if (!(v >= 1.0) || v != std::floor(v)) throw exp::UsageError("sizes must be positive integers: " + text);
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

/// "key=value;key=value" with keys channel, ebn0, sto, speed.
data::DatasetSpec parse_eval(const std::string& text, const data::DatasetSpec& base) {
    auto s = base;
    std::stringstream ss(text);
    for (std::string kv; std::getline(ss, kv, ';');) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw exp::UsageError("--eval entry '" + kv + "' must be key=value");
        const auto k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "channel") s.channel = v;
        else if (k == "ebn0") s.ebn0_db = exp::parse_interval(v);
        else if (k == "sto") s.sto_samples = exp::parse_interval(v);
        else if (k == "speed") s.rel_speed = exp::parse_interval(v);
        else throw exp::UsageError("--eval key '" + k + "' is not one of channel, ebn0, sto, speed");
    }
    return s;
}

class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
            if (!*file_) throw InputError("cannot open output file: " + path);
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chirp receiver training, federated meta-learning and channel simulation"};
    app.require_subcommand(1);
    app.fallthrough();
    std::uint64_t seed = 0;
    std::string out_path;
    app.add_option("--seed", seed, "Master random seed")->required();
    app.add_option("--out", out_path, "CSV output path (default: stdout)");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Synthesize one node dataset (UWDS file)");
    SpecFlags gen_spec;
    gen_spec.add(gen);
    std::string gen_file;
    gen->add_option("--dataset", gen_file, "Output dataset file")->required();

    // train-single
    auto* train = app.add_subcommand("train-single", "Train a receiver on one dataset");
    SpecFlags train_spec;
    train_spec.add(train);
    exp::TrainConfig tcfg;
    std::string train_hidden;
    train->add_option("--dataset", tcfg.dataset_path, "Input UWDS file (otherwise generated from the flags)");
    train->add_option("--hidden", train_hidden, "Hidden layer sizes, e.g. 160,140 (default: N1, 7N1/8)");
    train->add_option("--epochs", tcfg.adam.epochs, "Adam epochs")->capture_default_str();
    train->add_option("--lr", tcfg.adam.lr, "Adam learning rate")->capture_default_str();
    train->add_option("--batch-size", tcfg.adam.batch_size, "Mini-batch size")->capture_default_str();
    train->add_option("--checkpoint-out", tcfg.checkpoint_out, "Write the trained parameters here");

    // ber-sweep
    auto* ber = app.add_subcommand("ber-sweep", "Monte-Carlo BER over an Eb/N0 x STO x speed grid");
    exp::BerSweepConfig bcfg;
    std::string ber_snr = "6,9,12", ber_det = "mf", ber_sto = "0", ber_speed = "0";
    ber->add_option("--snr-db", ber_snr, "Eb/N0 grid in dB: start:step:stop or a,b,c")->capture_default_str();
    ber->add_option("--detector", ber_det, "Detectors: mf, dnn or mf,dnn")->capture_default_str();
    ber->add_option("--lambda", bcfg.lambda, "Downsampling factor")->capture_default_str();
    ber->add_option("--sto", ber_sto, "STO grid (full-rate samples)")->capture_default_str();
    ber->add_option("--speed", ber_speed, "Relative speed grid (m/s)")->capture_default_str();
    ber->add_option("--channel", bcfg.channel, "Channel tag")->capture_default_str();
    ber->add_option("--trials", bcfg.trials, "Symbols per grid point")->capture_default_str();
    ber->add_option("--checkpoint", bcfg.checkpoint, "Receiver checkpoint for the dnn detector");

    // run-fed
    auto* fed = app.add_subcommand("run-fed", "Federated meta-learning (fml) or FedAvg (fl) rounds");
    exp::FedRunConfig fcfg;
    SpecFlags fed_spec;
    fed_spec.lambda = 6;
    fed_spec.ebn0 = "16";
    fed_spec.add(fed);
    std::string fed_mode = "fml", fed_hidden;
    std::vector<std::string> fed_groups, fed_evals;
    bool first_order = false;
    fed->add_option("--mode", fed_mode, "fml or fl")->check(CLI::IsMember({"fml", "fl"}))->capture_default_str();
    fed->add_option("--k", fcfg.fml.K, "Total nodes K")->capture_default_str();
    fed->add_option("--g", fcfg.fml.G, "Scheduling ratio G = N/K")->capture_default_str();
    fed->add_option("--alpha", fcfg.fml.alpha, "Inner adaptation rate")->capture_default_str();
    fed->add_option("--beta", fcfg.fml.beta, "Outer update rate (FedAvg rate in fl mode)")->capture_default_str();
    fed->add_option("--t0", fcfg.fml.T0, "Local epochs per round")->capture_default_str();
    fed->add_option("--rounds", fcfg.fml.rounds, "Communication rounds")->capture_default_str();
    fed->add_option("--p-decode", fcfg.fml.p_decode, "Uplink decode-success probability")->capture_default_str();
    fed->add_flag("--first-order", first_order, "First-order meta-gradient");
    fed->add_option("--group", fed_groups, "Channel tag of a node group (repeatable; node i uses group i mod count)");
    fed->add_option("--node-data", fcfg.node_datasets, "Per-node UWDS files instead of generated data");
    fed->add_option("--eval", fed_evals, "Held-out task 'channel=..;sto=..;speed=..;ebn0=..' (repeatable)");
    fed->add_option("--eval-adapt", fcfg.eval_adapt, "Adaptation samples per held-out task")->capture_default_str();
    fed->add_option("--eval-test", fcfg.eval_test, "Test samples per held-out task")->capture_default_str();
    fed->add_option("--hidden", fed_hidden, "Hidden layer sizes (default: N1, 7N1/8)");

    // bound
    auto* bnd = app.add_subcommand("bound", "Derived constants and round bound Tz per T0");
    bound::SmoothnessConstants c;
    std::string t0_list = "1,5,10", xi_variant = "proof";
    bnd->add_option("--mu", c.mu)->capture_default_str();
    bnd->add_option("--H", c.H)->capture_default_str();
    bnd->add_option("--rho", c.rho)->capture_default_str();
    bnd->add_option("--B", c.B)->capture_default_str();
    bnd->add_option("--delta", c.delta)->capture_default_str();
    bnd->add_option("--sigma", c.sigma)->capture_default_str();
    bnd->add_option("--alpha", c.alpha)->capture_default_str();
    bnd->add_option("--beta", c.beta)->capture_default_str();
    bnd->add_option("--C", c.C)->capture_default_str();
    bnd->add_option("--tau", c.tau)->capture_default_str();
    bnd->add_option("--N", c.N, "Nodes aggregated per round")->capture_default_str();
    bnd->add_option("--n", c.n, "Initial gap bound")->capture_default_str();
    bnd->add_option("--epsilon", c.epsilon, "Target gap")->capture_default_str();
    bnd->add_option("--t0", t0_list, "Local epoch values")->capture_default_str();
    bnd->add_option("--xi", xi_variant, "proof or theorem")->check(CLI::IsMember({"proof", "theorem"}))->capture_default_str();

    // complexity
    app.add_subcommand("complexity", "Operation counts for MF and DNN receivers");

    // cir
    auto* cir = app.add_subcommand("cir", "Generate or inspect CIR files");
    cir->require_subcommand(1);
    auto* cir_gen = cir->add_subcommand("generate", "Draw a Rayleigh tapped-delay-line realization");
    exp::CirGenConfig ccfg;
    std::string cir_file;
    cir_gen->add_option("--file", cir_file, "Output CIR file")->required();
    cir_gen->add_option("--duration", ccfg.duration, "Seconds")->capture_default_str();
    cir_gen->add_option("--fs", ccfg.fs, "Sample rate (Hz)")->capture_default_str();
    cir_gen->add_option("--fd", ccfg.model.fd, "Maximum Doppler frequency (Hz)")->capture_default_str();
    cir_gen->add_option("--a", ccfg.model.a, "Bell-shape parameter")->capture_default_str();
    cir_gen->add_option("--max-delay", ccfg.model.max_excess_delay, "Maximum excess delay (s)")->capture_default_str();
    cir_gen->add_option("--decay-db", ccfg.model.decay_db_per_tap, "Power decay per tap (dB)")->capture_default_str();
    cir_gen->add_option("--ts", ccfg.model.Ts, "Tap spacing (s)")->capture_default_str();
    cir_gen->add_option("--preset", ccfg.preset, "Metadata preset: SIM-P, SIM-B, NOF, NCS, CWR")->capture_default_str();
    auto* cir_inspect = cir->add_subcommand("inspect", "Print a CIR file's metadata and tap powers");
    std::string inspect_file;
    cir_inspect->add_option("--file", inspect_file, "CIR file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exp::kUsage;
    }

    try {
        Output out(out_path);
        auto& os = out.stream();
        if (*gen) return exp::cmd_gen_data(os, gen_spec.build(seed), gen_file);
        if (*train) {
            tcfg.spec = train_spec.build(seed);
            tcfg.hidden = parse_sizes(train_hidden);
            tcfg.seed = seed;
            return exp::cmd_train_single(os, tcfg);
        }
        if (*ber) {
            bcfg.ebn0_db = exp::parse_grid(ber_snr);
            bcfg.sto_samples = exp::parse_grid(ber_sto);
            bcfg.rel_speed = exp::parse_grid(ber_speed);
            bcfg.detectors.clear();
            std::stringstream ss(ber_det);
            for (std::string d; std::getline(ss, d, ',');) bcfg.detectors.push_back(d);
            bcfg.seed = seed;
            return exp::cmd_ber_sweep(os, bcfg);
        }
        if (*fed) {
            fcfg.algorithm = fed_mode == "fml" ? fml::Algorithm::fml : fml::Algorithm::fl;
            fcfg.fml.meta_mode = first_order ? fml::MetaMode::first_order : fml::MetaMode::exact;
            fcfg.fml.seed = seed;
            fcfg.node_spec = fed_spec.build(seed);
            if (!fed_groups.empty()) fcfg.group_channels = fed_groups;
            else fcfg.group_channels = {fcfg.node_spec.channel};
            for (const auto& e : fed_evals) fcfg.eval_specs.push_back(parse_eval(e, fcfg.node_spec));
            fcfg.hidden = parse_sizes(fed_hidden);
            return exp::cmd_run_federation(os, fcfg);
        }
        if (*bnd) {
            const auto variant = xi_variant == "proof" ? bound::XiVariant::proof : bound::XiVariant::theorem;
            return exp::cmd_bound(os, c, parse_sizes(t0_list), variant, seed);
        }
        if (app.got_subcommand("complexity")) return exp::cmd_complexity(os, seed);
        if (*cir_gen) {
            ccfg.seed = seed;
            return exp::cmd_cir_generate(os, ccfg, cir_file);
        }
        if (*cir_inspect) return exp::cmd_cir_inspect(os, inspect_file, seed);
    } catch (const exp::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return exp::kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return exp::kUsage;
    } catch (const ValidityError& e) {
        std::cerr << "validity error: " << e.what() << '\n';
        return exp::kValidity;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exp::kRuntime;
    }
    return exp::kUsage;
}
