// quickstart.cpp - generate a small dataset, train a receiver, compare with the matched filter

#include <cstdio>

#include "arcfml/datasets.hpp"
#include "arcfml/experiments.hpp"

int main() {
    using namespace arcfml;

    data::DatasetSpec spec;
    spec.chirp.lambda = 6;
    spec.symbols = 4000;
    spec.ebn0_db = {12.0, 12.0};
    spec.rel_speed = {10.0, 10.0};
    spec.seed = 7;
    const auto ds = data::build_node_dataset(spec);

    const auto out = exp::train_receiver(data::to_batch(ds.train), {}, {.lr = 1e-3, .epochs = 20}, 7);
    const auto test = data::to_batch(ds.test);
    const auto mf = exp::mf_ber(ds.test, spec.chirp);
    std::printf("v = 10 m/s, Eb/N0 = 12 dB, lambda = 6, %zu test symbols\n", ds.test.size());
    std::printf("  matched filter BER: %.4f\n", mf.ber());
    std::printf("  C-DNN BER:          %.4f\n", cdnn::ber_eval(out.params, test));
    return 0;
}
