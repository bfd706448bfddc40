// Builds a small synthetic task, trains one model for a few epochs and prints
// the training accuracy, then replays one record through the dense simulator.

#include <iostream>

#include <mimosnn/mimosnn.hpp>

int main() {
    using namespace mimosnn;

    SyntheticSpec spec;
    spec.legitimate = 40;
    spec.bots = 40;
    const Dataset ds = make_synthetic_dataset(spec, 7);

    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.steps_per_epoch = 10;
    cfg.batch_size = 16;
    cfg.warmup_epochs = 2;

    std::vector<std::size_t> all(ds.records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const FoldResult res = train_fold(cfg, ds.records, all, {}, 0, [](const EpochLog& e) {
        std::cout << "epoch " << e.epoch << "  loss " << e.loss << "  train acc " << e.train_accuracy << "  nai "
                  << e.nai << '\n';
    });

    const auto channels = res.checkpoint.preprocessor.apply(ds.records.front().delays);
    const auto event = spike_times(network_forward(channels, res.checkpoint.network), cfg.tau_syn);
    const auto dense = simulate_dense(res.checkpoint.network, channels, SimConfig{});
    std::size_t a = 0, b = 0;
    for (std::size_t l = 0; l < event.size(); ++l)
        for (std::size_t h = 0; h < event[l].size(); ++h) {
            a += event[l][h].size();
            b += dense[l][h].size();
        }
    std::cout << "spikes: event-driven " << a << ", dense " << b << '\n';
}
