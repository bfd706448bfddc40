#pragma once

// Fixed-step reference simulator of the integrate-and-fire dynamics. It never
// touches the closed-form spike time; it exists to check the event-driven
// forward pass and to dump spike rasters.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "datapipe.hpp"

namespace mimosnn {

struct SimConfig {
    Real dt = 1e-4;
    Real t_end = 0;         // lower bound on the horizon; the per-layer horizon is extended to
    Real horizon_tau = 10;  // last input + horizon_tau * tau_syn
};

/// One neuron on a grid of step dt. Each input event adds a unit jump to the
/// synaptic current at the first grid point at or after it. The current decays
/// by exp(-dt / tau_syn) per step and the voltage takes that step's integral.
/// A spike is reported at the first grid point with V >= V_thr; after it the
/// current is cleared and inputs up to spike + tau_ref are ignored, then V
/// restarts from 0.
inline SpikeTrain simulate_neuron(std::span<const SpikeTrain> inputs, std::span<const Real> weights,
                                  const NeuronConfig& config, const SimConfig& sim) {
    struct Arrival {
        long long step;
        Real t;
        Real w;
    };
    const Real dt = sim.dt;
    std::vector<Arrival> arrivals;
    Real last = 0;
    for (std::size_t c = 0; c < inputs.size(); ++c)
        for (Real t : inputs[c]) {
            arrivals.push_back({static_cast<long long>(std::ceil(t / dt)), t, weights[c]});
            last = std::max(last, t);
        }
    std::sort(arrivals.begin(), arrivals.end(), [](const Arrival& a, const Arrival& b) { return a.t < b.t; });

    const Real tau = config.tau_syn();
    const Real decay = std::exp(-dt / tau);
    const Real gain = tau * (1 - decay);
    const Real t_end = std::max(sim.t_end, last + sim.horizon_tau * tau);
    const auto n_end = static_cast<long long>(std::ceil(t_end / dt));

    SpikeTrain spikes;
    Real v = 0;
    Real i_syn = 0;
    Real refractory_until = -kInf;
    bool refractory = false;
    std::size_t next = 0;
    for (long long n = 0; n <= n_end; ++n) {
        const Real now = static_cast<Real>(n) * dt;
        if (refractory && now > refractory_until) {
            refractory = false;
            v = 0;
        }
        while (next < arrivals.size() && arrivals[next].step <= n) {
            if (arrivals[next].t > refractory_until) i_syn += arrivals[next].w;
            ++next;
        }
        if (!refractory && v >= config.v_thr()) {
            spikes.push_back(now);
            if (config.tau_ref() == kInf) break;
            refractory = true;
            refractory_until = now + config.tau_ref();
            i_syn = 0;
        }
        if (next == arrivals.size() && (refractory || v + i_syn * tau < config.v_thr())) break;
        if (!refractory) v += i_syn * gain;
        i_syn *= decay;
    }
    return spikes;
}

/// Dense simulation of a whole network, layer by layer. Returns per layer
/// (excluding the input layer), per neuron spike times.
inline std::vector<std::vector<SpikeTrain>> simulate_dense(const NetworkTopology& net,
                                                           std::span<const SpikeTrain> inputs, const SimConfig& sim) {
    if (inputs.size() != net.input_size()) throw ShapeError("input channel count mismatch");
    if (!(sim.dt > 0)) throw std::invalid_argument("dt must be positive");
    std::vector<std::vector<SpikeTrain>> layers;
    std::vector<SpikeTrain> current(inputs.begin(), inputs.end());
    for (const auto& w : net.weights) {
        std::vector<SpikeTrain> out(w.rows);
        for (std::size_t h = 0; h < w.rows; ++h) out[h] = simulate_neuron(current, w.row(h), net.config, sim);
        layers.push_back(out);
        current = std::move(out);
    }
    return layers;
}

/// Writes `layer neuron spike_time refractory_end` records, one per line,
/// after a `#` header. Layer 0 is the first non-input layer.
inline void write_raster(std::ostream& out, const std::vector<std::vector<SpikeTrain>>& layers, Real tau_ref) {
    out << "# layer neuron spike_time refractory_end\n";
    out.precision(17);
    for (std::size_t l = 0; l < layers.size(); ++l)
        for (std::size_t h = 0; h < layers[l].size(); ++h)
            for (Real t : layers[l][h]) out << l << ' ' << h << ' ' << t << ' ' << t + tau_ref << '\n';
}

inline void export_raster(const std::vector<std::vector<SpikeTrain>>& layers, Real tau_ref, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write raster '" + path + "'");
    write_raster(out, layers, tau_ref);
    if (!out) throw IoError("write failed for '" + path + "'");
}

/// Event-driven spike trains converted back to model time, in raster layout.
inline std::vector<std::vector<SpikeTrain>> spike_times(const ForwardResult& fwd, Real tau_syn) {
    std::vector<std::vector<SpikeTrain>> layers;
    for (const auto& l : fwd.layers) {
        std::vector<SpikeTrain> trains;
        for (const auto& z : l.spikes) trains.push_back(from_transformed(z, tau_syn));
        layers.push_back(std::move(trains));
    }
    return layers;
}

}  // namespace mimosnn
