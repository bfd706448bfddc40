#pragma once

// Event-driven forward pass. Input spike trains are time-flattened into one
// sorted sequence of single-event virtual channels; each neuron's output train
// is then found spike by spike with an ascending prefix scan over the events
// admitted by the current refractory window.

#include <algorithm>
#include <cassert>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include "core.hpp"

namespace mimosnn {

/// One input event as seen by the layer: its transformed time and where it
/// came from (channel, position within that channel's train).
struct InputEvent {
    Real z;
    std::size_t channel;
    std::size_t spike;
};

/// An input event paired with the weight of its original channel.
struct VirtualEvent {
    Real z;
    std::size_t channel;
    std::size_t spike;
    Real weight;
};

/// Half-open range [begin, end) of positions in the flattened event sequence.
/// Causal sets are always contiguous in that order.
struct CausalSet {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool empty() const { return begin == end; }
    bool contains(std::size_t k) const { return k >= begin && k < end; }

    friend bool operator==(const CausalSet&, const CausalSet&) = default;
};

struct SpikeRecord {
    CausalSet causal;
    Real weight_sum = 0;      // sum of w_k over the causal set
    Real weighted_z_sum = 0;  // sum of w_k z_k over the causal set
    Real denominator = 0;     // weight_sum - theta, always > 0
    Real z_out = kInf;

    friend bool operator==(const SpikeRecord&, const SpikeRecord&) = default;
};

using NeuronTrace = std::vector<SpikeRecord>;

namespace detail {

inline bool event_less(const InputEvent& a, const InputEvent& b) {
    return std::tie(a.z, a.channel, a.spike) < std::tie(b.z, b.channel, b.spike);
}

}  // namespace detail

/// Flattens transformed trains into one sequence ordered by (z, channel).
inline std::vector<InputEvent> flatten_transformed(std::span<const ZTrain> trains) {
    std::vector<InputEvent> events;
    std::size_t total = 0;
    for (const auto& tr : trains) total += tr.size();
    events.reserve(total);
    for (std::size_t c = 0; c < trains.size(); ++c)
        for (std::size_t j = 0; j < trains[c].size(); ++j) events.push_back({trains[c][j], c, j});
    std::sort(events.begin(), events.end(), detail::event_less);
    return events;
}

inline std::vector<VirtualEvent> attach_weights(std::span<const InputEvent> events, std::span<const Real> weights) {
    std::vector<VirtualEvent> out;
    out.reserve(events.size());
    for (const auto& e : events) out.push_back({e.z, e.channel, e.spike, weights[e.channel]});
    return out;
}

/// Time-flattens per-channel trains given in model time. Every event of
/// channel c carries w_c.
inline std::vector<VirtualEvent> flatten_inputs(std::span<const SpikeTrain> trains, std::span<const Real> weights,
                                                Real tau_syn) {
    if (weights.size() != trains.size()) throw ShapeError("one weight per input channel required");
    std::vector<ZTrain> z;
    z.reserve(trains.size());
    for (const auto& tr : trains) z.push_back(to_transformed(tr, tau_syn));
    return attach_weights(flatten_transformed(z), weights);
}

/// Earliest output spike among events with z strictly above window_start_z.
///
/// Events are grouped by equal z; after each group the prefix is valid when
/// its denominator D = sum(w) - theta is positive and the candidate
/// sum(w z) / D lies in [z of the group, z of the next event). The first valid
/// prefix is the physical first threshold crossing, which stays correct when
/// negative weights make the prefix sums non-monotone.
///
/// window_start_z is in the transformed domain; 0 admits every event.
inline std::optional<SpikeRecord> find_next_spike(std::span<const VirtualEvent> events, Real window_start_z,
                                                  Real theta) {
    const auto first_it = std::upper_bound(events.begin(), events.end(), window_start_z,
                                           [](Real v, const VirtualEvent& e) { return v < e.z; });
    const std::size_t first = static_cast<std::size_t>(first_it - events.begin());
    const std::size_t n = events.size();

    Real sw = 0;
    Real swz = 0;
    std::size_t i = first;
    while (i < n) {
        const Real zi = events[i].z;
        std::size_t j = i;
        while (j < n && events[j].z == zi) {
            sw += events[j].weight;
            swz += events[j].weight * events[j].z;
            ++j;
        }
        const Real d = sw - theta;
        if (d > 0) {
            const Real cand = swz / d;
            const Real next = j < n ? events[j].z : kInf;
            if (cand >= zi && cand < next) return SpikeRecord{{first, j}, sw, swz, d, cand};
        }
        i = j;
    }
    return std::nullopt;
}

/// Recomputes a recorded spike from its causal set, in the same summation
/// order as the scan.
inline Real replay_spike(std::span<const VirtualEvent> events, const CausalSet& causal, Real theta) {
    Real sw = 0;
    Real swz = 0;
    for (std::size_t k = causal.begin; k < causal.end; ++k) {
        sw += events[k].weight;
        swz += events[k].weight * events[k].z;
    }
    return swz / (sw - theta);
}

struct NeuronOutput {
    ZTrain spikes;
    NeuronTrace trace;
};

/// Unrolls a neuron over its output spikes. After spike m every event up to
/// z_out * exp(tau_ref / tau_syn) (inclusive) is dropped for good.
inline NeuronOutput neuron_forward(std::span<const VirtualEvent> events, const NeuronConfig& config) {
    NeuronOutput out;
    const Real theta = config.theta();
    const Real ref = config.refractory_factor();
    Real window = 0;
    while (true) {
        auto rec = find_next_spike(events, window, theta);
        if (!rec) break;
        out.spikes.push_back(rec->z_out);
        out.trace.push_back(*rec);
        window = rec->z_out * ref;
        if (!(window < kInf)) break;
    }
    return out;
}

struct LayerOutput {
    std::vector<InputEvent> events;  // flattened inputs, shared by every neuron
    std::vector<ZTrain> spikes;      // per neuron
    std::vector<NeuronTrace> traces; // per neuron, indices into events

    std::size_t spike_count() const {
        std::size_t n = 0;
        for (const auto& s : spikes) n += s.size();
        return n;
    }
};

inline LayerOutput layer_forward(std::span<const ZTrain> inputs, const WeightMatrix& weights,
                                 const NeuronConfig& config) {
    if (weights.cols != inputs.size()) throw ShapeError("layer input count does not match weight columns");
    LayerOutput out;
    out.events = flatten_transformed(inputs);
    out.spikes.resize(weights.rows);
    out.traces.resize(weights.rows);
    std::vector<VirtualEvent> scratch;
    scratch.reserve(out.events.size());
    for (std::size_t h = 0; h < weights.rows; ++h) {
        const auto w = weights.row(h);
        scratch.clear();
        for (const auto& e : out.events) scratch.push_back({e.z, e.channel, e.spike, w[e.channel]});
        auto res = neuron_forward(scratch, config);
        out.spikes[h] = std::move(res.spikes);
        out.traces[h] = std::move(res.trace);
    }
    return out;
}

struct ForwardResult {
    std::vector<LayerOutput> layers;  // one per weight layer
    std::vector<Real> output_z;       // first spike per output channel, +inf if silent

    /// Output spike count of every non-input neuron, layer by layer.
    std::vector<std::size_t> spike_counts() const {
        std::vector<std::size_t> counts;
        for (const auto& l : layers)
            for (const auto& s : l.spikes) counts.push_back(s.size());
        return counts;
    }
    std::size_t total_spikes() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.spike_count();
        return n;
    }
};

/// Forward pass with inputs already in the transformed domain.
inline ForwardResult network_forward_z(std::span<const ZTrain> example, const NetworkTopology& net) {
    if (example.size() != net.input_size())
        throw ShapeError("example has " + std::to_string(example.size()) + " channels, network expects " +
                         std::to_string(net.input_size()));
    ForwardResult res;
    res.layers.reserve(net.num_weight_layers());
    std::span<const ZTrain> current = example;
    for (const auto& w : net.weights) {
        res.layers.push_back(layer_forward(current, w, net.config));
        current = res.layers.back().spikes;
    }
    res.output_z.assign(net.output_size(), kInf);
    const auto& last = res.layers.back().spikes;
    for (std::size_t p = 0; p < last.size(); ++p)
        if (!last[p].empty()) res.output_z[p] = last[p].front();
    return res;
}

/// Forward pass from model-time inputs. Throws TransformOverflow when an
/// input event cannot be represented in the transformed domain.
inline ForwardResult network_forward(std::span<const SpikeTrain> example, const NetworkTopology& net) {
    if (example.size() != net.input_size())
        throw ShapeError("example has " + std::to_string(example.size()) + " channels, network expects " +
                         std::to_string(net.input_size()));
    std::vector<ZTrain> z;
    z.reserve(example.size());
    for (const auto& tr : example) z.push_back(to_transformed(tr, net.config.tau_syn()));
    return network_forward_z(z, net);
}

}  // namespace mimosnn
