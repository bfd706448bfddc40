#pragma once

// Exact backward pass. Each output spike depends only on its own causal set,
// so per-spike derivatives are summed over spikes with no spike-to-spike
// recurrence. Causal-set membership is held fixed while differentiating.

#include <algorithm>
#include <span>
#include <vector>

#include "core.hpp"
#include "forward.hpp"

namespace mimosnn {

/// d z_out / d z_k for every event position k: w_k / D inside the causal set, 0 elsewhere.
inline std::vector<Real> spike_grad_wrt_inputs(std::span<const VirtualEvent> events, const SpikeRecord& rec) {
    std::vector<Real> g(events.size(), 0);
    for (std::size_t k = rec.causal.begin; k < rec.causal.end; ++k) g[k] = events[k].weight / rec.denominator;
    return g;
}

/// d z_out / d w_k for every event position k: (z_k - z_out) / D inside the causal set.
inline std::vector<Real> spike_grad_wrt_weights(std::span<const VirtualEvent> events, const SpikeRecord& rec) {
    std::vector<Real> g(events.size(), 0);
    for (std::size_t k = rec.causal.begin; k < rec.causal.end; ++k)
        g[k] = (events[k].z - rec.z_out) / rec.denominator;
    return g;
}

/// Sums per-event weight gradients onto the channel that owns each event.
template <typename Event>
std::vector<Real> project_to_channel_weights(std::span<const Real> per_event, std::span<const Event> events,
                                             std::size_t num_channels) {
    std::vector<Real> g(num_channels, 0);
    for (std::size_t k = 0; k < per_event.size(); ++k) g[events[k].channel] += per_event[k];
    return g;
}

/// Accumulates upstream[m] * dz_out^[m] into d_events (per event position)
/// and d_weights (per channel). Missing upstream entries count as zero.
inline void accumulate_neuron_backward(std::span<const InputEvent> events, std::span<const Real> weights,
                                       const NeuronTrace& trace, std::span<const Real> upstream,
                                       std::span<Real> d_events, std::span<Real> d_weights) {
    const std::size_t spikes = std::min(trace.size(), upstream.size());
    for (std::size_t m = 0; m < spikes; ++m) {
        const Real g = upstream[m];
        if (g == 0) continue;
        const SpikeRecord& rec = trace[m];
        const Real scale = g / rec.denominator;
        for (std::size_t k = rec.causal.begin; k < rec.causal.end; ++k) {
            const auto& e = events[k];
            d_events[k] += scale * weights[e.channel];
            d_weights[e.channel] += scale * (e.z - rec.z_out);
        }
    }
}

struct NeuronGradient {
    std::vector<Real> d_events;   // dL/dz_k per event position
    std::vector<Real> d_weights;  // dL/dw_c per input channel
};

inline NeuronGradient neuron_backward(std::span<const VirtualEvent> events, const NeuronTrace& trace,
                                      std::span<const Real> upstream, std::size_t num_channels) {
    std::vector<InputEvent> plain;
    std::vector<Real> w(num_channels, 0);
    plain.reserve(events.size());
    for (const auto& e : events) {
        plain.push_back({e.z, e.channel, e.spike});
        w[e.channel] = e.weight;
    }
    NeuronGradient g{std::vector<Real>(events.size(), 0), std::vector<Real>(num_channels, 0)};
    accumulate_neuron_backward(plain, w, trace, upstream, g.d_events, g.d_weights);
    return g;
}

struct GradientBuffer {
    std::vector<WeightMatrix> d_weights;           // same shapes as the network weights
    std::vector<std::vector<Real>> d_input_z;      // per input channel, per event

    static GradientBuffer zeros_like(const NetworkTopology& net) {
        GradientBuffer b;
        for (const auto& w : net.weights) b.d_weights.emplace_back(w.rows, w.cols);
        return b;
    }

    GradientBuffer& operator+=(const GradientBuffer& o) {
        for (std::size_t l = 0; l < d_weights.size(); ++l)
            for (std::size_t i = 0; i < d_weights[l].data.size(); ++i) d_weights[l].data[i] += o.d_weights[l].data[i];
        return *this;
    }

    void scale(Real s) {
        for (auto& m : d_weights)
            for (auto& v : m.data) v *= s;
        for (auto& ch : d_input_z)
            for (auto& v : ch) v *= s;
    }

    bool all_finite() const {
        for (const auto& m : d_weights)
            for (Real v : m.data)
                if (!std::isfinite(v)) return false;
        for (const auto& ch : d_input_z)
            for (Real v : ch)
                if (!std::isfinite(v)) return false;
        return true;
    }
};

/// Backpropagates dL/dz of each output channel's first spike through every
/// layer. A hidden spike's upstream is the sum of dL/dz_k over all downstream
/// virtual events it produced. Silent outputs (z = +inf) contribute nothing.
inline GradientBuffer network_backward(const NetworkTopology& net, const ForwardResult& fwd,
                                       std::span<const Real> d_output_z) {
    if (d_output_z.size() != net.output_size()) throw ShapeError("one output gradient per output channel required");
    GradientBuffer buf = GradientBuffer::zeros_like(net);

    const std::size_t L = net.num_weight_layers();
    std::vector<std::vector<Real>> upstream(net.output_size());
    for (std::size_t p = 0; p < net.output_size(); ++p) {
        upstream[p].assign(fwd.layers[L - 1].spikes[p].size(), 0);
        if (!upstream[p].empty() && fwd.output_z[p] < kInf) upstream[p][0] = d_output_z[p];
    }

    for (std::size_t l = L; l-- > 0;) {
        const LayerOutput& layer = fwd.layers[l];
        const WeightMatrix& w = net.weights[l];
        WeightMatrix& dw = buf.d_weights[l];
        std::vector<Real> d_events(layer.events.size(), 0);
        for (std::size_t h = 0; h < w.rows; ++h)
            accumulate_neuron_backward(layer.events, w.row(h), layer.traces[h], upstream[h], d_events, dw.row(h));

        std::vector<std::vector<Real>> prev(w.cols);
        if (l > 0) {
            for (std::size_t c = 0; c < w.cols; ++c) prev[c].assign(fwd.layers[l - 1].spikes[c].size(), 0);
        } else {
            std::vector<std::size_t> counts(w.cols, 0);
            for (const auto& e : layer.events) counts[e.channel] = std::max(counts[e.channel], e.spike + 1);
            for (std::size_t c = 0; c < w.cols; ++c) prev[c].assign(counts[c], 0);
        }
        for (std::size_t k = 0; k < layer.events.size(); ++k) prev[layer.events[k].channel][layer.events[k].spike] += d_events[k];
        upstream = std::move(prev);
    }
    buf.d_input_z = std::move(upstream);
    return buf;
}

}  // namespace mimosnn
