#pragma once

// Training objective and evaluation arithmetic: softmax cross-entropy over
// first output spikes, the spike-firing penalty over valid input sets, its
// dynamic scaling by misclassified examples, rank-order prediction, the
// network activity indicator and confusion-matrix metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "forward.hpp"

namespace mimosnn {

enum class ClassLabel : std::uint8_t { legitimate = 0, bot = 1 };

inline std::size_t index_of(ClassLabel y) { return static_cast<std::size_t>(y); }

inline std::vector<Real> one_hot(ClassLabel y, std::size_t num_classes = 2) {
    std::vector<Real> v(num_classes, 0);
    v.at(index_of(y)) = 1;
    return v;
}

/// Loss reported when the target channel is silent while another channel
/// fires. The exact value diverges; this equals -ln of the smallest normal
/// double.
inline const Real kSilentTargetLoss = -std::log(std::numeric_limits<Real>::min());

struct CrossEntropyResult {
    Real loss = 0;
    std::vector<Real> grad;  // dL/dz_p
};

/// Softmax cross-entropy over -z with max-subtraction; exp(-inf) is 0.
/// All-silent outputs give zero loss and zero gradient.
inline CrossEntropyResult cross_entropy(std::span<const Real> z, ClassLabel y) {
    const std::size_t P = z.size();
    const std::size_t target = index_of(y);
    if (P < 2 || target >= P) throw ShapeError("cross_entropy needs at least two output channels");
    CrossEntropyResult r;
    r.grad.assign(P, 0);
    const Real zmin = *std::min_element(z.begin(), z.end());
    if (zmin == kInf) return r;

    Real denom = 0;
    std::vector<Real> e(P, 0);
    for (std::size_t p = 0; p < P; ++p) {
        e[p] = z[p] == kInf ? 0 : std::exp(-(z[p] - zmin));
        denom += e[p];
    }
    for (std::size_t p = 0; p < P; ++p) r.grad[p] = (p == target ? 1 : 0) - e[p] / denom;
    if (z[target] == kInf) {
        // only the finite limit of the gradient is meaningful here
        r.grad[target] = 0;
        r.loss = kSilentTargetLoss;
    } else {
        r.loss = (z[target] - zmin) + std::log(denom);
    }
    return r;
}

struct PenaltyEntry {
    std::size_t observed = 0;  // |B_1h|, events the neuron sees
    Real weight_sum = 0;       // sum of w_k over B_1h
    Real value = 0;            // R_1h
};

/// Per layer, per neuron penalty of the first output spike. Later spikes
/// carry no penalty.
using PenaltyLedger = std::vector<std::vector<PenaltyEntry>>;

struct PenaltyResult {
    Real total = 0;
    PenaltyLedger ledger;
    std::vector<WeightMatrix> d_weights;
};

/// R = sum_h max(0, theta - sum_{k in B_1h} w_k), B_1h = every event neuron h
/// observes. A neuron that observes nothing is not penalized.
inline PenaltyResult spike_penalty(const NetworkTopology& net, const ForwardResult& fwd) {
    PenaltyResult r;
    const Real theta = net.config.theta();
    for (std::size_t l = 0; l < net.num_weight_layers(); ++l) {
        const WeightMatrix& w = net.weights[l];
        const LayerOutput& layer = fwd.layers[l];
        std::vector<std::size_t> counts(w.cols, 0);
        for (const auto& e : layer.events) ++counts[e.channel];

        WeightMatrix dw(w.rows, w.cols);
        std::vector<PenaltyEntry> entries(w.rows);
        for (std::size_t h = 0; h < w.rows; ++h) {
            PenaltyEntry& pe = entries[h];
            pe.observed = layer.events.size();
            if (pe.observed == 0) continue;
            for (std::size_t c = 0; c < w.cols; ++c) pe.weight_sum += static_cast<Real>(counts[c]) * w(h, c);
            const Real gap = theta - pe.weight_sum;
            if (gap > 0) {
                pe.value = gap;
                r.total += gap;
                for (std::size_t c = 0; c < w.cols; ++c) dw(h, c) = -static_cast<Real>(counts[c]);
            }
        }
        r.ledger.push_back(std::move(entries));
        r.d_weights.push_back(std::move(dw));
    }
    return r;
}

/// Mean penalty over misclassified examples, 0 when every example is correct.
inline Real dynamic_scale(std::span<const Real> penalties, const std::vector<bool>& correct) {
    if (penalties.size() != correct.size()) throw ShapeError("one correctness flag per penalty required");
    Real sum = 0;
    std::size_t wrong = 0;
    for (std::size_t n = 0; n < penalties.size(); ++n) {
        if (correct[n]) continue;
        sum += penalties[n];
        ++wrong;
    }
    return wrong == 0 ? 0 : sum / static_cast<Real>(wrong);
}

inline Real total_loss(std::span<const Real> cross_entropies, Real r_star, Real gamma) {
    if (!(gamma >= 0)) throw std::invalid_argument("gamma must be nonnegative");
    if (cross_entropies.empty()) return gamma * r_star;
    Real sum = 0;
    for (Real c : cross_entropies) sum += c;
    return sum / static_cast<Real>(cross_entropies.size()) + gamma * r_star;
}

/// Rank-order decision: the earliest first spike wins. Ties and an all-silent
/// output go to the negative (legitimate) class.
inline ClassLabel predict(std::span<const Real> z) {
    if (z.size() != 2) throw ShapeError("predict expects two output channels");
    return z[1] < z[0] ? ClassLabel::bot : ClassLabel::legitimate;
}

/// Network activity indicator: spikes per neuron per example.
/// counts[n][h] is the spike count of neuron h (over all non-input layers)
/// for example n.
inline Real nai(const std::vector<std::vector<std::size_t>>& counts, std::size_t num_neurons) {
    if (counts.empty() || num_neurons == 0) return 0;
    Real total = 0;
    for (const auto& ex : counts)
        for (std::size_t m : ex) total += static_cast<Real>(m);
    return total / (static_cast<Real>(counts.size()) * static_cast<Real>(num_neurons));
}

inline std::size_t neuron_count(std::span<const std::size_t> layer_sizes) {
    std::size_t n = 0;
    for (std::size_t l = 1; l < layer_sizes.size(); ++l) n += layer_sizes[l];
    return n;
}

inline Real f1_score(Real precision, Real recall) {
    return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0;
}

struct MetricsReport {
    Real accuracy = 0;
    Real recall = 0;
    Real precision = 0;
    Real f1 = 0;
    Real mcc = 0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Confusion-matrix metrics with bot as the positive class. Degenerate
/// denominators yield 0.
inline MetricsReport metrics(std::span<const ClassLabel> predicted, std::span<const ClassLabel> actual) {
    if (predicted.size() != actual.size()) throw ShapeError("prediction/label count mismatch");
    if (predicted.empty()) throw std::invalid_argument("metrics of an empty evaluation set");
    MetricsReport m;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool p = predicted[i] == ClassLabel::bot;
        const bool a = actual[i] == ClassLabel::bot;
        if (p && a) ++m.tp;
        else if (p && !a) ++m.fp;
        else if (!p && a) ++m.fn;
        else ++m.tn;
    }
    const auto tp = static_cast<Real>(m.tp), fp = static_cast<Real>(m.fp);
    const auto tn = static_cast<Real>(m.tn), fn = static_cast<Real>(m.fn);
    m.accuracy = (tp + tn) / static_cast<Real>(m.total());
    m.recall = tp + fn > 0 ? tp / (tp + fn) : 0;
    m.precision = tp + fp > 0 ? tp / (tp + fp) : 0;
    m.f1 = f1_score(m.precision, m.recall);
    const Real den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    m.mcc = den > 0 ? (tp * tn - fp * fn) / std::sqrt(den) : 0;
    return m;
}

}  // namespace mimosnn
