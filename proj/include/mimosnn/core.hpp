#pragma once

// Domain types shared by every part of the library: event times, the
// transformed-time domain z = exp(t / tau_syn), neuron parameters and the
// dense layered topology.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mimosnn {

using Real = double;

inline constexpr Real kInf = std::numeric_limits<Real>::infinity();

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// exp(t / tau_syn) left the representable range. Usually means the input
/// was not log-transformed before being fed to the network.
class TransformOverflow : public Error {
public:
    explicit TransformOverflow(Real t)
        : Error("transformed time overflows for t = " + std::to_string(t)), time(t) {}
    Real time;
};

class InvalidTransformedTime : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Event times in model units. +inf means "no event".
using SpikeTrain = std::vector<Real>;
/// The same events in the transformed domain, z >= 1.
using ZTrain = std::vector<Real>;

inline Real to_transformed(Real t, Real tau_syn) {
    if (!(tau_syn > 0)) throw std::invalid_argument("tau_syn must be positive");
    if (t == kInf) return kInf;
    const Real z = std::exp(t / tau_syn);
    if (!std::isfinite(z)) throw TransformOverflow(t);
    return z;
}

inline Real from_transformed(Real z, Real tau_syn) {
    if (!(tau_syn > 0)) throw std::invalid_argument("tau_syn must be positive");
    if (!(z >= 1)) throw InvalidTransformedTime("transformed time below 1: " + std::to_string(z));
    if (z == kInf) return kInf;
    return tau_syn * std::log(z);
}

inline ZTrain to_transformed(std::span<const Real> train, Real tau_syn) {
    ZTrain out;
    out.reserve(train.size());
    for (Real t : train) out.push_back(to_transformed(t, tau_syn));
    return out;
}

inline SpikeTrain from_transformed(std::span<const Real> train, Real tau_syn) {
    SpikeTrain out;
    out.reserve(train.size());
    for (Real z : train) out.push_back(from_transformed(z, tau_syn));
    return out;
}

/// Finite and strictly increasing.
inline bool is_valid_train(std::span<const Real> train) {
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (!std::isfinite(train[i])) return false;
        if (i > 0 && !(train[i - 1] < train[i])) return false;
    }
    return true;
}

/// Parameters shared by every neuron in a network. theta = v_thr / tau_syn is
/// the scaled threshold the causal-set weight sum has to exceed.
class NeuronConfig {
public:
    NeuronConfig() = default;
    NeuronConfig(Real tau_syn, Real tau_ref, Real v_thr)
        : tau_syn_(tau_syn), tau_ref_(tau_ref), v_thr_(v_thr) {
        if (!(tau_syn > 0) || !std::isfinite(tau_syn))
            throw std::invalid_argument("tau_syn must be positive and finite");
        if (!(tau_ref >= 0)) throw std::invalid_argument("tau_ref must be nonnegative");
        if (!(v_thr > 0) || !std::isfinite(v_thr))
            throw std::invalid_argument("v_thr must be positive and finite");
    }

    Real tau_syn() const { return tau_syn_; }
    Real tau_ref() const { return tau_ref_; }
    Real v_thr() const { return v_thr_; }
    Real theta() const { return v_thr_ / tau_syn_; }

    /// exp(tau_ref / tau_syn): multiplying a spike's z by this gives the end of
    /// its refractory window. +inf for an infinite refractory period.
    Real refractory_factor() const {
        return tau_ref_ == kInf ? kInf : std::exp(tau_ref_ / tau_syn_);
    }

    friend bool operator==(const NeuronConfig&, const NeuronConfig&) = default;

private:
    Real tau_syn_ = 1.0;
    Real tau_ref_ = 0.1;
    Real v_thr_ = 1.0;
};

/// Row-major dense matrix, rows = postsynaptic neurons, cols = input channels.
struct WeightMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Real> data;

    WeightMatrix() = default;
    WeightMatrix(std::size_t r, std::size_t c, Real fill = 0) : rows(r), cols(c), data(r * c, fill) {}

    Real& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    Real operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<Real> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const Real> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    friend bool operator==(const WeightMatrix&, const WeightMatrix&) = default;
};

struct NetworkTopology {
    std::vector<std::size_t> layer_sizes;  // [C, H_1, ..., P]
    std::vector<WeightMatrix> weights;     // weights[l] maps layer l to layer l + 1
    NeuronConfig config;

    NetworkTopology() = default;
    NetworkTopology(std::vector<std::size_t> sizes, NeuronConfig cfg)
        : layer_sizes(std::move(sizes)), config(cfg) {
        if (layer_sizes.size() < 2) throw ShapeError("network needs at least an input and an output layer");
        for (std::size_t s : layer_sizes)
            if (s == 0) throw ShapeError("layer sizes must be positive");
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
            weights.emplace_back(layer_sizes[l + 1], layer_sizes[l]);
    }

    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
    std::size_t num_weight_layers() const { return weights.size(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) n += layer_sizes[l] * layer_sizes[l + 1];
        return n;
    }

    friend bool operator==(const NetworkTopology&, const NetworkTopology&) = default;
};

/// Parameter count of the dense layered network with the given sizes.
inline std::size_t parameter_count(std::span<const std::size_t> sizes) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1];
    return n;
}

}  // namespace mimosnn
