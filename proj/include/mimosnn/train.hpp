#pragma once

// Training and evaluation orchestration: weight initialization, the
// adaptive-moment optimizer, the gamma schedule, the epoch loop with balanced
// augmented batches, cross-validation and the ablation scenarios.

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "datapipe.hpp"
#include "forward.hpp"
#include "gradient.hpp"
#include "objective.hpp"

namespace mimosnn {

class NonFiniteGradient : public Error {
public:
    using Error::Error;
};

enum class OptimizerKind : std::uint8_t { adam, sgd };

struct TrainConfig {
    std::vector<std::size_t> hidden_layers{12, 24, 48};
    std::size_t num_outputs = 2;
    Real learning_rate = 1e-3;
    std::size_t epochs = 50;
    std::size_t steps_per_epoch = 100;
    std::size_t batch_size = 64;
    Real gamma_warmup = 1e5;
    std::size_t warmup_epochs = 10;  // epochs 1..warmup_epochs use gamma_warmup
    Real gamma = 1e-2;
    Real tau_syn = 1.0;
    Real tau_ref = 0.1;
    Real v_thr = 1.0;
    Real tau_min = kDefaultTauMin;
    PreprocessConfig preprocess{};
    bool augment = true;
    AugmentationSpec augmentation{};
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t seed = 1;
    std::size_t k_folds = 5;

    std::vector<std::size_t> layer_sizes() const {
        std::vector<std::size_t> s{preprocess.bins};
        s.insert(s.end(), hidden_layers.begin(), hidden_layers.end());
        s.push_back(num_outputs);
        return s;
    }
    NeuronConfig neuron_config() const { return {tau_syn, tau_ref, v_thr}; }

    Real gamma_at(std::size_t epoch) const { return epoch <= warmup_epochs ? gamma_warmup : gamma; }

    void validate() const {
        if (preprocess.bins == 0 || num_outputs != 2) throw std::invalid_argument("need >= 1 input bin and 2 outputs");
        for (std::size_t h : hidden_layers)
            if (h == 0) throw std::invalid_argument("hidden layer sizes must be positive");
        if (!(learning_rate > 0) || epochs == 0 || steps_per_epoch == 0 || batch_size == 0)
            throw std::invalid_argument("learning rate, epochs, steps and batch size must be positive");
        if (!(gamma_warmup >= 0) || !(gamma >= 0)) throw std::invalid_argument("gamma must be nonnegative");
        if (warmup_epochs > epochs) throw std::invalid_argument("warm-up longer than training");
        if (k_folds < 2) throw std::invalid_argument("need at least two folds");
        (void)neuron_config();
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Mixes a base seed with a stream tag so every consumer gets its own
/// reproducible generator.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    std::uint64_t x = seed ^ (stream * 0x9E3779B97F4A7C15ULL) ^ (index * 0xD1B54A32D192ED03ULL);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

enum SeedStream : std::uint64_t { kSeedFolds = 1, kSeedInit = 2, kSeedBatches = 3, kSeedAugment = 4, kSeedSubset = 5 };

inline Real standard_normal(Rng& rng) {
    // Box-Muller on the portable uniform source
    const Real u1 = 1 - uniform01(rng);
    const Real u2 = uniform01(rng);
    return std::sqrt(-2 * std::log(u1)) * std::cos(2 * 3.14159265358979323846 * u2);
}

/// Per neuron, weights ~ N(mu, (mu / 2)^2) with mu = 2 theta / fan_in, so the
/// expected weight sum is 2 theta.
inline NetworkTopology init_weights(std::vector<std::size_t> layer_sizes, const NeuronConfig& config,
                                    std::uint64_t seed) {
    NetworkTopology net(std::move(layer_sizes), config);
    Rng rng(seed);
    for (auto& w : net.weights) {
        const Real mu = 2 * config.theta() / static_cast<Real>(w.cols);
        for (Real& v : w.data) v = mu + 0.5 * mu * standard_normal(rng);
    }
    return net;
}

struct AdamState {
    std::vector<std::vector<Real>> m;
    std::vector<std::vector<Real>> v;
    std::uint64_t step = 0;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real epsilon = 1e-8;

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One update. Non-finite gradients throw before anything is modified.
inline void optimizer_step(std::vector<WeightMatrix>& weights, const std::vector<WeightMatrix>& grad,
                           AdamState& state, Real lr, OptimizerKind kind = OptimizerKind::adam) {
    if (grad.size() != weights.size()) throw ShapeError("gradient/weight layer mismatch");
    for (std::size_t l = 0; l < grad.size(); ++l) {
        if (grad[l].data.size() != weights[l].data.size()) throw ShapeError("gradient/weight shape mismatch");
        for (Real g : grad[l].data)
            if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient in layer " + std::to_string(l));
    }
    if (kind == OptimizerKind::sgd) {
        for (std::size_t l = 0; l < grad.size(); ++l)
            for (std::size_t i = 0; i < grad[l].data.size(); ++i) weights[l].data[i] -= lr * grad[l].data[i];
        return;
    }
    if (state.m.size() != weights.size()) {
        state.m.clear();
        state.v.clear();
        for (const auto& w : weights) {
            state.m.emplace_back(w.data.size(), 0);
            state.v.emplace_back(w.data.size(), 0);
        }
    }
    ++state.step;
    const Real c1 = 1 - std::pow(state.beta1, static_cast<Real>(state.step));
    const Real c2 = 1 - std::pow(state.beta2, static_cast<Real>(state.step));
    for (std::size_t l = 0; l < grad.size(); ++l) {
        auto& m = state.m[l];
        auto& v = state.v[l];
        for (std::size_t i = 0; i < grad[l].data.size(); ++i) {
            const Real g = grad[l].data[i];
            m[i] = state.beta1 * m[i] + (1 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1 - state.beta2) * g * g;
            weights[l].data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.epsilon);
        }
    }
}

/// Everything needed to resume training or to evaluate.
struct Checkpoint {
    static constexpr int kFormatVersion = 1;
    NetworkTopology network;
    Preprocessor preprocessor;
    TrainConfig config;
    AdamState optimizer;
    std::string batch_rng_state;
    std::string augment_rng_state;
    std::size_t epoch = 0;
    std::size_t fold = 0;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline std::string rng_state(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

inline Rng rng_from_state(const std::string& s) {
    Rng rng;
    std::istringstream is(s);
    is >> rng;
    return rng;
}

// -- per-example evaluation ------------------------------------------------------

struct ExampleOutcome {
    std::optional<ForwardResult> forward;  // empty when the inputs overflowed
    std::vector<Real> output_z;
    ClassLabel predicted = ClassLabel::legitimate;

    bool silent() const {
        for (Real z : output_z)
            if (z < kInf) return false;
        return true;
    }
};

/// Runs the network on one preprocessed example. An input that cannot be
/// represented in the transformed domain leaves every output silent.
inline ExampleOutcome run_example(const NetworkTopology& net, std::span<const SpikeTrain> channels) {
    ExampleOutcome o;
    try {
        o.forward = network_forward(channels, net);
        o.output_z = o.forward->output_z;
    } catch (const TransformOverflow&) {
        o.output_z.assign(net.output_size(), kInf);
    }
    o.predicted = predict(o.output_z);
    return o;
}

struct EvalSummary {
    MetricsReport metrics;
    std::size_t silent = 0;          // examples with an all-silent output
    std::size_t silent_bots = 0;     // bots predicted negative because of that
    std::size_t overflowed = 0;      // examples whose inputs overflowed
    Real nai = 0;
    std::vector<ClassLabel> predictions;
};

inline EvalSummary evaluate_examples(const NetworkTopology& net, const std::vector<std::vector<SpikeTrain>>& examples,
                                     std::span<const ClassLabel> labels) {
    EvalSummary s;
    std::vector<std::vector<std::size_t>> counts;
    for (std::size_t n = 0; n < examples.size(); ++n) {
        const ExampleOutcome o = run_example(net, examples[n]);
        s.predictions.push_back(o.predicted);
        if (o.silent()) {
            ++s.silent;
            if (labels[n] == ClassLabel::bot) ++s.silent_bots;
        }
        if (o.forward) counts.push_back(o.forward->spike_counts());
        else {
            ++s.overflowed;
            counts.emplace_back(neuron_count(net.layer_sizes), 0);
        }
    }
    s.metrics = metrics(s.predictions, labels);
    s.nai = nai(counts, neuron_count(net.layer_sizes));
    return s;
}

inline EvalSummary evaluate(const Checkpoint& ckpt, std::span<const UserRecord> records) {
    std::vector<std::vector<SpikeTrain>> examples;
    std::vector<ClassLabel> labels;
    for (const auto& r : records) {
        examples.push_back(ckpt.preprocessor.apply(r.delays));
        labels.push_back(r.label.value_or(ClassLabel::legitimate));
    }
    return evaluate_examples(ckpt.network, examples, labels);
}

// -- one training step -----------------------------------------------------------

struct BatchResult {
    Real loss = 0;
    Real cross_entropy = 0;  // mean over the batch
    Real penalty = 0;        // R*
    std::size_t correct = 0;
    std::size_t overflowed = 0;
    std::vector<WeightMatrix> gradient;
};

/// Loss and gradient of one batch: mean cross-entropy plus gamma times the
/// spike penalty averaged over the batch's misclassified examples.
inline BatchResult batch_gradient(const NetworkTopology& net, const std::vector<std::vector<SpikeTrain>>& examples,
                                  std::span<const ClassLabel> labels, Real gamma) {
    BatchResult br;
    const std::size_t N = examples.size();
    GradientBuffer ce_grad = GradientBuffer::zeros_like(net);
    GradientBuffer pen_grad = GradientBuffer::zeros_like(net);
    std::vector<Real> ces, penalties;
    std::vector<bool> correct;
    for (std::size_t n = 0; n < N; ++n) {
        const ExampleOutcome o = run_example(net, examples[n]);
        const bool ok = o.predicted == labels[n];
        correct.push_back(ok);
        if (ok) ++br.correct;
        if (!o.forward) {
            ++br.overflowed;
            ces.push_back(0);
            penalties.push_back(0);
            continue;
        }
        const auto ce = cross_entropy(o.output_z, labels[n]);
        ces.push_back(ce.loss);
        ce_grad += network_backward(net, *o.forward, ce.grad);
        auto pen = spike_penalty(net, *o.forward);
        penalties.push_back(pen.total);
        if (!ok && pen.total > 0) {
            for (std::size_t l = 0; l < pen.d_weights.size(); ++l)
                for (std::size_t i = 0; i < pen.d_weights[l].data.size(); ++i)
                    pen_grad.d_weights[l].data[i] += pen.d_weights[l].data[i];
        }
    }
    const std::size_t wrong = N - br.correct;
    br.penalty = dynamic_scale(penalties, correct);
    br.loss = total_loss(ces, br.penalty, gamma);
    Real ce_sum = 0;
    for (Real c : ces) ce_sum += c;
    br.cross_entropy = N ? ce_sum / static_cast<Real>(N) : 0;

    ce_grad.scale(N ? 1 / static_cast<Real>(N) : 0);
    if (wrong > 0) {
        pen_grad.scale(gamma / static_cast<Real>(wrong));
        ce_grad += pen_grad;
    }
    br.gradient = std::move(ce_grad.d_weights);
    return br;
}

// -- epoch loop ---------------------------------------------------------------

struct EpochLog {
    std::size_t fold = 0;
    std::size_t epoch = 0;
    Real gamma = 0;
    Real loss = 0;           // mean over the epoch's steps
    Real cross_entropy = 0;
    Real penalty = 0;
    Real batch_accuracy = 0; // on the (augmented) training batches
    Real train_accuracy = 0; // full training split, no augmentation
    Real nai = 0;            // full training split
    std::size_t skipped_steps = 0;
    std::size_t overflowed = 0;
    Real epoch_seconds = 0;
    Real epoch_seconds_normalized = 0;  // relative to this run's first epoch
};

using EpochCallback = std::function<void(const EpochLog&)>;

struct FoldResult {
    Checkpoint checkpoint;
    EvalSummary train_eval;
    std::optional<EvalSummary> eval;
    std::vector<EpochLog> curves;
};

/// Trains one model on records[train_idx] and evaluates it on records[eval_idx]
/// (skipped when eval_idx is empty). Binning and transform are fitted on the
/// training records only.
inline FoldResult train_fold(const TrainConfig& cfg, std::span<const UserRecord> records,
                             std::span<const std::size_t> train_idx, std::span<const std::size_t> eval_idx,
                             std::size_t fold = 0, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    std::vector<UserRecord> train_records;
    for (std::size_t i : train_idx) train_records.push_back(records[i]);

    FoldResult res;
    Checkpoint& ck = res.checkpoint;
    ck.config = cfg;
    ck.fold = fold;
    ck.preprocessor = Preprocessor::fit(train_records, cfg.preprocess);
    ck.network = init_weights(cfg.layer_sizes(), cfg.neuron_config(), derive_seed(cfg.seed, kSeedInit, fold));

    std::vector<std::vector<SpikeTrain>> examples;
    std::vector<ClassLabel> labels;
    for (const auto& r : train_records) {
        examples.push_back(ck.preprocessor.apply(r.delays));
        labels.push_back(r.label.value_or(ClassLabel::legitimate));
    }
    std::vector<std::size_t> local(train_records.size());
    for (std::size_t i = 0; i < local.size(); ++i) local[i] = i;

    Rng batch_rng(derive_seed(cfg.seed, kSeedBatches, fold));
    Rng aug_rng(derive_seed(cfg.seed, kSeedAugment, fold));
    BalancedSampler sampler(local, labels, cfg.batch_size, batch_rng);

    Real first_seconds = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochLog log;
        log.fold = fold;
        log.epoch = epoch;
        log.gamma = cfg.gamma_at(epoch);
        std::size_t seen = 0, correct = 0;
        for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
            const auto batch = sampler.next();
            std::vector<std::vector<SpikeTrain>> xs;
            std::vector<ClassLabel> ys;
            for (std::size_t i : batch) {
                xs.push_back(cfg.augment ? augment(examples[i], cfg.augmentation, aug_rng) : examples[i]);
                ys.push_back(labels[i]);
            }
            BatchResult br = batch_gradient(ck.network, xs, ys, log.gamma);
            log.loss += br.loss;
            log.cross_entropy += br.cross_entropy;
            log.penalty += br.penalty;
            log.overflowed += br.overflowed;
            seen += batch.size();
            correct += br.correct;
            try {
                optimizer_step(ck.network.weights, br.gradient, ck.optimizer, cfg.learning_rate, cfg.optimizer);
            } catch (const NonFiniteGradient&) {
                ++log.skipped_steps;
            }
        }
        const auto steps = static_cast<Real>(cfg.steps_per_epoch);
        log.loss /= steps;
        log.cross_entropy /= steps;
        log.penalty /= steps;
        log.batch_accuracy = static_cast<Real>(correct) / static_cast<Real>(seen);
        const EvalSummary full = evaluate_examples(ck.network, examples, labels);
        log.train_accuracy = full.metrics.accuracy;
        log.nai = full.nai;
        log.epoch_seconds = std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
        if (epoch == 1) first_seconds = log.epoch_seconds;
        log.epoch_seconds_normalized = first_seconds > 0 ? log.epoch_seconds / first_seconds : 0;
        ck.epoch = epoch;
        res.curves.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    ck.batch_rng_state = rng_state(batch_rng);
    ck.augment_rng_state = rng_state(aug_rng);

    res.train_eval = evaluate_examples(ck.network, examples, labels);
    if (!eval_idx.empty()) {
        std::vector<UserRecord> eval_records;
        for (std::size_t i : eval_idx) eval_records.push_back(records[i]);
        res.eval = evaluate(ck, eval_records);
    }
    return res;
}

struct MeanStd {
    Real mean = 0;
    Real std = 0;
};

inline MeanStd mean_std(std::span<const Real> v) {
    MeanStd r;
    if (v.empty()) return r;
    for (Real x : v) r.mean += x;
    r.mean /= static_cast<Real>(v.size());
    if (v.size() > 1) {
        for (Real x : v) r.std += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(r.std / static_cast<Real>(v.size() - 1));
    }
    return r;
}

struct CrossValidationResult {
    std::vector<FoldResult> folds;

    MeanStd summarize(Real MetricsReport::*field) const {
        std::vector<Real> v;
        for (const auto& f : folds)
            if (f.eval) v.push_back(f.eval->metrics.*field);
        return mean_std(v);
    }
};

/// Stratified k-fold cross-validation over the labeled records.
inline CrossValidationResult train(const TrainConfig& cfg, const Dataset& data, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    const auto labels = data.labels();
    const auto folds = stratified_kfold(labels, cfg.k_folds, derive_seed(cfg.seed, kSeedFolds));
    CrossValidationResult cv;
    for (std::size_t f = 0; f < folds.size(); ++f)
        cv.folds.push_back(train_fold(cfg, data.records, folds[f].train, folds[f].eval, f, on_epoch));
    return cv;
}

// -- ablations ---------------------------------------------------------------

enum class Scenario : std::uint8_t { baseline, no_augment, tau_ref_inf, no_binning, no_log_transform };

inline const char* scenario_name(Scenario s) {
    switch (s) {
    case Scenario::baseline: return "baseline";
    case Scenario::no_augment: return "no-augment";
    case Scenario::tau_ref_inf: return "tau-ref-inf";
    case Scenario::no_binning: return "no-binning";
    case Scenario::no_log_transform: return "no-log-transform";
    }
    return "?";
}

inline Scenario parse_scenario(const std::string& s) {
    for (Scenario sc : {Scenario::baseline, Scenario::no_augment, Scenario::tau_ref_inf, Scenario::no_binning,
                        Scenario::no_log_transform})
        if (s == scenario_name(sc)) return sc;
    throw std::invalid_argument("unknown scenario '" + s + "'");
}

/// The configuration with exactly one protocol change applied.
inline TrainConfig apply_scenario(TrainConfig cfg, Scenario s) {
    switch (s) {
    case Scenario::baseline: break;
    case Scenario::no_augment: cfg.augment = false; break;
    case Scenario::tau_ref_inf: cfg.tau_ref = kInf; break;
    case Scenario::no_binning: cfg.preprocess.bins = 1; break;
    case Scenario::no_log_transform: cfg.preprocess.strategy = TransformStrategy::identity; break;
    }
    return cfg;
}

inline CrossValidationResult run_ablation(const TrainConfig& cfg, const Dataset& data, Scenario s,
                                          const EpochCallback& on_epoch = {}) {
    return train(apply_scenario(cfg, s), data, on_epoch);
}

}  // namespace mimosnn
