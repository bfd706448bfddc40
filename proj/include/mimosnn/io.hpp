#pragma once

// JSON persistence: checkpoints, preprocessed caches, training configs,
// metrics and experiment-log records. Doubles are written with the shortest
// representation that round-trips exactly; infinities as the strings "inf" /
// "-inf".

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "datapipe.hpp"
#include "train.hpp"

namespace mimosnn {

using Json = nlohmann::json;

inline Json real_to_json(Real v) {
    if (v == kInf) return "inf";
    if (v == -kInf) return "-inf";
    if (std::isnan(v)) return "nan";
    return v;
}

inline Real real_from_json(const Json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return kInf;
        if (s == "-inf") return -kInf;
        if (s == "nan") return std::numeric_limits<Real>::quiet_NaN();
        throw IoError("bad number '" + s + "'");
    }
    return j.get<Real>();
}

inline Json reals_to_json(std::span<const Real> v) {
    Json a = Json::array();
    for (Real x : v) a.push_back(real_to_json(x));
    return a;
}

inline std::vector<Real> reals_from_json(const Json& j) {
    std::vector<Real> v;
    for (const auto& x : j) v.push_back(real_from_json(x));
    return v;
}

inline const char* strategy_name(TransformStrategy s) {
    switch (s) {
    case TransformStrategy::identity: return "identity";
    case TransformStrategy::fixed_base: return "fixed_base";
    case TransformStrategy::equal_range: return "equal_range";
    }
    return "?";
}

inline TransformStrategy parse_strategy(const std::string& s) {
    if (s == "identity") return TransformStrategy::identity;
    if (s == "fixed_base") return TransformStrategy::fixed_base;
    if (s == "equal_range") return TransformStrategy::equal_range;
    throw std::invalid_argument("unknown transform strategy '" + s + "'");
}

// -- building blocks --------------------------------------------------------------

inline Json to_json(const NeuronConfig& c) {
    return {{"tau_syn", real_to_json(c.tau_syn())}, {"tau_ref", real_to_json(c.tau_ref())}, {"v_thr", real_to_json(c.v_thr())}};
}

inline NeuronConfig neuron_config_from_json(const Json& j) {
    return {real_from_json(j.at("tau_syn")), real_from_json(j.at("tau_ref")), real_from_json(j.at("v_thr"))};
}

inline Json to_json(const NetworkTopology& net) {
    Json w = Json::array();
    for (const auto& m : net.weights) w.push_back({{"rows", m.rows}, {"cols", m.cols}, {"data", reals_to_json(m.data)}});
    return {{"layer_sizes", net.layer_sizes}, {"config", to_json(net.config)}, {"weights", w}};
}

inline NetworkTopology network_from_json(const Json& j) {
    NetworkTopology net(j.at("layer_sizes").get<std::vector<std::size_t>>(), neuron_config_from_json(j.at("config")));
    const auto& w = j.at("weights");
    if (w.size() != net.weights.size()) throw IoError("weight layer count mismatch");
    for (std::size_t l = 0; l < w.size(); ++l) {
        auto data = reals_from_json(w[l].at("data"));
        if (w[l].at("rows").get<std::size_t>() != net.weights[l].rows ||
            w[l].at("cols").get<std::size_t>() != net.weights[l].cols || data.size() != net.weights[l].data.size())
            throw IoError("weight shape mismatch in layer " + std::to_string(l));
        net.weights[l].data = std::move(data);
    }
    return net;
}

inline Json to_json(const Preprocessor& p) {
    return {{"thresholds", reals_to_json(p.binning.thresholds)},
            {"strategy", strategy_name(p.transform.strategy)},
            {"base", real_to_json(p.transform.base)},
            {"kappa", real_to_json(p.transform.kappa)},
            {"bin_bases", reals_to_json(p.transform.bin_bases)}};
}

inline Preprocessor preprocessor_from_json(const Json& j) {
    Preprocessor p;
    p.binning.thresholds = reals_from_json(j.at("thresholds"));
    p.transform.strategy = parse_strategy(j.at("strategy").get<std::string>());
    p.transform.base = real_from_json(j.at("base"));
    p.transform.kappa = real_from_json(j.at("kappa"));
    p.transform.bin_bases = reals_from_json(j.at("bin_bases"));
    return p;
}

inline Json to_json(const TrainConfig& c) {
    return {{"hidden_layers", c.hidden_layers},
            {"num_outputs", c.num_outputs},
            {"learning_rate", real_to_json(c.learning_rate)},
            {"epochs", c.epochs},
            {"steps_per_epoch", c.steps_per_epoch},
            {"batch_size", c.batch_size},
            {"gamma_warmup", real_to_json(c.gamma_warmup)},
            {"warmup_epochs", c.warmup_epochs},
            {"gamma", real_to_json(c.gamma)},
            {"tau_syn", real_to_json(c.tau_syn)},
            {"tau_ref", real_to_json(c.tau_ref)},
            {"v_thr", real_to_json(c.v_thr)},
            {"tau_min", real_to_json(c.tau_min)},
            {"tau_max", real_to_json(c.preprocess.tau_max)},
            {"bins", c.preprocess.bins},
            {"transform", strategy_name(c.preprocess.strategy)},
            {"base_or_kappa", real_to_json(c.preprocess.base_or_kappa)},
            {"augment", c.augment},
            {"drop_prob", real_to_json(c.augmentation.drop_prob)},
            {"jitter_prob", real_to_json(c.augmentation.jitter_prob)},
            {"jitter_half_width", real_to_json(c.augmentation.jitter_half_width)},
            {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
            {"seed", c.seed},
            {"k_folds", c.k_folds}};
}

/// Reads the keys present in j over the values already in cfg, so a config
/// file may list only what it changes.
inline void update_from_json(TrainConfig& c, const Json& j) {
    for (const auto& [key, val] : j.items()) {
        if (key == "hidden_layers") c.hidden_layers = val.get<std::vector<std::size_t>>();
        else if (key == "num_outputs") c.num_outputs = val.get<std::size_t>();
        else if (key == "learning_rate") c.learning_rate = real_from_json(val);
        else if (key == "epochs") c.epochs = val.get<std::size_t>();
        else if (key == "steps_per_epoch") c.steps_per_epoch = val.get<std::size_t>();
        else if (key == "batch_size") c.batch_size = val.get<std::size_t>();
        else if (key == "gamma_warmup") c.gamma_warmup = real_from_json(val);
        else if (key == "warmup_epochs") c.warmup_epochs = val.get<std::size_t>();
        else if (key == "gamma") c.gamma = real_from_json(val);
        else if (key == "tau_syn") c.tau_syn = real_from_json(val);
        else if (key == "tau_ref") c.tau_ref = real_from_json(val);
        else if (key == "v_thr") c.v_thr = real_from_json(val);
        else if (key == "tau_min") c.tau_min = real_from_json(val);
        else if (key == "tau_max") c.preprocess.tau_max = real_from_json(val);
        else if (key == "bins") c.preprocess.bins = val.get<std::size_t>();
        else if (key == "transform") c.preprocess.strategy = parse_strategy(val.get<std::string>());
        else if (key == "base_or_kappa") c.preprocess.base_or_kappa = real_from_json(val);
        else if (key == "augment") c.augment = val.get<bool>();
        else if (key == "drop_prob") c.augmentation.drop_prob = real_from_json(val);
        else if (key == "jitter_prob") c.augmentation.jitter_prob = real_from_json(val);
        else if (key == "jitter_half_width") c.augmentation.jitter_half_width = real_from_json(val);
        else if (key == "optimizer") {
            const auto s = val.get<std::string>();
            if (s != "adam" && s != "sgd") throw std::invalid_argument("optimizer must be adam or sgd");
            c.optimizer = s == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
        } else if (key == "seed") c.seed = val.get<std::uint64_t>();
        else if (key == "k_folds") c.k_folds = val.get<std::size_t>();
        else throw std::invalid_argument("unknown config key '" + key + "'");
    }
}

inline TrainConfig train_config_from_json(const Json& j) {
    TrainConfig c;
    update_from_json(c, j);
    return c;
}

inline Json to_json(const AdamState& s) {
    Json m = Json::array(), v = Json::array();
    for (const auto& x : s.m) m.push_back(reals_to_json(x));
    for (const auto& x : s.v) v.push_back(reals_to_json(x));
    return {{"step", s.step}, {"beta1", real_to_json(s.beta1)}, {"beta2", real_to_json(s.beta2)},
            {"epsilon", real_to_json(s.epsilon)}, {"m", m}, {"v", v}};
}

inline AdamState adam_from_json(const Json& j) {
    AdamState s;
    s.step = j.at("step").get<std::uint64_t>();
    s.beta1 = real_from_json(j.at("beta1"));
    s.beta2 = real_from_json(j.at("beta2"));
    s.epsilon = real_from_json(j.at("epsilon"));
    for (const auto& x : j.at("m")) s.m.push_back(reals_from_json(x));
    for (const auto& x : j.at("v")) s.v.push_back(reals_from_json(x));
    return s;
}

inline Json to_json(const MetricsReport& m) {
    return {{"accuracy", real_to_json(m.accuracy)}, {"recall", real_to_json(m.recall)},
            {"precision", real_to_json(m.precision)}, {"f1", real_to_json(m.f1)},
            {"mcc", real_to_json(m.mcc)}, {"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}};
}

inline Json to_json(const EpochLog& e) {
    return {{"fold", e.fold},
            {"epoch", e.epoch},
            {"gamma", real_to_json(e.gamma)},
            {"loss", real_to_json(e.loss)},
            {"ce", real_to_json(e.cross_entropy)},
            {"penalty", real_to_json(e.penalty)},
            {"batch_acc", real_to_json(e.batch_accuracy)},
            {"train_acc", real_to_json(e.train_accuracy)},
            {"nai", real_to_json(e.nai)},
            {"skipped_steps", e.skipped_steps},
            {"overflowed", e.overflowed},
            {"epoch_seconds", real_to_json(e.epoch_seconds)},
            {"epoch_seconds_norm", real_to_json(e.epoch_seconds_normalized)}};
}

/// Keys of an epoch record that depend on wall-clock time.
inline bool is_timing_key(const std::string& key) { return key == "epoch_seconds" || key == "epoch_seconds_norm"; }

// -- checkpoints ----------------------------------------------------------------

inline Json to_json(const Checkpoint& c) {
    return {{"format", "mimosnn-checkpoint"},
            {"version", Checkpoint::kFormatVersion},
            {"network", to_json(c.network)},
            {"preprocessor", to_json(c.preprocessor)},
            {"config", to_json(c.config)},
            {"optimizer", to_json(c.optimizer)},
            {"batch_rng", c.batch_rng_state},
            {"augment_rng", c.augment_rng_state},
            {"epoch", c.epoch},
            {"fold", c.fold}};
}

inline Checkpoint checkpoint_from_json(const Json& j) {
    if (j.value("format", "") != "mimosnn-checkpoint") throw IoError("not a checkpoint");
    if (j.at("version").get<int>() != Checkpoint::kFormatVersion)
        throw IoError("unsupported checkpoint version " + j.at("version").dump());
    Checkpoint c;
    c.network = network_from_json(j.at("network"));
    c.preprocessor = preprocessor_from_json(j.at("preprocessor"));
    c.config = train_config_from_json(j.at("config"));
    c.optimizer = adam_from_json(j.at("optimizer"));
    c.batch_rng_state = j.at("batch_rng").get<std::string>();
    c.augment_rng_state = j.at("augment_rng").get<std::string>();
    c.epoch = j.at("epoch").get<std::size_t>();
    c.fold = j.at("fold").get<std::size_t>();
    return c;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << content;
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline Json parse_json(const std::string& text, const std::string& what) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw IoError(what + ": " + e.what());
    }
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) { write_file(path, to_json(c).dump(1) + "\n"); }

inline Checkpoint load_checkpoint(const std::string& path) {
    return checkpoint_from_json(parse_json(read_file(path), path));
}

// -- preprocessed cache ----------------------------------------------------------

struct PreprocessedCache {
    static constexpr int kFormatVersion = 1;
    Preprocessor preprocessor;
    std::vector<std::string> user_ids;
    std::vector<ClassLabel> labels;
    std::vector<std::vector<SpikeTrain>> channels;  // per record, per bin
};

inline Json to_json(const PreprocessedCache& c) {
    Json recs = Json::array();
    for (std::size_t i = 0; i < c.channels.size(); ++i) {
        Json ch = Json::array();
        for (const auto& tr : c.channels[i]) ch.push_back(reals_to_json(tr));
        recs.push_back({{"user_id", c.user_ids[i]}, {"label", c.labels[i] == ClassLabel::bot ? "bot" : "human"}, {"channels", ch}});
    }
    return {{"format", "mimosnn-cache"}, {"version", PreprocessedCache::kFormatVersion},
            {"preprocessor", to_json(c.preprocessor)}, {"records", recs}};
}

inline PreprocessedCache cache_from_json(const Json& j) {
    if (j.value("format", "") != "mimosnn-cache") throw IoError("not a preprocessed cache");
    if (j.at("version").get<int>() != PreprocessedCache::kFormatVersion) throw IoError("unsupported cache version");
    PreprocessedCache c;
    c.preprocessor = preprocessor_from_json(j.at("preprocessor"));
    for (const auto& r : j.at("records")) {
        c.user_ids.push_back(r.at("user_id").get<std::string>());
        c.labels.push_back(r.at("label").get<std::string>() == "bot" ? ClassLabel::bot : ClassLabel::legitimate);
        std::vector<SpikeTrain> ch;
        for (const auto& tr : r.at("channels")) ch.push_back(reals_from_json(tr));
        c.channels.push_back(std::move(ch));
    }
    return c;
}

inline PreprocessedCache build_cache(const Preprocessor& p, std::span<const UserRecord> records) {
    PreprocessedCache c;
    c.preprocessor = p;
    for (const auto& r : records) {
        c.user_ids.push_back(r.user_id);
        c.labels.push_back(r.label.value_or(ClassLabel::legitimate));
        c.channels.push_back(p.apply(r.delays));
    }
    return c;
}

inline void save_cache(const PreprocessedCache& c, const std::string& path) { write_file(path, to_json(c).dump() + "\n"); }

inline PreprocessedCache load_cache(const std::string& path) { return cache_from_json(parse_json(read_file(path), path)); }

}  // namespace mimosnn
