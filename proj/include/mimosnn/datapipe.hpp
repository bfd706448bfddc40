#pragma once

// Retweet-delay dataset handling: CSV ingestion, delay filtering, equal-count
// binning fitted on training data, per-bin log transforms, augmentation,
// stratified folds and class-balanced batch sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "core.hpp"
#include "objective.hpp"

namespace mimosnn {

inline constexpr Real kDefaultTauMin = 0.1;     // minutes
inline constexpr Real kDefaultTauMax = 2.0e4;   // minutes, about two weeks

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_number(line) {}
    std::size_t line_number;
};

class EmptyDataset : public Error {
public:
    using Error::Error;
};

class SplitError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

struct UserRecord {
    std::string user_id;
    SpikeTrain delays;  // minutes, ascending
    std::optional<ClassLabel> label;
};

struct LoadStats {
    std::size_t rows = 0;
    std::size_t unlabeled_rows = 0;
    std::size_t negative_delay_rows = 0;
    std::size_t filtered_rows = 0;  // labeled rows outside (tau_min, tau_max), negatives included

    Real removed_fraction() const {
        const std::size_t labeled = rows - unlabeled_rows;
        return labeled == 0 ? 0 : static_cast<Real>(filtered_rows) / static_cast<Real>(labeled);
    }
};

struct Dataset {
    std::vector<UserRecord> records;
    LoadStats stats;

    std::vector<ClassLabel> labels() const {
        std::vector<ClassLabel> y;
        y.reserve(records.size());
        for (const auto& r : records) y.push_back(r.label.value_or(ClassLabel::legitimate));
        return y;
    }
};

/// Keeps tau_min < t < tau_max.
inline SpikeTrain filter_delays(std::span<const Real> delays, Real tau_min = kDefaultTauMin,
                                Real tau_max = kDefaultTauMax) {
    SpikeTrain out;
    for (Real t : delays)
        if (t > tau_min && t < tau_max) out.push_back(t);
    return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline Real parse_real(std::string_view s, std::size_t line, const char* field) {
    std::string tmp(s);
    std::size_t used = 0;
    Real v = 0;
    try {
        v = std::stod(tmp, &used);
    } catch (const std::exception&) {
        throw ParseError(line, std::string("cannot parse ") + field + " '" + tmp + "'");
    }
    if (used != tmp.size() || !std::isfinite(v))
        throw ParseError(line, std::string("cannot parse ") + field + " '" + tmp + "'");
    return v;
}

}  // namespace detail

/// Parses `user_id,tweet_ts,retweet_ts,label` rows (epoch seconds, label in
/// {human, bot, ""}) into one record per labeled user with delays in minutes
/// filtered to (tau_min, tau_max). Records keep first-appearance order.
inline Dataset parse_dataset(std::istream& in, Real tau_min = kDefaultTauMin, Real tau_max = kDefaultTauMax) {
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::unordered_map<std::string, std::size_t> index;

    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv(line);
        if (!header_seen) {
            if (fields.size() != 4 || fields[0] != "user_id" || fields[1] != "tweet_ts" || fields[2] != "retweet_ts" ||
                fields[3] != "label")
                throw ParseError(line_no, "expected header user_id,tweet_ts,retweet_ts,label");
            header_seen = true;
            continue;
        }
        if (fields.size() != 4) throw ParseError(line_no, "expected 4 fields, got " + std::to_string(fields.size()));
        if (fields[0].empty()) throw ParseError(line_no, "empty user_id");
        ++ds.stats.rows;
        const Real tweet = detail::parse_real(fields[1], line_no, "tweet_ts");
        const Real retweet = detail::parse_real(fields[2], line_no, "retweet_ts");

        std::optional<ClassLabel> label;
        if (fields[3] == "human") label = ClassLabel::legitimate;
        else if (fields[3] == "bot") label = ClassLabel::bot;
        else if (!fields[3].empty()) throw ParseError(line_no, "unknown label '" + std::string(fields[3]) + "'");
        if (!label) {
            ++ds.stats.unlabeled_rows;
            continue;
        }

        std::string uid(fields[0]);
        auto it = index.find(uid);
        if (it == index.end()) {
            it = index.emplace(uid, ds.records.size()).first;
            ds.records.push_back({uid, {}, label});
        } else if (ds.records[it->second].label != label) {
            throw ParseError(line_no, "conflicting labels for user '" + uid + "'");
        }

        const Real delay = (retweet - tweet) / 60.0;
        if (delay < 0) ++ds.stats.negative_delay_rows;
        if (!(delay > tau_min && delay < tau_max)) {
            ++ds.stats.filtered_rows;
            continue;
        }
        ds.records[it->second].delays.push_back(delay);
    }
    if (!header_seen || ds.stats.rows == 0) throw EmptyDataset("dataset contains no rows");
    for (auto& r : ds.records) std::sort(r.delays.begin(), r.delays.end());
    return ds;
}

inline Dataset load_dataset(const std::string& path, Real tau_min = kDefaultTauMin, Real tau_max = kDefaultTauMax) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset '" + path + "'");
    return parse_dataset(in, tau_min, tau_max);
}

inline void write_dataset_csv(std::ostream& out, std::span<const UserRecord> records, Real origin = 1529280000.0) {
    out << "user_id,tweet_ts,retweet_ts,label\n";
    out.precision(17);
    for (const auto& r : records) {
        const char* lab = !r.label ? "" : (*r.label == ClassLabel::bot ? "bot" : "human");
        for (Real d : r.delays) out << r.user_id << ',' << origin << ',' << origin + d * 60.0 << ',' << lab << '\n';
    }
}

// -- binning ----------------------------------------------------------------

/// Thresholds T_0 = 0 < T_1 < ... < T_C = tau_max; bin c covers [T_{c-1}, T_c).
struct BinningSpec {
    std::vector<Real> thresholds;

    std::size_t bins() const { return thresholds.empty() ? 0 : thresholds.size() - 1; }
    Real width(std::size_t c) const { return thresholds[c + 1] - thresholds[c]; }

    friend bool operator==(const BinningSpec&, const BinningSpec&) = default;
};

/// Quantile thresholds collapsed onto each other; spec holds the deduplicated result.
class DegenerateBins : public Error {
public:
    DegenerateBins(const std::string& what, BinningSpec deduplicated) : Error(what), spec(std::move(deduplicated)) {}
    BinningSpec spec;
};

/// Equal-count thresholds from the pooled event multiset: T_j is the
/// lower-nearest-rank (j / C)-quantile, i.e. the ceil(j n / C)-th smallest event.
inline BinningSpec compute_bins(std::span<const Real> pooled_events, std::size_t num_bins,
                                Real tau_max = kDefaultTauMax) {
    if (num_bins == 0) throw std::invalid_argument("bin count must be positive");
    std::vector<Real> v(pooled_events.begin(), pooled_events.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();

    BinningSpec spec;
    spec.thresholds.push_back(0);
    bool collapsed = n < num_bins;
    for (std::size_t j = 1; j < num_bins && n > 0; ++j) {
        const std::size_t rank = (j * n + num_bins - 1) / num_bins;  // 1-based
        const Real t = v[rank - 1];
        if (t <= spec.thresholds.back() || t >= tau_max) {
            collapsed = true;
            continue;
        }
        spec.thresholds.push_back(t);
    }
    spec.thresholds.push_back(tau_max);
    if (collapsed || spec.bins() != num_bins)
        throw DegenerateBins("only " + std::to_string(spec.bins()) + " distinct bins out of " +
                                 std::to_string(num_bins) + " requested",
                             spec);
    return spec;
}

inline BinningSpec compute_bins(std::span<const UserRecord> training, std::size_t num_bins,
                                Real tau_max = kDefaultTauMax) {
    std::vector<Real> pooled;
    for (const auto& r : training) pooled.insert(pooled.end(), r.delays.begin(), r.delays.end());
    return compute_bins(pooled, num_bins, tau_max);
}

/// Routes each delay to its bin and shifts it by the bin's lower threshold.
/// Delays outside [T_0, T_C) are dropped.
inline std::vector<SpikeTrain> apply_binning(std::span<const Real> delays, const BinningSpec& spec) {
    std::vector<SpikeTrain> out(spec.bins());
    const auto& th = spec.thresholds;
    for (Real t : delays) {
        if (t < th.front() || t >= th.back()) continue;
        const std::size_t c = static_cast<std::size_t>(std::upper_bound(th.begin(), th.end(), t) - th.begin()) - 1;
        out[c].push_back(t - th[c]);
    }
    return out;
}

// -- log transforms ------------------------------------------------------------

enum class TransformStrategy : std::uint8_t {
    identity,     // no transform
    fixed_base,   // log_b(t + 1), one base for every bin
    equal_range,  // kappa * ln(t + 1) / ln(W_c + 1), upper edge of every bin maps to kappa
};

struct TransformSpec {
    TransformStrategy strategy = TransformStrategy::fixed_base;
    Real base = 10;
    Real kappa = 3;
    std::vector<Real> bin_bases;  // effective base per bin

    friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

inline TransformSpec make_transform(TransformStrategy strategy, Real base_or_kappa, const BinningSpec& bins) {
    TransformSpec t;
    t.strategy = strategy;
    if (strategy == TransformStrategy::fixed_base) {
        if (!(base_or_kappa > 1)) throw std::invalid_argument("log base must exceed 1");
        t.base = base_or_kappa;
        t.bin_bases.assign(bins.bins(), base_or_kappa);
    } else if (strategy == TransformStrategy::equal_range) {
        if (!(base_or_kappa > 0)) throw std::invalid_argument("kappa must be positive");
        t.kappa = base_or_kappa;
        for (std::size_t c = 0; c < bins.bins(); ++c)
            t.bin_bases.push_back(std::pow(bins.width(c) + 1, 1 / base_or_kappa));
    }
    return t;
}

inline Real transform_time(Real t_local, std::size_t bin, const TransformSpec& spec, const BinningSpec& bins) {
    switch (spec.strategy) {
    case TransformStrategy::identity: return t_local;
    case TransformStrategy::fixed_base: return std::log1p(t_local) / std::log(spec.base);
    case TransformStrategy::equal_range: return spec.kappa * std::log1p(t_local) / std::log1p(bins.width(bin));
    }
    return t_local;
}

inline std::vector<SpikeTrain> log_transform(std::span<const SpikeTrain> binned, const TransformSpec& spec,
                                             const BinningSpec& bins) {
    if (binned.size() != bins.bins()) throw ShapeError("channel count does not match binning");
    std::vector<SpikeTrain> out(binned.size());
    for (std::size_t c = 0; c < binned.size(); ++c) {
        out[c].reserve(binned[c].size());
        for (Real t : binned[c]) out[c].push_back(transform_time(t, c, spec, bins));
    }
    return out;
}

// -- randomness -------------------------------------------------------------

using Rng = std::mt19937_64;

/// Uniform in [0, 1) from the top 53 bits; identical on every platform.
inline Real uniform01(Rng& rng) { return static_cast<Real>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n) by rejection.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = 0;
    do x = rng();
    while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

// -- augmentation ------------------------------------------------------------

struct AugmentationSpec {
    Real drop_prob = 0.1;
    Real jitter_prob = 0.3;
    Real jitter_half_width = 0.05;

    friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

/// Drops each event with drop_prob, then shifts survivors with jitter_prob by
/// U(-w, w). Times are clamped at 0 and every channel is re-sorted.
inline std::vector<SpikeTrain> augment(std::span<const SpikeTrain> channels, const AugmentationSpec& spec, Rng& rng) {
    std::vector<SpikeTrain> out(channels.size());
    for (std::size_t c = 0; c < channels.size(); ++c) {
        for (Real t : channels[c]) {
            if (uniform01(rng) < spec.drop_prob) continue;
            if (uniform01(rng) < spec.jitter_prob) {
                t += (2 * uniform01(rng) - 1) * spec.jitter_half_width;
                t = std::max<Real>(t, 0);
            }
            out[c].push_back(t);
        }
        std::sort(out[c].begin(), out[c].end());
    }
    return out;
}

// -- splitting ---------------------------------------------------------------

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> eval;
};

/// Shuffles each class, lays the negatives and then the positives out in one
/// sequence and deals it round-robin over the folds, so fold sizes differ by at
/// most one and each class count per fold by at most one.
inline std::vector<Fold> stratified_kfold(std::span<const ClassLabel> labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw SplitError("need at least two folds");
    std::vector<std::size_t> neg, pos;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == ClassLabel::bot ? pos : neg).push_back(i);
    if (neg.size() < k || pos.size() < k)
        throw SplitError("each class needs at least " + std::to_string(k) + " members");
    Rng rng(seed);
    shuffle(neg, rng);
    shuffle(pos, rng);
    std::vector<std::size_t> order = neg;
    order.insert(order.end(), pos.begin(), pos.end());

    std::vector<std::size_t> fold_of(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) fold_of[order[i]] = i % k;
    std::vector<Fold> folds(k);
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t f = 0; f < k; ++f) (f == fold_of[i] ? folds[f].eval : folds[f].train).push_back(i);
    return folds;
}

/// Stratified random subset keeping round(fraction * n_class) of each class.
inline std::vector<std::size_t> stratified_subsample(std::span<const ClassLabel> labels, Real fraction,
                                                     std::uint64_t seed) {
    std::vector<std::size_t> neg, pos;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == ClassLabel::bot ? pos : neg).push_back(i);
    Rng rng(seed);
    shuffle(neg, rng);
    shuffle(pos, rng);
    const auto take = [&](std::size_t n) { return static_cast<std::size_t>(std::llround(fraction * static_cast<Real>(n))); };
    std::vector<std::size_t> out(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(std::min(take(neg.size()), neg.size())));
    out.insert(out.end(), pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(std::min(take(pos.size()), pos.size())));
    std::sort(out.begin(), out.end());
    return out;
}

/// Draws class-balanced batches with replacement: batch_size / 2 from each class.
class BalancedSampler {
public:
    BalancedSampler(std::span<const std::size_t> indices, std::span<const ClassLabel> labels, std::size_t batch_size,
                    Rng& rng)
        : rng_(&rng), half_(batch_size / 2) {
        if (batch_size < 2 || batch_size % 2 != 0) throw std::invalid_argument("batch size must be even and >= 2");
        for (std::size_t i : indices) (labels[i] == ClassLabel::bot ? pos_ : neg_).push_back(i);
        if (neg_.empty() || pos_.empty()) throw SplitError("balanced batches need both classes");
    }

    std::vector<std::size_t> next() {
        std::vector<std::size_t> batch;
        batch.reserve(2 * half_);
        for (std::size_t i = 0; i < half_; ++i) batch.push_back(neg_[uniform_index(*rng_, neg_.size())]);
        for (std::size_t i = 0; i < half_; ++i) batch.push_back(pos_[uniform_index(*rng_, pos_.size())]);
        return batch;
    }

private:
    Rng* rng_;
    std::size_t half_;
    std::vector<std::size_t> neg_, pos_;
};

// -- full preprocessing --------------------------------------------------------

struct PreprocessConfig {
    std::size_t bins = 10;
    TransformStrategy strategy = TransformStrategy::fixed_base;
    Real base_or_kappa = 10;
    Real tau_max = kDefaultTauMax;

    friend bool operator==(const PreprocessConfig&, const PreprocessConfig&) = default;
};

/// Fitted binning and transform; immutable once fitted.
struct Preprocessor {
    BinningSpec binning;
    TransformSpec transform;

    static Preprocessor fit(std::span<const UserRecord> training, const PreprocessConfig& cfg) {
        Preprocessor p;
        p.binning = compute_bins(training, cfg.bins, cfg.tau_max);
        p.transform = make_transform(cfg.strategy, cfg.base_or_kappa, p.binning);
        return p;
    }

    std::vector<SpikeTrain> apply(std::span<const Real> delays) const {
        return log_transform(apply_binning(delays, binning), transform, binning);
    }

    friend bool operator==(const Preprocessor&, const Preprocessor&) = default;
};

}  // namespace mimosnn
