#pragma once

// Synthetic two-class retweet-delay task, used when the labeled corpus is not
// available. Legitimate users retweet with broad log-normal delays around a
// few hours; bots mix a burst component of fast retweets (minutes) with a slow
// tail. Per-user parameters are drawn, so the classes overlap.

#include <algorithm>
#include <cmath>
#include <string>

#include "datapipe.hpp"
#include "train.hpp"

namespace mimosnn {

struct SyntheticSpec {
    std::size_t legitimate = 366;
    std::size_t bots = 389;
    std::size_t min_events = 8;
    std::size_t max_events = 40;
    Real legit_log_center = std::log(180.0);  // minutes
    Real legit_center_spread = 0.8;
    Real legit_log_sigma = 1.6;
    Real bot_fast_log_center = std::log(3.0);
    Real bot_fast_log_sigma = 0.9;
    Real bot_slow_log_center = std::log(900.0);
    Real bot_slow_log_sigma = 1.4;
    Real bot_fast_min = 0.35;  // per-user fraction of fast retweets ~ U(min, max)
    Real bot_fast_max = 0.85;
    Real tau_min = kDefaultTauMin;
    Real tau_max = kDefaultTauMax;
};

inline Dataset make_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    const auto draw_delay = [&](Real center, Real sigma) {
        while (true) {
            const Real t = std::exp(center + sigma * standard_normal(rng));
            if (t > spec.tau_min && t < spec.tau_max) return t;
        }
    };
    const auto count = [&] { return spec.min_events + uniform_index(rng, spec.max_events - spec.min_events + 1); };

    const std::size_t total = spec.legitimate + spec.bots;
    for (std::size_t u = 0; u < total; ++u) {
        // interleave the classes so any prefix of the records is roughly balanced
        const bool bot = u % 2 == 1 ? (u / 2 < spec.bots) : (u / 2 >= spec.legitimate);
        UserRecord r;
        r.user_id = "user" + std::to_string(u);
        r.label = bot ? ClassLabel::bot : ClassLabel::legitimate;
        const std::size_t n = count();
        if (bot) {
            const Real fast = spec.bot_fast_min + (spec.bot_fast_max - spec.bot_fast_min) * uniform01(rng);
            for (std::size_t i = 0; i < n; ++i)
                r.delays.push_back(uniform01(rng) < fast ? draw_delay(spec.bot_fast_log_center, spec.bot_fast_log_sigma)
                                                          : draw_delay(spec.bot_slow_log_center, spec.bot_slow_log_sigma));
        } else {
            const Real center = spec.legit_log_center + spec.legit_center_spread * standard_normal(rng);
            for (std::size_t i = 0; i < n; ++i) r.delays.push_back(draw_delay(center, spec.legit_log_sigma));
        }
        std::sort(r.delays.begin(), r.delays.end());
        ds.records.push_back(std::move(r));
        ds.stats.rows += n;
    }
    std::size_t legit = 0, bots = 0;
    for (const auto& r : ds.records) (*r.label == ClassLabel::bot ? bots : legit)++;
    if (legit != spec.legitimate || bots != spec.bots) throw Error("synthetic class counts off");
    return ds;
}

}  // namespace mimosnn
