#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <mimosnn/mimosnn.hpp>

using namespace mimosnn;

namespace {

Dataset parse(const std::string& text) {
    std::istringstream in(text);
    return parse_dataset(in);
}

}  // namespace

TEST(Filter, Bounds) {
    EXPECT_EQ(filter_delays(std::vector<Real>{0.05, 0.5, 3e4}), (SpikeTrain{0.5}));
    EXPECT_TRUE(filter_delays(std::vector<Real>{}).empty());
    EXPECT_TRUE(filter_delays(std::vector<Real>{0.1, 2e4}).empty());
    const SpikeTrain once = filter_delays(std::vector<Real>{0.01, 1, 5, 1e5});
    EXPECT_EQ(filter_delays(once), once);
}

TEST(Load, FixtureWithThreeRows) {
    const auto ds = parse(
        "user_id,tweet_ts,retweet_ts,label\n"
        "a,0,600,bot\n"
        "a,0,120,bot\n"
        "b,100,160,human\n");
    ASSERT_EQ(ds.records.size(), 2u);
    EXPECT_EQ(ds.records[0].user_id, "a");
    EXPECT_EQ(ds.records[0].delays, (SpikeTrain{2, 10}));
    EXPECT_EQ(ds.records[0].label, ClassLabel::bot);
    EXPECT_EQ(ds.records[1].delays, (SpikeTrain{1}));
    EXPECT_EQ(ds.records[1].label, ClassLabel::legitimate);
    EXPECT_EQ(ds.stats.rows, 3u);
}

TEST(Load, NegativeDelayCountedAndDropped) {
    const auto ds = parse(
        "user_id,tweet_ts,retweet_ts,label\n"
        "a,600,0,bot\n"
        "a,0,600,bot\n");
    EXPECT_EQ(ds.records[0].delays, (SpikeTrain{10}));
    EXPECT_EQ(ds.stats.negative_delay_rows, 1u);
    EXPECT_EQ(ds.stats.filtered_rows, 1u);
    EXPECT_DOUBLE_EQ(ds.stats.removed_fraction(), 0.5);
}

TEST(Load, UnlabeledRowsSkipped) {
    const auto ds = parse(
        "user_id,tweet_ts,retweet_ts,label\n"
        "a,0,600,\n"
        "b,0,600,human\n");
    ASSERT_EQ(ds.records.size(), 1u);
    EXPECT_EQ(ds.stats.unlabeled_rows, 1u);
}

TEST(Load, Errors) {
    EXPECT_THROW(parse(""), EmptyDataset);
    EXPECT_THROW(parse("user_id,tweet_ts,retweet_ts,label\n"), EmptyDataset);
    EXPECT_THROW(parse("id,a,b,c\nx,1,2,bot\n"), ParseError);
    EXPECT_THROW(parse("user_id,tweet_ts,retweet_ts,label\na,0,x,bot\n"), ParseError);
    EXPECT_THROW(parse("user_id,tweet_ts,retweet_ts,label\na,0,1\n"), ParseError);
    EXPECT_THROW(parse("user_id,tweet_ts,retweet_ts,label\na,0,1,robot\n"), ParseError);
    EXPECT_THROW(parse("user_id,tweet_ts,retweet_ts,label\na,0,600,bot\na,0,700,human\n"), ParseError);
    try {
        parse("user_id,tweet_ts,retweet_ts,label\na,0,600,bot\nb,0,zz,bot\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line_number, 3u);
    }
    EXPECT_THROW(load_dataset("/nonexistent/file.csv"), IoError);
}

TEST(Load, CsvRoundTrip) {
    const Dataset ds = make_synthetic_dataset(SyntheticSpec{.legitimate = 5, .bots = 6}, 3);
    std::stringstream ss;
    write_dataset_csv(ss, ds.records);
    const Dataset back = parse_dataset(ss);
    ASSERT_EQ(back.records.size(), ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        EXPECT_EQ(back.records[i].user_id, ds.records[i].user_id);
        EXPECT_EQ(back.records[i].label, ds.records[i].label);
        ASSERT_EQ(back.records[i].delays.size(), ds.records[i].delays.size());
        for (std::size_t j = 0; j < ds.records[i].delays.size(); ++j)
            EXPECT_NEAR(back.records[i].delays[j], ds.records[i].delays[j], 1e-6 * ds.records[i].delays[j]);
    }
}

TEST(Bins, UniformRanks) {
    std::vector<Real> v;
    for (int i = 1; i <= 100; ++i) v.push_back(i);
    const auto spec = compute_bins(v, 10);
    ASSERT_EQ(spec.bins(), 10u);
    EXPECT_EQ(spec.thresholds.front(), 0.0);
    EXPECT_EQ(spec.thresholds.back(), kDefaultTauMax);
    for (int j = 1; j < 10; ++j) EXPECT_EQ(spec.thresholds[static_cast<std::size_t>(j)], 10.0 * j);
}

TEST(Bins, CountsNearlyEqual) {
    // with half-open bins the lower-rank thresholds start each interior bin at
    // its own order statistic: interior bins hold n/C events, the first one
    // one fewer and the last one more
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t C = 2 + uniform_index(rng, 20);
        const std::size_t n = C * (1 + uniform_index(rng, 30)) + uniform_index(rng, C);
        std::vector<Real> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back(0.2 + 1000 * uniform01(rng));
        const auto spec = compute_bins(v, C);
        const auto binned = apply_binning(v, spec);
        std::size_t total = 0, lo = n, hi = 0;
        for (std::size_t c = 0; c < C; ++c) {
            total += binned[c].size();
            if (c > 0 && c + 1 < C) {
                lo = std::min(lo, binned[c].size());
                hi = std::max(hi, binned[c].size());
            }
        }
        EXPECT_EQ(total, n);
        if (C > 2) {
            EXPECT_LE(hi - lo, 1u);
        }
        const std::size_t base = n / C;
        EXPECT_TRUE(binned.front().size() + 1 == base || binned.front().size() == base);
        EXPECT_EQ(binned.back().size(), base + 1);
    }
}

TEST(Bins, SingleBinAndDegenerate) {
    const std::vector<Real> v{1, 2, 3};
    const auto one = compute_bins(v, 1);
    EXPECT_EQ(one.thresholds, (std::vector<Real>{0, kDefaultTauMax}));
    const std::vector<Real> same(20, 5.0);
    EXPECT_THROW(compute_bins(same, 4), DegenerateBins);
    try {
        compute_bins(same, 4);
    } catch (const DegenerateBins& e) {
        EXPECT_EQ(e.spec.thresholds, (std::vector<Real>{0, 5, kDefaultTauMax}));
    }
    EXPECT_THROW(compute_bins(v, 5), DegenerateBins);
    EXPECT_THROW(compute_bins(v, 0), std::invalid_argument);
}

TEST(Bins, DependOnlyOnTrainingRecords) {
    const Dataset ds = make_synthetic_dataset(SyntheticSpec{.legitimate = 20, .bots = 20}, 9);
    const std::vector<UserRecord> train(ds.records.begin(), ds.records.begin() + 30);
    const auto a = compute_bins(train, 10);
    auto modified = ds.records;
    for (std::size_t i = 30; i < modified.size(); ++i) modified[i].delays = {1.0, 2.0};
    const std::vector<UserRecord> train2(modified.begin(), modified.begin() + 30);
    EXPECT_EQ(compute_bins(train2, 10), a);
}

TEST(Binning, RoutesAndShifts) {
    const BinningSpec spec{{0, 10, 20}};
    const auto ch = apply_binning(std::vector<Real>{3, 12}, spec);
    EXPECT_EQ(ch[0], (SpikeTrain{3}));
    EXPECT_EQ(ch[1], (SpikeTrain{2}));
    const auto edge = apply_binning(std::vector<Real>{10}, spec);
    EXPECT_TRUE(edge[0].empty());
    EXPECT_EQ(edge[1], (SpikeTrain{0}));
    const auto none = apply_binning(std::vector<Real>{}, spec);
    EXPECT_EQ(none.size(), 2u);
    EXPECT_TRUE(none[0].empty() && none[1].empty());
}

TEST(Binning, PreservesCountAndOrder) {
    Rng rng(2);
    std::vector<Real> v;
    for (int i = 0; i < 300; ++i) v.push_back(0.2 + 5000 * uniform01(rng));
    std::sort(v.begin(), v.end());
    const auto spec = compute_bins(v, 7);
    const auto ch = apply_binning(v, spec);
    std::vector<Real> recovered;
    for (std::size_t c = 0; c < ch.size(); ++c)
        for (Real t : ch[c]) recovered.push_back(t + spec.thresholds[c]);
    ASSERT_EQ(recovered.size(), v.size());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(recovered[i], v[i], 1e-9 * v[i]);
}

TEST(LogTransform, KnownValues) {
    const BinningSpec bins{{0, 10, 100}};
    const auto g1 = make_transform(TransformStrategy::fixed_base, 10, bins);
    const auto g2 = make_transform(TransformStrategy::equal_range, 3, bins);
    EXPECT_EQ(transform_time(0, 0, g1, bins), 0.0);
    EXPECT_EQ(transform_time(0, 1, g2, bins), 0.0);
    EXPECT_NEAR(transform_time(99, 1, g1, bins), 2.0, 1e-15);
    EXPECT_EQ(transform_time(bins.width(0), 0, g2, bins), 3.0);
    EXPECT_EQ(transform_time(bins.width(1), 1, g2, bins), 3.0);
    EXPECT_NEAR(g2.bin_bases[0], std::pow(11.0, 1 / 3.0), 1e-12);
    const auto id = make_transform(TransformStrategy::identity, 0, bins);
    EXPECT_EQ(transform_time(42, 0, id, bins), 42.0);
    EXPECT_THROW(make_transform(TransformStrategy::fixed_base, 1, bins), std::invalid_argument);
    EXPECT_THROW(make_transform(TransformStrategy::equal_range, 0, bins), std::invalid_argument);
}

TEST(LogTransform, MonotoneAndBounded) {
    const BinningSpec bins{{0, 5, 50, 2e4}};
    const auto g1 = make_transform(TransformStrategy::fixed_base, 30, bins);
    const auto g2 = make_transform(TransformStrategy::equal_range, 2, bins);
    Rng rng(4);
    for (std::size_t c = 0; c < bins.bins(); ++c) {
        for (int i = 0; i < 200; ++i) {
            const Real a = bins.width(c) * uniform01(rng);
            const Real b = a + 1e-6 * (1 + a);
            EXPECT_LT(transform_time(a, c, g1, bins), transform_time(b, c, g1, bins));
            EXPECT_LT(transform_time(a, c, g2, bins), transform_time(b, c, g2, bins));
            EXPECT_GE(transform_time(a, c, g2, bins), 0);
            EXPECT_LE(transform_time(a, c, g2, bins), 2);
        }
    }
    const std::vector<SpikeTrain> ch{{1, 2}, {}, {3}};
    EXPECT_EQ(log_transform(ch, g1, bins).size(), 3u);
    EXPECT_THROW(log_transform(std::vector<SpikeTrain>(2), g1, bins), ShapeError);
}

TEST(Augment, Extremes) {
    const std::vector<SpikeTrain> ch{{0.1, 0.5}, {1.0}};
    Rng rng(1);
    EXPECT_EQ(augment(ch, AugmentationSpec{0, 0, 0.05}, rng), ch);
    const auto dropped = augment(ch, AugmentationSpec{1, 0, 0.05}, rng);
    for (const auto& c : dropped) EXPECT_TRUE(c.empty());
}

TEST(Augment, Deterministic) {
    const std::vector<SpikeTrain> ch{{0.01, 0.02, 0.5, 1.0}, {0.3}};
    Rng a(5), b(5);
    EXPECT_EQ(augment(ch, AugmentationSpec{}, a), augment(ch, AugmentationSpec{}, b));
}

TEST(Augment, NonNegativeSorted) {
    Rng rng(6);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<SpikeTrain> ch(3);
        for (auto& c : ch) {
            for (int i = 0; i < 8; ++i) c.push_back(0.1 * uniform01(rng));
            std::sort(c.begin(), c.end());
        }
        for (const auto& c : augment(ch, AugmentationSpec{0.1, 0.9, 0.05}, rng)) {
            EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
            for (Real t : c) EXPECT_GE(t, 0);
        }
    }
}

TEST(KFold, SmallBalanced) {
    std::vector<ClassLabel> y(10, ClassLabel::legitimate);
    y.insert(y.end(), 10, ClassLabel::bot);
    const auto folds = stratified_kfold(y, 5, 1);
    ASSERT_EQ(folds.size(), 5u);
    std::multiset<std::size_t> all;
    for (const auto& f : folds) {
        std::size_t pos = 0;
        for (std::size_t i : f.eval) pos += y[i] == ClassLabel::bot;
        EXPECT_EQ(f.eval.size(), 4u);
        EXPECT_EQ(pos, 2u);
        EXPECT_EQ(f.train.size() + f.eval.size(), y.size());
        for (std::size_t i : f.eval) {
            all.insert(i);
            EXPECT_EQ(std::count(f.train.begin(), f.train.end(), i), 0);
        }
    }
    EXPECT_EQ(all.size(), y.size());
    EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), y.size());
}

TEST(KFold, FoldSizesForOddCounts) {
    std::vector<ClassLabel> y(366, ClassLabel::legitimate);
    y.insert(y.end(), 389, ClassLabel::bot);
    const auto folds = stratified_kfold(y, 5, 42);
    for (const auto& f : folds) {
        std::size_t pos = 0;
        for (std::size_t i : f.eval) pos += y[i] == ClassLabel::bot;
        const std::size_t neg = f.eval.size() - pos;
        EXPECT_EQ(f.eval.size(), 151u);
        EXPECT_TRUE(neg == 73 || neg == 74) << neg;
        EXPECT_TRUE(pos == 77 || pos == 78) << pos;
    }
}

TEST(KFold, Errors) {
    std::vector<ClassLabel> y(10, ClassLabel::legitimate);
    y.insert(y.end(), 3, ClassLabel::bot);
    EXPECT_THROW(stratified_kfold(y, 5, 1), SplitError);
    EXPECT_THROW(stratified_kfold(y, 1, 1), SplitError);
}

TEST(KFold, SeedDeterminism) {
    std::vector<ClassLabel> y(30, ClassLabel::legitimate);
    y.insert(y.end(), 30, ClassLabel::bot);
    const auto a = stratified_kfold(y, 5, 7);
    const auto b = stratified_kfold(y, 5, 7);
    for (std::size_t f = 0; f < 5; ++f) EXPECT_EQ(a[f].eval, b[f].eval);
}

TEST(Subsample, KeepsClassShares) {
    std::vector<ClassLabel> y(366, ClassLabel::legitimate);
    y.insert(y.end(), 389, ClassLabel::bot);
    const auto s = stratified_subsample(y, 0.1, 3);
    std::size_t pos = 0;
    for (std::size_t i : s) pos += y[i] == ClassLabel::bot;
    EXPECT_EQ(s.size() - pos, 37u);
    EXPECT_EQ(pos, 39u);
}

TEST(Sampler, BalancedBatches) {
    std::vector<ClassLabel> y{ClassLabel::legitimate, ClassLabel::bot, ClassLabel::bot, ClassLabel::legitimate,
                              ClassLabel::bot};
    const std::vector<std::size_t> idx{0, 1, 2, 3, 4};
    Rng rng(1);
    BalancedSampler s(idx, y, 64, rng);
    for (int step = 0; step < 20; ++step) {
        const auto b = s.next();
        ASSERT_EQ(b.size(), 64u);
        std::size_t pos = 0;
        for (std::size_t i : b) pos += y[i] == ClassLabel::bot;
        EXPECT_EQ(pos, 32u);
    }
    Rng rng2(1);
    BalancedSampler two(idx, y, 2, rng2);
    const auto b = two.next();
    EXPECT_EQ(y[b[0]], ClassLabel::legitimate);
    EXPECT_EQ(y[b[1]], ClassLabel::bot);

    Rng r1(8), r2(8);
    BalancedSampler s1(idx, y, 8, r1), s2(idx, y, 8, r2);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(s1.next(), s2.next());

    const std::vector<std::size_t> only_neg{0, 3};
    Rng r3(1);
    EXPECT_THROW(BalancedSampler(only_neg, y, 4, r3), SplitError);
    EXPECT_THROW(BalancedSampler(idx, y, 3, r3), std::invalid_argument);
}

TEST(RngHelpers, PortableStreams) {
    Rng a(123);
    const Real u = uniform01(a);
    EXPECT_GE(u, 0);
    EXPECT_LT(u, 1);
    Rng b(123);
    EXPECT_EQ(uniform01(b), u);
    for (int i = 0; i < 1000; ++i) EXPECT_LT(uniform_index(a, 7), 7u);
    std::vector<int> v{1, 2, 3, 4, 5};
    shuffle(v, a);
    std::sort(v.begin(), v.end());
    EXPECT_EQ(v, (std::vector<int>{1, 2, 3, 4, 5}));
}

TEST(PreprocessorTest, FitAndApply) {
    const Dataset ds = make_synthetic_dataset(SyntheticSpec{.legitimate = 30, .bots = 30}, 2);
    PreprocessConfig cfg;
    const auto p = Preprocessor::fit(ds.records, cfg);
    EXPECT_EQ(p.binning.bins(), 10u);
    for (const auto& r : ds.records) {
        const auto ch = p.apply(r.delays);
        ASSERT_EQ(ch.size(), 10u);
        std::size_t n = 0;
        for (const auto& c : ch) {
            n += c.size();
            for (Real t : c) EXPECT_LT(t, std::log10(kDefaultTauMax + 1));
        }
        EXPECT_EQ(n, r.delays.size());
    }
}
