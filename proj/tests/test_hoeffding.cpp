#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "edgecast/error.hpp"
#include "edgecast/hoeffding.hpp"
#include "edgecast/metrics.hpp"
#include "edgecast/rng.hpp"
#include "support.hpp"

using namespace edgecast;
using edgecast::testing::random_dataset;
using edgecast::testing::step_target;

namespace {

HoeffdingParams mean_leaves() {
    HoeffdingParams p;
    p.leaf_mode = LeafMode::TargetMean;
    return p;
}

// Direct evaluation of Var(parent) - (nl/n)Var(left) - (nr/n)Var(right) from raw targets.
double brute_merit(const std::vector<double>& left, const std::vector<double>& right) {
    auto var = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) {
            m += x;
        }
        m /= static_cast<double>(v.size());
        double s = 0.0;
        for (double x : v) {
            s += (x - m) * (x - m);
        }
        return s / static_cast<double>(v.size());
    };
    std::vector<double> all = left;
    all.insert(all.end(), right.begin(), right.end());
    const double n = static_cast<double>(all.size());
    return var(all) - static_cast<double>(left.size()) / n * var(left) -
           static_cast<double>(right.size()) / n * var(right);
}

}  // namespace

TEST(HoeffdingBound, SpotValue) {
    EXPECT_NEAR(hoeffding_bound(1.0, 1e-7, 200), 0.20074, 1e-5);
}

TEST(HoeffdingBound, QuadruplingNHalvesEpsilon) {
    for (double n : {1.0, 7.0, 200.0, 12345.0}) {
        EXPECT_NEAR(hoeffding_bound(1.0, 1e-3, 4 * n), 0.5 * hoeffding_bound(1.0, 1e-3, n), 1e-15);
        EXPECT_LT(hoeffding_bound(2.0, 0.01, n + 1), hoeffding_bound(2.0, 0.01, n));
    }
}

TEST(HoeffdingBound, DeltaOneGivesZeroAndBadDomainThrows) {
    EXPECT_EQ(hoeffding_bound(1.0, 1.0, 10), 0.0);
    EXPECT_THROW(hoeffding_bound(0.0, 0.1, 10), ValidationError);
    EXPECT_THROW(hoeffding_bound(1.0, 0.0, 10), ValidationError);
    EXPECT_THROW(hoeffding_bound(1.0, 1.5, 10), ValidationError);
    EXPECT_THROW(hoeffding_bound(1.0, 0.1, 0.5), ValidationError);
}

TEST(VarianceStats, MatchesTwoPassAndMerges) {
    Rng rng(1);
    std::vector<double> v(1000);
    for (auto& x : v) {
        x = 50.0 + 10.0 * uniform01(rng);
    }
    VarianceStats a, b, all;
    for (std::size_t i = 0; i < v.size(); ++i) {
        (i < 300 ? a : b).add(v[i]);
        all.add(v[i]);
    }
    double mean = 0.0;
    for (double x : v) {
        mean += x;
    }
    mean /= 1000.0;
    double var = 0.0;
    for (double x : v) {
        var += (x - mean) * (x - mean);
    }
    var /= 1000.0;
    EXPECT_NEAR(all.mean(), mean, 1e-12);
    EXPECT_NEAR(all.variance(), var, 1e-9);
    a.merge(b);
    EXPECT_NEAR(a.mean(), all.mean(), 1e-12);
    EXPECT_NEAR(a.variance(), all.variance(), 1e-9);
    const auto half = all.scaled(0.5);
    EXPECT_DOUBLE_EQ(half.weight(), 500.0);
    EXPECT_DOUBLE_EQ(half.variance(), all.variance());
}

TEST(BestSplit, PerfectSplitMeritIsParentVariance) {
    LeafStats s;
    s.features = {0};
    s.observers.emplace_back(64);
    const double xs[] = {0.1, 0.2, 0.8, 0.9};
    const double ys[] = {0, 0, 10, 10};
    for (int i = 0; i < 4; ++i) {
        const double x[] = {xs[i]};
        s.add(x, ys[i], 1.0);
    }
    const auto c = best_split(s);
    ASSERT_TRUE(c);
    EXPECT_EQ(c->feature, 0u);
    EXPECT_NEAR(c->merit, 25.0, 1e-12);
    EXPECT_DOUBLE_EQ(c->threshold, 0.5);
}

TEST(BestSplit, ConstantTargetsHaveZeroMerit) {
    LeafStats s;
    s.features = {0, 1};
    s.observers.assign(2, SplitObserver(64));
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double x[] = {uniform01(rng), uniform01(rng)};
        s.add(x, 7.0, 1.0);
    }
    for (const auto& c : ranked_splits(s)) {
        EXPECT_EQ(c.merit, 0.0);
    }
}

TEST(BestSplit, TieGoesToLowestFeature) {
    LeafStats s;
    s.features = {0, 1, 2};
    s.observers.assign(3, SplitObserver(64));
    for (int i = 0; i < 10; ++i) {
        const double v = i < 5 ? 0.0 : 1.0;
        const double x[] = {0.5, v, v};  // features 1 and 2 identical, feature 0 constant
        s.add(x, v * 4.0, 1.0);
    }
    const auto c = best_split(s);
    ASSERT_TRUE(c);
    EXPECT_EQ(c->feature, 1u);
}

TEST(BestSplit, NeedsTwoInstances) {
    LeafStats s;
    s.features = {0};
    s.observers.emplace_back(64);
    EXPECT_FALSE(best_split(s));
    const double x[] = {1.0};
    s.add(x, 1.0, 1.0);
    EXPECT_FALSE(best_split(s));
}

// Below capacity every distinct value has its own interval, so the observer must agree
// with an exhaustive scan over all midpoints.
TEST(BestSplit, MatchesExhaustiveScanBelowCapacity) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        SplitObserver obs(64);
        std::vector<std::pair<double, double>> pts;
        const int n = 5 + static_cast<int>(rng() % 50);
        for (int i = 0; i < n; ++i) {
            const double x = std::floor(uniform01(rng) * 40.0) / 4.0;
            const double y = x * x * (uniform01(rng) < 0.3 ? -1.0 : 1.0) + uniform01(rng);
            pts.emplace_back(x, y);
            obs.add(x, y);
        }
        std::vector<double> xs;
        for (auto& p : pts) {
            xs.push_back(p.first);
        }
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        if (xs.size() < 2) {
            continue;
        }
        double best = -1.0;
        double best_t = 0.0;
        for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
            const double t = 0.5 * (xs[i] + xs[i + 1]);
            std::vector<double> l, r;
            for (auto& p : pts) {
                (p.first <= t ? l : r).push_back(p.second);
            }
            const double m = brute_merit(l, r);
            if (m > best + 1e-9) {
                best = m;
                best_t = t;
            }
        }
        const auto c = obs.best_split(0);
        ASSERT_TRUE(c);
        EXPECT_NEAR(c->merit, best, 1e-9 * std::max(1.0, best)) << "seed " << seed;
        EXPECT_DOUBLE_EQ(c->threshold, best_t) << "seed " << seed;
    }
}

TEST(SplitObserver, RespectsCapacityAndConservesTotals) {
    Rng rng(8);
    SplitObserver obs(64);
    VarianceStats ref;
    for (int i = 0; i < 20000; ++i) {
        const double x = uniform01(rng);
        const double y = 3.0 * x + uniform01(rng);
        obs.add(x, y);
        ref.add(y);
        ASSERT_LE(obs.bins().size(), 64u);
    }
    const auto t = obs.total();
    EXPECT_DOUBLE_EQ(t.weight(), ref.weight());
    EXPECT_NEAR(t.mean(), ref.mean(), 1e-9);
    EXPECT_NEAR(t.variance(), ref.variance(), 1e-9);
    for (std::size_t i = 1; i < obs.bins().size(); ++i) {
        EXPECT_LT(obs.bins()[i - 1].hi, obs.bins()[i].lo);
    }
}

TEST(HoeffdingTree, EmptyTreePredictsZero) {
    for (auto mode : {LeafMode::TargetMean, LeafMode::Perceptron, LeafMode::Adaptive}) {
        HoeffdingParams p;
        p.leaf_mode = mode;
        HoeffdingTree t(3, p);
        const double x[] = {1, 2, 3};
        EXPECT_EQ(t.predict(x), 0.0);
    }
}

TEST(HoeffdingTree, DimensionMismatchThrows) {
    HoeffdingTree t(3);
    const double x[] = {1, 2};
    EXPECT_THROW(t.predict(x), ValidationError);
    EXPECT_THROW(t.learn(x, 1.0), ValidationError);
    const double bad[] = {1, NAN, 3};
    EXPECT_THROW(t.learn(bad, 1.0), ValidationError);
}

TEST(HoeffdingTree, ConstantTargetNeverSplits) {
    HoeffdingTree t(4, mean_leaves());
    const auto d = random_dataset(1, 5000, 4, [](const std::vector<double>&) { return 42.0; });
    for (const auto& inst : d.instances) {
        t.learn(inst);
    }
    EXPECT_EQ(t.node_count(), 1u);
    EXPECT_NEAR(t.predict(d.instances[0].features), 42.0, 1e-9);
}

TEST(HoeffdingTree, StaysALeafBeforeGracePeriod) {
    HoeffdingTree t(2, mean_leaves());
    const auto d = random_dataset(2, 199, 2, step_target);
    for (const auto& inst : d.instances) {
        t.learn(inst);
    }
    EXPECT_EQ(t.node_count(), 1u);
    t.learn(random_dataset(3, 1, 2, step_target).instances[0]);
    EXPECT_EQ(t.node_count(), 3u);
}

TEST(HoeffdingTree, RecoversStepSplit) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        HoeffdingTree t(3, mean_leaves(), seed);
        for (const auto& inst : random_dataset(seed, 10000, 3, step_target).instances) {
            t.learn(inst);
        }
        const auto root = t.root_split();
        ASSERT_TRUE(root);
        EXPECT_EQ(root->first, 0u);
        EXPECT_GT(root->second, 0.45);
        EXPECT_LT(root->second, 0.55);
        const double hi[] = {0.9, 0.5, 0.5};
        const double lo[] = {0.1, 0.5, 0.5};
        EXPECT_NEAR(t.predict(hi), 10.0, 0.1);
        EXPECT_NEAR(t.predict(lo), 2.0, 0.1);
    }
}

TEST(HoeffdingTree, DefaultLeavesAlsoRecoverStep) {
    HoeffdingTree t(3);
    for (const auto& inst : random_dataset(11, 10000, 3, step_target).instances) {
        t.learn(inst);
    }
    const double hi[] = {0.9, 0.5, 0.5};
    EXPECT_NEAR(t.predict(hi), 10.0, 0.1);
}

TEST(HoeffdingTree, InvariantsOverARandomStream) {
    for (auto mode : {LeafMode::TargetMean, LeafMode::Adaptive}) {
        HoeffdingParams p;
        p.leaf_mode = mode;
        HoeffdingTree t(4, p, 5);
        const auto d = random_dataset(
            5, 20000, 4, [](const std::vector<double>& x) { return 50.0 * x[0] * x[1] + 20.0 * std::sin(6 * x[2]); },
            3.0);
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const auto& inst = d.instances[i];
            t.learn(inst);
            lo = std::min(lo, inst.target);
            hi = std::max(hi, inst.target);
            if (i % 1000 != 999) {
                continue;
            }
            double total = 0.0;
            for (double w : t.leaf_weights()) {
                total += w;
            }
            ASSERT_NEAR(total, static_cast<double>(i + 1), 1e-6);
            t.for_each_leaf([&](const LeafStats& s, int) {
                ASSERT_GE(s.total().variance(), -1e-9);
                for (const auto& obs : s.observers) {
                    ASSERT_LE(obs.bins().size(), 64u);
                    ASSERT_NEAR(obs.total().weight(), s.observed.weight(), 1e-9);
                }
            });
            if (mode == LeafMode::TargetMean) {
                for (std::size_t k = 0; k < 50; ++k) {
                    const double y = t.predict(d.instances[k * 7].features);
                    ASSERT_GE(y, lo);
                    ASSERT_LE(y, hi);
                }
            }
        }
        EXPECT_GT(t.node_count(), 3u);
        EXPECT_EQ(t.node_count(), 2 * t.leaf_count() - 1);
    }
}

TEST(HoeffdingTree, RoutingIsDeterministic) {
    auto build = [] {
        HoeffdingTree t(4, {}, 9);
        for (const auto& inst :
             random_dataset(9, 8000, 4, [](const std::vector<double>& x) { return 10 * x[1] + 5 * x[3]; }, 1.0)
                 .instances) {
            t.learn(inst);
        }
        return t;
    };
    const auto a = build();
    const auto b = build();
    EXPECT_EQ(a.snapshot(), b.snapshot());
    const auto probe = random_dataset(99, 200, 4, step_target);
    for (const auto& inst : probe.instances) {
        EXPECT_EQ(a.predict(inst.features), a.predict(inst.features));
        EXPECT_EQ(a.predict(inst.features), b.predict(inst.features));
    }
}

TEST(HoeffdingTree, NodeCountGrowsOnlyBySplits) {
    HoeffdingTree t(3, {}, 1);
    std::size_t prev = t.node_count();
    for (const auto& inst :
         random_dataset(4, 10000, 3, [](const std::vector<double>& x) { return 30 * x[0] + 30 * x[1] * x[2]; }, 1.0)
             .instances) {
        t.learn(inst);
        const auto now = t.node_count();
        ASSERT_TRUE(now == prev || now == prev + 2);
        prev = now;
    }
}

TEST(HoeffdingTree, DepthLimitIsHonoured) {
    HoeffdingParams p = mean_leaves();
    p.depth_limit = 2;
    p.grace_period = 50;
    HoeffdingTree t(2, p);
    for (const auto& inst :
         random_dataset(6, 20000, 2, [](const std::vector<double>& x) { return 100 * x[0] + 50 * x[1]; }).instances) {
        t.learn(inst);
    }
    EXPECT_LE(t.depth(), 2);
    EXPECT_EQ(t.leaf_count(), 4u);
}

TEST(HoeffdingTree, SubspaceRestrictsCandidateFeatures) {
    HoeffdingParams p;
    p.subspace_size = 2;
    HoeffdingTree t(6, p, 3);
    t.for_each_leaf([](const LeafStats& s, int) {
        EXPECT_EQ(s.features.size(), 2u);
        EXPECT_LT(s.features[0], s.features[1]);
    });
}

TEST(HoeffdingTree, EmptyTreeBytesAreFixed) {
    HoeffdingTree t(6, mean_leaves());
    EXPECT_EQ(t.logical_bytes(), 15864u);
    EXPECT_EQ(model_memory_bytes(t.snapshot()), 15864u);
}

TEST(HoeffdingTree, LogicalBytesMatchSnapshotWalker) {
    for (auto mode : {LeafMode::TargetMean, LeafMode::Perceptron, LeafMode::Adaptive}) {
        HoeffdingParams p;
        p.leaf_mode = mode;
        HoeffdingTree t(5, p, 2);
        HatTree h(5, p, {}, 2);
        const auto d = random_dataset(
            2, 6000, 5, [](const std::vector<double>& x) { return 20 * x[0] + 10 * x[4]; }, 1.0, 10.0);
        for (std::size_t i = 0; i < d.size(); ++i) {
            t.learn(d.instances[i]);
            h.learn(d.instances[i]);
            if (i % 750 == 0) {
                ASSERT_EQ(t.logical_bytes(), model_memory_bytes(t.snapshot()));
                ASSERT_EQ(h.logical_bytes(), model_memory_bytes(h.snapshot()));
            }
        }
    }
}

TEST(HoeffdingTree, BytesGrowWithData) {
    HoeffdingTree t(6, {}, 1);
    const auto d = random_dataset(
        1, 10000, 6, [](const std::vector<double>& x) { return 40 * x[0] + 20 * x[5]; }, 2.0, 100.0);
    std::size_t prev = t.logical_bytes();
    std::size_t at100 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        t.learn(d.instances[i]);
        const auto b = t.logical_bytes();
        ASSERT_GE(b, prev);
        prev = b;
        if (i == 99) {
            at100 = b;
        }
    }
    EXPECT_GE(prev, at100);
}

TEST(HatTree, MatchesHoeffdingTreeOnStationaryData) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        HoeffdingTree ht(4, {}, seed);
        HatTree hat(4, {}, {}, seed);
        const auto d = random_dataset(
            seed, 20000, 4, [](const std::vector<double>& x) { return 10 * x[0] + 5 * x[1]; }, 1.0);
        for (const auto& inst : d.instances) {
            ASSERT_EQ(ht.predict(inst.features), hat.predict(inst.features));
            ht.learn(inst);
            hat.learn(inst);
        }
        EXPECT_EQ(hat.replacements(), 0u);
    }
}

TEST(HatTree, ReplacementNeverGrowsTheTree) {
    std::uint64_t total = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        HatTree hat(3, {}, {}, seed);
        Rng rng(seed);
        std::normal_distribution<double> noise(0.0, 0.5);
        for (int i = 0; i < 40000; ++i) {
            std::vector<double> x{10 * uniform01(rng), 10 * uniform01(rng), 10 * uniform01(rng)};
            const double y = (i < 20000 ? x[0] : 10 - x[0]) + noise(rng);
            const auto nodes = hat.node_count();
            const auto before = hat.replacements();
            hat.learn(x, y);
            if (hat.replacements() > before) {
                ASSERT_LE(hat.node_count(), nodes) << "seed " << seed << " step " << i;
            }
        }
        total += hat.replacements();
    }
    EXPECT_GT(total, 0u);
}

TEST(HatTree, AdaptsToConceptFlipBetterThanHoeffdingTree) {
    double ht_err = 0.0;
    double hat_err = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        HoeffdingTree ht(3, {}, seed);
        HatTree hat(3, {}, {}, seed);
        Rng rng(seed + 100);
        std::normal_distribution<double> noise(0.0, 0.5);
        for (int i = 0; i < 40000; ++i) {
            std::vector<double> x{10 * uniform01(rng), 10 * uniform01(rng), 10 * uniform01(rng)};
            const double y = (i < 20000 ? x[0] : 10 - x[0]) + noise(rng);
            if (i >= 35000) {
                ht_err += std::fabs(ht.predict(x) - y);
                hat_err += std::fabs(hat.predict(x) - y);
            }
            ht.learn(x, y);
            hat.learn(x, y);
        }
    }
    EXPECT_LT(hat_err, ht_err);
}

TEST(HatTree, SnapshotNamesModel) {
    HatTree h(2);
    EXPECT_EQ(h.snapshot()["model"], "hat");
    EXPECT_EQ(HoeffdingTree(2).snapshot()["model"], "ht");
}
