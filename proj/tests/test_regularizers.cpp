#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "hgsprune/regularizers.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace hgsp;

namespace {

ConvLayerSpec layer_with(Tensor w) {
    ConvLayerSpec l;
    l.out_channels = static_cast<int>(w.dim(0));
    l.in_channels = static_cast<int>(w.dim(1));
    l.kernel_size = static_cast<int>(w.dim(2));
    l.weights = std::move(w);
    l.has_batchnorm = false;
    return l;
}

PenaltyConfig cfg(GroupingScheme g, BaseCriterion b, Hierarchy h) {
    PenaltyConfig c;
    c.grouping = g;
    c.base = b;
    c.hierarchical = h;
    return c;
}

template <class F>
void for_all_configs(F&& f) {
    for (auto g : kAllGroupings)
        for (auto b : kAllCriteria)
            for (auto h : kAllHierarchies) f(cfg(g, b, h));
}

}  // namespace

TEST(GroupSlices, FeatureAndNeuronShapes) {
    auto l = layer_with(hgsp::testing::random_tensor({6, 4, 3, 3}, 1));
    const auto fw = group_slices(l, GroupingScheme::FeatureWise);
    ASSERT_EQ(fw.size(), 4u);
    for (const auto& g : fw) {
        EXPECT_EQ(g.size(), 54u);
        EXPECT_EQ(g.kernels.size(), 6u);
    }
    const auto nw = group_slices(l, GroupingScheme::NeuronWise);
    ASSERT_EQ(nw.size(), 6u);
    for (const auto& g : nw) {
        EXPECT_EQ(g.size(), 36u);
        EXPECT_EQ(g.kernels.size(), 4u);
    }
}

TEST(GroupSlices, SingleInputChannelIsOneFeatureGroup) {
    auto l = layer_with(hgsp::testing::random_tensor({5, 1, 3, 3}, 2));
    const auto fw = group_slices(l, GroupingScheme::FeatureWise);
    ASSERT_EQ(fw.size(), 1u);
    EXPECT_EQ(fw[0].size(), l.weights.size());
}

TEST(GroupSlices, PartitionCoversEveryWeightOnce) {
    auto l = layer_with(hgsp::testing::random_tensor({3, 5, 2, 2}, 3));
    for (auto scheme : kAllGroupings) {
        std::vector<int> hits(l.weights.size(), 0);
        std::size_t total = 0;
        for (const auto& g : group_slices(l, scheme))
            for (const auto& k : g.kernels) {
                total += k.size();
                for (std::size_t i = 0; i < k.size(); ++i) ++hits[static_cast<std::size_t>(&k[i] - l.weights.data())];
            }
        EXPECT_EQ(total, 3u * 5u * 4u);
        for (int h : hits) EXPECT_EQ(h, 1);
    }
}

TEST(BasePenalty, HandValues) {
    const std::vector<double> v34{3, 4};
    EXPECT_NEAR(base_penalty<double>(v34, BaseCriterion::GroupLasso), 5.0, 1e-12);
    EXPECT_NEAR(base_penalty<double>(v34, BaseCriterion::ExclusiveSparsity), 24.5, 1e-12);
    const std::vector<double> v912{9, 12};
    EXPECT_NEAR(base_penalty<double>(v912, BaseCriterion::GroupLHalf), std::sqrt(15.0), 1e-12);
    const std::vector<double> zero(7, 0.0);
    for (auto c : kAllCriteria) EXPECT_EQ(base_penalty<double>(zero, c), 0.0);
}

TEST(HierarchicalPenalty, SquaredSumOfKernelNorms) {
    const std::vector<double> a{3, 4}, b{0, 0};
    GroupSlice<double> g;
    g.kernels = {std::span<const double>(a), std::span<const double>(b)};
    EXPECT_NEAR(hierarchical_penalty(g, BaseCriterion::GroupLasso), 25.0, 1e-12);
    GroupSlice<double> z;
    z.kernels = {std::span<const double>(b), std::span<const double>(b)};
    for (auto c : kAllCriteria) EXPECT_EQ(hierarchical_penalty(z, c), 0.0);
}

TEST(HierarchicalPenalty, GroupLHalfMatchesLoopOracle) {
    auto w = hgsp::testing::random_tensor({3, 1, 3, 3}, 44);
    auto l = layer_with(w);
    const auto g = group_slices(l, GroupingScheme::FeatureWise).front();
    double s = 0;
    for (std::size_t o = 0; o < 3; ++o) {
        std::vector<double> k;
        for (std::size_t y = 0; y < 3; ++y)
            for (std::size_t x = 0; x < 3; ++x) k.push_back(w.at(o, 0, y, x));
        s += oracle::r_of(k, BaseCriterion::GroupLHalf);
    }
    EXPECT_NEAR(hierarchical_penalty(g, BaseCriterion::GroupLHalf), s * s, 1e-12 * s * s);
}

TEST(LayerPenalty, ZeroAndSingleGroup) {
    auto zero = layer_with(Tensor({4, 3, 3, 3}));
    for_all_configs([&](const PenaltyConfig& c) { EXPECT_EQ(layer_penalty(zero, c), 0.0); });
    auto single = layer_with(hgsp::testing::random_tensor({4, 1, 3, 3}, 9));
    const auto g = group_slices(single, GroupingScheme::FeatureWise).front();
    EXPECT_NEAR(layer_penalty(single, cfg(GroupingScheme::FeatureWise, BaseCriterion::GroupLasso, Hierarchy::None)),
                base_penalty(g, BaseCriterion::GroupLasso), 1e-12);
}

TEST(LayerPenalty, AllConfigsMatchBruteForce) {
    auto l = layer_with(hgsp::testing::random_tensor({5, 4, 3, 3}, 21));
    for_all_configs([&](const PenaltyConfig& c) {
        const double want = oracle::layer_penalty(l.weights, c.grouping, c.base, c.hierarchical);
        EXPECT_NEAR(layer_penalty(l, c), want, 1e-10 * want);
    });
}

TEST(LayerPenalty, PositiveHomogeneityDegrees) {
    auto l = layer_with(hgsp::testing::random_tensor({3, 4, 3, 3}, 5));
    const double t = 2.7;
    auto scaled = l;
    for (auto& v : scaled.weights.storage()) v *= t;
    for_all_configs([&](const PenaltyConfig& c) {
        double degree = c.base == BaseCriterion::GroupLasso ? 1.0 : (c.base == BaseCriterion::ExclusiveSparsity ? 2.0 : 0.5);
        if (c.hierarchical == Hierarchy::Squared) degree *= 2;
        EXPECT_NEAR(layer_penalty(scaled, c), std::pow(t, degree) * layer_penalty(l, c),
                    1e-10 * layer_penalty(scaled, c));
    });
}

TEST(LayerPenalty, NonNegativeAndZeroOnlyAtZero) {
    for (unsigned seed = 0; seed < 5; ++seed) {
        auto l = layer_with(hgsp::testing::random_tensor({2, 3, 3, 3}, seed, 1e-3));
        for_all_configs([&](const PenaltyConfig& c) { EXPECT_GT(layer_penalty(l, c), 0.0); });
    }
}

TEST(LayerPenalty, PermutingOutputChannels) {
    auto l = layer_with(hgsp::testing::random_tensor({4, 3, 3, 3}, 8));
    // Reverse output-channel order.
    auto p = l;
    for (std::size_t o = 0; o < 4; ++o)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t y = 0; y < 3; ++y)
                for (std::size_t x = 0; x < 3; ++x) p.weights.at(o, i, y, x) = l.weights.at(3 - o, i, y, x);
    for (auto b : kAllCriteria)
        for (auto h : kAllHierarchies) {
            const auto ng = group_slices(l, GroupingScheme::NeuronWise);
            const auto npg = group_slices(p, GroupingScheme::NeuronWise);
            for (std::size_t o = 0; o < 4; ++o) {
                const double a = h == Hierarchy::None ? base_penalty(ng[o], b) : hierarchical_penalty(ng[o], b);
                const double e = h == Hierarchy::None ? base_penalty(npg[3 - o], b) : hierarchical_penalty(npg[3 - o], b);
                EXPECT_NEAR(a, e, 1e-12 * std::max(1.0, a));
            }
            const auto c = cfg(GroupingScheme::FeatureWise, b, h);
            EXPECT_NEAR(layer_penalty(l, c), layer_penalty(p, c), 1e-12 * layer_penalty(l, c));
        }
}

TEST(PenaltyGradient, ZeroTensorGivesZeroSubgradient) {
    auto l = layer_with(Tensor({3, 2, 3, 3}));
    for_all_configs([&](const PenaltyConfig& c) {
        const Tensor g = penalty_gradient(l, c);
        for (double v : g.storage()) EXPECT_EQ(v, 0.0);
    });
}

TEST(PenaltyGradient, GroupLassoOfThreeFour) {
    auto l = layer_with(Tensor({2, 1, 1, 1}, std::vector<double>{3, 4}));
    const auto g = penalty_gradient(l, cfg(GroupingScheme::FeatureWise, BaseCriterion::GroupLasso, Hierarchy::None));
    EXPECT_NEAR(g[0], 0.6, 1e-15);
    EXPECT_NEAR(g[1], 0.8, 1e-15);
}

TEST(PenaltyGradient, MatchesCentralDifferences) {
    const auto w = oracle::well_conditioned_tensor(4, 3, 3, 77);
    for_all_configs([&](const PenaltyConfig& c) {
        auto l = layer_with(w);
        const auto analytic = penalty_gradient(l, c).storage();
        const auto fd = oracle::central_difference(
            w, [&](const Tensor& t) { return oracle::layer_penalty(t, c.grouping, c.base, c.hierarchical); }, 1e-5);
        EXPECT_LE(oracle::relative_error(analytic, fd), 1e-4)
            << to_string(c.grouping) << "/" << to_string(c.base) << "/" << to_string(c.hierarchical);
    });
}

TEST(NetworkPenalty, SumsConvLayersOnly) {
    auto net = build_chain({3, 4, 2}, {false, false, false}, 2, 2);
    hgsp::testing::randomize(net, 4);
    for_all_configs([&](PenaltyConfig c) {
        double want = 0;
        for (const auto& l : net.layers) want += oracle::layer_penalty(l.weights, c.grouping, c.base, c.hierarchical);
        EXPECT_NEAR(network_penalty(net, c), want, 1e-10 * want);
        c.regularize_classifier = true;
        EXPECT_GT(network_penalty(net, c), want);
    });
    auto single = build_chain({3}, {false}, 2, 2);
    hgsp::testing::randomize(single, 5);
    const PenaltyConfig d;
    EXPECT_DOUBLE_EQ(network_penalty(single, d), layer_penalty(single.layers[0], d));
    for (auto& l : single.layers) l.weights.fill(0.0);
    EXPECT_EQ(network_penalty(single, d), 0.0);
}

TEST(PenaltyConfig, ParsesExactNames) {
    EXPECT_EQ(parse_criterion("group_lasso"), BaseCriterion::GroupLasso);
    EXPECT_EQ(parse_criterion("exclusive_sparsity"), BaseCriterion::ExclusiveSparsity);
    EXPECT_EQ(parse_criterion("group_l12"), BaseCriterion::GroupLHalf);
    EXPECT_EQ(parse_hierarchy("squared"), Hierarchy::Squared);
    EXPECT_EQ(parse_grouping("feature"), GroupingScheme::FeatureWise);
    EXPECT_THROW(parse_criterion("l1"), ConfigError);
    PenaltyConfig c;
    c.strength = -1;
    EXPECT_THROW(c.validate(), ConfigError);
}
