#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "hgsprune/trainer.hpp"
#include "oracles.hpp"

using namespace hgsp;

namespace {

TrainConfig quick(int epochs, std::uint64_t seed = 3) {
    TrainConfig c;
    c.lr = 0.05;
    c.batch_size = 32;
    c.epochs = epochs;
    c.seed = seed;
    return c;
}

NetworkSpec toy_net(std::uint64_t seed = 1) {
    auto net = build_vgg(2, 2, 8);
    initialize_weights(net, seed);
    return net;
}

SweepPoint point(double lambda, double sparsity, double acc) {
    SweepPoint p;
    p.lambda = lambda;
    p.sparsity = sparsity;
    p.test_acc = acc;
    return p;
}

}  // namespace

TEST(Schedule, BaselineMilestones) {
    const auto c = TrainConfig::baseline_schedule();
    EXPECT_EQ(c.epochs, 200);
    EXPECT_DOUBLE_EQ(c.lr_at(0), 0.1);
    EXPECT_DOUBLE_EQ(c.lr_at(59), 0.1);
    EXPECT_NEAR(c.lr_at(60), 0.02, 1e-15);
    EXPECT_NEAR(c.lr_at(120), 0.004, 1e-15);
    EXPECT_NEAR(c.lr_at(199), 0.0008, 1e-15);
    EXPECT_DOUBLE_EQ(c.momentum, 0.9);
    EXPECT_DOUBLE_EQ(c.weight_decay, 5e-4);
    EXPECT_EQ(c.batch_size, 128u);
}

TEST(Schedule, SparseFractions) {
    const auto c = TrainConfig::sparse_schedule();
    EXPECT_EQ(c.epochs, 100);
    EXPECT_EQ(c.milestone_epoch(c.milestones[0]), 33);
    EXPECT_EQ(c.milestone_epoch(c.milestones[1]), 66);
    EXPECT_DOUBLE_EQ(c.lr_at(32), 0.01);
    EXPECT_NEAR(c.lr_at(33), 0.001, 1e-16);
    EXPECT_NEAR(c.lr_at(66), 0.0001, 1e-17);
}

TEST(Schedule, Validation) {
    TrainConfig c;
    c.milestones = {{60, 0.2, false}, {60, 0.2, false}};
    EXPECT_THROW(c.validate(), ConfigError);
    c.milestones.clear();
    c.lr = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.lr = 0.1;
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Sparsity, CountsSmallWeights) {
    auto net = build_chain({4}, {false}, 2, 1);
    net.layers[0].weights = Tensor({4, 1, 3, 3});
    EXPECT_DOUBLE_EQ(sparsity_ratio(net), 1.0);
    net.layers[0].weights.fill(1.0);
    EXPECT_DOUBLE_EQ(sparsity_ratio(net), 0.0);
    net.layers[0].weights.fill(-2.0);
    EXPECT_DOUBLE_EQ(sparsity_ratio(net), 0.0);
}

TEST(Sparsity, ThreeOfTwelve) {
    auto net = build_chain({4}, {false}, 2, 3, false);
    net.layers[0].kernel_size = 1;
    net.layers[0].padding = 0;
    net.layers[0].weights = Tensor({4, 3, 1, 1});
    net.layers[0].weights.fill(0.5);
    net.layers[0].weights[0] = 1e-4;
    net.layers[0].weights[5] = -1e-4;
    net.layers[0].weights[11] = 1e-4;
    EXPECT_DOUBLE_EQ(sparsity_ratio(net), 0.25);
    double prev = 1.0;
    for (double thr : {1.0, 0.5, 1e-3, 1e-5}) {
        const double s = sparsity_ratio(net, thr);
        EXPECT_LE(s, prev);
        prev = s;
    }
}

TEST(Training, ZeroEpochsLeavesWeights) {
    const auto data = make_synthetic_dataset(2, 100, 8, 2);
    const auto net = toy_net();
    const auto r = train_baseline(net, data, quick(0));
    EXPECT_EQ(r.net.layers[0].weights, net.layers[0].weights);
    EXPECT_EQ(r.net.classifier.weights, net.classifier.weights);
    EXPECT_TRUE(r.history.empty());
}

TEST(Training, ToyBeatsChance) {
    const auto data = make_synthetic_dataset(2, 500, 16, 4);
    const auto r = train_baseline(toy_net(), data, quick(5));
    ASSERT_EQ(r.history.size(), 5u);
    EXPECT_GT(r.history.back().train_acc, 0.5);
    EXPECT_GT(r.train_acc, 0.5);
}

TEST(Training, DeterministicUnderSeed) {
    const auto data = make_synthetic_dataset(2, 200, 8, 4);
    const auto a = train_baseline(toy_net(), data, quick(2));
    const auto b = train_baseline(toy_net(), data, quick(2));
    for (std::size_t l = 0; l < a.net.layers.size(); ++l) EXPECT_EQ(a.net.layers[l].weights, b.net.layers[l].weights);
    EXPECT_EQ(a.net.classifier.weights, b.net.classifier.weights);
    EXPECT_EQ(a.history.back().train_loss, b.history.back().train_loss);
}

TEST(Training, ZeroLambdaMatchesUnregularized) {
    const auto data = make_synthetic_dataset(2, 200, 8, 4);
    PenaltyConfig p;
    p.strength = 0.0;
    const auto a = train_sparse(toy_net(), data, quick(2), p);
    const auto b = train_stage(toy_net(), data, quick(2), "continuation");
    for (std::size_t l = 0; l < a.net.layers.size(); ++l) EXPECT_EQ(a.net.layers[l].weights, b.net.layers[l].weights);
    EXPECT_EQ(a.test_acc, b.test_acc);
}

TEST(Training, PenaltyShrinksGroups) {
    const auto data = make_synthetic_dataset(2, 200, 8, 4);
    PenaltyConfig p;
    p.strength = 0.05;
    const auto base = train_baseline(toy_net(), data, quick(2));
    const auto off = train_sparse(base.net, data, quick(3), PenaltyConfig{});
    const auto on = train_sparse(base.net, data, quick(3), p);
    EXPECT_LT(network_penalty(on.net, p), network_penalty(off.net, p));
    EXPECT_GT(sparsity_ratio(on.net), sparsity_ratio(off.net));
}

TEST(Training, NonFiniteLossAborts) {
    const auto data = make_synthetic_dataset(2, 64, 8, 4);
    auto net = toy_net();
    net.layers[0].weights[0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(train_baseline(net, data, quick(1)), TrainingError);
}

TEST(Training, ShapeMismatchRejected) {
    const auto data = make_synthetic_dataset(3, 64, 8, 4);
    EXPECT_THROW(train_baseline(toy_net(), data, quick(1)), StructuralError);
    const auto gray = make_synthetic_dataset(2, 64, 8, 4, 1);
    EXPECT_THROW(train_baseline(toy_net(), gray, quick(1)), StructuralError);
}

TEST(Objective, Decomposes) {
    auto net = toy_net(5);
    const auto data = make_synthetic_dataset(2, 64, 8, 4);
    const Batch batch = data.train_range(0, 16);
    PenaltyConfig p;
    p.strength = 0.01;
    const auto t = objective(net, batch, p, 5e-4);
    double pen = 0;
    for (const auto& l : net.layers)
        pen += oracle::layer_penalty(l.weights, p.grouping, p.base, p.hierarchical);
    long double sq = 0;
    for (const auto& l : net.layers) {
        for (double w : l.weights.storage()) sq += w * w;
        for (double w : l.bn.scale) sq += w * w;
        for (double w : l.bn.shift) sq += w * w;
    }
    for (double w : net.classifier.weights.storage()) sq += w * w;
    for (double w : net.classifier.bias) sq += w * w;
    EXPECT_NEAR(t.penalty, pen, 1e-9 * pen);
    EXPECT_NEAR(t.weight_decay, static_cast<double>(0.5L * 5e-4L * sq), 1e-12);
    EXPECT_NEAR(t.total, t.cross_entropy + 0.01 * pen + t.weight_decay, 1e-6);
}

TEST(Objective, EpochRecordRecomputable) {
    const auto data = make_synthetic_dataset(2, 100, 8, 4);
    PenaltyConfig p;
    p.strength = 0.003;
    const auto r = train_sparse(toy_net(), data, quick(1), p);
    const auto& rec = r.history.back();
    EXPECT_NEAR(rec.penalty, network_penalty(r.net, p), 1e-9);
    EXPECT_NEAR(rec.weight_decay_term, weight_decay_term(r.net, 5e-4), 1e-12);
    EXPECT_NEAR(rec.objective(), rec.train_loss + 0.003 * rec.penalty + rec.weight_decay_term, 1e-6);
    EXPECT_NEAR(rec.sparsity, sparsity_ratio(r.net), 0);
}

TEST(Sweep, SortedDescendingAndNonEmpty) {
    const auto data = make_synthetic_dataset(2, 64, 8, 4);
    EXPECT_THROW(lambda_sweep(toy_net(), data, quick(1), PenaltyConfig{}, {}), ConfigError);
    const auto s = lambda_sweep(toy_net(), data, quick(1), PenaltyConfig{}, {1e-3, 0.0, 1e-1});
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[0].lambda, 1e-1);
    EXPECT_EQ(s[1].lambda, 1e-3);
    EXPECT_EQ(s[2].lambda, 0.0);
    const auto zero = lambda_sweep(toy_net(), data, quick(1), PenaltyConfig{}, {0.0});
    EXPECT_EQ(zero[0].run.net.layers[0].weights, s[2].run.net.layers[0].weights);
}

TEST(Select, SingleRun) {
    EXPECT_EQ(select_best({point(1e-3, 0.2, 0.9)}, 0.01), 0u);
    EXPECT_THROW(select_best({}, 0.01), ConfigError);
}

TEST(Select, PrefersSparserAtEqualAccuracy) {
    EXPECT_EQ(select_best({point(1e-2, 0.1, 0.9), point(1e-3, 0.4, 0.9)}, 0.01), 1u);
}

TEST(Select, HandEvaluatedTable) {
    // best accuracy 0.95 -> admissible >= 0.94: rows 1, 2, 3; max sparsity 0.6
    // at rows 1 and 2, tie goes to the larger lambda (row 1).
    const std::vector<SweepPoint> table{point(1e-1, 0.9, 0.80), point(1e-2, 0.6, 0.94), point(1e-3, 0.6, 0.945),
                                        point(1e-4, 0.2, 0.95)};
    EXPECT_EQ(select_best(table, 0.01), 1u);
    EXPECT_EQ(select_best(table, 0.0), 3u);
    EXPECT_EQ(select_best(table, 0.2), 0u);
}

TEST(MetricsCsv, HeaderAndRows) {
    const auto path = std::filesystem::temp_directory_path() / "hgsp_metrics_test.csv";
    EpochRecord r;
    r.stage = "baseline";
    r.epoch = 1;
    r.train_loss = 0.5;
    write_metrics_csv(path, {r});
    write_metrics_csv(path, {r}, true);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "stage,epoch,train_loss,penalty,train_acc,test_acc,sparsity");
    std::getline(in, line);
    EXPECT_EQ(line, "baseline,1,0.5,0,0,0,0");
    std::getline(in, line);
    EXPECT_EQ(line, "baseline,1,0.5,0,0,0,0");
    EXPECT_FALSE(std::getline(in, line));
    std::filesystem::remove(path);
}
