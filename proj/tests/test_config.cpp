#include <gtest/gtest.h>

#include <filesystem>

#include "hgsprune/config.hpp"

using namespace hgsp;

#ifndef HGSPRUNE_SOURCE_DIR
#define HGSPRUNE_SOURCE_DIR "."
#endif

TEST(Config, DefaultsFollowPublishedProtocol) {
    const ExperimentConfig c;
    EXPECT_EQ(c.baseline.epochs, 200);
    EXPECT_DOUBLE_EQ(c.baseline.lr, 0.1);
    EXPECT_EQ(c.baseline.batch_size, 128u);
    EXPECT_EQ(c.sparse.epochs, 100);
    EXPECT_DOUBLE_EQ(c.sparse.lr, 0.01);
    EXPECT_EQ(c.lambda_grid.size(), 7u);
    EXPECT_DOUBLE_EQ(c.lambda_grid.front(), 1e-1);
    EXPECT_DOUBLE_EQ(c.lambda_grid.back(), 1e-7);
    EXPECT_EQ(c.p_grid.size(), 9u);
    EXPECT_EQ(c.prune.eval_batch_size, 128u);
    EXPECT_DOUBLE_EQ(c.fpgm.ratio.gm_fraction, 0.75);
    EXPECT_EQ(c.penalty.grouping, GroupingScheme::FeatureWise);
    EXPECT_EQ(c.penalty.base, BaseCriterion::GroupLHalf);
    EXPECT_EQ(c.penalty.hierarchical, Hierarchy::Squared);
    EXPECT_FALSE(c.penalty.regularize_classifier);
}

TEST(Config, JsonRoundTrip) {
    ExperimentConfig c;
    c.architecture.family = "chain";
    c.architecture.widths = {4, 6};
    c.sparse.milestones = {{0.5, 0.1, true}};
    c.penalty.base = BaseCriterion::ExclusiveSparsity;
    c.prune.score = ScoreRule::AbsDelta;
    c.seed = 99;
    const json j = to_json(c);
    EXPECT_EQ(to_json(config_from_json(j)), j);
}

TEST(Config, RetrainDefaultsToBaselineBlock) {
    const auto c = config_from_json(json::parse(R"({"baseline": {"epochs": 7, "lr": 0.2}})"));
    EXPECT_EQ(c.retrain.epochs, 7);
    EXPECT_DOUBLE_EQ(c.retrain.lr, 0.2);
    EXPECT_EQ(c.retrain.milestones, c.baseline.milestones);
    const auto d = config_from_json(json::parse(R"({"baseline": {"epochs": 7}, "retrain": {"epochs": 3}})"));
    EXPECT_EQ(d.retrain.epochs, 3);
}

TEST(Config, UnknownKeysRejected) {
    EXPECT_THROW(config_from_json(json::parse(R"({"sparse": {"epoch": 3}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"lamda_grid": [1]})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"penalty": {"base": "l1"}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"seed": "abc"})")), ConfigError);
}

TEST(Overrides, NestedValues) {
    json doc = json::object();
    apply_override(doc, "sparse.epochs=12");
    apply_override(doc, "penalty.base=group_lasso");
    apply_override(doc, "p_grid=[0.1,0.5]");
    apply_override(doc, "fpgm.enabled=false");
    apply_override(doc, "output_dir=runs/x");
    const auto c = config_from_json(doc);
    EXPECT_EQ(c.sparse.epochs, 12);
    EXPECT_EQ(c.penalty.base, BaseCriterion::GroupLasso);
    EXPECT_EQ(c.p_grid, (std::vector<double>{0.1, 0.5}));
    EXPECT_FALSE(c.fpgm.enabled);
    EXPECT_EQ(c.output_dir, "runs/x");
}

TEST(Overrides, Malformed) {
    json doc = json::object();
    EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
    EXPECT_THROW(apply_override(doc, "=3"), ConfigError);
    EXPECT_THROW(apply_override(doc, "a..b=3"), ConfigError);
    apply_override(doc, "seed=3");
    EXPECT_THROW(apply_override(doc, "seed.x=3"), ConfigError);
}

TEST(Validate, Grids) {
    auto c = load_experiment_config({}, {"p_grid=[0.5]"});
    EXPECT_EQ(c.p_grid.size(), 1u);
    EXPECT_THROW(load_experiment_config({}, {"p_grid=[]"}), ConfigError);
    EXPECT_THROW(load_experiment_config({}, {"p_grid=[1.0]"}), ConfigError);
    EXPECT_THROW(load_experiment_config({}, {"lambda_grid=[]"}), ConfigError);
    EXPECT_THROW(load_experiment_config({}, {"lambda_grid=[-1]"}), ConfigError);
    EXPECT_THROW(load_experiment_config({}, {"fpgm.gm_fraction=0.5"}), ConfigError);
    EXPECT_THROW(load_experiment_config({}, {"architecture.family=mlp"}), ConfigError);
    EXPECT_THROW(load_experiment_config({}, {"architecture.family=chain"}), ConfigError);
    EXPECT_THROW(load_experiment_config({}, {"dataset.name=cifar10", "dataset.path=/nonexistent"}), ConfigError);
    EXPECT_THROW(load_experiment_config("/nonexistent.json"), ConfigError);
}

TEST(Build, NetworkFromConfig) {
    auto c = load_experiment_config({}, {"architecture.family=resnet", "architecture.depth=7", "dataset.classes=3"});
    const auto net = build_network(c);
    EXPECT_EQ(net.num_conv_layers(), 7);
    EXPECT_EQ(net.classifier.out_features, 3);
    c = load_experiment_config({}, {"architecture.family=chain", "architecture.widths=[4,5]"});
    const auto chain = build_network(c);
    EXPECT_EQ(chain.layers[1].out_channels, 5);
}

TEST(Build, ShippedConfigsParse) {
    const std::filesystem::path dir = std::filesystem::path(HGSPRUNE_SOURCE_DIR) / "configs";
    int n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() != ".json") continue;
        const auto c = config_from_json(read_config_document(e.path()));
        EXPECT_NO_THROW(build_network(c)) << e.path();
        if (c.dataset.name == "synthetic") {
            EXPECT_NO_THROW(c.validate()) << e.path();
        }
        ++n;
    }
    EXPECT_GE(n, 3);
}
