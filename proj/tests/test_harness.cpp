#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hgsprune/harness.hpp"

using namespace hgsp;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig tiny(const std::string& out) {
    return load_experiment_config({}, {"architecture.family=chain", "architecture.widths=[6,6,4]",
                                       "architecture.pool_after=[true,false,false]", "dataset.samples=120",
                                       "dataset.image_size=8", "baseline.epochs=2", "baseline.batch_size=32",
                                       "baseline.lr=0.05", "sparse.epochs=2", "sparse.batch_size=32",
                                       "lambda_grid=[0.01,0]", "p_grid=[0.3,0.5]", "prune.eval_batch_size=32",
                                       "output_dir=\"" + out + "\"", "seed=5"});
}

std::filesystem::path fresh(const std::string& name) {
    const auto d = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(d);
    return d;
}

}  // namespace

TEST(Seeds, DerivedPerStage) {
    EXPECT_EQ(derive_seed(1, "baseline"), derive_seed(1, "baseline"));
    EXPECT_NE(derive_seed(1, "baseline"), derive_seed(1, "sparse"));
    EXPECT_NE(derive_seed(1, "baseline"), derive_seed(2, "baseline"));
    EXPECT_EQ(p_tag(0.3), "P0.30");
}

TEST(Pipeline, ArtifactsSummaryAndReport) {
    const auto dir = fresh("hgsp_pipe_a");
    const auto m = run_pipeline(tiny(dir.string()));
    for (auto s : {"baseline", "sparse", "prune", "retrain", "fpgm", "summary"})
        EXPECT_EQ(m.at("stages").at(s).at("status"), "done") << s;
    EXPECT_TRUE(missing_artifacts(dir).empty());
    const auto summary = json::parse(slurp(dir / "summary.json"));
    ASSERT_EQ(summary.at("results").size(), 4u);
    for (const auto& r : summary.at("results")) {
        for (auto k : {"method", "P", "params_before", "params_after", "test_acc_baseline", "test_acc_pruned",
                       "sparsity_at_prune"})
            EXPECT_TRUE(r.contains(k)) << k;
        EXPECT_LT(r.at("params_after").get<std::size_t>(), r.at("params_before").get<std::size_t>());
    }
    const auto files = report(dir);
    EXPECT_TRUE(files.accounting_consistent);
    EXPECT_TRUE(files.sparsity_consistent);
    std::ifstream acc(dir / "report/accuracy_vs_p.csv");
    std::string line;
    int rows = -1;
    while (std::getline(acc, line)) ++rows;
    EXPECT_EQ(rows, 4);
    std::ifstream layers(dir / "report/pruned_per_layer.csv");
    rows = -1;
    while (std::getline(layers, line)) ++rows;
    EXPECT_EQ(rows, 4 * 3);
    for (auto f : {"accuracy_vs_p.svg", "pruned_per_layer_P0.30.svg", "pruned_per_layer_P0.50.svg",
                   "parameter_reduction.svg"})
        EXPECT_EQ(slurp(dir / "report" / f).rfind("<svg", 0), 0u) << f;

    // resume reproduces a deleted stage bit-identically
    const std::string ckpt = slurp(dir / "retrain/P0.50/model.ckpt");
    const std::string sum = slurp(dir / "summary.json");
    std::filesystem::remove(dir / "retrain/P0.50/model.ckpt");
    const auto missing = missing_artifacts(dir);
    ASSERT_EQ(missing.size(), 1u);
    EXPECT_EQ(missing[0], "retrain/P0.50/model.ckpt");
    EXPECT_THROW(report(dir), IncompleteManifest);
    PipelineOptions opt;
    opt.resume = true;
    run_pipeline(tiny(dir.string()), opt);
    EXPECT_EQ(slurp(dir / "retrain/P0.50/model.ckpt"), ckpt);
    EXPECT_EQ(slurp(dir / "summary.json"), sum);

    // identical config in another directory replays the summary byte for byte
    const auto dir2 = fresh("hgsp_pipe_b");
    run_pipeline(tiny(dir2.string()));
    EXPECT_EQ(slurp(dir2 / "summary.json"), sum);
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}

TEST(Pipeline, StopAfterStageAndPrerequisites) {
    const auto dir = fresh("hgsp_pipe_c");
    auto cfg = tiny(dir.string());
    cfg.fpgm.enabled = false;
    Pipeline p(cfg, dir);
    EXPECT_THROW(p.run_stage("prune"), StageFailure);
    PipelineOptions opt;
    opt.stop_after = "baseline";
    p.run(opt);
    EXPECT_TRUE(p.stage_done("baseline"));
    EXPECT_FALSE(p.stage_done("sparse"));
    EXPECT_FALSE(missing_artifacts(dir).empty());
    opt.stop_after = "nonsense";
    EXPECT_THROW(p.run(opt), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST(Pipeline, FailureRecordedInManifest) {
    const auto dir = fresh("hgsp_pipe_d");
    auto cfg = tiny(dir.string());
    cfg.prune.eval_batch_size = 1000;  // more than the training split
    cfg.validate();
    try {
        run_pipeline(cfg);
        FAIL() << "expected a stage failure";
    } catch (const StageFailure& e) {
        EXPECT_EQ(e.stage(), "prune");
    }
    const auto m = json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(m.at("failure").at("stage"), "prune");
    EXPECT_NE(m.at("failure").at("cause").get<std::string>().find("exceeds"), std::string::npos);
    EXPECT_EQ(m.at("stages").at("prune").at("status"), "failed");
    EXPECT_EQ(m.at("stages").at("sparse").at("status"), "done");
    std::filesystem::remove_all(dir);
}
