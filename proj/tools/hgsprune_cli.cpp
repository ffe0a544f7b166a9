// hgsprune command-line front end.
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure,
// 4 incomplete run directory (report).

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hgsprune/config.hpp"
#include "hgsprune/error.hpp"
#include "hgsprune/harness.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kStage = 3, kIncomplete = 4 };

struct Options {
    std::string config;
    std::vector<std::string> overrides;
    std::string stage;
    bool resume = false;
    std::string out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--config", o.config, "experiment config (JSON)");
    sub->add_option("--set", o.overrides, "override a config key, e.g. --set sparse.epochs=10")
        ->take_all()
        ->allow_extra_args(true);
    sub->add_option("--out", o.out, "run directory (overrides output_dir)");
    sub->add_option("--seed", o.seed, "global seed (overrides seed)");
}

hgsp::ExperimentConfig resolve(const Options& o) {
    std::vector<std::string> sets = o.overrides;
    if (!o.out.empty()) sets.push_back("output_dir=\"" + o.out + "\"");
    if (o.seed) sets.push_back("seed=" + std::to_string(*o.seed));
    return hgsp::load_experiment_config(o.config, sets);
}

void print_summary(const std::filesystem::path& dir) {
    const auto p = dir / "summary.json";
    if (!std::filesystem::exists(p)) return;
    std::ifstream in(p);
    const auto s = nlohmann::json::parse(in);
    std::printf("%-12s %5s %12s %12s %9s %9s %9s\n", "method", "P", "params", "pruned", "base_acc", "acc",
                "sparsity");
    for (const auto& r : s.at("results"))
        std::printf("%-12s %5.2f %12zu %12zu %8.2f%% %8.2f%% %9.4f\n", r.at("method").get<std::string>().c_str(),
                    r.at("P").get<double>(), r.at("params_before").get<std::size_t>(),
                    r.at("params_after").get<std::size_t>(), 100 * r.at("test_acc_baseline").get<double>(),
                    100 * r.at("test_acc_pruned").get<double>(), r.at("sparsity_at_prune").get<double>());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical group sparse regularization and greedy backward filter pruning"};
    app.require_subcommand(1);
    Options o;

    struct Sub {
        const char* name;
        const char* stage;
        const char* help;
    };
    const std::vector<Sub> subs{
        {"train", "baseline", "step 1: train the initial network"},
        {"sparse-train", "sparse", "step 2: sparse training over the lambda grid and selection"},
        {"prune", "prune", "step 3: greedy backward filter selection and surgery per P"},
        {"retrain", "retrain", "step 4: retrain the pruned networks from scratch"},
        {"baseline-prune", "fpgm", "FPGM-mix selection on the baseline network, surgery and retraining"},
        {"pipeline", "", "all stages, then the summary"},
        {"report", "", "CSV tables and SVG plots from a completed run directory"},
    };
    std::vector<CLI::App*> handles;
    for (const auto& s : subs) {
        auto* sub = app.add_subcommand(s.name, s.help);
        add_common(sub, o);
        if (std::string(s.name) == "pipeline") {
            sub->add_option("--stage", o.stage, "stop after this stage (baseline|sparse|prune|retrain|fpgm|summary)");
            sub->add_flag("--resume", o.resume, "reuse completed stages recorded in the run directory");
        }
        handles.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    std::size_t which = 0;
    while (!handles[which]->parsed()) ++which;
    const std::string cmd = subs[which].name;

    try {
        if (cmd == "report") {
            std::filesystem::path dir = o.out;
            if (dir.empty()) dir = resolve(o).output_dir;
            const auto files = hgsp::report(dir);
            for (const auto& f : files.files) std::cout << f.string() << '\n';
            if (!files.accounting_consistent)
                std::cerr << "warning: parameter counts disagree with the stored masks\n";
            if (!files.sparsity_consistent)
                std::cerr << "warning: sparsity_at_prune disagrees with the sparse checkpoint\n";
            return kOk;
        }
        const auto cfg = resolve(o);
        hgsp::Pipeline p(cfg, cfg.output_dir, &std::cerr);
        if (cmd == "pipeline") {
            hgsp::PipelineOptions opt;
            opt.resume = o.resume;
            opt.stop_after = o.stage;
            opt.log = &std::cerr;
            p.run(opt);
            print_summary(cfg.output_dir);
        } else {
            p.run_stage(subs[which].stage);
        }
        return kOk;
    } catch (const hgsp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const hgsp::IncompleteManifest& e) {
        std::cerr << e.what() << '\n';
        for (const auto& m : e.missing()) std::cerr << "  missing: " << m << '\n';
        return kIncomplete;
    } catch (const hgsp::StageFailure& e) {
        std::cerr << "stage failed: " << e.what() << '\n';
        return kStage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kStage;
    }
}
