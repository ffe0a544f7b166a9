#pragma once

// Experiment pipeline: baseline training, sparse training with a lambda
// sweep, greedy selection + surgery per pruning rate, retraining from
// scratch, the FPGM-mix comparison, a summary document and reports.
//
// Run directory layout (all paths relative to the output directory):
//   manifest.json                       stage status, artifacts, results
//   baseline/{model.ckpt,metrics.csv}
//   sparse/lambda_<i>/{model.ckpt,metrics.csv}, sparse/sweep.csv,
//   sparse/model.ckpt                   selected network
//   prune/<P>/{selection.ckpt,pruned.ckpt,scores.csv}
//   retrain/<P>/{model.ckpt,metrics.csv}
//   fpgm/<P>/{selection.ckpt,pruned.ckpt,selection.csv,retrained.ckpt,metrics.csv}
//   summary.json
//   report/...

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hgsprune/baselines.hpp"
#include "hgsprune/checkpoint.hpp"
#include "hgsprune/config.hpp"
#include "hgsprune/error.hpp"
#include "hgsprune/netmodel.hpp"
#include "hgsprune/plot.hpp"
#include "hgsprune/pruner.hpp"
#include "hgsprune/trainer.hpp"

namespace hgsp {

inline constexpr const char* kProposedTag = "hgs_greedy";

inline constexpr std::string_view kStageOrder[] = {"baseline", "sparse", "prune", "retrain", "fpgm", "summary"};

/// Stage seed derived from the global seed and a stage tag (FNV-1a of the
/// tag, then one splitmix64 round).
inline std::uint64_t derive_seed(std::uint64_t global, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = global ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::string p_tag(double p) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "P%.2f", p);
    return buf;
}

struct PipelineOptions {
    bool resume = false;
    /// Last stage to run (empty: all).
    std::string stop_after;
    std::ostream* log = nullptr;
};

class Pipeline {
public:
    Pipeline(ExperimentConfig cfg, std::filesystem::path out, std::ostream* log = nullptr)
        : cfg_(std::move(cfg)), out_(std::move(out)), log_(log) {
        cfg_.output_dir = out_.string();
        cfg_.validate();
        std::filesystem::create_directories(out_);
        load_manifest();
    }

    const ExperimentConfig& config() const noexcept { return cfg_; }
    const std::filesystem::path& out() const noexcept { return out_; }
    const json& manifest() const noexcept { return manifest_; }

    /// All stages in order; with `resume`, stages already recorded as done
    /// (with their artifacts present) are loaded instead of rerun.
    void run(const PipelineOptions& opt = {}) {
        if (!opt.stop_after.empty() && !known_stage(opt.stop_after))
            throw ConfigError("unknown stage '" + opt.stop_after + "'");
        if (!opt.resume) reset_manifest();
        // Once a stage reruns, everything after it reruns too.
        bool rerun = !opt.resume;
        for (auto s : kStageOrder) {
            const std::string name(s);
            if (name == "fpgm" && !cfg_.fpgm.enabled) continue;
            if (rerun || !stage_done(name)) {
                run_stage(name);
                rerun = true;
            }
            if (name == opt.stop_after) break;
        }
    }

    /// One stage, rerun unconditionally; prerequisites must already be done.
    void run_stage(const std::string& name) {
        if (!known_stage(name)) throw ConfigError("unknown stage '" + name + "'");
        for (const auto& pre : prerequisites(name))
            if (!stage_done(pre))
                throw StageFailure(name, "prerequisite stage '" + pre + "' has not completed in " + out_.string());
        say("[" + name + "] start");
        manifest_["stages"][name] = {{"status", "running"}};
        save_manifest();
        try {
            json results, artifacts = json::array();
            if (name == "baseline") stage_baseline(results, artifacts);
            else if (name == "sparse") stage_sparse(results, artifacts);
            else if (name == "prune") stage_prune(results, artifacts);
            else if (name == "retrain") stage_retrain(results, artifacts);
            else if (name == "fpgm") stage_fpgm(results, artifacts);
            else stage_summary(results, artifacts);
            manifest_["stages"][name] = {{"status", "done"}, {"artifacts", artifacts}, {"results", results}};
            manifest_["failure"] = nullptr;
            save_manifest();
            say("[" + name + "] done");
        } catch (const std::exception& e) {
            manifest_["stages"][name] = {{"status", "failed"}, {"error", e.what()}};
            manifest_["failure"] = {{"stage", name}, {"cause", e.what()}};
            save_manifest();
            throw StageFailure(name, e.what());
        }
    }

    bool stage_done(const std::string& name) const {
        const auto& st = manifest_.at("stages");
        if (!st.contains(name) || st.at(name).value("status", "") != "done") return false;
        for (const auto& a : st.at(name).at("artifacts"))
            if (!std::filesystem::exists(out_ / a.get<std::string>())) return false;
        return true;
    }

private:
    ExperimentConfig cfg_;
    std::filesystem::path out_;
    std::ostream* log_;
    json manifest_;
    std::optional<DatasetHandle> data_;

    static bool known_stage(const std::string& s) {
        for (auto k : kStageOrder)
            if (k == s) return true;
        return false;
    }

    std::vector<std::string> prerequisites(const std::string& name) const {
        if (name == "baseline") return {};
        if (name == "sparse") return {"baseline"};
        if (name == "prune") return {"sparse"};
        if (name == "retrain") return {"prune"};
        if (name == "fpgm") return {"baseline"};
        std::vector<std::string> all{"baseline", "sparse", "prune", "retrain"};
        if (cfg_.fpgm.enabled) all.push_back("fpgm");
        return all;
    }

    void say(const std::string& s) const {
        if (log_) *log_ << s << std::endl;
    }

    EpochHook epoch_logger(const std::string& label) const {
        if (!log_) return {};
        return [this, label](const EpochRecord& r) {
            char buf[256];
            std::snprintf(buf, sizeof buf, "[%s] epoch %d loss %.4f penalty %.4g train %.4f test %.4f sparsity %.4f",
                          label.c_str(), r.epoch, r.train_loss, r.penalty, r.train_acc, r.test_acc, r.sparsity);
            *log_ << buf << std::endl;
        };
    }

    // ------------------------------------------------------------------
    // Manifest

    std::filesystem::path manifest_path() const { return out_ / "manifest.json"; }

    void reset_manifest() {
        manifest_ = {{"config", to_json(cfg_)}, {"stages", json::object()}, {"failure", nullptr}};
        save_manifest();
    }

    void load_manifest() {
        if (!std::filesystem::exists(manifest_path())) {
            reset_manifest();
            return;
        }
        std::ifstream in(manifest_path());
        try {
            manifest_ = json::parse(in);
        } catch (const json::exception& e) {
            throw IoError(manifest_path().string() + ": " + e.what());
        }
        if (manifest_.value("config", json()) != to_json(cfg_)) {
            // A different experiment owned this directory; its artifacts
            // cannot be reused.
            say("[manifest] config differs from " + manifest_path().string() + "; previous stages discarded");
            reset_manifest();
        }
    }

    void save_manifest() const { write_text(manifest_path(), manifest_.dump(2) + "\n"); }

    static void write_text(const std::filesystem::path& p, const std::string& text) {
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::trunc | std::ios::binary);
        if (!out) throw IoError("cannot write " + p.string());
        out << text;
    }

    json stage_results(const std::string& name) const { return manifest_.at("stages").at(name).at("results"); }

    // ------------------------------------------------------------------
    // Helpers

    const DatasetHandle& data() {
        if (!data_) data_ = load_dataset(cfg_, derive_seed(cfg_.seed, "dataset"));
        return *data_;
    }

    TrainConfig train_cfg(TrainConfig c, std::string_view tag) const {
        c.seed = derive_seed(cfg_.seed, tag);
        c.augment = cfg_.dataset.augment;
        return c;
    }

    json metadata(const std::string& stage, std::uint64_t seed, json extra = json::object()) const {
        extra["stage"] = stage;
        extra["seed"] = seed;
        extra["global_seed"] = cfg_.seed;
        extra["architecture"] = to_json(cfg_)["architecture"];
        return extra;
    }

    NetworkSpec load_net(const std::string& rel) const { return load_checkpoint(out_ / rel).net; }

    // ------------------------------------------------------------------
    // Stages

    void stage_baseline(json& results, json& artifacts) {
        NetworkSpec net = build_network(cfg_);
        const auto init = derive_seed(cfg_.seed, "init");
        initialize_weights(net, init);
        const TrainConfig tc = train_cfg(cfg_.baseline, "baseline");
        const auto r = train_baseline(net, data(), tc, CpuBackend{}, epoch_logger("baseline"));
        save_checkpoint(out_ / "baseline/model.ckpt", r.net, nullptr,
                        metadata("baseline", tc.seed, {{"init_seed", init}}));
        write_metrics_csv(out_ / "baseline/metrics.csv", r.history);
        artifacts = {"baseline/model.ckpt", "baseline/metrics.csv"};
        results = {{"test_acc", r.test_acc}, {"train_acc", r.train_acc}, {"params", r.net.parameter_count()},
                   {"sparsity", sparsity_ratio(r.net)}};
    }

    void stage_sparse(json& results, json& artifacts) {
        const NetworkSpec base = load_net("baseline/model.ckpt");
        const TrainConfig tc = train_cfg(cfg_.sparse, "sparse");
        const auto sweep =
            lambda_sweep(base, data(), tc, cfg_.penalty, cfg_.lambda_grid, CpuBackend{}, epoch_logger("sparse"));
        const std::size_t pick = select_best(sweep, cfg_.selection_tolerance);
        std::ostringstream csv;
        csv << "lambda,sparsity,test_acc,train_acc,selected\n";
        json table = json::array();
        for (std::size_t i = 0; i < sweep.size(); ++i) {
            const auto& pt = sweep[i];
            const std::string dir = "sparse/lambda_" + std::to_string(i);
            PenaltyConfig p = cfg_.penalty;
            p.strength = pt.lambda;
            save_checkpoint(out_ / dir / "model.ckpt", pt.run.net, nullptr,
                            metadata("sparse", tc.seed, {{"lambda", pt.lambda}}));
            write_metrics_csv(out_ / dir / "metrics.csv", pt.run.history);
            artifacts.push_back(dir + "/model.ckpt");
            artifacts.push_back(dir + "/metrics.csv");
            char buf[160];
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%d\n", pt.lambda, pt.sparsity, pt.test_acc,
                          pt.run.train_acc, i == pick ? 1 : 0);
            csv << buf;
            table.push_back({{"lambda", pt.lambda},
                             {"sparsity", pt.sparsity},
                             {"test_acc", pt.test_acc},
                             {"train_acc", pt.run.train_acc},
                             {"penalty", network_penalty(pt.run.net, p)}});
        }
        write_text(out_ / "sparse/sweep.csv", csv.str());
        save_checkpoint(out_ / "sparse/model.ckpt", sweep[pick].run.net, nullptr,
                        metadata("sparse", tc.seed, {{"lambda", sweep[pick].lambda}}));
        artifacts.push_back("sparse/sweep.csv");
        artifacts.push_back("sparse/model.ckpt");
        results = {{"selected_lambda", sweep[pick].lambda},
                   {"selected_index", pick},
                   {"sparsity", sweep[pick].sparsity},
                   {"test_acc", sweep[pick].test_acc},
                   {"sweep", table}};
        say("[sparse] selected lambda " + json(sweep[pick].lambda).dump());
    }

    void stage_prune(json& results, json& artifacts) {
        const NetworkSpec net = load_net("sparse/model.ckpt");
        const double sparsity = sparsity_ratio(net);
        results = json::object();
        for (double p : cfg_.p_grid) {
            const std::string dir = "prune/" + p_tag(p);
            PruneConfig pc = cfg_.prune;
            pc.pruning_rate = p;
            pc.seed = derive_seed(cfg_.seed, "prune-batch");
            const Selection sel = select_filters(net, data(), pc);
            if (sel.stopped_early) say("[prune] " + p_tag(p) + " warning: " + sel.warning);
            const PruneResult pr = prune(net, sel.mask, sel.scores);
            save_checkpoint(out_ / dir / "selection.ckpt", net, &sel.mask,
                            metadata("prune", pc.seed, {{"P", p}, {"method", kProposedTag}}));
            save_checkpoint(out_ / dir / "pruned.ckpt", pr.network, nullptr,
                            metadata("prune", pc.seed, {{"P", p}, {"method", kProposedTag}}));
            write_score_log(out_ / dir / "scores.csv", sel.scores);
            for (const char* f : {"/selection.ckpt", "/pruned.ckpt", "/scores.csv"}) artifacts.push_back(dir + f);
            const double masked_acc = accuracy(evaluate_split(net, data(), true, CpuBackend{}, &sel.mask));
            results[p_tag(p)] = {{"P", p},
                                 {"budget", sel.budget},
                                 {"selected", sel.selected},
                                 {"stopped_early", sel.stopped_early},
                                 {"warning", sel.warning},
                                 {"params_before", pr.params_before},
                                 {"params_after", pr.params_after},
                                 {"pruned_per_layer", pruned_per_layer(sel.mask)},
                                 {"sparsity_at_prune", sparsity},
                                 {"test_acc_before_retrain", masked_acc}};
        }
    }

    json retrain_one(const NetworkSpec& pruned, const std::string& method, double p, const std::string& ckpt,
                     const std::string& metrics, json& artifacts) {
        const std::string tag = "retrain/" + method + "/" + p_tag(p);
        const TrainConfig tc = train_cfg(cfg_.retrain, tag);
        const auto init = derive_seed(cfg_.seed, tag + "/init");
        const auto r = retrain_from_scratch(pruned, data(), tc, init, CpuBackend{}, epoch_logger(tag));
        save_checkpoint(out_ / ckpt, r.net, nullptr,
                        metadata("retrain", tc.seed, {{"P", p}, {"method", method}, {"init_seed", init}}));
        write_metrics_csv(out_ / metrics, r.history);
        artifacts.push_back(ckpt);
        artifacts.push_back(metrics);
        return {{"test_acc", r.test_acc}, {"train_acc", r.train_acc}, {"params", r.net.parameter_count()}};
    }

    void stage_retrain(json& results, json& artifacts) {
        results = json::object();
        for (double p : cfg_.p_grid) {
            const std::string dir = "retrain/" + p_tag(p);
            results[p_tag(p)] = retrain_one(load_net("prune/" + p_tag(p) + "/pruned.ckpt"), kProposedTag, p,
                                            dir + "/model.ckpt", dir + "/metrics.csv", artifacts);
        }
    }

    void stage_fpgm(json& results, json& artifacts) {
        const NetworkSpec net = load_net("baseline/model.ckpt");
        results = json::object();
        for (double p : cfg_.p_grid) {
            const std::string dir = "fpgm/" + p_tag(p);
            const auto sel = fpgm_mix_select(net, p, cfg_.fpgm.ratio, cfg_.prune.min_channels_per_layer);
            for (const auto& w : sel.warnings) say("[fpgm] " + p_tag(p) + " warning: " + w);
            const PruneResult pr = prune(net, sel.mask);
            const json meta = metadata("fpgm", cfg_.seed, {{"P", p}, {"method", kFpgmMixTag}});
            save_checkpoint(out_ / dir / "selection.ckpt", net, &sel.mask, meta);
            save_checkpoint(out_ / dir / "pruned.ckpt", pr.network, nullptr, meta);
            write_baseline_log(out_ / dir / "selection.csv", sel);
            for (const char* f : {"/selection.ckpt", "/pruned.ckpt", "/selection.csv"}) artifacts.push_back(dir + f);
            json r = retrain_one(pr.network, kFpgmMixTag, p, dir + "/retrained.ckpt", dir + "/metrics.csv", artifacts);
            r["P"] = p;
            r["params_before"] = pr.params_before;
            r["params_after"] = pr.params_after;
            r["pruned_per_layer"] = pruned_per_layer(sel.mask);
            r["sparsity_at_prune"] = sparsity_ratio(net);
            r["warnings"] = sel.warnings;
            results[p_tag(p)] = r;
        }
    }

    void stage_summary(json& results, json& artifacts) {
        const json base = stage_results("baseline");
        const json prune_r = stage_results("prune");
        const json retrain_r = stage_results("retrain");
        json rows = json::array();
        for (double p : cfg_.p_grid) {
            const auto& pr = prune_r.at(p_tag(p));
            rows.push_back({{"method", kProposedTag},
                            {"P", p},
                            {"params_before", pr.at("params_before")},
                            {"params_after", pr.at("params_after")},
                            {"test_acc_baseline", base.at("test_acc")},
                            {"test_acc_pruned", retrain_r.at(p_tag(p)).at("test_acc")},
                            {"sparsity_at_prune", pr.at("sparsity_at_prune")},
                            {"pruned_per_layer", pr.at("pruned_per_layer")}});
        }
        if (cfg_.fpgm.enabled) {
            const json fr = stage_results("fpgm");
            for (double p : cfg_.p_grid) {
                const auto& r = fr.at(p_tag(p));
                rows.push_back({{"method", kFpgmMixTag},
                                {"P", p},
                                {"params_before", r.at("params_before")},
                                {"params_after", r.at("params_after")},
                                {"test_acc_baseline", base.at("test_acc")},
                                {"test_acc_pruned", r.at("test_acc")},
                                {"sparsity_at_prune", r.at("sparsity_at_prune")},
                                {"pruned_per_layer", r.at("pruned_per_layer")}});
            }
        }
        const json summary{{"selected_lambda", stage_results("sparse").at("selected_lambda")},
                           {"baseline_params", base.at("params")},
                           {"results", rows}};
        write_text(out_ / "summary.json", summary.dump(2) + "\n");
        artifacts = {"summary.json"};
        results = {{"rows", rows.size()}};
    }
};

/// Runs the full pipeline into `cfg.output_dir` and returns the manifest.
inline json run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opt = {}) {
    Pipeline p(cfg, cfg.output_dir, opt.log);
    p.run(opt);
    return p.manifest();
}

// ---------------------------------------------------------------------------
// Reports

struct ReportFiles {
    std::vector<std::filesystem::path> files;
    bool accounting_consistent = true;
    bool sparsity_consistent = true;
};

namespace detail {

inline json read_json_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(p.string() + ": " + e.what());
    }
}

}  // namespace detail

/// Every artifact the manifest references, plus missing stages, as paths
/// relative to the run directory ("stage:<name>" for absent stages).
inline std::vector<std::string> missing_artifacts(const std::filesystem::path& dir) {
    std::vector<std::string> missing;
    if (!std::filesystem::exists(dir / "manifest.json")) return {"manifest.json"};
    const json m = detail::read_json_file(dir / "manifest.json");
    const bool fpgm = m.at("config").at("fpgm").at("enabled").get<bool>();
    for (auto s : kStageOrder) {
        const std::string name(s);
        if (name == "fpgm" && !fpgm) continue;
        const auto& st = m.at("stages");
        if (!st.contains(name) || st.at(name).value("status", "") != "done") {
            missing.push_back("stage:" + name);
            continue;
        }
        for (const auto& a : st.at(name).at("artifacts"))
            if (!std::filesystem::exists(dir / a.get<std::string>())) missing.push_back(a.get<std::string>());
    }
    return missing;
}

/// Tables (CSV) and plots (SVG) under <dir>/report. Throws
/// IncompleteManifest when artifacts are missing.
inline ReportFiles report(const std::filesystem::path& dir) {
    if (auto missing = missing_artifacts(dir); !missing.empty()) throw IncompleteManifest(std::move(missing));
    const json summary = detail::read_json_file(dir / "summary.json");
    const auto rdir = dir / "report";
    std::filesystem::create_directories(rdir);
    ReportFiles out;
    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream f(rdir / name, std::ios::trunc | std::ios::binary);
        if (!f) throw IoError("cannot write " + (rdir / name).string());
        f << text;
        out.files.push_back(rdir / name);
    };
    auto g = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    auto gp = [](double p) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%g", p);
        return std::string(buf);
    };

    // (a) accuracy vs P
    std::map<std::string, plot::Series> acc;
    std::ostringstream a;
    a << "method,P,test_acc_pruned,test_acc_baseline\n";
    for (const auto& r : summary.at("results")) {
        const auto method = r.at("method").get<std::string>();
        a << method << ',' << gp(r.at("P")) << ',' << g(r.at("test_acc_pruned")) << ','
          << g(r.at("test_acc_baseline")) << '\n';
        auto& s = acc[method];
        s.name = method;
        s.x.push_back(r.at("P").get<double>());
        s.y.push_back(100.0 * r.at("test_acc_pruned").get<double>());
    }
    write("accuracy_vs_p.csv", a.str());
    std::vector<plot::Series> acc_series;
    for (auto& [k, s] : acc) acc_series.push_back(s);
    if (!summary.at("results").empty()) {
        plot::Series base{"baseline", {}, {}};
        for (const auto& s : acc_series)
            for (double x : s.x) base.x.push_back(x), base.y.push_back(0);
        const double b = 100.0 * summary.at("results")[0].at("test_acc_baseline").get<double>();
        std::sort(base.x.begin(), base.x.end());
        base.x.erase(std::unique(base.x.begin(), base.x.end()), base.x.end());
        base.y.assign(base.x.size(), b);
        acc_series.push_back(base);
    }
    write("accuracy_vs_p.svg", plot::line_chart("Test accuracy after retraining", "pruning rate P",
                                                "test accuracy (%)", acc_series));

    // (b) per-layer pruned-channel counts
    std::ostringstream pl;
    pl << "method,P,layer,pruned\n";
    std::map<std::string, std::vector<plot::Series>> per_p;
    std::size_t layers = 0;
    for (const auto& r : summary.at("results")) {
        const auto method = r.at("method").get<std::string>();
        const double p = r.at("P").get<double>();
        const auto counts = r.at("pruned_per_layer").get<std::vector<int>>();
        layers = std::max(layers, counts.size());
        plot::Series s{method, {}, {}};
        for (std::size_t l = 0; l < counts.size(); ++l) {
            pl << method << ',' << gp(p) << ',' << l << ',' << counts[l] << '\n';
            s.y.push_back(counts[l]);
        }
        per_p[p_tag(p)].push_back(s);
    }
    write("pruned_per_layer.csv", pl.str());
    std::vector<std::string> cats;
    for (std::size_t l = 0; l < layers; ++l) cats.push_back(std::to_string(l));
    for (const auto& [tag, series] : per_p)
        write("pruned_per_layer_" + tag + ".svg",
              plot::bar_chart("Pruned channels per layer (" + tag + ")", "conv layer", "pruned channels", cats,
                              series));

    // (c) parameter reduction, cross-checked against the stored masks
    std::ostringstream pr;
    pr << "method,P,params_before,params_after,reduction,reduction_pct,accounting_match\n";
    std::map<std::string, plot::Series> red;
    for (const auto& r : summary.at("results")) {
        const auto method = r.at("method").get<std::string>();
        const double p = r.at("P").get<double>();
        const auto before = r.at("params_before").get<std::size_t>();
        const auto after = r.at("params_after").get<std::size_t>();
        const std::string sel_dir = method == kFpgmMixTag ? "fpgm/" : "prune/";
        const Checkpoint ck = load_checkpoint(dir / (sel_dir + p_tag(p)) / "selection.ckpt");
        const bool match = ck.mask && surgery_parameter_reduction(ck.net, *ck.mask) == before - after &&
                           ck.net.parameter_count() == before;
        out.accounting_consistent = out.accounting_consistent && match;
        if (method == kProposedTag) {
            const double s = sparsity_ratio(load_checkpoint(dir / "sparse/model.ckpt").net);
            out.sparsity_consistent = out.sparsity_consistent && s == r.at("sparsity_at_prune").get<double>();
        }
        const double pct = 100.0 * static_cast<double>(before - after) / static_cast<double>(before);
        pr << method << ',' << gp(p) << ',' << before << ',' << after << ',' << before - after << ',' << g(pct) << ','
           << (match ? "true" : "false") << '\n';
        auto& s = red[method];
        s.name = method;
        s.x.push_back(p);
        s.y.push_back(pct);
    }
    write("parameter_reduction.csv", pr.str());
    std::vector<plot::Series> red_series;
    for (auto& [k, s] : red) red_series.push_back(s);
    write("parameter_reduction.svg",
          plot::line_chart("Parameter reduction", "pruning rate P", "parameters removed (%)", red_series));
    return out;
}

}  // namespace hgsp
