#pragma once

// Experiment configuration: one JSON document per run, with dotted-path
// overrides ("--set sparse.epochs=10").

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hgsprune/baselines.hpp"
#include "hgsprune/dataset.hpp"
#include "hgsprune/error.hpp"
#include "hgsprune/netmodel.hpp"
#include "hgsprune/pruner.hpp"
#include "hgsprune/regularizers.hpp"
#include "hgsprune/trainer.hpp"

namespace hgsp {

using nlohmann::json;

struct ArchitectureConfig {
    std::string family = "vgg";  // vgg | resnet | chain
    int depth = 3;               // conv layer count (vgg, resnet)
    int base_width = 8;
    std::vector<int> widths;     // chain only
    std::vector<bool> pool_after;
    bool batchnorm = true;
};

struct DatasetConfig {
    std::string name = "synthetic";  // synthetic | cifar10 | cifar100
    std::string path;
    int classes = 2;
    std::size_t samples = 1000;
    std::size_t image_size = 16;
    std::size_t channels = 3;
    double noise = 1.0;
    bool augment = false;
};

struct FpgmConfig {
    bool enabled = true;
    MixRatio ratio;
};

struct ExperimentConfig {
    ArchitectureConfig architecture;
    DatasetConfig dataset;
    TrainConfig baseline = TrainConfig::baseline_schedule();
    TrainConfig sparse = TrainConfig::sparse_schedule();
    TrainConfig retrain = TrainConfig::baseline_schedule();
    PenaltyConfig penalty;
    std::vector<double> lambda_grid{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7};
    double selection_tolerance = 0.01;
    PruneConfig prune;  // pruning_rate comes from p_grid
    std::vector<double> p_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    FpgmConfig fpgm;
    std::string output_dir = "runs/experiment";
    std::uint64_t seed = 0;

    void validate() const;
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for '" + where + "." + key + "': " + j.at(key).dump());
    }
}

inline json milestones_to_json(const std::vector<LrMilestone>& ms) {
    json a = json::array();
    for (const auto& m : ms) a.push_back({{"at", m.at}, {"factor", m.factor}, {"fraction", m.fraction}});
    return a;
}

inline TrainConfig train_from_json(const json& j, TrainConfig c, const std::string& where) {
    check_keys(j, where, {"lr", "momentum", "weight_decay", "batch_size", "epochs", "milestones"});
    read(j, "lr", c.lr, where);
    read(j, "momentum", c.momentum, where);
    read(j, "weight_decay", c.weight_decay, where);
    read(j, "batch_size", c.batch_size, where);
    read(j, "epochs", c.epochs, where);
    if (j.contains("milestones")) {
        c.milestones.clear();
        for (const auto& m : j.at("milestones")) {
            check_keys(m, where + ".milestones[]", {"at", "factor", "fraction"});
            LrMilestone ms;
            read(m, "at", ms.at, where + ".milestones[]");
            read(m, "factor", ms.factor, where + ".milestones[]");
            read(m, "fraction", ms.fraction, where + ".milestones[]");
            c.milestones.push_back(ms);
        }
    }
    return c;
}

inline json train_to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"momentum", c.momentum},
            {"weight_decay", c.weight_decay},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"milestones", milestones_to_json(c.milestones)}};
}

/// Parses "true"/"3"/"[1,2]"/"\"x\"" as JSON and anything else as a string.
inline json parse_override_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return text;
    }
}

}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
    const auto& a = c.architecture;
    const auto& d = c.dataset;
    json j;
    j["architecture"] = {{"family", a.family},       {"depth", a.depth},           {"base_width", a.base_width},
                         {"widths", a.widths},       {"pool_after", a.pool_after}, {"batchnorm", a.batchnorm}};
    j["dataset"] = {{"name", d.name},       {"path", d.path},   {"classes", d.classes},
                    {"samples", d.samples}, {"image_size", d.image_size}, {"channels", d.channels},
                    {"noise", d.noise},     {"augment", d.augment}};
    j["baseline"] = detail::train_to_json(c.baseline);
    j["sparse"] = detail::train_to_json(c.sparse);
    j["retrain"] = detail::train_to_json(c.retrain);
    j["penalty"] = {{"grouping", to_string(c.penalty.grouping)},
                    {"base", to_string(c.penalty.base)},
                    {"hierarchical", to_string(c.penalty.hierarchical)},
                    {"regularize_classifier", c.penalty.regularize_classifier}};
    j["lambda_grid"] = c.lambda_grid;
    j["selection_tolerance"] = c.selection_tolerance;
    j["prune"] = {{"eval_batch_size", c.prune.eval_batch_size},
                  {"rescoring", to_string(c.prune.rescoring)},
                  {"score", to_string(c.prune.score)},
                  {"min_channels_per_layer", c.prune.min_channels_per_layer}};
    j["p_grid"] = c.p_grid;
    j["fpgm"] = {{"enabled", c.fpgm.enabled},
                 {"gm_fraction", c.fpgm.ratio.gm_fraction},
                 {"norm_fraction", c.fpgm.ratio.norm_fraction}};
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    return j;
}

/// Fields absent from `j` keep their defaults; unknown keys are errors.
inline ExperimentConfig config_from_json(const json& j) try {
    ExperimentConfig c;
    detail::check_keys(j, "", {"architecture", "dataset", "baseline", "sparse", "retrain", "penalty", "lambda_grid",
                               "selection_tolerance", "prune", "p_grid", "fpgm", "output_dir", "seed"});
    if (j.contains("architecture")) {
        const auto& a = j.at("architecture");
        detail::check_keys(a, "architecture", {"family", "depth", "base_width", "widths", "pool_after", "batchnorm"});
        detail::read(a, "family", c.architecture.family, "architecture");
        detail::read(a, "depth", c.architecture.depth, "architecture");
        detail::read(a, "base_width", c.architecture.base_width, "architecture");
        detail::read(a, "widths", c.architecture.widths, "architecture");
        detail::read(a, "pool_after", c.architecture.pool_after, "architecture");
        detail::read(a, "batchnorm", c.architecture.batchnorm, "architecture");
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        detail::check_keys(d, "dataset",
                           {"name", "path", "classes", "samples", "image_size", "channels", "noise", "augment"});
        detail::read(d, "name", c.dataset.name, "dataset");
        detail::read(d, "path", c.dataset.path, "dataset");
        detail::read(d, "classes", c.dataset.classes, "dataset");
        detail::read(d, "samples", c.dataset.samples, "dataset");
        detail::read(d, "image_size", c.dataset.image_size, "dataset");
        detail::read(d, "channels", c.dataset.channels, "dataset");
        detail::read(d, "noise", c.dataset.noise, "dataset");
        detail::read(d, "augment", c.dataset.augment, "dataset");
    }
    if (j.contains("baseline")) c.baseline = detail::train_from_json(j.at("baseline"), c.baseline, "baseline");
    // Retraining follows the baseline schedule unless given explicitly.
    c.retrain = j.contains("retrain") ? detail::train_from_json(j.at("retrain"), c.baseline, "retrain") : c.baseline;
    if (j.contains("sparse")) c.sparse = detail::train_from_json(j.at("sparse"), c.sparse, "sparse");
    if (j.contains("penalty")) {
        const auto& p = j.at("penalty");
        detail::check_keys(p, "penalty", {"grouping", "base", "hierarchical", "regularize_classifier"});
        if (p.contains("grouping")) c.penalty.grouping = parse_grouping(p.at("grouping").get<std::string>());
        if (p.contains("base")) c.penalty.base = parse_criterion(p.at("base").get<std::string>());
        if (p.contains("hierarchical"))
            c.penalty.hierarchical = parse_hierarchy(p.at("hierarchical").get<std::string>());
        detail::read(p, "regularize_classifier", c.penalty.regularize_classifier, "penalty");
    }
    detail::read(j, "lambda_grid", c.lambda_grid, "");
    detail::read(j, "selection_tolerance", c.selection_tolerance, "");
    if (j.contains("prune")) {
        const auto& p = j.at("prune");
        detail::check_keys(p, "prune", {"eval_batch_size", "rescoring", "score", "min_channels_per_layer"});
        detail::read(p, "eval_batch_size", c.prune.eval_batch_size, "prune");
        if (p.contains("rescoring")) c.prune.rescoring = parse_rescoring(p.at("rescoring").get<std::string>());
        if (p.contains("score")) c.prune.score = parse_score_rule(p.at("score").get<std::string>());
        detail::read(p, "min_channels_per_layer", c.prune.min_channels_per_layer, "prune");
    }
    detail::read(j, "p_grid", c.p_grid, "");
    if (j.contains("fpgm")) {
        const auto& f = j.at("fpgm");
        detail::check_keys(f, "fpgm", {"enabled", "gm_fraction", "norm_fraction"});
        detail::read(f, "enabled", c.fpgm.enabled, "fpgm");
        detail::read(f, "gm_fraction", c.fpgm.ratio.gm_fraction, "fpgm");
        detail::read(f, "norm_fraction", c.fpgm.ratio.norm_fraction, "fpgm");
    }
    detail::read(j, "output_dir", c.output_dir, "");
    detail::read(j, "seed", c.seed, "");
    return c;
} catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
}

/// Applies "a.b.c=value" to the raw document before it is interpreted.
inline void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not KEY=VALUE");
    const std::string path = assignment.substr(0, eq);
    json* node = &doc;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) {
        if (part.empty()) throw ConfigError("override key '" + path + "' has an empty component");
        parts.push_back(part);
    }
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object()) throw ConfigError("override key '" + path + "' descends into a non-object");
        node = &(*node)[parts[i]];
        if (node->is_null()) *node = json::object();
    }
    if (!node->is_object()) throw ConfigError("override key '" + path + "' descends into a non-object");
    (*node)[parts.back()] = detail::parse_override_value(assignment.substr(eq + 1));
}

inline json read_config_document(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    try {
        return json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// Config file (optional) + overrides, validated.
inline ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                               const std::vector<std::string>& overrides = {}) {
    json doc = path.empty() ? json::object() : read_config_document(path);
    for (const auto& o : overrides) apply_override(doc, o);
    ExperimentConfig c = config_from_json(doc);
    c.validate();
    return c;
}

inline void ExperimentConfig::validate() const {
    const auto& a = architecture;
    if (a.family == "chain") {
        if (a.widths.empty()) throw ConfigError("architecture.widths must be nonempty for a chain");
        if (!a.pool_after.empty() && a.pool_after.size() != a.widths.size())
            throw ConfigError("architecture.pool_after must match architecture.widths");
        for (int w : a.widths)
            if (w < 1) throw ConfigError("architecture.widths must be positive");
    } else if (a.family != "vgg" && a.family != "resnet") {
        throw ConfigError("unknown architecture.family '" + a.family + "' (expected vgg|resnet|chain)");
    }
    if (dataset.name == "synthetic") {
        if (dataset.classes < 2) throw ConfigError("dataset.classes must be >= 2");
        if (dataset.samples < 10) throw ConfigError("dataset.samples must be >= 10");
    } else if (dataset.name == "cifar10" || dataset.name == "cifar100") {
        if (dataset.path.empty()) throw ConfigError("dataset.path is required for " + dataset.name);
        if (!std::filesystem::exists(dataset.path))
            throw ConfigError("dataset.path '" + dataset.path + "' does not exist");
    } else {
        throw ConfigError("unknown dataset.name '" + dataset.name + "'");
    }
    baseline.validate();
    sparse.validate();
    retrain.validate();
    penalty.validate();
    if (lambda_grid.empty()) throw ConfigError("lambda_grid must be nonempty");
    for (double l : lambda_grid)
        if (!(l >= 0)) throw ConfigError("lambda_grid values must be >= 0");
    if (selection_tolerance < 0) throw ConfigError("selection_tolerance must be >= 0");
    if (p_grid.empty()) throw ConfigError("p_grid must be nonempty");
    for (double p : p_grid)
        if (!(p > 0 && p < 1)) throw ConfigError("p_grid values must be in (0, 1)");
    PruneConfig pc = prune;
    pc.pruning_rate = p_grid.front();
    pc.validate();
    fpgm.ratio.validate();
    if (output_dir.empty()) throw ConfigError("output_dir must be nonempty");
}

inline int dataset_classes(const ExperimentConfig& c) {
    if (c.dataset.name == "cifar10") return 10;
    if (c.dataset.name == "cifar100") return 100;
    return c.dataset.classes;
}

inline std::size_t dataset_channels(const ExperimentConfig& c) {
    return c.dataset.name == "synthetic" ? c.dataset.channels : 3;
}

/// Uninitialized network for the configured architecture.
inline NetworkSpec build_network(const ExperimentConfig& c) {
    const auto& a = c.architecture;
    const int classes = dataset_classes(c);
    const int in = static_cast<int>(dataset_channels(c));
    if (a.family == "vgg") return build_vgg(a.depth, classes, a.base_width, in);
    if (a.family == "resnet") return build_resnet(a.depth, classes, a.base_width, in);
    std::vector<bool> pools = a.pool_after;
    if (pools.empty()) pools.assign(a.widths.size(), false);
    return build_chain(a.widths, pools, classes, in, a.batchnorm);
}

inline DatasetHandle load_dataset(const ExperimentConfig& c, std::uint64_t seed) {
    const auto& d = c.dataset;
    if (d.name == "synthetic")
        return make_synthetic_dataset(d.classes, d.samples, d.image_size, seed, d.channels, d.noise);
    return load_cifar_binary(d.path, d.name);
}

}  // namespace hgsp
