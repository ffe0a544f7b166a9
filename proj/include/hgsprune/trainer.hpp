#pragma once

// Training stages: baseline, sparse (cross-entropy + lambda * R(W)) and
// retrain-from-scratch, all by SGD with momentum and weight decay.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hgsprune/backend.hpp"
#include "hgsprune/dataset.hpp"
#include "hgsprune/error.hpp"
#include "hgsprune/netmodel.hpp"
#include "hgsprune/regularizers.hpp"

namespace hgsp {

/// Learning-rate step: multiply by `factor` from epoch `at` on. With
/// `fraction`, `at` is a fraction of the run length (floored to an epoch).
struct LrMilestone {
    double at = 0.0;
    double factor = 1.0;
    bool fraction = false;
    friend bool operator==(const LrMilestone&, const LrMilestone&) = default;
};

struct TrainConfig {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t batch_size = 128;
    int epochs = 200;
    std::vector<LrMilestone> milestones;
    std::uint64_t seed = 0;
    bool augment = false;

    /// Initial networks: lr 0.1, x0.2 after epochs 60, 120 and 160.
    static TrainConfig baseline_schedule() {
        TrainConfig c;
        c.milestones = {{60, 0.2, false}, {120, 0.2, false}, {160, 0.2, false}};
        return c;
    }
    /// Sparse stage: 100 epochs, lr 0.01, x0.1 after 1/3 and 2/3 of training.
    static TrainConfig sparse_schedule() {
        TrainConfig c;
        c.lr = 0.01;
        c.epochs = 100;
        c.milestones = {{1.0 / 3.0, 0.1, true}, {2.0 / 3.0, 0.1, true}};
        return c;
    }

    int milestone_epoch(const LrMilestone& m) const {
        return m.fraction ? static_cast<int>(std::floor(m.at * epochs)) : static_cast<int>(m.at);
    }

    double lr_at(int epoch) const {
        double r = lr;
        for (const auto& m : milestones)
            if (epoch >= milestone_epoch(m)) r *= m.factor;
        return r;
    }

    void validate() const {
        if (!(lr > 0)) throw ConfigError("learning rate must be positive");
        if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
        if (weight_decay < 0) throw ConfigError("weight decay must be >= 0");
        if (batch_size == 0) throw ConfigError("batch size must be >= 1");
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
        double prev = -1;
        for (const auto& m : milestones) {
            if (!(m.factor > 0)) throw ConfigError("milestone factors must be positive");
            const double at = m.fraction ? m.at * std::max(epochs, 1) : m.at;
            if (at <= prev) throw ConfigError("learning-rate milestones must be strictly increasing");
            prev = at;
        }
    }
};

struct EpochRecord {
    std::string stage;
    int epoch = 0;
    double train_loss = 0;   // mean minibatch cross-entropy
    double penalty = 0;      // network_penalty at epoch end (unscaled)
    double train_acc = 0;
    double test_acc = 0;
    double sparsity = 0;
    double lr = 0;
    double strength = 0;            // lambda
    double weight_decay_term = 0;   // wd/2 * ||params||^2 at epoch end
    double objective() const { return train_loss + strength * penalty + weight_decay_term; }
};

/// Called after every epoch, e.g. for progress output.
using EpochHook = std::function<void(const EpochRecord&)>;

struct TrainResult {
    NetworkSpec net;
    std::vector<EpochRecord> history;
    double train_acc = 0;
    double test_acc = 0;
};

/// Fraction of conv weights with |w| < threshold.
inline double sparsity_ratio(const NetworkSpec& net, double threshold = 1e-3) {
    std::size_t zero = 0, total = 0;
    for (const auto& l : net.layers) {
        for (double w : l.weights.storage())
            if (std::fabs(w) < threshold) ++zero;
        total += l.weights.size();
    }
    return total ? static_cast<double>(zero) / static_cast<double>(total) : 0.0;
}

/// wd/2 times the squared norm of every trainable parameter.
inline double weight_decay_term(const NetworkSpec& net, double weight_decay) {
    long double s = 0;
    auto add = [&](const auto& v) {
        for (double x : v) s += static_cast<long double>(x) * x;
    };
    for (const auto& l : net.layers) {
        add(l.weights.storage());
        if (l.has_batchnorm) {
            add(l.bn.scale);
            add(l.bn.shift);
        }
    }
    add(net.classifier.weights.storage());
    add(net.classifier.bias);
    return static_cast<double>(0.5L * weight_decay * s);
}

/// Eval-mode loss/accuracy over a whole split, in fixed-size chunks.
template <TrainingBackend B = CpuBackend>
Evaluation evaluate_split(const NetworkSpec& net, const DatasetHandle& data, bool test, const B& backend = B{},
                          const ChannelMask* mask = nullptr, std::size_t chunk = 256) {
    Evaluation total;
    long double loss = 0;
    const std::size_t n = test ? data.test_size() : data.train_size();
    for (std::size_t b = 0; b < n; b += chunk) {
        const std::size_t e = std::min(n, b + chunk);
        const Batch batch = test ? data.test_batch(b, e) : data.train_range(b, e);
        const Evaluation ev = backend.evaluate(net, batch, mask);
        loss += static_cast<long double>(ev.loss) * static_cast<long double>(ev.count);
        total.correct += ev.correct;
        total.count += ev.count;
    }
    total.loss = total.count ? static_cast<double>(loss / total.count) : 0.0;
    return total;
}

inline double accuracy(const Evaluation& ev) {
    return ev.count ? static_cast<double>(ev.correct) / static_cast<double>(ev.count) : 0.0;
}

namespace detail {

struct Momentum {
    std::vector<std::vector<double>> conv, bn_scale, bn_shift;
    std::vector<double> fc_w, fc_b;

    explicit Momentum(const NetworkSpec& net) {
        for (const auto& l : net.layers) {
            conv.emplace_back(l.weights.size(), 0.0);
            bn_scale.emplace_back(l.has_batchnorm ? l.bn.size() : 0, 0.0);
            bn_shift.emplace_back(l.has_batchnorm ? l.bn.size() : 0, 0.0);
        }
        fc_w.assign(net.classifier.weights.size(), 0.0);
        fc_b.assign(net.classifier.bias.size(), 0.0);
    }
};

inline void sgd_update(std::span<double> p, std::span<const double> g, std::vector<double>& buf, double lr,
                       double momentum, double wd) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = g[i] + wd * p[i];
        buf[i] = momentum * buf[i] + d;
        p[i] -= lr * buf[i];
    }
}

}  // namespace detail

/// Shared SGD loop. With a penalty, lambda * dR/dW is added to the conv
/// weight gradients (and the classifier's when configured).
template <TrainingBackend B = CpuBackend>
TrainResult train_stage(NetworkSpec net, const DatasetHandle& data, const TrainConfig& cfg, const std::string& stage,
                        const std::optional<PenaltyConfig>& penalty = std::nullopt, const B& backend = B{},
                        const EpochHook& hook = {}) {
    cfg.validate();
    data.validate();
    if (penalty) penalty->validate();
    if (static_cast<std::size_t>(net.input_channels) != data.channels)
        throw StructuralError("network expects " + std::to_string(net.input_channels) + " channels, dataset has " +
                              std::to_string(data.channels));
    if (net.classifier.out_features != data.classes)
        throw StructuralError("network has " + std::to_string(net.classifier.out_features) + " outputs, dataset has " +
                              std::to_string(data.classes) + " classes");
    TrainResult result;
    const double lambda = penalty ? penalty->strength : 0.0;
    std::mt19937_64 rng(cfg.seed);
    detail::Momentum mom(net);
    std::vector<std::size_t> order(data.train_size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr_at(epoch);
        std::shuffle(order.begin(), order.end(), rng);
        long double loss_sum = 0;
        std::size_t correct = 0, seen = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t e = std::min(order.size(), b + cfg.batch_size);
            const Batch batch = data.train_batch(std::span<const std::size_t>(order).subspan(b, e - b),
                                                 cfg.augment ? &rng : nullptr);
            TrainStep step = backend.train_step(net, batch);
            if (!std::isfinite(step.eval.loss))
                throw TrainingError(stage + ": non-finite loss at epoch " + std::to_string(epoch) + ", sample offset " +
                                    std::to_string(b) + " (lr " + std::to_string(lr) + ", lambda " +
                                    std::to_string(lambda) + ")");
            loss_sum += static_cast<long double>(step.eval.loss) * batch.size();
            correct += step.eval.correct;
            seen += batch.size();
            apply_running_stats(net, step.bn_stats);
            if (lambda != 0.0) {
                for (std::size_t l = 0; l < net.layers.size(); ++l) {
                    const Tensor pg = penalty_gradient(net.layers[l], *penalty);
                    for (std::size_t i = 0; i < pg.size(); ++i) step.grads.conv[l][i] += lambda * pg[i];
                }
                if (penalty->regularize_classifier) {
                    const Tensor pg = classifier_penalty_gradient(net.classifier, *penalty);
                    for (std::size_t i = 0; i < pg.size(); ++i) step.grads.fc_weights[i] += lambda * pg[i];
                }
            }
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
                auto& layer = net.layers[l];
                detail::sgd_update(layer.weights.values(), step.grads.conv[l].values(), mom.conv[l], lr, cfg.momentum,
                                   cfg.weight_decay);
                if (layer.has_batchnorm) {
                    detail::sgd_update(layer.bn.scale, step.grads.bn_scale[l], mom.bn_scale[l], lr, cfg.momentum,
                                       cfg.weight_decay);
                    detail::sgd_update(layer.bn.shift, step.grads.bn_shift[l], mom.bn_shift[l], lr, cfg.momentum,
                                       cfg.weight_decay);
                }
            }
            detail::sgd_update(net.classifier.weights.values(), step.grads.fc_weights.values(), mom.fc_w, lr,
                               cfg.momentum, cfg.weight_decay);
            detail::sgd_update(net.classifier.bias, step.grads.fc_bias, mom.fc_b, lr, cfg.momentum, cfg.weight_decay);
        }
        EpochRecord rec;
        rec.stage = stage;
        rec.epoch = epoch + 1;
        rec.lr = lr;
        rec.strength = lambda;
        rec.train_loss = seen ? static_cast<double>(loss_sum / seen) : 0.0;
        rec.train_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
        rec.penalty = penalty ? network_penalty(net, *penalty) : 0.0;
        rec.test_acc = accuracy(evaluate_split(net, data, true, backend));
        rec.sparsity = sparsity_ratio(net);
        rec.weight_decay_term = weight_decay_term(net, cfg.weight_decay);
        result.history.push_back(rec);
        if (hook) hook(rec);
    }
    result.train_acc = accuracy(evaluate_split(net, data, false, backend));
    result.test_acc = accuracy(evaluate_split(net, data, true, backend));
    result.net = std::move(net);
    return result;
}

/// Step 1: train the given (initialized) network without a penalty.
template <TrainingBackend B = CpuBackend>
TrainResult train_baseline(NetworkSpec net, const DatasetHandle& data, const TrainConfig& cfg, const B& backend = B{},
                           const EpochHook& hook = {}) {
    return train_stage(std::move(net), data, cfg, "baseline", std::nullopt, backend, hook);
}

/// Step 2: continue from baseline weights on cross-entropy + lambda * R(W).
template <TrainingBackend B = CpuBackend>
TrainResult train_sparse(NetworkSpec net, const DatasetHandle& data, const TrainConfig& cfg,
                         const PenaltyConfig& penalty, const B& backend = B{}, const EpochHook& hook = {}) {
    return train_stage(std::move(net), data, cfg, "sparse", penalty, backend, hook);
}

/// Step 4: fresh random initialization of the pruned architecture, then
/// the baseline schedule.
template <TrainingBackend B = CpuBackend>
TrainResult retrain_from_scratch(NetworkSpec pruned, const DatasetHandle& data, const TrainConfig& cfg,
                                 std::uint64_t init_seed, const B& backend = B{}, const EpochHook& hook = {}) {
    initialize_weights(pruned, init_seed);
    return train_stage(std::move(pruned), data, cfg, "retrain", std::nullopt, backend, hook);
}

/// Cross-entropy + lambda * R(W) + weight-decay term on one batch
/// (eval-mode forward).
struct ObjectiveTerms {
    double cross_entropy = 0;
    double penalty = 0;
    double weight_decay = 0;
    double total = 0;
};

template <TrainingBackend B = CpuBackend>
ObjectiveTerms objective(const NetworkSpec& net, const Batch& batch, const PenaltyConfig& penalty,
                         double weight_decay, const B& backend = B{}) {
    ObjectiveTerms t;
    t.cross_entropy = backend.evaluate(net, batch, nullptr).loss;
    t.penalty = network_penalty(net, penalty);
    t.weight_decay = weight_decay_term(net, weight_decay);
    t.total = t.cross_entropy + penalty.strength * t.penalty + t.weight_decay;
    return t;
}

struct SweepPoint {
    double lambda = 0;
    TrainResult run;
    double sparsity = 0;
    double test_acc = 0;
};

/// One sparse run per lambda from the same starting weights and seed;
/// returned in descending lambda order.
template <TrainingBackend B = CpuBackend>
std::vector<SweepPoint> lambda_sweep(const NetworkSpec& net, const DatasetHandle& data, const TrainConfig& cfg,
                                     const PenaltyConfig& penalty_template, std::vector<double> grid,
                                     const B& backend = B{}, const EpochHook& hook = {}) {
    if (grid.empty()) throw ConfigError("lambda grid must be nonempty");
    std::sort(grid.begin(), grid.end(), std::greater<>{});
    std::vector<SweepPoint> out;
    for (double lambda : grid) {
        PenaltyConfig p = penalty_template;
        p.strength = lambda;
        SweepPoint pt;
        pt.lambda = lambda;
        pt.run = train_sparse(net, data, cfg, p, backend, hook);
        pt.sparsity = sparsity_ratio(pt.run.net);
        pt.test_acc = pt.run.test_acc;
        out.push_back(std::move(pt));
    }
    return out;
}

/// Index of the sweep point with maximum sparsity among those within
/// `accuracy_tolerance` (fraction) of the best accuracy; ties -> larger lambda.
inline std::size_t select_best(const std::vector<SweepPoint>& sweep, double accuracy_tolerance) {
    if (sweep.empty()) throw ConfigError("select_best: empty sweep");
    double best_acc = -1;
    for (const auto& p : sweep) best_acc = std::max(best_acc, p.test_acc);
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        const auto& p = sweep[i];
        if (p.test_acc < best_acc - accuracy_tolerance) continue;
        if (!pick || p.sparsity > sweep[*pick].sparsity ||
            (p.sparsity == sweep[*pick].sparsity && p.lambda > sweep[*pick].lambda))
            pick = i;
    }
    return *pick;
}

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history,
                              bool append = false) {
    const bool header = !append || !std::filesystem::exists(path);
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    if (header) out << "stage,epoch,train_loss,penalty,train_acc,test_acc,sparsity\n";
    char buf[512];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.stage.c_str(), r.epoch,
                      r.train_loss, r.penalty, r.train_acc, r.test_acc, r.sparsity);
        out << buf;
    }
}

}  // namespace hgsp
