#pragma once

// Greedy backward filter selection: repeatedly mask the prunable channel
// whose removal gives the lowest loss on a fixed evaluation batch, then
// cut the masked channels out with surgery.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "hgsprune/backend.hpp"
#include "hgsprune/dataset.hpp"
#include "hgsprune/error.hpp"
#include "hgsprune/netmodel.hpp"

namespace hgsp {

enum class Rescoring { EveryStep, Once };
enum class ScoreRule { MaskedLoss, AbsDelta };

inline std::string to_string(Rescoring r) { return r == Rescoring::EveryStep ? "every_step" : "once"; }
inline std::string to_string(ScoreRule s) { return s == ScoreRule::MaskedLoss ? "masked_loss" : "abs_delta"; }

inline Rescoring parse_rescoring(const std::string& s) {
    if (s == "every_step") return Rescoring::EveryStep;
    if (s == "once") return Rescoring::Once;
    throw ConfigError("unknown rescoring '" + s + "' (expected every_step|once)");
}

inline ScoreRule parse_score_rule(const std::string& s) {
    if (s == "masked_loss") return ScoreRule::MaskedLoss;
    if (s == "abs_delta") return ScoreRule::AbsDelta;
    throw ConfigError("unknown score rule '" + s + "' (expected masked_loss|abs_delta)");
}

/// floor(n * x), robust to x being the nearest double to a decimal
/// (0.3 * 10 must give 3, not 2).
inline std::size_t floor_fraction(std::size_t n, double x) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * x + 1e-9));
}

struct PruneConfig {
    double pruning_rate = 0.5;
    std::size_t eval_batch_size = 128;
    std::uint64_t seed = 0;
    /// `Once` ranks every candidate a single time and masks the best in
    /// order. It is a fast approximation of the per-step loop.
    Rescoring rescoring = Rescoring::EveryStep;
    ScoreRule score = ScoreRule::MaskedLoss;
    int min_channels_per_layer = 1;

    void validate() const {
        if (!(pruning_rate > 0.0 && pruning_rate < 1.0)) throw ConfigError("pruning rate must be in (0, 1)");
        if (eval_batch_size == 0) throw ConfigError("evaluation batch size must be >= 1");
        if (min_channels_per_layer < 1) throw ConfigError("min_channels_per_layer must be >= 1");
    }
};

/// Draws `n` training samples once under `seed`; n equal to the split size
/// gives the whole split in seeded order.
inline Batch sample_eval_batch(const DatasetHandle& data, std::size_t n, std::uint64_t seed) {
    if (n > data.train_size())
        throw ConfigError("evaluation batch of " + std::to_string(n) + " exceeds the " +
                          std::to_string(data.train_size()) + " training samples");
    std::vector<std::size_t> order(data.train_size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(n);
    return data.train_batch(order);
}

/// Scores each candidate by the batch loss with its bit additionally
/// cleared; delta is measured against the loss under `mask` itself.
template <TrainingBackend B = CpuBackend>
std::vector<ScoreRecord> score_candidates(const NetworkSpec& net, const ChannelMask& mask, const Batch& batch,
                                          const std::vector<ChannelRef>& candidates, int step = 0,
                                          const B& backend = B{}) {
    mask.check_matches(net);
    const double current = backend.evaluate(net, batch, &mask).loss;
    std::vector<ScoreRecord> out;
    out.reserve(candidates.size());
    ChannelMask trial = mask;
    for (const auto& c : candidates) {
        trial.clear(c.layer, c.channel);
        ScoreRecord r;
        r.layer = c.layer;
        r.channel = c.channel;
        r.masked_loss = backend.evaluate(net, batch, &trial).loss;
        r.delta = std::fabs(r.masked_loss - current);
        r.step = step;
        out.push_back(r);
        trial.set(c.layer, c.channel);
    }
    return out;
}

/// Every still-unmasked prunable channel, scored.
template <TrainingBackend B = CpuBackend>
std::vector<ScoreRecord> score_all_channels(const NetworkSpec& net, const ChannelMask& mask, const Batch& batch,
                                            int step = 0, const B& backend = B{}) {
    std::vector<ChannelRef> cand;
    for (const auto& c : prunable_channels(net))
        if (mask.kept(c.layer, c.channel)) cand.push_back(c);
    return score_candidates(net, mask, batch, cand, step, backend);
}

struct Selection {
    ChannelMask mask;
    std::vector<ScoreRecord> scores;
    std::size_t budget = 0;
    std::size_t selected = 0;
    bool stopped_early = false;
    std::string warning;
};

namespace detail {

inline double selection_score(const ScoreRecord& r, ScoreRule rule) {
    return rule == ScoreRule::MaskedLoss ? r.masked_loss : r.delta;
}

/// Lower score first; ties to the lower (layer, channel).
inline bool better(const ScoreRecord& a, const ScoreRecord& b, ScoreRule rule) {
    const double sa = selection_score(a, rule), sb = selection_score(b, rule);
    if (sa != sb) return sa < sb;
    return std::tie(a.layer, a.channel) < std::tie(b.layer, b.channel);
}

inline std::vector<ChannelRef> eligible(const NetworkSpec& net, const ChannelMask& mask, int floor) {
    std::vector<ChannelRef> out;
    for (const auto& c : prunable_channels(net)) {
        if (!mask.kept(c.layer, c.channel)) continue;
        if (mask.kept_in(static_cast<std::size_t>(c.layer)) <= static_cast<std::size_t>(floor)) continue;
        out.push_back(c);
    }
    return out;
}

}  // namespace detail

/// Greedy selection of `budget` channels on a fixed batch.
template <TrainingBackend B = CpuBackend>
Selection select_filters_on_batch(const NetworkSpec& net, const Batch& batch, const PruneConfig& cfg,
                                  std::size_t budget, const B& backend = B{}) {
    cfg.validate();
    if (budget < 1) throw ConfigError("pruning budget is zero; raise the pruning rate");
    Selection sel;
    sel.mask = ChannelMask::ones(net);
    sel.budget = budget;
    if (cfg.rescoring == Rescoring::EveryStep) {
        for (std::size_t n = 1; n <= budget; ++n) {
            const auto cand = detail::eligible(net, sel.mask, cfg.min_channels_per_layer);
            if (cand.empty()) break;
            auto recs = score_candidates(net, sel.mask, batch, cand, static_cast<int>(n), backend);
            std::size_t best = 0;
            for (std::size_t i = 1; i < recs.size(); ++i)
                if (detail::better(recs[i], recs[best], cfg.score)) best = i;
            recs[best].chosen = true;
            sel.mask.clear(recs[best].layer, recs[best].channel);
            ++sel.selected;
            sel.scores.insert(sel.scores.end(), recs.begin(), recs.end());
        }
    } else {
        auto recs = score_candidates(net, sel.mask, batch,
                                     detail::eligible(net, sel.mask, cfg.min_channels_per_layer), 1, backend);
        std::vector<std::size_t> order(recs.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return detail::better(recs[a], recs[b], cfg.score); });
        for (std::size_t i : order) {
            if (sel.selected == budget) break;
            const auto l = static_cast<std::size_t>(recs[i].layer);
            if (sel.mask.kept_in(l) <= static_cast<std::size_t>(cfg.min_channels_per_layer)) continue;
            sel.mask.clear(recs[i].layer, recs[i].channel);
            recs[i].chosen = true;
            ++sel.selected;
        }
        sel.scores = std::move(recs);
    }
    if (sel.selected < budget) {
        sel.stopped_early = true;
        sel.warning = "candidates exhausted after " + std::to_string(sel.selected) + " of " +
                      std::to_string(budget) + " channels (layer floor " +
                      std::to_string(cfg.min_channels_per_layer) + ")";
    }
    return sel;
}

/// Budget floor(C * P) over all conv channels, evaluation batch drawn from
/// the training split under cfg.seed.
template <TrainingBackend B = CpuBackend>
Selection select_filters(const NetworkSpec& net, const DatasetHandle& data, const PruneConfig& cfg,
                         const B& backend = B{}) {
    cfg.validate();
    const std::size_t budget =
        floor_fraction(static_cast<std::size_t>(net.total_conv_channels()), cfg.pruning_rate);
    const Batch batch = sample_eval_batch(data, cfg.eval_batch_size, cfg.seed);
    return select_filters_on_batch(net, batch, cfg, budget, backend);
}

inline PruneResult prune(const NetworkSpec& net, const ChannelMask& mask, std::vector<ScoreRecord> scores = {}) {
    PruneResult r = surgery(net, mask);
    r.scores = std::move(scores);
    return r;
}

inline void write_score_log(const std::filesystem::path& path, const std::vector<ScoreRecord>& scores) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "step,layer,channel,masked_loss,delta,chosen\n";
    char buf[256];
    for (const auto& r : scores) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%.17g,%d\n", r.step, r.layer, r.channel, r.masked_loss,
                      r.delta, r.chosen ? 1 : 0);
        out << buf;
    }
}

}  // namespace hgsp
