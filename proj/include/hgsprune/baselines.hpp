#pragma once

// FPGM-mix comparison method: per layer, prune the filters closest to the
// geometric median (distance-sum surrogate) plus a share of the
// smallest-norm filters.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "hgsprune/error.hpp"
#include "hgsprune/netmodel.hpp"
#include "hgsprune/pruner.hpp"

namespace hgsp {

inline constexpr const char* kFpgmMixTag = "fpgm_mix";

struct MixRatio {
    double gm_fraction = 0.75;
    double norm_fraction = 0.25;

    void validate() const {
        if (gm_fraction < 0 || norm_fraction < 0) throw ConfigError("mix fractions must be nonnegative");
        if (std::fabs(gm_fraction + norm_fraction - 1.0) > 1e-12) throw ConfigError("mix fractions must sum to 1");
    }
};

/// Euclidean norm of each flattened filter.
inline std::vector<double> filter_norms(const ConvLayerSpec& layer) {
    const std::size_t fs = layer.filter_size();
    std::vector<double> out(static_cast<std::size_t>(layer.out_channels));
    for (std::size_t c = 0; c < out.size(); ++c) {
        long double s = 0;
        for (std::size_t i = 0; i < fs; ++i) {
            const double w = layer.weights[c * fs + i];
            s += static_cast<long double>(w) * w;
        }
        out[c] = std::sqrt(static_cast<double>(s));
    }
    return out;
}

/// Sum of distances from each filter to every other filter of the layer;
/// lower means more central, i.e. more replaceable.
inline std::vector<double> gm_scores(const ConvLayerSpec& layer) {
    const auto n = static_cast<std::size_t>(layer.out_channels);
    if (n < 2) throw ConfigError("geometric-median scores need at least 2 filters in layer " +
                                 std::to_string(layer.layer_id));
    const std::size_t fs = layer.filter_size();
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            long double s = 0;
            for (std::size_t i = 0; i < fs; ++i) {
                const double d = layer.weights[a * fs + i] - layer.weights[b * fs + i];
                s += static_cast<long double>(d) * d;
            }
            dist[a * n + b] = dist[b * n + a] = std::sqrt(static_cast<double>(s));
        }
    std::vector<double> out(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        long double s = 0;
        for (std::size_t b = 0; b < n; ++b) s += dist[a * n + b];
        out[a] = static_cast<double>(s);
    }
    return out;
}

struct LayerPick {
    int layer = 0;
    std::size_t requested = 0;  // floor(C_l * P)
    std::vector<int> by_gm;
    std::vector<int> by_norm;
};

struct BaselineSelection {
    ChannelMask mask;
    std::vector<LayerPick> layers;
    std::vector<std::string> warnings;
    std::string method = kFpgmMixTag;
};

namespace detail {

/// Indices of the `k` smallest scores not in `taken`, ties to the lower index.
inline std::vector<int> lowest(const std::vector<double>& score, std::size_t k, const std::vector<bool>& taken) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < score.size(); ++i)
        if (!taken[i]) idx.push_back(static_cast<int>(i));
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return score[static_cast<std::size_t>(a)] < score[static_cast<std::size_t>(b)];
    });
    idx.resize(std::min(k, idx.size()));
    return idx;
}

}  // namespace detail

/// Per prunable layer: n_l = floor(C_l * P) filters (capped by the layer
/// floor), floor(n_l * gm_fraction) with the lowest gm_scores and the rest
/// with the lowest filter_norms among those left.
inline BaselineSelection fpgm_mix_select(const NetworkSpec& net, double pruning_rate, const MixRatio& ratio = {},
                                         int min_channels_per_layer = 1) {
    if (!(pruning_rate > 0.0 && pruning_rate < 1.0)) throw ConfigError("pruning rate must be in (0, 1)");
    if (min_channels_per_layer < 1) throw ConfigError("min_channels_per_layer must be >= 1");
    ratio.validate();
    BaselineSelection sel;
    sel.mask = ChannelMask::ones(net);
    const auto prunable = prunable_layers(net);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (!prunable[l]) continue;
        const auto& layer = net.layers[l];
        const auto c = static_cast<std::size_t>(layer.out_channels);
        LayerPick pick;
        pick.layer = static_cast<int>(l);
        pick.requested = floor_fraction(c, pruning_rate);
        const std::size_t cap = c - std::min(c, static_cast<std::size_t>(min_channels_per_layer));
        const std::size_t n = std::min(pick.requested, cap);
        if (n < pick.requested)
            sel.warnings.push_back("layer " + std::to_string(l) + ": pruning " + std::to_string(n) + " of " +
                                   std::to_string(pick.requested) + " requested filters (layer floor)");
        if (n > 0) {
            const std::size_t n_gm = floor_fraction(n, ratio.gm_fraction);
            std::vector<bool> taken(c, false);
            pick.by_gm = detail::lowest(gm_scores(layer), n_gm, taken);
            for (int i : pick.by_gm) taken[static_cast<std::size_t>(i)] = true;
            pick.by_norm = detail::lowest(filter_norms(layer), n - n_gm, taken);
            for (int i : pick.by_gm) sel.mask.clear(static_cast<int>(l), i);
            for (int i : pick.by_norm) sel.mask.clear(static_cast<int>(l), i);
        }
        sel.layers.push_back(std::move(pick));
    }
    return sel;
}

/// One row per selected filter: method,layer,channel,criterion.
inline void write_baseline_log(const std::filesystem::path& path, const BaselineSelection& sel) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "method,layer,channel,criterion\n";
    for (const auto& p : sel.layers) {
        for (int c : p.by_gm) out << sel.method << ',' << p.layer << ',' << c << ",gm\n";
        for (int c : p.by_norm) out << sel.method << ',' << p.layer << ',' << c << ",norm\n";
    }
}

}  // namespace hgsp
