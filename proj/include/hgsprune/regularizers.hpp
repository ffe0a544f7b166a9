#pragma once

// Structured sparse penalties over conv weight tensors.
//
//   R(W)      = sum_g r(W_g)                      (flat)
//   R_SQ(W)   = sum_g (sum_k r(W_{g,k}))^2        (hierarchical squared)
//
// Groups are output-channel filters (neuron-wise) or the kernels attached
// to one input channel (feature-wise). Sums accumulate in long double.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hgsprune/error.hpp"
#include "hgsprune/netmodel.hpp"
#include "hgsprune/tensor.hpp"

namespace hgsp {

enum class GroupingScheme { NeuronWise, FeatureWise };
enum class BaseCriterion { GroupLasso, ExclusiveSparsity, GroupLHalf };
enum class Hierarchy { None, Squared };

/// Added to the group-L1/2 derivative denominator.
inline constexpr double kLHalfFloor = 1e-12;

struct PenaltyConfig {
    GroupingScheme grouping = GroupingScheme::FeatureWise;
    BaseCriterion base = BaseCriterion::GroupLHalf;
    Hierarchy hierarchical = Hierarchy::Squared;
    double strength = 0.0;
    /// Also penalize the classifier weights (treated as K = 1 kernels).
    bool regularize_classifier = false;

    void validate() const {
        if (!(strength >= 0.0) || !std::isfinite(strength))
            throw ConfigError("penalty strength must be a finite value >= 0");
    }
    friend bool operator==(const PenaltyConfig&, const PenaltyConfig&) = default;
};

inline std::string_view to_string(GroupingScheme g) {
    return g == GroupingScheme::NeuronWise ? "neuron" : "feature";
}
inline std::string_view to_string(BaseCriterion b) {
    switch (b) {
        case BaseCriterion::GroupLasso: return "group_lasso";
        case BaseCriterion::ExclusiveSparsity: return "exclusive_sparsity";
        case BaseCriterion::GroupLHalf: return "group_l12";
    }
    return "?";
}
inline std::string_view to_string(Hierarchy h) { return h == Hierarchy::None ? "none" : "squared"; }

inline GroupingScheme parse_grouping(std::string_view s) {
    if (s == "neuron") return GroupingScheme::NeuronWise;
    if (s == "feature") return GroupingScheme::FeatureWise;
    throw ConfigError("unknown grouping '" + std::string(s) + "' (expected neuron|feature)");
}
inline BaseCriterion parse_criterion(std::string_view s) {
    if (s == "group_lasso") return BaseCriterion::GroupLasso;
    if (s == "exclusive_sparsity") return BaseCriterion::ExclusiveSparsity;
    if (s == "group_l12") return BaseCriterion::GroupLHalf;
    throw ConfigError("unknown criterion '" + std::string(s) +
                      "' (expected group_lasso|exclusive_sparsity|group_l12)");
}
inline Hierarchy parse_hierarchy(std::string_view s) {
    if (s == "none") return Hierarchy::None;
    if (s == "squared") return Hierarchy::Squared;
    throw ConfigError("unknown hierarchical mode '" + std::string(s) + "' (expected none|squared)");
}

inline constexpr GroupingScheme kAllGroupings[] = {GroupingScheme::NeuronWise, GroupingScheme::FeatureWise};
inline constexpr BaseCriterion kAllCriteria[] = {BaseCriterion::GroupLasso, BaseCriterion::ExclusiveSparsity,
                                                 BaseCriterion::GroupLHalf};
inline constexpr Hierarchy kAllHierarchies[] = {Hierarchy::None, Hierarchy::Squared};

/// One group of a layer: views onto its member K x K kernels.
template <typename T>
struct GroupSlice {
    int layer_id = 0;
    int group = 0;
    std::vector<std::span<const T>> kernels;

    std::size_t size() const noexcept {
        std::size_t n = 0;
        for (const auto& k : kernels) n += k.size();
        return n;
    }
    std::vector<T> flatten() const {
        std::vector<T> v;
        v.reserve(size());
        for (const auto& k : kernels) v.insert(v.end(), k.begin(), k.end());
        return v;
    }
};

/// Partitions a (out, in, K, K) weight buffer into groups.
template <typename T>
std::vector<GroupSlice<T>> group_slices(std::span<const T> weights, std::size_t out, std::size_t in,
                                        std::size_t kernel_area, GroupingScheme scheme, int layer_id = 0) {
    if (weights.size() != out * in * kernel_area)
        throw StructuralError("group_slices: weight buffer does not match (out, in, K, K)");
    std::vector<GroupSlice<T>> groups;
    if (scheme == GroupingScheme::NeuronWise) {
        groups.resize(out);
        for (std::size_t o = 0; o < out; ++o) {
            groups[o].layer_id = layer_id;
            groups[o].group = static_cast<int>(o);
            for (std::size_t i = 0; i < in; ++i)
                groups[o].kernels.push_back(weights.subspan((o * in + i) * kernel_area, kernel_area));
        }
    } else {
        groups.resize(in);
        for (std::size_t i = 0; i < in; ++i) {
            groups[i].layer_id = layer_id;
            groups[i].group = static_cast<int>(i);
            for (std::size_t o = 0; o < out; ++o)
                groups[i].kernels.push_back(weights.subspan((o * in + i) * kernel_area, kernel_area));
        }
    }
    return groups;
}

inline std::vector<GroupSlice<double>> group_slices(const ConvLayerSpec& layer, GroupingScheme scheme) {
    return group_slices<double>(layer.weights.values(), static_cast<std::size_t>(layer.out_channels),
                                static_cast<std::size_t>(layer.in_channels), layer.kernel_area(), scheme,
                                layer.layer_id);
}

namespace detail {

using Accum = long double;

template <typename T>
Accum sum_squares(std::span<const std::span<const T>> parts) {
    Accum s = 0;
    for (const auto& p : parts)
        for (T v : p) s += static_cast<Accum>(v) * static_cast<Accum>(v);
    return s;
}

template <typename T>
Accum sum_abs(std::span<const std::span<const T>> parts) {
    Accum s = 0;
    for (const auto& p : parts)
        for (T v : p) s += std::fabs(static_cast<Accum>(v));
    return s;
}

/// r(.) evaluated over the union of `parts`.
template <typename T>
Accum criterion(std::span<const std::span<const T>> parts, BaseCriterion c) {
    switch (c) {
        case BaseCriterion::GroupLasso: return std::sqrt(sum_squares(parts));
        case BaseCriterion::ExclusiveSparsity: {
            const Accum s = sum_abs(parts);
            return 0.5L * s * s;
        }
        case BaseCriterion::GroupLHalf: return std::sqrt(std::sqrt(sum_squares(parts)));
    }
    return 0;
}

/// Adds scale * dr/dv for r over `parts` into `grad` (positions relative to `base`).
template <typename T>
void accumulate_criterion_gradient(std::span<const std::span<const T>> parts, BaseCriterion c, Accum scale,
                                   const T* base, std::vector<Accum>& grad) {
    Accum coef = 0;
    switch (c) {
        case BaseCriterion::GroupLasso: {
            const Accum n = std::sqrt(sum_squares(parts));
            if (n == 0) return;
            coef = 1 / n;
            break;
        }
        case BaseCriterion::GroupLHalf: {
            const Accum n = std::sqrt(sum_squares(parts));
            if (n == 0) return;
            coef = 1 / (2 * (n * std::sqrt(n) + static_cast<Accum>(kLHalfFloor)));
            break;
        }
        case BaseCriterion::ExclusiveSparsity: {
            const Accum s = sum_abs(parts);
            for (const auto& p : parts) {
                const std::size_t off = static_cast<std::size_t>(p.data() - base);
                for (std::size_t i = 0; i < p.size(); ++i) {
                    const Accum v = p[i];
                    const Accum sgn = v > 0 ? 1 : (v < 0 ? -1 : 0);
                    grad[off + i] += scale * s * sgn;
                }
            }
            return;
        }
    }
    for (const auto& p : parts) {
        const std::size_t off = static_cast<std::size_t>(p.data() - base);
        for (std::size_t i = 0; i < p.size(); ++i) grad[off + i] += scale * coef * static_cast<Accum>(p[i]);
    }
}

}  // namespace detail

/// r(W_g) over the flattened group.
template <typename T>
double base_penalty(const GroupSlice<T>& group, BaseCriterion criterion) {
    return static_cast<double>(
        detail::criterion<T>(std::span<const std::span<const T>>(group.kernels), criterion));
}

/// r over a plain vector of values (a group given by its flattened values).
template <typename T>
double base_penalty(std::span<const T> values, BaseCriterion criterion) {
    const std::span<const T> one[] = {values};
    return static_cast<double>(detail::criterion<T>(std::span<const std::span<const T>>(one), criterion));
}

/// (sum_k r(W_{g,k}))^2 over the member kernels of the group.
template <typename T>
double hierarchical_penalty(const GroupSlice<T>& group, BaseCriterion criterion) {
    detail::Accum s = 0;
    for (const auto& k : group.kernels) {
        const std::span<const T> one[] = {k};
        s += detail::criterion<T>(std::span<const std::span<const T>>(one), criterion);
    }
    return static_cast<double>(s * s);
}

/// R(W) of a raw (out, in, K, K) buffer.
template <typename T>
double weights_penalty(std::span<const T> weights, std::size_t out, std::size_t in, std::size_t kernel_area,
                       const PenaltyConfig& config) {
    detail::Accum total = 0;
    for (const auto& g : group_slices<T>(weights, out, in, kernel_area, config.grouping)) {
        if (config.hierarchical == Hierarchy::None) {
            total += detail::criterion<T>(std::span<const std::span<const T>>(g.kernels), config.base);
        } else {
            detail::Accum s = 0;
            for (const auto& k : g.kernels) {
                const std::span<const T> one[] = {k};
                s += detail::criterion<T>(std::span<const std::span<const T>>(one), config.base);
            }
            total += s * s;
        }
    }
    return static_cast<double>(total);
}

/// dR/dW of a raw (out, in, K, K) buffer, same layout. Zero norms yield a
/// zero subgradient.
template <typename T>
std::vector<T> weights_penalty_gradient(std::span<const T> weights, std::size_t out, std::size_t in,
                                        std::size_t kernel_area, const PenaltyConfig& config) {
    std::vector<detail::Accum> grad(weights.size(), 0);
    const T* base = weights.data();
    for (const auto& g : group_slices<T>(weights, out, in, kernel_area, config.grouping)) {
        const auto kernels = std::span<const std::span<const T>>(g.kernels);
        if (config.hierarchical == Hierarchy::None) {
            detail::accumulate_criterion_gradient<T>(kernels, config.base, 1, base, grad);
            continue;
        }
        detail::Accum s = 0;
        for (std::size_t k = 0; k < g.kernels.size(); ++k)
            s += detail::criterion<T>(kernels.subspan(k, 1), config.base);
        if (s == 0) continue;
        for (std::size_t k = 0; k < g.kernels.size(); ++k)
            detail::accumulate_criterion_gradient<T>(kernels.subspan(k, 1), config.base, 2 * s, base, grad);
    }
    return std::vector<T>(grad.begin(), grad.end());
}

/// Sum over all groups of the layer (base or hierarchical per config).
inline double layer_penalty(const ConvLayerSpec& layer, const PenaltyConfig& config) {
    return weights_penalty<double>(layer.weights.values(), static_cast<std::size_t>(layer.out_channels),
                                   static_cast<std::size_t>(layer.in_channels), layer.kernel_area(), config);
}

inline Tensor penalty_gradient(const ConvLayerSpec& layer, const PenaltyConfig& config) {
    return Tensor(layer.weights.shape(),
                  weights_penalty_gradient<double>(layer.weights.values(),
                                                   static_cast<std::size_t>(layer.out_channels),
                                                   static_cast<std::size_t>(layer.in_channels),
                                                   layer.kernel_area(), config));
}

inline double classifier_penalty(const ClassifierSpec& fc, const PenaltyConfig& config) {
    return weights_penalty<double>(fc.weights.values(), static_cast<std::size_t>(fc.out_features),
                                   static_cast<std::size_t>(fc.in_features), 1, config);
}

inline Tensor classifier_penalty_gradient(const ClassifierSpec& fc, const PenaltyConfig& config) {
    return Tensor(fc.weights.shape(),
                  weights_penalty_gradient<double>(fc.weights.values(), static_cast<std::size_t>(fc.out_features),
                                                   static_cast<std::size_t>(fc.in_features), 1, config));
}

/// Sum of layer penalties over conv layers; bias terms never enter, the
/// classifier only with regularize_classifier. Unscaled by strength.
inline double network_penalty(const NetworkSpec& net, const PenaltyConfig& config) {
    detail::Accum total = 0;
    for (const auto& l : net.layers) total += layer_penalty(l, config);
    if (config.regularize_classifier) total += classifier_penalty(net.classifier, config);
    return static_cast<double>(total);
}

}  // namespace hgsp
