#pragma once

// Structural description of convolutional networks: weights, channel
// adjacency, residual ties, channel masks and physical surgery.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hgsprune/error.hpp"
#include "hgsprune/tensor.hpp"

namespace hgsp {

struct BatchNormParams {
    std::vector<double> scale;
    std::vector<double> shift;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    static BatchNormParams identity(std::size_t channels) {
        BatchNormParams bn;
        bn.scale.assign(channels, 1.0);
        bn.shift.assign(channels, 0.0);
        bn.running_mean.assign(channels, 0.0);
        bn.running_var.assign(channels, 1.0);
        return bn;
    }

    std::size_t size() const noexcept { return scale.size(); }

    friend bool operator==(const BatchNormParams&, const BatchNormParams&) = default;
};

/// One convolution (K x K, no bias) optionally followed by batch norm.
/// Weights are laid out (out_channels, in_channels, K, K).
struct ConvLayerSpec {
    int layer_id = 0;
    int out_channels = 0;
    int in_channels = 0;
    int kernel_size = 3;
    int stride = 1;
    int padding = 1;
    Tensor weights;
    bool has_batchnorm = true;
    BatchNormParams bn;

    std::size_t kernel_area() const noexcept {
        return static_cast<std::size_t>(kernel_size) * static_cast<std::size_t>(kernel_size);
    }
    std::size_t filter_size() const noexcept { return static_cast<std::size_t>(in_channels) * kernel_area(); }
    std::size_t parameter_count() const noexcept {
        return weights.size() + (has_batchnorm ? 2 * static_cast<std::size_t>(out_channels) : 0);
    }

    void validate() const {
        const std::vector<std::size_t> expected{static_cast<std::size_t>(out_channels),
                                                static_cast<std::size_t>(in_channels),
                                                static_cast<std::size_t>(kernel_size),
                                                static_cast<std::size_t>(kernel_size)};
        if (weights.shape() != expected) {
            throw StructuralError("conv layer " + std::to_string(layer_id) + ": weights shape " +
                                  weights.shape_string() + " does not match declared geometry");
        }
        if (has_batchnorm) {
            const auto c = static_cast<std::size_t>(out_channels);
            if (bn.scale.size() != c || bn.shift.size() != c || bn.running_mean.size() != c ||
                bn.running_var.size() != c) {
                throw StructuralError("conv layer " + std::to_string(layer_id) +
                                      ": batch-norm length differs from out_channels");
            }
        }
    }

    friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// Final fully connected layer (K = 1); keeps its bias.
struct ClassifierSpec {
    int in_features = 0;
    int out_features = 0;
    Tensor weights;  // (out_features, in_features)
    std::vector<double> bias;

    std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }

    friend bool operator==(const ClassifierSpec&, const ClassifierSpec&) = default;
};

enum class BlockKind { Plain, Basic };

/// Plain: conv-bn-relu, optional 2x2 max-pool.
/// Basic: relu(bn(conv_b(relu(bn(conv_a(x))))) + shortcut(x)); the
/// shortcut subsamples by conv_a's stride and zero-pads missing channels.
struct Block {
    BlockKind kind = BlockKind::Plain;
    int first = 0;
    int second = -1;
    bool pool_after = false;

    friend bool operator==(const Block&, const Block&) = default;
};

struct ChannelRef {
    int layer = 0;
    int channel = 0;
    friend auto operator<=>(const ChannelRef&, const ChannelRef&) = default;
};

enum class ConsumerKind { Conv, Classifier, Shortcut };

/// A place an output channel flows to. Channel i of the producer maps to
/// input slice i of a Conv consumer, input feature i of the Classifier,
/// or channel i of the residual sum formed after conv `layer` (Shortcut).
struct Consumer {
    ConsumerKind kind = ConsumerKind::Conv;
    int layer = -1;
    friend auto operator<=>(const Consumer&, const Consumer&) = default;
};

struct InputSlice {
    Consumer consumer;
    int slice = 0;
    friend auto operator<=>(const InputSlice&, const InputSlice&) = default;
};

struct NetworkSpec {
    std::string family = "plain";
    int input_channels = 3;
    std::vector<ConvLayerSpec> layers;
    ClassifierSpec classifier;
    std::vector<Block> blocks;

    // Derived from `blocks` by rebuild_structure().
    std::vector<std::vector<Consumer>> layer_consumers;
    std::vector<std::vector<int>> residual_groups;

    int num_conv_layers() const noexcept { return static_cast<int>(layers.size()); }

    int total_conv_channels() const noexcept {
        int total = 0;
        for (const auto& l : layers) total += l.out_channels;
        return total;
    }

    /// The conv layer that feeds the classifier.
    int final_conv_layer() const {
        if (blocks.empty()) throw StructuralError("network has no blocks");
        const auto& b = blocks.back();
        return b.kind == BlockKind::Basic ? b.second : b.first;
    }

    std::size_t parameter_count() const noexcept {
        std::size_t n = classifier.parameter_count();
        for (const auto& l : layers) n += l.parameter_count();
        return n;
    }

    /// Channel-level adjacency: (layer, out channel) -> consumer slices.
    std::map<ChannelRef, std::set<InputSlice>> adjacency() const {
        std::map<ChannelRef, std::set<InputSlice>> adj;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (int c = 0; c < layers[l].out_channels; ++c) {
                auto& dst = adj[{static_cast<int>(l), c}];
                for (const auto& con : layer_consumers[l]) dst.insert({con, c});
            }
        }
        return adj;
    }

    bool in_residual_group(int layer) const {
        for (const auto& g : residual_groups)
            if (std::find(g.begin(), g.end(), layer) != g.end()) return true;
        return false;
    }

    /// Recomputes layer_consumers and residual_groups from the block list.
    void rebuild_structure() {
        layer_consumers.assign(layers.size(), {});
        residual_groups.clear();
        // Layer whose output forms the current block's input (-1 = image).
        int stream = -1;
        // Outputs joined into the current residual stream by addition.
        std::vector<int> group;
        auto close_group = [&] {
            if (!group.empty()) residual_groups.push_back(group);
            group.clear();
        };
        for (const auto& b : blocks) {
            if (b.kind == BlockKind::Plain) {
                if (stream >= 0) layer_consumers[stream].push_back({ConsumerKind::Conv, b.first});
                close_group();
                stream = b.first;
                continue;
            }
            if (stream >= 0) {
                layer_consumers[stream].push_back({ConsumerKind::Conv, b.first});
                layer_consumers[stream].push_back({ConsumerKind::Shortcut, b.second});
            }
            layer_consumers[b.first].push_back({ConsumerKind::Conv, b.second});
            const bool identity = stream >= 0 && layers[b.first].stride == 1 &&
                                  layers[stream].out_channels == layers[b.second].out_channels;
            // A padded shortcut starts a new group of the wider width; its
            // producer already belongs to the previous one.
            if (!identity) close_group();
            if (group.empty() && identity) group.push_back(stream);
            group.push_back(b.second);
            stream = b.second;
        }
        close_group();
        if (stream >= 0) layer_consumers[stream].push_back({ConsumerKind::Classifier, -1});
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (const auto& con : layer_consumers[l]) {
                if (con.kind == ConsumerKind::Shortcut && !in_residual_group(static_cast<int>(l)))
                    residual_groups.push_back({static_cast<int>(l)});
            }
        }
    }

    void validate() const {
        if (layers.empty()) throw StructuralError("network has no conv layers");
        if (layer_consumers.size() != layers.size())
            throw StructuralError("structure not built; call rebuild_structure()");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (layers[l].layer_id != static_cast<int>(l))
                throw StructuralError("layer ids must equal their position");
            layers[l].validate();
            if (layer_consumers[l].empty())
                throw StructuralError("conv layer " + std::to_string(l) + " has no consumer");
            for (const auto& con : layer_consumers[l]) {
                if (con.kind == ConsumerKind::Conv &&
                    layers[con.layer].in_channels != layers[l].out_channels)
                    throw StructuralError("layer " + std::to_string(con.layer) +
                                          " input channels differ from producer " + std::to_string(l));
                if (con.kind == ConsumerKind::Classifier && classifier.in_features != layers[l].out_channels)
                    throw StructuralError("classifier input differs from final conv width");
                if (con.kind == ConsumerKind::Shortcut &&
                    layers[con.layer].out_channels < layers[l].out_channels)
                    throw StructuralError("shortcut narrows channels at layer " + std::to_string(con.layer));
            }
        }
        for (const auto& g : residual_groups) {
            std::set<int> widths;
            for (int l : g) widths.insert(layers[l].out_channels);
            if (widths.size() != 1)
                throw StructuralError("residual group members disagree on channel count");
        }
        const std::vector<std::size_t> cls{static_cast<std::size_t>(classifier.out_features),
                                           static_cast<std::size_t>(classifier.in_features)};
        if (classifier.weights.shape() != cls || classifier.bias.size() != cls[0])
            throw StructuralError("classifier parameter shapes inconsistent");
    }

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// ---------------------------------------------------------------------------
// Builders

namespace detail {

inline ConvLayerSpec make_conv(int id, int in, int out, int stride, bool bn) {
    ConvLayerSpec c;
    c.layer_id = id;
    c.in_channels = in;
    c.out_channels = out;
    c.kernel_size = 3;
    c.stride = stride;
    c.padding = 1;
    c.weights = Tensor({static_cast<std::size_t>(out), static_cast<std::size_t>(in), 3, 3});
    c.has_batchnorm = bn;
    if (bn) c.bn = BatchNormParams::identity(static_cast<std::size_t>(out));
    return c;
}

inline ClassifierSpec make_classifier(int in, int classes) {
    ClassifierSpec fc;
    fc.in_features = in;
    fc.out_features = classes;
    fc.weights = Tensor({static_cast<std::size_t>(classes), static_cast<std::size_t>(in)});
    fc.bias.assign(static_cast<std::size_t>(classes), 0.0);
    return fc;
}

}  // namespace detail

/// VGG-style chain with explicit per-layer widths; `pool_after[i]` places a
/// 2x2 max-pool after conv i. Weights are zero until initialize_weights().
inline NetworkSpec build_chain(const std::vector<int>& widths, const std::vector<bool>& pool_after,
                               int num_classes, int input_channels = 3, bool batchnorm = true) {
    if (widths.empty()) throw ConfigError("chain needs at least one conv layer");
    if (pool_after.size() != widths.size()) throw ConfigError("pool_after length must equal widths length");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
    NetworkSpec net;
    net.family = "vgg";
    net.input_channels = input_channels;
    int in = input_channels;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (widths[i] < 1) throw ConfigError("layer widths must be >= 1");
        net.layers.push_back(detail::make_conv(static_cast<int>(i), in, widths[i], 1, batchnorm));
        net.blocks.push_back({BlockKind::Plain, static_cast<int>(i), -1, pool_after[i]});
        in = widths[i];
    }
    net.classifier = detail::make_classifier(in, num_classes);
    net.rebuild_structure();
    net.validate();
    return net;
}

/// VGG family: conv layers split into up to five stages (extra layers go to
/// the later stages), stage s has width base_width * 2^min(s, 3), a max-pool
/// closes every stage but the last, then global average pooling and one
/// classifier. 13 layers at base 64 gives the 13-conv + 1-fc VGG layout.
inline NetworkSpec build_vgg(int conv_layer_count, int num_classes, int base_width, int input_channels = 3) {
    if (conv_layer_count < 2)
        throw ConfigError("build_vgg: conv_layer_count must be >= 2, got " + std::to_string(conv_layer_count));
    if (base_width < 1) throw ConfigError("build_vgg: base_width must be >= 1, got " + std::to_string(base_width));
    const int stages = std::min(conv_layer_count, 5);
    const int per = conv_layer_count / stages;
    const int extra = conv_layer_count % stages;
    std::vector<int> widths;
    std::vector<bool> pools;
    for (int s = 0; s < stages; ++s) {
        const int n = per + (s >= stages - extra ? 1 : 0);
        const int w = base_width * (1 << std::min(s, 3));
        for (int i = 0; i < n; ++i) {
            widths.push_back(w);
            pools.push_back(i == n - 1 && s != stages - 1);
        }
    }
    return build_chain(widths, pools, num_classes, input_channels);
}

/// Residual family with identity (zero-padded, subsampled) shortcuts.
/// 6n+1 conv layers: three stages of n basic blocks (CIFAR layout);
/// 17 and 33 conv layers: four stages of {2,2,2,2} / {3,4,6,3} blocks.
inline NetworkSpec build_resnet(int conv_layer_count, int num_classes, int base_width = 16,
                                int input_channels = 3) {
    std::vector<int> stage_blocks;
    if (conv_layer_count >= 7 && (conv_layer_count - 1) % 6 == 0) {
        const int n = (conv_layer_count - 1) / 6;
        stage_blocks = {n, n, n};
    } else if (conv_layer_count == 17) {
        stage_blocks = {2, 2, 2, 2};
    } else if (conv_layer_count == 33) {
        stage_blocks = {3, 4, 6, 3};
    } else {
        throw ConfigError("build_resnet: " + std::to_string(conv_layer_count) +
                          " conv layers is not a basic-block depth (6n+1, 17 or 33)");
    }
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (base_width < 1) throw ConfigError("build_resnet: base_width must be >= 1");
    NetworkSpec net;
    net.family = "resnet";
    net.input_channels = input_channels;
    int id = 0;
    net.layers.push_back(detail::make_conv(id, input_channels, base_width, 1, true));
    net.blocks.push_back({BlockKind::Plain, id, -1, false});
    ++id;
    int in = base_width;
    for (std::size_t s = 0; s < stage_blocks.size(); ++s) {
        const int w = base_width << s;
        for (int b = 0; b < stage_blocks[s]; ++b) {
            const int stride = (s > 0 && b == 0) ? 2 : 1;
            net.layers.push_back(detail::make_conv(id, in, w, stride, true));
            net.layers.push_back(detail::make_conv(id + 1, w, w, 1, true));
            net.blocks.push_back({BlockKind::Basic, id, id + 1, false});
            id += 2;
            in = w;
        }
    }
    net.classifier = detail::make_classifier(in, num_classes);
    net.rebuild_structure();
    net.validate();
    return net;
}

/// He-normal conv weights (fan-in), identity batch norm, uniform classifier.
inline void initialize_weights(NetworkSpec& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& l : net.layers) {
        const double std_dev = std::sqrt(2.0 / static_cast<double>(l.filter_size()));
        std::normal_distribution<double> dist(0.0, std_dev);
        for (auto& w : l.weights.storage()) w = dist(rng);
        if (l.has_batchnorm) l.bn = BatchNormParams::identity(static_cast<std::size_t>(l.out_channels));
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.classifier.in_features));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& w : net.classifier.weights.storage()) w = u(rng);
    for (auto& b : net.classifier.bias) b = u(rng);
}

// ---------------------------------------------------------------------------
// Masks

/// Per conv layer binary vector over output channels; 1 keeps, 0 prunes.
class ChannelMask {
public:
    ChannelMask() = default;

    static ChannelMask ones(const NetworkSpec& net) {
        ChannelMask m;
        for (const auto& l : net.layers) m.bits_.emplace_back(static_cast<std::size_t>(l.out_channels), 1);
        return m;
    }

    explicit ChannelMask(std::vector<std::vector<std::uint8_t>> bits) : bits_(std::move(bits)) {
        for (const auto& row : bits_)
            for (auto b : row)
                if (b > 1) throw StructuralError("mask entries must be 0 or 1");
    }

    std::size_t num_layers() const noexcept { return bits_.size(); }
    const std::vector<std::uint8_t>& layer(std::size_t l) const { return bits_.at(l); }
    const std::vector<std::vector<std::uint8_t>>& bits() const noexcept { return bits_; }

    bool kept(int l, int c) const { return bits_.at(static_cast<std::size_t>(l)).at(static_cast<std::size_t>(c)) != 0; }
    void clear(int l, int c) { bits_.at(static_cast<std::size_t>(l)).at(static_cast<std::size_t>(c)) = 0; }
    void set(int l, int c) { bits_.at(static_cast<std::size_t>(l)).at(static_cast<std::size_t>(c)) = 1; }

    std::size_t total_length() const noexcept {
        std::size_t n = 0;
        for (const auto& r : bits_) n += r.size();
        return n;
    }
    std::size_t zeros() const noexcept {
        std::size_t n = 0;
        for (const auto& r : bits_) n += static_cast<std::size_t>(std::count(r.begin(), r.end(), 0));
        return n;
    }
    std::size_t zeros_in(std::size_t l) const {
        return static_cast<std::size_t>(std::count(bits_.at(l).begin(), bits_.at(l).end(), 0));
    }
    std::size_t kept_in(std::size_t l) const { return bits_.at(l).size() - zeros_in(l); }

    std::vector<ChannelRef> masked_channels() const {
        std::vector<ChannelRef> out;
        for (std::size_t l = 0; l < bits_.size(); ++l)
            for (std::size_t c = 0; c < bits_[l].size(); ++c)
                if (!bits_[l][c]) out.push_back({static_cast<int>(l), static_cast<int>(c)});
        return out;
    }

    /// True when every zero of this mask is also a zero of `other`.
    bool nested_in(const ChannelMask& other) const {
        if (other.bits_.size() != bits_.size()) return false;
        for (std::size_t l = 0; l < bits_.size(); ++l) {
            if (other.bits_[l].size() != bits_[l].size()) return false;
            for (std::size_t c = 0; c < bits_[l].size(); ++c)
                if (!bits_[l][c] && other.bits_[l][c]) return false;
        }
        return true;
    }

    void check_matches(const NetworkSpec& net) const {
        if (bits_.size() != net.layers.size())
            throw StructuralError("mask has " + std::to_string(bits_.size()) + " layers, network has " +
                                  std::to_string(net.layers.size()));
        for (std::size_t l = 0; l < bits_.size(); ++l)
            if (bits_[l].size() != static_cast<std::size_t>(net.layers[l].out_channels))
                throw StructuralError("mask length for layer " + std::to_string(l) + " is " +
                                      std::to_string(bits_[l].size()) + ", layer has " +
                                      std::to_string(net.layers[l].out_channels) + " channels");
    }

    friend bool operator==(const ChannelMask&, const ChannelMask&) = default;

private:
    std::vector<std::vector<std::uint8_t>> bits_;
};

/// Zeroes every masked filter together with its batch-norm scale and shift.
inline NetworkSpec apply_mask(const NetworkSpec& net, const ChannelMask& mask) {
    mask.check_matches(net);
    NetworkSpec out = net;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        auto& layer = out.layers[l];
        const std::size_t fs = layer.filter_size();
        for (std::size_t c = 0; c < mask.layer(l).size(); ++c) {
            if (mask.layer(l)[c]) continue;
            std::fill_n(layer.weights.data() + c * fs, fs, 0.0);
            if (layer.has_batchnorm) {
                layer.bn.scale[c] = 0.0;
                layer.bn.shift[c] = 0.0;
            }
        }
    }
    return out;
}

/// Candidate channels: every conv output channel except the final conv
/// layer's and those tied into a residual sum.
inline std::vector<ChannelRef> prunable_channels(const NetworkSpec& net) {
    std::vector<ChannelRef> out;
    const int last = net.final_conv_layer();
    for (const auto& l : net.layers) {
        if (l.layer_id == last || net.in_residual_group(l.layer_id)) continue;
        for (int c = 0; c < l.out_channels; ++c) out.push_back({l.layer_id, c});
    }
    return out;
}

inline std::vector<bool> prunable_layers(const NetworkSpec& net) {
    std::vector<bool> flags(net.layers.size(), false);
    for (const auto& ref : prunable_channels(net)) flags[static_cast<std::size_t>(ref.layer)] = true;
    return flags;
}

// ---------------------------------------------------------------------------
// Surgery

/// One evaluated candidate during greedy selection.
struct ScoreRecord {
    int layer = 0;
    int channel = 0;
    double masked_loss = 0.0;
    double delta = 0.0;
    int step = 0;
    bool chosen = false;
    friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

struct PruneResult {
    NetworkSpec network;
    ChannelMask mask;
    std::vector<ScoreRecord> scores;
    std::size_t params_before = 0;
    std::size_t params_after = 0;
    /// Surviving original channel indices per conv layer.
    std::vector<std::vector<int>> kept_channels;
};

/// Parameter reduction predicted from the mask alone: each masked channel
/// removes its own filter, its input slice in every consumer and two
/// batch-norm parameters; kernels joining two masked channels are
/// subtracted once so they are not counted twice.
inline std::size_t surgery_parameter_reduction(const NetworkSpec& net, const ChannelMask& mask) {
    mask.check_matches(net);
    std::size_t removed = 0;
    std::size_t overlap = 0;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        const std::size_t masked = mask.zeros_in(l);
        if (masked == 0) continue;
        std::size_t per_channel = layer.filter_size() + (layer.has_batchnorm ? 2 : 0);
        for (const auto& con : net.layer_consumers[l]) {
            if (con.kind == ConsumerKind::Conv) {
                const auto& dst = net.layers[static_cast<std::size_t>(con.layer)];
                per_channel += static_cast<std::size_t>(dst.out_channels) * dst.kernel_area();
                overlap += masked * mask.zeros_in(static_cast<std::size_t>(con.layer)) * dst.kernel_area();
            } else if (con.kind == ConsumerKind::Classifier) {
                per_channel += static_cast<std::size_t>(net.classifier.out_features);
            }
        }
        removed += masked * per_channel;
    }
    return removed - overlap;
}

/// Physically removes masked filters, the matching input slices of their
/// consumers and their batch-norm entries. Returns a new network.
inline PruneResult surgery(const NetworkSpec& net, const ChannelMask& mask) {
    mask.check_matches(net);
    std::set<ChannelRef> allowed;
    for (const auto& r : prunable_channels(net)) allowed.insert(r);
    for (const auto& r : mask.masked_channels()) {
        if (!allowed.count(r))
            throw StructuralError("channel (" + std::to_string(r.layer) + "," + std::to_string(r.channel) +
                                  ") is not prunable");
    }
    PruneResult result;
    result.mask = mask;
    result.params_before = net.parameter_count();
    const std::size_t n = net.layers.size();
    result.kept_channels.resize(n);
    for (std::size_t l = 0; l < n; ++l) {
        for (int c = 0; c < net.layers[l].out_channels; ++c)
            if (mask.kept(static_cast<int>(l), c)) result.kept_channels[l].push_back(c);
        if (result.kept_channels[l].empty())
            throw StructuralError("layer " + std::to_string(l) + " would be left with 0 channels");
    }
    // Input-channel survivors for every conv consumer and the classifier.
    std::vector<std::vector<int>> kept_inputs(n);
    for (std::size_t l = 0; l < n; ++l) {
        kept_inputs[l].resize(static_cast<std::size_t>(net.layers[l].in_channels));
        for (int i = 0; i < net.layers[l].in_channels; ++i) kept_inputs[l][static_cast<std::size_t>(i)] = i;
    }
    std::vector<int> kept_features(static_cast<std::size_t>(net.classifier.in_features));
    for (int i = 0; i < net.classifier.in_features; ++i) kept_features[static_cast<std::size_t>(i)] = i;
    for (std::size_t l = 0; l < n; ++l) {
        if (mask.zeros_in(l) == 0) continue;
        for (const auto& con : net.layer_consumers[l]) {
            if (con.kind == ConsumerKind::Conv)
                kept_inputs[static_cast<std::size_t>(con.layer)] = result.kept_channels[l];
            else if (con.kind == ConsumerKind::Classifier)
                kept_features = result.kept_channels[l];
        }
    }

    NetworkSpec out = net;
    for (std::size_t l = 0; l < n; ++l) {
        const auto& src = net.layers[l];
        auto& dst = out.layers[l];
        const auto& rows = result.kept_channels[l];
        const auto& cols = kept_inputs[l];
        const std::size_t ka = src.kernel_area();
        dst.out_channels = static_cast<int>(rows.size());
        dst.in_channels = static_cast<int>(cols.size());
        dst.weights = Tensor({rows.size(), cols.size(), static_cast<std::size_t>(src.kernel_size),
                              static_cast<std::size_t>(src.kernel_size)});
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < cols.size(); ++c)
                std::copy_n(src.weights.data() + (static_cast<std::size_t>(rows[r]) * src.filter_size() +
                                                  static_cast<std::size_t>(cols[c]) * ka),
                            ka, dst.weights.data() + (r * cols.size() + c) * ka);
        if (src.has_batchnorm) {
            auto pick = [&](const std::vector<double>& v) {
                std::vector<double> o;
                o.reserve(rows.size());
                for (int r : rows) o.push_back(v[static_cast<std::size_t>(r)]);
                return o;
            };
            dst.bn.scale = pick(src.bn.scale);
            dst.bn.shift = pick(src.bn.shift);
            dst.bn.running_mean = pick(src.bn.running_mean);
            dst.bn.running_var = pick(src.bn.running_var);
        }
    }
    auto& fc = out.classifier;
    fc.in_features = static_cast<int>(kept_features.size());
    fc.weights = Tensor({static_cast<std::size_t>(fc.out_features), kept_features.size()});
    for (int o = 0; o < fc.out_features; ++o)
        for (std::size_t i = 0; i < kept_features.size(); ++i)
            fc.weights.at(static_cast<std::size_t>(o), i) =
                net.classifier.weights.at(static_cast<std::size_t>(o), static_cast<std::size_t>(kept_features[i]));
    out.rebuild_structure();
    out.validate();
    result.params_after = out.parameter_count();
    result.network = std::move(out);
    return result;
}

/// Number of masked channels per conv layer (histogram for reports).
inline std::vector<int> pruned_per_layer(const ChannelMask& mask) {
    std::vector<int> h(mask.num_layers());
    for (std::size_t l = 0; l < h.size(); ++l) h[l] = static_cast<int>(mask.zeros_in(l));
    return h;
}

}  // namespace hgsp
