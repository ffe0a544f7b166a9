#pragma once

// Reference CPU execution engine: forward evaluation, cross-entropy loss and
// exact gradients for the block topologies in netmodel.hpp. Single threaded
// and deterministic for a fixed input.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hgsprune/error.hpp"
#include "hgsprune/netmodel.hpp"
#include "hgsprune/tensor.hpp"

namespace hgsp {

/// Images are (N, C, H, W); labels in [0, classes).
struct Batch {
    Tensor images;
    std::vector<int> labels;
    std::size_t size() const noexcept { return labels.size(); }
};

enum class Mode { Train, Eval };

struct Evaluation {
    double loss = 0.0;        // mean cross-entropy
    std::size_t correct = 0;  // top-1 hits
    std::size_t count = 0;
};

/// Gradient buffers shaped like the trainable parameters of a network.
struct Gradients {
    std::vector<Tensor> conv;
    std::vector<std::vector<double>> bn_scale;
    std::vector<std::vector<double>> bn_shift;
    Tensor fc_weights;
    std::vector<double> fc_bias;

    static Gradients zeros_like(const NetworkSpec& net) {
        Gradients g;
        for (const auto& l : net.layers) {
            g.conv.emplace_back(l.weights.shape());
            const std::size_t c = l.has_batchnorm ? static_cast<std::size_t>(l.out_channels) : 0;
            g.bn_scale.emplace_back(c, 0.0);
            g.bn_shift.emplace_back(c, 0.0);
        }
        g.fc_weights = Tensor(net.classifier.weights.shape());
        g.fc_bias.assign(net.classifier.bias.size(), 0.0);
        return g;
    }
};

/// Per-channel batch statistics observed in a train-mode forward pass.
struct BatchNormStats {
    std::vector<double> mean;
    std::vector<double> var;  // biased
    std::size_t samples_per_channel = 0;
};

struct TrainStep {
    Evaluation eval;
    Gradients grads;
    std::vector<BatchNormStats> bn_stats;  // per conv layer (empty without BN)
};

/// What the trainer needs from an execution engine.
template <class B>
concept TrainingBackend = requires(const B& b, const NetworkSpec& net, const Batch& batch, const ChannelMask* mask) {
    { b.evaluate(net, batch, mask) } -> std::same_as<Evaluation>;
    { b.logits(net, batch.images, mask) } -> std::same_as<Tensor>;
    { b.train_step(net, batch) } -> std::same_as<TrainStep>;
};

/// Folds observed batch statistics into the running estimates
/// (unbiased variance, exponential moving average).
inline void apply_running_stats(NetworkSpec& net, const std::vector<BatchNormStats>& stats) {
    for (std::size_t l = 0; l < net.layers.size() && l < stats.size(); ++l) {
        auto& layer = net.layers[l];
        if (!layer.has_batchnorm || stats[l].mean.empty()) continue;
        const double m = layer.bn.momentum;
        const double n = static_cast<double>(stats[l].samples_per_channel);
        const double unbias = n > 1 ? n / (n - 1) : 1.0;
        for (std::size_t c = 0; c < stats[l].mean.size(); ++c) {
            layer.bn.running_mean[c] = (1 - m) * layer.bn.running_mean[c] + m * stats[l].mean[c];
            layer.bn.running_var[c] = (1 - m) * layer.bn.running_var[c] + m * stats[l].var[c] * unbias;
        }
    }
}

class CpuBackend {
public:
    Tensor logits(const NetworkSpec& net, const Tensor& images, const ChannelMask* mask = nullptr) const {
        State st;
        forward(net, images, Mode::Eval, mask, st);
        return st.logits;
    }

    Evaluation evaluate(const NetworkSpec& net, const Batch& batch, const ChannelMask* mask = nullptr) const {
        const Tensor out = logits(net, batch.images, mask);
        return cross_entropy(out, batch.labels, nullptr);
    }

    /// Train-mode forward (batch statistics) plus full backward pass.
    TrainStep train_step(const NetworkSpec& net, const Batch& batch) const {
        State st;
        forward(net, batch.images, Mode::Train, nullptr, st);
        TrainStep step;
        Tensor dlogits;
        step.eval = cross_entropy(st.logits, batch.labels, &dlogits);
        step.grads = Gradients::zeros_like(net);
        backward(net, st, dlogits, step.grads);
        step.bn_stats.resize(net.layers.size());
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            step.bn_stats[l].mean = st.conv[l].mean;
            step.bn_stats[l].var = st.conv[l].var;
            step.bn_stats[l].samples_per_channel = st.conv[l].per_channel;
        }
        return step;
    }

    /// Mean cross-entropy over rows of (N, classes) logits; fills the
    /// gradient wrt the logits when requested.
    static Evaluation cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* dlogits) {
        const std::size_t n = logits.dim(0);
        const std::size_t k = logits.dim(1);
        if (labels.size() != n) throw StructuralError("label count differs from batch size");
        Evaluation ev;
        ev.count = n;
        if (dlogits) *dlogits = Tensor({n, k});
        long double total = 0;
        std::vector<double> p(k);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = logits.data() + i * k;
            const auto y = static_cast<std::size_t>(labels[i]);
            if (y >= k) throw StructuralError("label out of range");
            const double mx = *std::max_element(row, row + k);
            double z = 0;
            for (std::size_t j = 0; j < k; ++j) {
                p[j] = std::exp(row[j] - mx);
                z += p[j];
            }
            total += static_cast<long double>(std::log(z) + mx - row[y]);
            std::size_t arg = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (row[j] > row[arg]) arg = j;
            if (arg == y) ++ev.correct;
            if (dlogits) {
                for (std::size_t j = 0; j < k; ++j)
                    (*dlogits)[i * k + j] = (p[j] / z - (j == y ? 1.0 : 0.0)) / static_cast<double>(n);
            }
        }
        ev.loss = n ? static_cast<double>(total / static_cast<long double>(n)) : 0.0;
        return ev;
    }

private:
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MapMat = Eigen::Map<RowMat>;
    using ConstMapMat = Eigen::Map<const RowMat>;

    struct ConvCache {
        Tensor input;       // (N, Cin, H, W)
        Tensor normalized;  // x-hat, train mode only
        Tensor pre_act;     // after BN and mask, before ReLU / residual add
        std::vector<double> mean, var, inv_std;
        std::size_t per_channel = 0;
    };
    struct PoolCache {
        std::vector<std::uint32_t> argmax;
        std::vector<std::size_t> in_shape;
    };
    struct BlockCache {
        Tensor input;
        Tensor sum;  // residual sum before the final ReLU (basic blocks)
        PoolCache pool;
        std::vector<std::size_t> out_shape;
    };
    struct State {
        Mode mode = Mode::Eval;
        const ChannelMask* mask = nullptr;
        std::vector<ConvCache> conv;
        std::vector<BlockCache> blocks;
        Tensor features;  // (N, C) after global average pooling
        std::vector<std::size_t> last_shape;
        Tensor logits;
    };

    static std::size_t out_extent(std::size_t in, const ConvLayerSpec& l) {
        const long long e = (static_cast<long long>(in) + 2LL * l.padding - l.kernel_size) / l.stride + 1;
        if (e < 1) throw StructuralError("conv layer " + std::to_string(l.layer_id) + ": spatial size collapses");
        return static_cast<std::size_t>(e);
    }

    static void im2col(const double* x, std::size_t cin, std::size_t h, std::size_t w, const ConvLayerSpec& l,
                       std::size_t ho, std::size_t wo, double* cols) {
        const auto k = static_cast<std::size_t>(l.kernel_size);
        const auto s = static_cast<long long>(l.stride);
        const auto p = static_cast<long long>(l.padding);
        const std::size_t hw = ho * wo;
        for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                    double* row = cols + ((c * k + ky) * k + kx) * hw;
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        const long long iy = static_cast<long long>(oy) * s - p + static_cast<long long>(ky);
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const long long ix = static_cast<long long>(ox) * s - p + static_cast<long long>(kx);
                            row[oy * wo + ox] = (iy >= 0 && ix >= 0 && iy < static_cast<long long>(h) &&
                                                 ix < static_cast<long long>(w))
                                                    ? x[(c * h + static_cast<std::size_t>(iy)) * w +
                                                        static_cast<std::size_t>(ix)]
                                                    : 0.0;
                        }
                    }
                }
    }

    static void col2im(const double* cols, std::size_t cin, std::size_t h, std::size_t w, const ConvLayerSpec& l,
                       std::size_t ho, std::size_t wo, double* dx) {
        const auto k = static_cast<std::size_t>(l.kernel_size);
        const auto s = static_cast<long long>(l.stride);
        const auto p = static_cast<long long>(l.padding);
        const std::size_t hw = ho * wo;
        for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const double* row = cols + ((c * k + ky) * k + kx) * hw;
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        const long long iy = static_cast<long long>(oy) * s - p + static_cast<long long>(ky);
                        if (iy < 0 || iy >= static_cast<long long>(h)) continue;
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const long long ix = static_cast<long long>(ox) * s - p + static_cast<long long>(kx);
                            if (ix < 0 || ix >= static_cast<long long>(w)) continue;
                            dx[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                                row[oy * wo + ox];
                        }
                    }
                }
    }

    /// conv -> BN -> mask; returns the pre-activation (N, Cout, Ho, Wo).
    static Tensor conv_bn(const ConvLayerSpec& l, const Tensor& x, State& st) {
        if (x.dim(1) != static_cast<std::size_t>(l.in_channels))
            throw StructuralError("conv layer " + std::to_string(l.layer_id) + " expects " +
                                  std::to_string(l.in_channels) + " input channels, got " + std::to_string(x.dim(1)));
        const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
        const std::size_t ho = out_extent(h, l), wo = out_extent(w, l);
        const auto cout = static_cast<std::size_t>(l.out_channels);
        const std::size_t ckk = cin * l.kernel_area();
        const std::size_t hw = ho * wo;
        Tensor z({n, cout, ho, wo});
        std::vector<double> cols(ckk * hw);
        const ConstMapMat wmat(l.weights.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(ckk));
        for (std::size_t i = 0; i < n; ++i) {
            im2col(x.data() + i * cin * h * w, cin, h, w, l, ho, wo, cols.data());
            MapMat(z.data() + i * cout * hw, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(hw))
                .noalias() = wmat * ConstMapMat(cols.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(hw));
        }
        auto& cache = st.conv[static_cast<std::size_t>(l.layer_id)];
        if (st.mode == Mode::Train) cache.input = x;
        cache.per_channel = n * hw;
        if (l.has_batchnorm) {
            if (st.mode == Mode::Train) {
                cache.mean.assign(cout, 0.0);
                cache.var.assign(cout, 0.0);
                cache.inv_std.assign(cout, 0.0);
                cache.normalized = Tensor(z.shape());
                const double m = static_cast<double>(n * hw);
                for (std::size_t c = 0; c < cout; ++c) {
                    long double s = 0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double* p = z.data() + (i * cout + c) * hw;
                        for (std::size_t j = 0; j < hw; ++j) s += p[j];
                    }
                    const double mean = static_cast<double>(s / m);
                    long double v = 0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double* p = z.data() + (i * cout + c) * hw;
                        for (std::size_t j = 0; j < hw; ++j) v += (p[j] - mean) * (p[j] - mean);
                    }
                    const double var = static_cast<double>(v / m);
                    const double inv = 1.0 / std::sqrt(var + l.bn.eps);
                    cache.mean[c] = mean;
                    cache.var[c] = var;
                    cache.inv_std[c] = inv;
                    for (std::size_t i = 0; i < n; ++i) {
                        double* p = z.data() + (i * cout + c) * hw;
                        double* q = cache.normalized.data() + (i * cout + c) * hw;
                        for (std::size_t j = 0; j < hw; ++j) {
                            q[j] = (p[j] - mean) * inv;
                            p[j] = l.bn.scale[c] * q[j] + l.bn.shift[c];
                        }
                    }
                }
            } else {
                for (std::size_t c = 0; c < cout; ++c) {
                    const double inv = 1.0 / std::sqrt(l.bn.running_var[c] + l.bn.eps);
                    const double a = l.bn.scale[c] * inv;
                    const double b = l.bn.shift[c] - a * l.bn.running_mean[c];
                    for (std::size_t i = 0; i < n; ++i) {
                        double* p = z.data() + (i * cout + c) * hw;
                        for (std::size_t j = 0; j < hw; ++j) p[j] = a * p[j] + b;
                    }
                }
            }
        }
        if (st.mask) {
            const auto& bits = st.mask->layer(static_cast<std::size_t>(l.layer_id));
            for (std::size_t c = 0; c < cout; ++c) {
                if (bits[c]) continue;
                for (std::size_t i = 0; i < n; ++i) std::fill_n(z.data() + (i * cout + c) * hw, hw, 0.0);
            }
        }
        if (st.mode == Mode::Train) cache.pre_act = z;
        return z;
    }

    static void relu_inplace(Tensor& t) {
        for (auto& v : t.storage())
            if (v < 0) v = 0.0;
    }

    static Tensor maxpool(const Tensor& x, PoolCache& cache, bool keep) {
        const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        const std::size_t ho = h / 2, wo = w / 2;
        if (ho == 0 || wo == 0) throw StructuralError("max-pool on a 1-pixel feature map");
        Tensor y({n, c, ho, wo});
        if (keep) {
            cache.in_shape = x.shape();
            cache.argmax.assign(y.size(), 0);
        }
        for (std::size_t p = 0; p < n * c; ++p) {
            const double* src = x.data() + p * h * w;
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    std::size_t best = (2 * oy) * w + 2 * ox;
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t idx = (2 * oy + dy) * w + 2 * ox + dx;
                            if (src[idx] > src[best]) best = idx;
                        }
                    const std::size_t o = p * ho * wo + oy * wo + ox;
                    y[o] = src[best];
                    if (keep) cache.argmax[o] = static_cast<std::uint32_t>(best);
                }
        }
        return y;
    }

    static Tensor shortcut(const Tensor& x, int stride, std::size_t out_channels) {
        const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        const auto s = static_cast<std::size_t>(stride);
        const std::size_t ho = (h + s - 1) / s, wo = (w + s - 1) / s;
        Tensor y({n, out_channels, ho, wo});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t oy = 0; oy < ho; ++oy)
                    for (std::size_t ox = 0; ox < wo; ++ox) y.at(i, ch, oy, ox) = x.at(i, ch, oy * s, ox * s);
        return y;
    }

    static void forward(const NetworkSpec& net, const Tensor& images, Mode mode, const ChannelMask* mask, State& st) {
        if (images.rank() != 4) throw StructuralError("images must be (N, C, H, W)");
        if (images.dim(1) != static_cast<std::size_t>(net.input_channels))
            throw StructuralError("network expects " + std::to_string(net.input_channels) + " image channels, got " +
                                  std::to_string(images.dim(1)));
        if (mask) mask->check_matches(net);
        st.mode = mode;
        st.mask = mask;
        st.conv.assign(net.layers.size(), {});
        st.blocks.assign(net.blocks.size(), {});
        const bool keep = mode == Mode::Train;
        Tensor act = images;
        for (std::size_t bi = 0; bi < net.blocks.size(); ++bi) {
            const auto& b = net.blocks[bi];
            auto& bc = st.blocks[bi];
            if (b.kind == BlockKind::Plain) {
                Tensor y = conv_bn(net.layers[static_cast<std::size_t>(b.first)], act, st);
                relu_inplace(y);
                if (b.pool_after) y = maxpool(y, bc.pool, keep);
                act = std::move(y);
            } else {
                if (keep) bc.input = act;
                Tensor a = conv_bn(net.layers[static_cast<std::size_t>(b.first)], act, st);
                relu_inplace(a);
                Tensor s = conv_bn(net.layers[static_cast<std::size_t>(b.second)], a, st);
                const Tensor sc = shortcut(act, net.layers[static_cast<std::size_t>(b.first)].stride, s.dim(1));
                if (sc.shape() != s.shape()) throw StructuralError("residual shapes disagree");
                for (std::size_t i = 0; i < s.size(); ++i) s[i] += sc[i];
                if (keep) bc.sum = s;
                relu_inplace(s);
                act = std::move(s);
            }
            bc.out_shape = act.shape();
        }
        const std::size_t n = act.dim(0), c = act.dim(1), hw = act.dim(2) * act.dim(3);
        if (c != static_cast<std::size_t>(net.classifier.in_features))
            throw StructuralError("classifier expects " + std::to_string(net.classifier.in_features) + " features");
        st.last_shape = act.shape();
        st.features = Tensor({n, c});
        for (std::size_t i = 0; i < n * c; ++i) {
            long double s = 0;
            for (std::size_t j = 0; j < hw; ++j) s += act[i * hw + j];
            st.features[i] = static_cast<double>(s / static_cast<long double>(hw));
        }
        const auto k = static_cast<std::size_t>(net.classifier.out_features);
        st.logits = Tensor({n, k});
        MapMat(st.logits.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)).noalias() =
            ConstMapMat(st.features.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) *
            ConstMapMat(net.classifier.weights.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c))
                .transpose();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) st.logits[i * k + j] += net.classifier.bias[j];
    }

    /// Backward through mask, BN and conv; returns d(input) unless first layer.
    static Tensor conv_bn_backward(const ConvLayerSpec& l, ConvCache& cache, Tensor dy, Gradients& g, bool need_dx) {
        const std::size_t n = dy.dim(0), cout = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
        const auto id = static_cast<std::size_t>(l.layer_id);
        // dy is the gradient wrt pre_act; masked channels carry none.
        if (l.has_batchnorm) {
            const double m = static_cast<double>(n * hw);
            for (std::size_t c = 0; c < cout; ++c) {
                long double sdy = 0, sdyx = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double* d = dy.data() + (i * cout + c) * hw;
                    const double* xh = cache.normalized.data() + (i * cout + c) * hw;
                    for (std::size_t j = 0; j < hw; ++j) {
                        sdy += d[j];
                        sdyx += d[j] * xh[j];
                    }
                }
                g.bn_scale[id][c] += static_cast<double>(sdyx);
                g.bn_shift[id][c] += static_cast<double>(sdy);
                const double gamma = l.bn.scale[c];
                const double k = gamma * cache.inv_std[c] / m;
                const double mean_dy = static_cast<double>(sdy);
                const double mean_dyx = static_cast<double>(sdyx);
                for (std::size_t i = 0; i < n; ++i) {
                    double* d = dy.data() + (i * cout + c) * hw;
                    const double* xh = cache.normalized.data() + (i * cout + c) * hw;
                    for (std::size_t j = 0; j < hw; ++j) d[j] = k * (m * d[j] - mean_dy - xh[j] * mean_dyx);
                }
            }
        }
        const Tensor& x = cache.input;
        const std::size_t cin = x.dim(1), h = x.dim(2), w = x.dim(3);
        const std::size_t ho = dy.dim(2), wo = dy.dim(3);
        const std::size_t ckk = cin * l.kernel_area();
        std::vector<double> cols(ckk * hw), dcols;
        const ConstMapMat wmat(l.weights.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(ckk));
        MapMat dw(g.conv[id].data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(ckk));
        Tensor dx;
        if (need_dx) {
            dx = Tensor(x.shape());
            dcols.resize(ckk * hw);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const ConstMapMat dz(dy.data() + i * cout * hw, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(hw));
            im2col(x.data() + i * cin * h * w, cin, h, w, l, ho, wo, cols.data());
            dw.noalias() += dz * ConstMapMat(cols.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(hw)).transpose();
            if (need_dx) {
                MapMat(dcols.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(hw)).noalias() =
                    wmat.transpose() * dz;
                col2im(dcols.data(), cin, h, w, l, ho, wo, dx.data() + i * cin * h * w);
            }
        }
        return dx;
    }

    static void relu_backward(Tensor& d, const Tensor& pre) {
        for (std::size_t i = 0; i < d.size(); ++i)
            if (!(pre[i] > 0)) d[i] = 0.0;
    }

    static void mask_backward(const ConvLayerSpec& l, const ChannelMask* mask, Tensor& d) {
        if (!mask) return;
        const std::size_t n = d.dim(0), c = d.dim(1), hw = d.dim(2) * d.dim(3);
        const auto& bits = mask->layer(static_cast<std::size_t>(l.layer_id));
        for (std::size_t ch = 0; ch < c; ++ch)
            if (!bits[ch])
                for (std::size_t i = 0; i < n; ++i) std::fill_n(d.data() + (i * c + ch) * hw, hw, 0.0);
    }

    static void backward(const NetworkSpec& net, State& st, const Tensor& dlogits, Gradients& g) {
        const std::size_t n = dlogits.dim(0), k = dlogits.dim(1);
        const std::size_t c = st.features.dim(1);
        const ConstMapMat dl(dlogits.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
        MapMat(g.fc_weights.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)).noalias() +=
            dl.transpose() * ConstMapMat(st.features.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) g.fc_bias[j] += dlogits[i * k + j];
        Tensor dfeat({n, c});
        MapMat(dfeat.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)).noalias() =
            dl * ConstMapMat(net.classifier.weights.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c));
        Tensor dact(st.last_shape);
        const std::size_t hw = st.last_shape[2] * st.last_shape[3];
        for (std::size_t i = 0; i < n * c; ++i) {
            const double v = dfeat[i] / static_cast<double>(hw);
            std::fill_n(dact.data() + i * hw, hw, v);
        }
        for (std::size_t bi = net.blocks.size(); bi-- > 0;) {
            const auto& b = net.blocks[bi];
            auto& bc = st.blocks[bi];
            const bool first_block = bi == 0;
            if (b.kind == BlockKind::Plain) {
                const auto& l = net.layers[static_cast<std::size_t>(b.first)];
                auto& cache = st.conv[static_cast<std::size_t>(b.first)];
                if (b.pool_after) {
                    Tensor up(bc.pool.in_shape);
                    const std::size_t ihw = up.dim(2) * up.dim(3);
                    const std::size_t ohw = dact.dim(2) * dact.dim(3);
                    for (std::size_t o = 0; o < dact.size(); ++o) up[(o / ohw) * ihw + bc.pool.argmax[o]] += dact[o];
                    dact = std::move(up);
                }
                relu_backward(dact, cache.pre_act);
                mask_backward(l, st.mask, dact);
                dact = conv_bn_backward(l, cache, std::move(dact), g, !first_block);
            } else {
                const auto& la = net.layers[static_cast<std::size_t>(b.first)];
                const auto& lb = net.layers[static_cast<std::size_t>(b.second)];
                relu_backward(dact, bc.sum);
                // Shortcut path.
                const Tensor& x = bc.input;
                Tensor dx(x.shape());
                const auto s = static_cast<std::size_t>(la.stride);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t ch = 0; ch < x.dim(1); ++ch)
                        for (std::size_t oy = 0; oy < dact.dim(2); ++oy)
                            for (std::size_t ox = 0; ox < dact.dim(3); ++ox)
                                dx.at(i, ch, oy * s, ox * s) += dact.at(i, ch, oy, ox);
                Tensor db = std::move(dact);
                mask_backward(lb, st.mask, db);
                Tensor da = conv_bn_backward(lb, st.conv[static_cast<std::size_t>(b.second)], std::move(db), g, true);
                relu_backward(da, st.conv[static_cast<std::size_t>(b.first)].pre_act);
                mask_backward(la, st.mask, da);
                Tensor dxa = conv_bn_backward(la, st.conv[static_cast<std::size_t>(b.first)], std::move(da), g, true);
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dxa[i];
                dact = std::move(dx);
            }
        }
    }
};

static_assert(TrainingBackend<CpuBackend>);

}  // namespace hgsp
