#pragma once

// Labeled image sets: a seeded synthetic texture task for desk-scale runs
// and a reader for the CIFAR binary layouts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hgsprune/backend.hpp"
#include "hgsprune/error.hpp"
#include "hgsprune/tensor.hpp"

namespace hgsp {

struct DatasetHandle {
    std::string name;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    int classes = 0;
    std::vector<float> train_pixels;  // (N, C, H, W)
    std::vector<int> train_labels;
    std::vector<float> test_pixels;
    std::vector<int> test_labels;

    std::size_t image_size() const noexcept { return channels * height * width; }
    std::size_t train_size() const noexcept { return train_labels.size(); }
    std::size_t test_size() const noexcept { return test_labels.size(); }

    void validate() const {
        if (classes < 2) throw ConfigError("dataset '" + name + "' needs at least 2 classes");
        if (train_pixels.size() != train_size() * image_size() || test_pixels.size() != test_size() * image_size())
            throw StructuralError("dataset '" + name + "': pixel buffers disagree with label counts");
        for (int y : train_labels)
            if (y < 0 || y >= classes) throw StructuralError("train label out of range");
        for (int y : test_labels)
            if (y < 0 || y >= classes) throw StructuralError("test label out of range");
    }

    /// Gathers training samples; with `augment`, applies a random 4-pixel
    /// padded crop and horizontal flip drawn from `rng`.
    Batch train_batch(std::span<const std::size_t> indices, std::mt19937_64* augment = nullptr) const {
        return gather(train_pixels, train_labels, indices, augment);
    }

    Batch test_batch(std::size_t begin, std::size_t end) const {
        std::vector<std::size_t> idx(end - begin);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
        return gather(test_pixels, test_labels, idx, nullptr);
    }

    Batch train_range(std::size_t begin, std::size_t end) const {
        std::vector<std::size_t> idx(end - begin);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
        return gather(train_pixels, train_labels, idx, nullptr);
    }

private:
    Batch gather(const std::vector<float>& pixels, const std::vector<int>& labels, std::span<const std::size_t> indices,
                 std::mt19937_64* augment) const {
        Batch b;
        const std::size_t sz = image_size();
        b.images = Tensor({indices.size(), channels, height, width});
        b.labels.reserve(indices.size());
        std::uniform_int_distribution<int> shift(-4, 4);
        std::bernoulli_distribution flip(0.5);
        for (std::size_t n = 0; n < indices.size(); ++n) {
            const std::size_t i = indices[n];
            if (i >= labels.size()) throw StructuralError("sample index out of range");
            b.labels.push_back(labels[i]);
            const float* src = pixels.data() + i * sz;
            double* dst = b.images.data() + n * sz;
            if (!augment) {
                std::copy(src, src + sz, dst);
                continue;
            }
            const int dy = shift(*augment), dx = shift(*augment);
            const bool f = flip(*augment);
            for (std::size_t c = 0; c < channels; ++c)
                for (std::size_t y = 0; y < height; ++y)
                    for (std::size_t x = 0; x < width; ++x) {
                        const long long sy = static_cast<long long>(y) + dy;
                        long long sx = static_cast<long long>(x) + dx;
                        if (f) sx = static_cast<long long>(width) - 1 - sx;
                        const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<long long>(height) &&
                                            sx < static_cast<long long>(width);
                        dst[(c * height + y) * width + x] =
                            inside ? src[(c * height + static_cast<std::size_t>(sy)) * width + static_cast<std::size_t>(sx)]
                                   : 0.0;
                    }
        }
        return b;
    }
};

/// Seeded oriented-grating task. Class c is a sinusoidal grating whose
/// orientation lies near c * pi / classes; phase, frequency, contrast,
/// colour mix and an occluding blob are random per image, and Gaussian
/// pixel noise is added. Random phase makes every class's mean image
/// ~zero, so no linear function of the pixels separates the classes.
/// 80% of the samples form the training split.
inline DatasetHandle make_synthetic_dataset(int classes, std::size_t samples, std::size_t image_size,
                                            std::uint64_t seed, std::size_t channels = 3, double noise = 1.0) {
    if (classes < 2) throw ConfigError("synthetic dataset needs classes >= 2");
    if (samples < 2) throw ConfigError("synthetic dataset needs at least 2 samples");
    if (image_size < 4) throw ConfigError("synthetic images must be at least 4x4");
    DatasetHandle d;
    d.name = "synthetic";
    d.channels = channels;
    d.height = d.width = image_size;
    d.classes = classes;
    std::mt19937_64 rng(seed);
    std::vector<int> labels(samples);
    for (std::size_t i = 0; i < samples; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
    std::shuffle(labels.begin(), labels.end(), rng);

    const double pi = std::numbers::pi;
    const double jitter = pi / (4.0 * classes);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t sz = channels * image_size * image_size;
    std::vector<float> pixels(samples * sz);
    const double s = static_cast<double>(image_size);
    for (std::size_t i = 0; i < samples; ++i) {
        const double theta = pi * labels[i] / classes + (2 * u01(rng) - 1) * jitter;
        const double freq = (2.0 + 2.0 * u01(rng)) / s;  // 2-4 cycles per image
        const double phase = 2 * pi * u01(rng);
        const double contrast = 0.6 + 0.4 * u01(rng);
        std::vector<double> colour(channels);
        for (auto& c : colour) c = 0.5 + 0.5 * u01(rng);
        const double bx = u01(rng) * s, by = u01(rng) * s, br = s * (0.1 + 0.15 * u01(rng));
        const double bval = 2 * u01(rng) - 1;
        const double ct = std::cos(theta), st = std::sin(theta);
        float* img = pixels.data() + i * sz;
        for (std::size_t y = 0; y < image_size; ++y)
            for (std::size_t x = 0; x < image_size; ++x) {
                const double px = static_cast<double>(x), py = static_cast<double>(y);
                const double g = contrast * std::cos(2 * pi * freq * (px * ct + py * st) + phase);
                const bool blob = (px - bx) * (px - bx) + (py - by) * (py - by) < br * br;
                for (std::size_t c = 0; c < channels; ++c) {
                    const double v = (blob ? bval : colour[c] * g) + noise * gauss(rng);
                    img[(c * image_size + y) * image_size + x] = static_cast<float>(v);
                }
            }
    }
    const std::size_t train = samples * 4 / 5;
    d.train_labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(train));
    d.test_labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(train), labels.end());
    d.train_pixels.assign(pixels.begin(), pixels.begin() + static_cast<std::ptrdiff_t>(train * sz));
    d.test_pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(train * sz), pixels.end());
    d.validate();
    return d;
}

namespace detail {

inline void read_cifar_file(const std::filesystem::path& file, std::size_t label_bytes, std::size_t label_index,
                            std::vector<float>& pixels, std::vector<int>& labels) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file.string());
    constexpr std::size_t kImage = 3 * 32 * 32;
    std::vector<unsigned char> rec(label_bytes + kImage);
    while (in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()))) {
        labels.push_back(rec[label_index]);
        for (std::size_t i = 0; i < kImage; ++i) pixels.push_back(static_cast<float>(rec[label_bytes + i]) / 255.0f);
    }
    if (in.gcount() != 0) throw IoError(file.string() + ": truncated record");
}

inline void standardize(DatasetHandle& d) {
    const std::size_t hw = d.height * d.width;
    for (std::size_t c = 0; c < d.channels; ++c) {
        long double s = 0, s2 = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < d.train_size(); ++i) {
            const float* p = d.train_pixels.data() + i * d.image_size() + c * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                s += p[j];
                s2 += static_cast<long double>(p[j]) * p[j];
                ++n;
            }
        }
        const double mean = static_cast<double>(s / n);
        const double sd = std::sqrt(std::max(1e-12, static_cast<double>(s2 / n) - mean * mean));
        auto apply = [&](std::vector<float>& px, std::size_t count) {
            for (std::size_t i = 0; i < count; ++i) {
                float* p = px.data() + i * d.image_size() + c * hw;
                for (std::size_t j = 0; j < hw; ++j) p[j] = static_cast<float>((p[j] - mean) / sd);
            }
        };
        apply(d.train_pixels, d.train_size());
        apply(d.test_pixels, d.test_size());
    }
}

}  // namespace detail

/// Reads the published binary CIFAR layouts from `dir`:
/// "cifar10"  -> data_batch_{1..5}.bin + test_batch.bin (1 label byte),
/// "cifar100" -> train.bin + test.bin (coarse, fine label bytes; fine used).
/// Pixels are standardized per channel with training-split statistics.
inline DatasetHandle load_cifar_binary(const std::filesystem::path& dir, const std::string& variant) {
    DatasetHandle d;
    d.name = variant;
    d.channels = 3;
    d.height = d.width = 32;
    if (variant == "cifar10") {
        d.classes = 10;
        for (int b = 1; b <= 5; ++b)
            detail::read_cifar_file(dir / ("data_batch_" + std::to_string(b) + ".bin"), 1, 0, d.train_pixels,
                                    d.train_labels);
        detail::read_cifar_file(dir / "test_batch.bin", 1, 0, d.test_pixels, d.test_labels);
    } else if (variant == "cifar100") {
        d.classes = 100;
        detail::read_cifar_file(dir / "train.bin", 2, 1, d.train_pixels, d.train_labels);
        detail::read_cifar_file(dir / "test.bin", 2, 1, d.test_pixels, d.test_labels);
    } else {
        throw ConfigError("unknown CIFAR variant '" + variant + "' (expected cifar10|cifar100)");
    }
    detail::standardize(d);
    d.validate();
    return d;
}

}  // namespace hgsp
