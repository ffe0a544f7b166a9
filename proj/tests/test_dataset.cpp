#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "hgsprune/dataset.hpp"

using namespace hgsp;

TEST(Synthetic, SplitIsEightyTwenty) {
    const auto d = make_synthetic_dataset(2, 1000, 16, 5);
    EXPECT_EQ(d.train_size(), 800u);
    EXPECT_EQ(d.test_size(), 200u);
    EXPECT_EQ(d.train_pixels.size(), 800u * 3 * 16 * 16);
    EXPECT_EQ(d.test_pixels.size(), 200u * 3 * 16 * 16);
}

TEST(Synthetic, SameSeedSamePixels) {
    const auto a = make_synthetic_dataset(3, 120, 8, 11);
    const auto b = make_synthetic_dataset(3, 120, 8, 11);
    const auto c = make_synthetic_dataset(3, 120, 8, 12);
    EXPECT_EQ(a.train_pixels, b.train_pixels);
    EXPECT_EQ(a.test_labels, b.test_labels);
    EXPECT_NE(a.train_pixels, c.train_pixels);
}

TEST(Synthetic, LabelsBalancedAndInRange) {
    const auto d = make_synthetic_dataset(4, 400, 8, 1);
    std::vector<int> count(4, 0);
    for (int y : d.train_labels) ++count[static_cast<std::size_t>(y)];
    for (int y : d.test_labels) ++count[static_cast<std::size_t>(y)];
    for (int n : count) EXPECT_EQ(n, 100);
}

TEST(Synthetic, RejectsBadArguments) {
    EXPECT_THROW(make_synthetic_dataset(1, 100, 8, 0), ConfigError);
    EXPECT_THROW(make_synthetic_dataset(2, 1, 8, 0), ConfigError);
    EXPECT_THROW(make_synthetic_dataset(2, 100, 2, 0), ConfigError);
}

TEST(Synthetic, BatchesCopyPixels) {
    const auto d = make_synthetic_dataset(2, 50, 8, 3);
    const std::vector<std::size_t> idx{7, 2};
    const Batch b = d.train_batch(idx);
    ASSERT_EQ(b.images.shape(), (std::vector<std::size_t>{2, 3, 8, 8}));
    EXPECT_EQ(b.labels[0], d.train_labels[7]);
    EXPECT_EQ(b.images[0], static_cast<double>(d.train_pixels[7 * d.image_size()]));
    EXPECT_EQ(b.images[d.image_size()], static_cast<double>(d.train_pixels[2 * d.image_size()]));
    const std::vector<std::size_t> bad{40};
    EXPECT_THROW(d.train_batch(bad), StructuralError);
}

TEST(Synthetic, AugmentationIsSeeded) {
    const auto d = make_synthetic_dataset(2, 50, 8, 3);
    const std::vector<std::size_t> idx{0, 1, 2, 3};
    std::mt19937_64 r1(9), r2(9);
    EXPECT_EQ(d.train_batch(idx, &r1).images, d.train_batch(idx, &r2).images);
}

namespace {

void write_records(const std::filesystem::path& p, int n, int label_bytes, int label) {
    std::ofstream out(p, std::ios::binary);
    for (int i = 0; i < n; ++i) {
        for (int b = 0; b < label_bytes; ++b) out.put(static_cast<char>(b == label_bytes - 1 ? label : 0));
        for (int j = 0; j < 3 * 32 * 32; ++j) out.put(static_cast<char>((i * 7 + j) % 256));
    }
}

}  // namespace

TEST(Cifar, ReadsBinaryLayout) {
    const auto dir = std::filesystem::temp_directory_path() / "hgsp_cifar_test";
    std::filesystem::create_directories(dir);
    for (int b = 1; b <= 5; ++b) write_records(dir / ("data_batch_" + std::to_string(b) + ".bin"), 2, 1, b);
    write_records(dir / "test_batch.bin", 3, 1, 9);
    const auto d = load_cifar_binary(dir, "cifar10");
    EXPECT_EQ(d.classes, 10);
    EXPECT_EQ(d.train_size(), 10u);
    EXPECT_EQ(d.test_size(), 3u);
    EXPECT_EQ(d.train_labels[0], 1);
    EXPECT_EQ(d.test_labels[2], 9);
    // standardized with training statistics: per-channel mean ~0
    double s = 0;
    for (std::size_t i = 0; i < d.train_size(); ++i)
        for (std::size_t j = 0; j < 1024; ++j) s += d.train_pixels[i * d.image_size() + j];
    EXPECT_NEAR(s / (10 * 1024), 0.0, 1e-4);
    EXPECT_THROW(load_cifar_binary(dir, "svhn"), ConfigError);
    EXPECT_THROW(load_cifar_binary(dir / "missing", "cifar10"), IoError);
    std::filesystem::remove_all(dir);
}
