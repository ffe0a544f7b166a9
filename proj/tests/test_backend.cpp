#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "hgsprune/backend.hpp"
#include "test_support.hpp"

using namespace hgsp;
using hgsp::testing::random_batch;
using hgsp::testing::randomize;

namespace {

/// Central-difference check of every n-th trainable parameter against the
/// analytic train-mode gradient.
void check_gradients(NetworkSpec net, const Batch& batch, std::size_t stride) {
    const CpuBackend be;
    const TrainStep step = be.train_step(net, batch);
    const double h = 1e-6;
    auto loss = [&] { return be.train_step(net, batch).eval.loss; };
    auto probe = [&](double& param, double analytic) {
        const double keep = param;
        param = keep + h;
        const double up = loss();
        param = keep - h;
        const double down = loss();
        param = keep;
        const double fd = (up - down) / (2 * h);
        EXPECT_NEAR(analytic, fd, 1e-6 + 1e-4 * std::fabs(fd));
    };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& w = net.layers[l].weights;
        for (std::size_t i = l % stride; i < w.size(); i += stride) probe(w[i], step.grads.conv[l][i]);
        for (std::size_t c = 0; c < net.layers[l].bn.size(); ++c) {
            probe(net.layers[l].bn.scale[c], step.grads.bn_scale[l][c]);
            probe(net.layers[l].bn.shift[c], step.grads.bn_shift[l][c]);
        }
    }
    auto& fw = net.classifier.weights;
    for (std::size_t i = 0; i < fw.size(); ++i) probe(fw[i], step.grads.fc_weights[i]);
    for (std::size_t i = 0; i < net.classifier.bias.size(); ++i) probe(net.classifier.bias[i], step.grads.fc_bias[i]);
}

}  // namespace

TEST(CpuBackend, CrossEntropyOfUniformLogitsIsLogK) {
    Tensor logits({2, 4}, 0.0);
    const std::vector<int> labels{0, 3};
    const auto ev = CpuBackend::cross_entropy(logits, labels, nullptr);
    EXPECT_NEAR(ev.loss, std::log(4.0), 1e-15);
}

TEST(CpuBackend, ChainGradientsMatchFiniteDifferences) {
    auto net = build_chain({3, 4, 5}, {true, false, false}, 3, 2);
    randomize(net, 11);
    check_gradients(net, random_batch(5, 2, 6, 3, 5), 7);
}

TEST(CpuBackend, ResidualGradientsMatchFiniteDifferences) {
    auto net = build_resnet(7, 3, 2, 2);
    randomize(net, 12);
    check_gradients(net, random_batch(4, 2, 8, 3, 6), 11);
}

TEST(CpuBackend, EvalUsesRunningStatistics) {
    auto net = build_chain({2}, {false}, 2, 1);
    randomize(net, 3);
    const CpuBackend be;
    auto batch = random_batch(3, 1, 4, 2, 9);
    const double before = be.evaluate(net, batch).loss;
    net.layers[0].bn.running_mean[0] += 0.5;
    EXPECT_NE(before, be.evaluate(net, batch).loss);
}

TEST(CpuBackend, RejectsWrongImageChannels) {
    auto net = build_chain({2}, {false}, 2, 3);
    const CpuBackend be;
    EXPECT_THROW(be.evaluate(net, random_batch(2, 1, 4, 2, 1)), StructuralError);
}

TEST(CpuBackend, ForwardIsDeterministic) {
    auto net = build_resnet(7, 2, 4, 3);
    randomize(net, 5);
    const CpuBackend be;
    auto batch = random_batch(6, 3, 8, 2, 2);
    EXPECT_EQ(be.logits(net, batch.images), be.logits(net, batch.images));
}
