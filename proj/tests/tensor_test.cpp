#include "gridrl/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gridrl;

namespace {

template <class Real>
Tensor<Real> make_tensor(std::vector<int> shape, std::vector<Real> values) {
    Tensor<Real> t(std::move(shape));
    EXPECT_EQ(t.numel(), static_cast<long long>(values.size()));
    t.data = std::move(values);
    return t;
}

template <class Real>
void fill_random(Tensor<Real>& t, std::mt19937& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (Real& v : t.data) v = static_cast<Real>(dist(rng));
}

}  // namespace

TEST(Tensor, InvariantsOnConstruction) {
    Tensor<float> t({2, 3, 4});
    EXPECT_EQ(t.numel(), 24);
    EXPECT_EQ(t.data.size(), 24u);
    EXPECT_EQ(t.grad.size(), 24u);
    EXPECT_THROW(Tensor<float>({2, 0}), std::invalid_argument);
}

TEST(Tensor, ParameterSetRejectsDuplicateNames) {
    ParameterSet<float> params;
    params.add("a", Tensor<float>({2}));
    EXPECT_THROW(params.add("a", Tensor<float>({2})), std::invalid_argument);
    EXPECT_EQ(params.find("missing"), nullptr);
    EXPECT_THROW(params.at("missing"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

TEST(Conv2d, IdentityKernel) {
    auto input = make_tensor<double>({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto weight = make_tensor<double>({1, 1, 1, 1}, {1});
    Tensor<double> bias({1});
    Tensor<double> out;
    conv2d_forward(input, weight, bias, out);
    EXPECT_EQ(out.shape, input.shape);
    for (std::size_t i = 0; i < input.data.size(); ++i)
        EXPECT_DOUBLE_EQ(out.data[i], input.data[i]);
}

TEST(Conv2d, HandCrossCorrelationWithSamePadding) {
    // 2x2 input [[1,2],[3,4]] against an all-ones 3x3 kernel: every output
    // window covers the whole input, so all four outputs equal 10.
    auto input = make_tensor<double>({1, 2, 2}, {1, 2, 3, 4});
    auto weight = make_tensor<double>({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor<double> bias({1});
    Tensor<double> out;
    conv2d_forward(input, weight, bias, out);
    for (double v : out.data) EXPECT_DOUBLE_EQ(v, 10.0);
}

TEST(Conv2d, ZeroWeightAnnihilates) {
    std::mt19937 rng(7);
    Tensor<float> input({3, 5, 5});
    fill_random(input, rng);
    Tensor<float> weight({4, 3, 3, 3});
    Tensor<float> bias({4});
    Tensor<float> out;
    conv2d_forward(input, weight, bias, out);
    for (float v : out.data) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, SamePaddingPreservesSpatialSizeForOddK) {
    std::mt19937 rng(11);
    for (int k : {1, 3, 5, 7}) {
        for (int n : {8, 9, 16}) {
            Tensor<float> input({2, n, n});
            fill_random(input, rng);
            Tensor<float> weight({3, 2, k, k});
            fill_random(weight, rng);
            Tensor<float> bias({3});
            Tensor<float> out;
            conv2d_forward(input, weight, bias, out);
            EXPECT_EQ(out.shape, (std::vector<int>{3, n, n}));
        }
    }
}

TEST(Conv2d, ChannelMismatchIsConfigurationError) {
    Tensor<float> input({3, 4, 4});
    Tensor<float> weight({2, 4, 3, 3});  // expects 4 input channels
    Tensor<float> bias({2});
    Tensor<float> out;
    EXPECT_THROW(conv2d_forward(input, weight, bias, out), std::invalid_argument);
}

TEST(Conv2d, EvenKernelRejected) {
    Tensor<float> input({1, 4, 4});
    Tensor<float> weight({1, 1, 2, 2});
    Tensor<float> bias({1});
    Tensor<float> out;
    EXPECT_THROW(conv2d_forward(input, weight, bias, out), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// fully connected
// ---------------------------------------------------------------------------

TEST(FullyConnected, IdentityMap) {
    auto input = make_tensor<double>({2}, {5, -3});
    auto weight = make_tensor<double>({2, 2}, {1, 0, 0, 1});
    Tensor<double> bias({2});
    Tensor<double> out;
    fc_forward(input, weight, bias, out);
    EXPECT_DOUBLE_EQ(out.data[0], 5.0);
    EXPECT_DOUBLE_EQ(out.data[1], -3.0);
}

TEST(FullyConnected, HandMatrixVectorProduct) {
    auto input = make_tensor<double>({2}, {1, 1});
    auto weight = make_tensor<double>({2, 2}, {1, 2, 3, 4});
    Tensor<double> bias({2});
    Tensor<double> out;
    fc_forward(input, weight, bias, out);
    EXPECT_DOUBLE_EQ(out.data[0], 3.0);
    EXPECT_DOUBLE_EQ(out.data[1], 7.0);
}

TEST(FullyConnected, BiasOnly) {
    auto input = make_tensor<double>({3}, {9, 9, 9});
    Tensor<double> weight({2, 3});
    auto bias = make_tensor<double>({2}, {1, 1});
    Tensor<double> out;
    fc_forward(input, weight, bias, out);
    EXPECT_DOUBLE_EQ(out.data[0], 1.0);
    EXPECT_DOUBLE_EQ(out.data[1], 1.0);
}

TEST(FullyConnected, DimensionMismatchIsConfigurationError) {
    Tensor<double> input({3});
    Tensor<double> weight({2, 4});
    Tensor<double> bias({2});
    Tensor<double> out;
    EXPECT_THROW(fc_forward(input, weight, bias, out), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

TEST(Relu, ElementwiseMax) {
    auto input = make_tensor<float>({3}, {-1, 0, 2});
    Tensor<float> out;
    relu_forward(input, out);
    EXPECT_EQ(out.data[0], 0.0f);
    EXPECT_EQ(out.data[1], 0.0f);
    EXPECT_EQ(out.data[2], 2.0f);
}

TEST(Relu, AllNegativeBlocksGradient) {
    auto input = make_tensor<float>({3}, {-1, -2, -3});
    Tensor<float> out;
    relu_forward(input, out);
    auto d_out = make_tensor<float>({3}, {1, 1, 1});
    Tensor<float> d_in({3});
    relu_backward(out, d_out, d_in);
    for (float v : out.data) EXPECT_EQ(v, 0.0f);
    for (float v : d_in.data) EXPECT_EQ(v, 0.0f);
}

TEST(Relu, AllPositivePassesThrough) {
    auto input = make_tensor<float>({3}, {1, 2, 3});
    Tensor<float> out;
    relu_forward(input, out);
    auto d_out = make_tensor<float>({3}, {4, 5, 6});
    Tensor<float> d_in({3});
    relu_backward(out, d_out, d_in);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(out.data[i], input.data[i]);
        EXPECT_EQ(d_in.data[i], d_out.data[i]);
    }
}

// ---------------------------------------------------------------------------
// masked softmax
// ---------------------------------------------------------------------------

TEST(MaskedSoftmax, UniformOverEqualLogits) {
    std::vector<double> probs = masked_softmax<double>({0, 0, 0}, {1, 1, 1});
    for (double p : probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-12);
}

TEST(MaskedSoftmax, HandDerivedTwoOfThree) {
    // e^1/(e^1+e^3) and e^3/(e^1+e^3)
    std::vector<double> probs = masked_softmax<double>({1, 2, 3}, {1, 0, 1});
    EXPECT_NEAR(probs[0], 0.1192029220221175, 1e-12);
    EXPECT_EQ(probs[1], 0.0);
    EXPECT_NEAR(probs[2], 0.8807970779778824, 1e-12);
}

TEST(MaskedSoftmax, SingleLegalEntryIsOneHot) {
    std::vector<double> probs = masked_softmax<double>({-40, 3, 17}, {0, 1, 0});
    EXPECT_EQ(probs[0], 0.0);
    EXPECT_EQ(probs[1], 1.0);
    EXPECT_EQ(probs[2], 0.0);
}

TEST(MaskedSoftmax, AllFalseMaskIsError) {
    EXPECT_THROW(masked_softmax<double>({1, 2}, {0, 0}), std::invalid_argument);
}

TEST(MaskedSoftmax, SumsToOneAndShiftInvariant) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> logit(-10, 10);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + trial % 12;
        std::vector<double> logits(n);
        std::vector<std::uint8_t> mask(n);
        bool any = false;
        for (int i = 0; i < n; ++i) {
            logits[i] = logit(rng);
            mask[i] = static_cast<std::uint8_t>(coin(rng));
            any = any || mask[i];
        }
        if (!any) mask[0] = 1;
        const auto probs = masked_softmax(logits, mask);
        double sum = 0;
        for (int i = 0; i < n; ++i) {
            if (!mask[i]) EXPECT_EQ(probs[i], 0.0);
            sum += probs[i];
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);

        std::vector<double> shifted = logits;
        for (int i = 0; i < n; ++i)
            if (mask[i]) shifted[i] += 123.25;
        const auto probs2 = masked_softmax(shifted, mask);
        for (int i = 0; i < n; ++i) EXPECT_NEAR(probs[i], probs2[i], 1e-6);
    }
}

TEST(MaskedSoftmax, StableAtExtremeLogits) {
    const auto probs = masked_softmax<float>({1000.0f, 999.0f, -1000.0f}, {1, 1, 1});
    EXPECT_TRUE(std::isfinite(probs[0]));
    EXPECT_NEAR(probs[0] + probs[1] + probs[2], 1.0f, 1e-6f);
}

TEST(Entropy, HandValue) {
    // -sum p ln p for [0.1192..., 0, 0.8808...]
    const std::vector<double> probs = masked_softmax<double>({1, 2, 3}, {1, 0, 1});
    EXPECT_NEAR(entropy(probs.data(), 3), 0.36533385508721, 1e-10);
}

// ---------------------------------------------------------------------------
// gradient_check oracles
// ---------------------------------------------------------------------------

TEST(GradientCheck, FullyConnectedSquaredLoss) {
    std::mt19937 rng(42);
    ParameterSet<double> params;
    Tensor<double> w({3, 4}), b({3});
    fill_random(w, rng);
    fill_random(b, rng);
    params.add("w", w);
    params.add("b", b);
    Tensor<double> input({4}), target({3});
    fill_random(input, rng);
    fill_random(target, rng);

    auto loss = [&](const ParameterSet<double>& p) {
        Tensor<double> out;
        fc_forward(input, p.at("w"), p.at("b"), out);
        double l = 0;
        for (int i = 0; i < 3; ++i) {
            const double d = out.data[i] - target.data[i];
            l += d * d;
        }
        return l;
    };

    // analytic gradient
    Tensor<double> out;
    fc_forward(input, params.at("w"), params.at("b"), out);
    Tensor<double> d_out({3});
    for (int i = 0; i < 3; ++i) d_out.data[i] = 2.0 * (out.data[i] - target.data[i]);
    fc_backward(input, params.at("w"), params.at("b"), d_out,
                static_cast<Tensor<double>*>(nullptr));

    EXPECT_LT(gradient_check(loss, params), 1e-4);
}

TEST(GradientCheck, ConvMaskedSoftmaxLogProbLoss) {
    std::mt19937 rng(43);
    ParameterSet<double> params;
    Tensor<double> w({1, 2, 3, 3}), b({1});
    fill_random(w, rng);
    fill_random(b, rng);
    params.add("w", w);
    params.add("b", b);
    Tensor<double> input({2, 3, 3});
    fill_random(input, rng);
    const std::vector<std::uint8_t> mask = {1, 0, 1, 1, 1, 0, 1, 1, 1};
    const int picked = 3;

    auto loss = [&](const ParameterSet<double>& p) {
        Tensor<double> logits;
        conv2d_forward(input, p.at("w"), p.at("b"), logits);
        std::vector<double> probs(9), logp(9);
        masked_softmax<double>(logits.data.data(), mask.data(), 9, probs.data(), logp.data());
        return -logp[picked];
    };

    Tensor<double> logits;
    conv2d_forward(input, params.at("w"), params.at("b"), logits);
    std::vector<double> probs(9), logp(9);
    masked_softmax<double>(logits.data.data(), mask.data(), 9, probs.data(), logp.data());
    Tensor<double> d_logits({1, 3, 3});
    for (int i = 0; i < 9; ++i)
        d_logits.data[i] = mask[i] ? probs[i] - (i == picked ? 1.0 : 0.0) : 0.0;
    conv2d_backward(input, params.at("w"), params.at("b"), d_logits,
                    static_cast<Tensor<double>*>(nullptr));

    EXPECT_LT(gradient_check(loss, params), 1e-4);
}

TEST(GradientCheck, UnusedParameterHasZeroGradientBothWays) {
    std::mt19937 rng(44);
    ParameterSet<double> params;
    Tensor<double> used({2}), unused({3});
    fill_random(used, rng);
    fill_random(unused, rng);
    params.add("used", used);
    params.add("unused", unused);

    auto loss = [&](const ParameterSet<double>& p) {
        const auto& u = p.at("used");
        return u.data[0] * u.data[0] + 3.0 * u.data[1];
    };
    params.at("used").grad[0] = 2.0 * params.at("used").data[0];
    params.at("used").grad[1] = 3.0;
    // unused grads stay zero; finite differences agree
    EXPECT_LT(gradient_check(loss, params), 1e-6);
    EXPECT_EQ(params.at("unused").grad[0], 0.0);
}

TEST(GradientCheck, NonFiniteLossIsError) {
    ParameterSet<double> params;
    params.add("w", Tensor<double>({1}));
    params.at("w").grad[0] = 0.0;
    auto loss = [](const ParameterSet<double>&) {
        return std::numeric_limits<double>::quiet_NaN();
    };
    EXPECT_THROW(gradient_check(loss, params), std::runtime_error);
}

TEST(Forward, PureBitIdenticalRepeat) {
    std::mt19937 rng(5);
    Tensor<float> input({3, 8, 8}), weight({4, 3, 5, 5}), bias({4});
    fill_random(input, rng);
    fill_random(weight, rng);
    fill_random(bias, rng);
    Tensor<float> out1, out2;
    conv2d_forward(input, weight, bias, out1);
    conv2d_forward(input, weight, bias, out2);
    EXPECT_EQ(out1.data, out2.data);
}
