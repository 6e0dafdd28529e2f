#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "distill/numerics/adam.hpp"
#include "distill/numerics/batchnorm.hpp"
#include "distill/numerics/checkpoint.hpp"
#include "distill/numerics/conv.hpp"
#include "distill/numerics/losses.hpp"
#include "distill/numerics/network.hpp"
#include "distill/imageio/pnm.hpp"
#include "distill/numerics/pooling.hpp"
#include "test_support.hpp"

using namespace distill;
using namespace distill::nn;
using testing_support::check_gradients;
using testing_support::random_tensor;
using testing_support::random_values;

namespace {

// Direct quadruple loop, zero padding outside the image.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t pad) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t f = w.dim(0), k = w.dim(2);
    const std::size_t oh = h + 2 * pad - k + 1, ow = wd + 2 * pad - k + 1;
    std::vector<double> out(n * f * oh * ow);
    for (std::size_t bi = 0; bi < n; ++bi)
        for (std::size_t fi = 0; fi < f; ++fi)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xo = 0; xo < ow; ++xo) {
                    double s = b[fi];
                    for (std::size_t ci = 0; ci < c; ++ci)
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const long iy = static_cast<long>(y + ky) - static_cast<long>(pad);
                                const long ix = static_cast<long>(xo + kx) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                                s += w[((fi * c + ci) * k + ky) * k + kx] * x[((bi * c + ci) * h + iy) * wd + ix];
                            }
                    out[((bi * f + fi) * oh + y) * ow + xo] = s;
                }
    return out;
}

}  // namespace

TEST(Autodiff, SumGradientIsOnes) {
    Tensor x({3}, {0.5, -2.0, 7.0}, true);
    backward(sum(x));
    EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{1, 1, 1}));
}

TEST(Autodiff, SquareGradientIsTwoX) {
    Tensor x({3}, {1.0, 2.0, 3.0}, true);
    backward(sum(x * x));
    EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2, 4, 6}));
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
    Tensor x({2}, {1.5, -0.5}, true);
    Tensor y = x * x;
    backward(sum(y + y * x));
    // d/dx (x^2 + x^3) = 2x + 3x^2
    EXPECT_NEAR(x.grad()[0], 2 * 1.5 + 3 * 1.5 * 1.5, 1e-12);
    EXPECT_NEAR(x.grad()[1], 2 * -0.5 + 3 * 0.25, 1e-12);
}

TEST(Autodiff, BackwardRejectsNonScalarAndConstants) {
    Tensor x({2}, {1.0, 2.0}, true);
    EXPECT_THROW(backward(x * x), ShapeError);
    EXPECT_THROW(backward(sum(Tensor({2}, {1.0, 2.0}))), InvalidArgument);
}

TEST(Autodiff, NoGradGuardBuildsNoGraph) {
    Tensor x({2}, {1.0, 2.0}, true);
    NoGradGuard guard;
    Tensor y = sum(x * x);
    EXPECT_FALSE(y.requires_grad());
}

TEST(Autodiff, NonFiniteConstructionIsRejected) {
    EXPECT_THROW(Tensor({1}, {std::nan("")}), NumericError);
    EXPECT_THROW(Tensor({2}, {1.0}), ShapeError);
}

TEST(Autodiff, ElementwiseOpsMatchFiniteDifferences) {
    Tensor a = random_tensor({2, 3}, 1, true);
    Tensor b = random_tensor({2, 3}, 2, true);
    const auto r = check_gradients({a, b}, [&] {
        return mean(sigmoid(a * b - scale(a, 0.5)) + relu(a + b) + reshape(reshape(b, {3, 2}) * reshape(b, {3, 2}), {2, 3}));
    });
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

// --- convolution ------------------------------------------------------------

TEST(Conv2d, OneByOneIdentityKernel) {
    Tensor x = random_tensor({1, 1, 4, 5}, 3);
    Tensor y = conv2d(x, Tensor({1, 1, 1, 1}, {1.0}), Tensor({1}, {0.0}), 0);
    EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), std::vector<double>(x.data().begin(), x.data().end()));
}

TEST(Conv2d, AllOnesKernelOnConstantInput) {
    Tensor y = conv2d(Tensor::full({1, 1, 5, 5}, 2.0), Tensor::full({1, 1, 3, 3}, 1.0), Tensor({1}, {0.0}), 0);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
    for (double v : y.data()) EXPECT_EQ(v, 18.0);
}

TEST(Conv2d, MatchesNaiveLoopOracle) {
    for (std::size_t pad : {0u, 1u, 2u}) {
        Tensor x = random_tensor({2, 3, 8, 8}, 10 + pad);
        Tensor w = random_tensor({4, 3, 3, 3}, 20 + pad);
        Tensor b = random_tensor({4}, 30 + pad);
        Tensor y = conv2d(x, w, b, pad);
        const auto ref = naive_conv(x, w, b, pad);
        ASSERT_EQ(y.numel(), ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12) << "pad " << pad << " i " << i;
    }
}

TEST(Conv2d, FiveByFiveKernelMatchesOracle) {
    Tensor x = random_tensor({1, 2, 7, 6}, 41);
    Tensor w = random_tensor({3, 2, 5, 5}, 42);
    Tensor b = random_tensor({3}, 43);
    const auto ref = naive_conv(x, w, b, 2);
    Tensor y = conv2d(x, w, b, 2);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv2d, RejectsMismatchedShapes) {
    EXPECT_THROW(conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), 1), ShapeError);
    EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1}), 1), ShapeError);
    EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({2, 1, 3, 3}), Tensor::zeros({1}), 1), ShapeError);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
    Tensor x = random_tensor({2, 2, 5, 5}, 51, true);
    Tensor w = random_tensor({3, 2, 3, 3}, 52, true);
    Tensor b = random_tensor({3}, 53, true);
    Tensor probe = random_tensor({2, 3, 5, 5}, 54);
    const auto r = check_gradients({x, w, b}, [&] { return sum(conv2d(x, w, b, 1) * probe); });
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

// --- pooling ----------------------------------------------------------------

TEST(MaxPool, SingleWindowPicksMaximum) {
    auto [y, idx] = maxpool2x2_with_indices(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
    EXPECT_EQ(y[0], 4.0);
    EXPECT_EQ(idx.argmax[0], 3u);  // (1,1)
}

TEST(MaxPool, TiesResolveToFirstWindowPosition) {
    auto [y, idx] = maxpool2x2_with_indices(Tensor::full({1, 1, 4, 4}, 0.7));
    const std::vector<std::size_t> expected{0, 2, 8, 10};
    EXPECT_EQ(idx.argmax, expected);
    for (double v : y.data()) EXPECT_EQ(v, 0.7);
}

TEST(MaxPool, MatchesBruteForceWindowScan) {
    Tensor x = random_tensor({1, 1, 6, 6}, 61);
    auto [y, idx] = maxpool2x2_with_indices(x);
    for (std::size_t oy = 0; oy < 3; ++oy) {
        for (std::size_t ox = 0; ox < 3; ++ox) {
            double best = -1e300;
            std::size_t at = 0;
            for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) {
                    const std::size_t i = (2 * oy + dy) * 6 + 2 * ox + dx;
                    if (x[i] > best) best = x[i], at = i;
                }
            EXPECT_EQ(y[oy * 3 + ox], best);
            EXPECT_EQ(idx.argmax[oy * 3 + ox], at);
        }
    }
}

TEST(MaxPool, OddSizeIsRejected) { EXPECT_THROW(maxpool2x2_with_indices(Tensor::zeros({1, 1, 3, 4})), ShapeError); }

TEST(Unpool, RoundTripReproducesValueAndIndex) {
    Tensor x = random_tensor({2, 3, 4, 6}, 71);
    auto [y, idx] = maxpool2x2_with_indices(x);
    auto [y2, idx2] = maxpool2x2_with_indices(unpool2x2(y, idx));
    // Unpooling leaves zeros next to the maxima, so a negative maximum loses to 0.
    for (std::size_t i = 0; i < y.numel(); ++i) {
        if (y[i] > 0.0) {
            EXPECT_EQ(y2[i], y[i]);
            EXPECT_EQ(idx2.argmax[i], idx.argmax[i]);
        }
    }
    Tensor pos = Tensor(x.shape(), random_values(x.numel(), 72, 0.1, 1.0));
    auto [p, pidx] = maxpool2x2_with_indices(pos);
    auto [p2, pidx2] = maxpool2x2_with_indices(unpool2x2(p, pidx));
    EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()), std::vector<double>(p2.data().begin(), p2.data().end()));
    EXPECT_EQ(pidx.argmax, pidx2.argmax);
}

TEST(Unpool, ZerosStayZero) {
    auto [y, idx] = maxpool2x2_with_indices(random_tensor({1, 2, 4, 4}, 73));
    Tensor u = unpool2x2(Tensor::zeros(y.shape()), idx);
    for (double v : u.data()) EXPECT_EQ(v, 0.0);
}

TEST(Unpool, NonzeroCountEqualsWindowCount) {
    Tensor x(Shape{2, 2, 6, 8}, random_values(2 * 2 * 6 * 8, 74, 0.5, 1.5));
    auto [y, idx] = maxpool2x2_with_indices(x);
    Tensor u = unpool2x2(y, idx);
    std::size_t nonzero = 0;
    for (double v : u.data()) nonzero += v != 0.0;
    EXPECT_EQ(nonzero, y.numel());
}

TEST(PoolUnpool, GradientsMatchFiniteDifferences) {
    Tensor x = random_tensor({1, 2, 4, 4}, 75, true);
    Tensor probe = random_tensor({1, 2, 4, 4}, 76);
    const auto r = check_gradients({x}, [&] {
        auto [y, idx] = maxpool2x2_with_indices(x);
        return sum(unpool2x2(y * y, idx) * probe);
    });
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

// --- batch norm -------------------------------------------------------------

TEST(BatchNorm, TrainingOutputIsStandardized) {
    Tensor x = random_tensor({3, 2, 4, 5}, 81);
    auto stats = BatchNormStats::create(2);
    Tensor y = batchnorm_forward(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), stats, true);
    const std::size_t hw = 20;
    for (std::size_t c = 0; c < 2; ++c) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t b = 0; b < 3; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
                const double v = y[(b * 2 + c) * hw + i];
                s += v;
                s2 += v * v;
            }
        const double m = s / 60.0;
        EXPECT_NEAR(m, 0.0, 1e-6);
        EXPECT_NEAR(s2 / 60.0 - m * m, 1.0, 1e-3);  // eps shrinks the variance slightly
    }
}

TEST(BatchNorm, ConstantChannelMapsToBeta) {
    auto stats = BatchNormStats::create(1);
    Tensor y = batchnorm_forward(Tensor::full({2, 1, 3, 3}, 4.2), Tensor({1}, {2.0}), Tensor({1}, {0.25}), stats, true);
    for (double v : y.data()) EXPECT_NEAR(v, 0.25, 1e-9);
}

TEST(BatchNorm, RunningStatisticsUseMomentum) {
    Tensor x(Shape{1, 1, 1, 4}, {1.0, 2.0, 3.0, 4.0});
    auto stats = BatchNormStats::create(1);
    batchnorm_forward(x, Tensor({1}, {1.0}), Tensor({1}, {0.0}), stats, true);
    EXPECT_NEAR(stats.running_mean[0], 0.1 * 2.5, 1e-12);
    // Unbiased batch variance 5/3 blended into the initial 1.0.
    EXPECT_NEAR(stats.running_var[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);
    Tensor e = batchnorm_forward(x, Tensor({1}, {1.0}), Tensor({1}, {0.0}), stats, false);
    EXPECT_NEAR(e[0], (1.0 - stats.running_mean[0]) / std::sqrt(stats.running_var[0] + 1e-5), 1e-12);
}

TEST(BatchNorm, GradientsMatchFiniteDifferences) {
    Tensor x = random_tensor({2, 3, 3, 3}, 82, true);
    Tensor g = random_tensor({3}, 83, true);
    Tensor b = random_tensor({3}, 84, true);
    Tensor probe = random_tensor({2, 3, 3, 3}, 85);
    auto stats = BatchNormStats::create(3);
    const auto r = check_gradients({x, g, b}, [&] { return sum(batchnorm_forward(x, g, b, stats, true) * probe); });
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

TEST(BatchNorm, SinglePixelBatchIsRejectedInTraining) {
    auto stats = BatchNormStats::create(1);
    EXPECT_THROW(batchnorm_forward(Tensor::zeros({1, 1, 1, 1}), Tensor({1}, {1.0}), Tensor({1}, {0.0}), stats, true),
                 InvalidArgument);
}

// --- losses -----------------------------------------------------------------

TEST(MaskedL1, ZeroWhenPredictionEqualsTarget) {
    Tensor p = random_tensor({1, 1, 3, 3}, 91);
    Tensor m(Shape{1, 1, 3, 3}, {1, 0, 1, 0, 0, 1, 1, 1, 0});
    EXPECT_EQ(masked_l1_loss(p, p, m).item(), 0.0);
}

TEST(MaskedL1, HandEvaluatedPair) {
    EXPECT_DOUBLE_EQ(masked_l1_loss(Tensor({2}, {1, 3}), Tensor({2}, {2, 5}), Tensor({2}, {1, 0})).item(), 1.0);
}

TEST(MaskedL1, AllOnesMaskEqualsPlainMae) {
    Tensor p = random_tensor({64}, 92), t = random_tensor({64}, 93);
    double mae = 0.0;
    for (std::size_t i = 0; i < 64; ++i) mae += std::abs(p[i] - t[i]);
    EXPECT_NEAR(masked_l1_loss(p, t, Tensor::full({64}, 1.0)).item(), mae / 64.0, 1e-12);
}

TEST(MaskedL1, EmptyMaskAndNonBinaryMaskAreErrors) {
    EXPECT_THROW(masked_l1_loss(Tensor({2}, {1, 2}), Tensor({2}, {0, 0}), Tensor({2}, {0, 0})), InvalidArgument);
    EXPECT_THROW(masked_l1_loss(Tensor({2}, {1, 2}), Tensor({2}, {0, 0}), Tensor({2}, {0.5, 1})), InvalidArgument);
}

TEST(MaskedL1, GradientIsZeroAtMaskedOutPixels) {
    Tensor p = random_tensor({10}, 94, true);
    Tensor t = random_tensor({10}, 95);
    std::vector<double> mv(10, 0.0);
    mv[2] = mv[5] = mv[7] = 1.0;
    backward(masked_l1_loss(p, t, Tensor({10}, mv)));
    for (std::size_t i = 0; i < 10; ++i) {
        if (mv[i] == 0.0) EXPECT_EQ(p.grad()[i], 0.0);
        else EXPECT_NEAR(std::abs(p.grad()[i]), 1.0 / 3.0, 1e-15);
    }
}

TEST(Bce, KnownValues) {
    EXPECT_NEAR(bce_with_sigmoid_loss(Tensor({1}, {0.0}), Tensor({1}, {1.0})).item(), std::log(2.0), 1e-15);
    const double sat = bce_with_sigmoid_loss(Tensor({1}, {20.0}), Tensor({1}, {1.0})).item();
    EXPECT_TRUE(std::isfinite(sat));
    EXPECT_LT(sat, 1e-8);
    EXPECT_TRUE(std::isfinite(bce_with_sigmoid_loss(Tensor({1}, {-800.0}), Tensor({1}, {1.0})).item()));
}

TEST(Bce, MatchesExtendedPrecisionOracle) {
    Tensor z(Shape{50}, random_values(50, 96, -8.0, 8.0));
    std::vector<double> yv(50);
    for (std::size_t i = 0; i < 50; ++i) yv[i] = (i * 7) % 3 == 0 ? 1.0 : 0.0;
    long double ref = 0.0L;
    for (std::size_t i = 0; i < 50; ++i) {
        const long double s = 1.0L / (1.0L + std::exp(-static_cast<long double>(z[i])));
        ref -= yv[i] * std::log(s) + (1.0L - yv[i]) * std::log(1.0L - s);
    }
    EXPECT_NEAR(bce_with_sigmoid_loss(z, Tensor({50}, yv)).item(), static_cast<double>(ref / 50.0L), 1e-10);
}

TEST(Bce, GradientsMatchFiniteDifferences) {
    Tensor z = random_tensor({12}, 97, true);
    std::vector<double> yv(12);
    for (std::size_t i = 0; i < 12; ++i) yv[i] = i % 2;
    Tensor y({12}, yv);
    const auto r = check_gradients({z}, [&] { return bce_with_sigmoid_loss(z, y); });
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogK) {
    std::vector<int> labels{0, 3, 2, 1};
    EXPECT_NEAR(softmax_cross_entropy(Tensor::zeros({1, 4, 2, 2}), labels).item(), std::log(4.0), 1e-15);
}

TEST(SoftmaxCrossEntropy, ConfidentCorrectLogitGivesNearZero) {
    std::vector<double> z(3, 0.0);
    z[1] = 20.0;
    std::vector<int> labels{1};
    EXPECT_LT(softmax_cross_entropy(Tensor({1, 3, 1, 1}, z), labels).item(), 1e-8);
}

TEST(SoftmaxCrossEntropy, MatchesExtendedPrecisionOracleAndIgnoresLabel) {
    const std::size_t n = 2, k = 3, hw = 6;
    Tensor z(Shape{n, k, 2, 3}, random_values(n * k * hw, 98, -4.0, 4.0));
    std::vector<int> labels{0, 1, 2, kIgnoreLabel, 1, 0, 2, 2, kIgnoreLabel, 0, 1, 1};
    long double total = 0.0L;
    int count = 0;
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) {
            const int l = labels[b * hw + i];
            if (l < 0) continue;
            long double denom = 0.0L;
            for (std::size_t c = 0; c < k; ++c) denom += std::exp(static_cast<long double>(z[(b * k + c) * hw + i]));
            total += std::log(denom) - z[(b * k + l) * hw + i];
            ++count;
        }
    EXPECT_NEAR(softmax_cross_entropy(z, labels).item(), static_cast<double>(total / count), 1e-10);
}

TEST(SoftmaxCrossEntropy, ErrorsAndGradient) {
    std::vector<int> bad{3};
    EXPECT_THROW(softmax_cross_entropy(Tensor::zeros({1, 3, 1, 1}), bad), InvalidArgument);
    std::vector<int> ignored{kIgnoreLabel};
    EXPECT_THROW(softmax_cross_entropy(Tensor::zeros({1, 3, 1, 1}), ignored), InvalidArgument);
    Tensor z = random_tensor({2, 3, 2, 2}, 99, true);
    std::vector<int> labels{0, 1, 2, 1, kIgnoreLabel, 0, 2, 2};
    const auto r = check_gradients({z}, [&] { return softmax_cross_entropy(z, labels); });
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

// --- Adam -------------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    Tensor p({3}, {1.0, -2.0, 0.5}, true);
    p.mutable_grad();
    std::vector<Tensor> params{p};
    AdamState st;
    for (int i = 0; i < 5; ++i) adam_step(params, st);
    EXPECT_EQ(p[0], 1.0);
    EXPECT_EQ(p[1], -2.0);
    EXPECT_EQ(p[2], 0.5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Tensor p({1}, {1.0}, true);
    p.mutable_grad()[0] = 1.0;
    std::vector<Tensor> params{p};
    AdamState st;
    adam_step(params, st);
    // m_hat = 1, v_hat = 1: step = lr / (1 + eps)
    EXPECT_NEAR(p[0], 1.0 - 1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, MatchesScalarRecurrenceOracle) {
    Tensor p({2}, {0.3, -0.8}, true);
    std::vector<Tensor> params{p};
    AdamState st;
    st.config.lr = 0.01;
    double q[2] = {0.3, -0.8}, m[2] = {0, 0}, v[2] = {0, 0};
    for (int t = 1; t <= 25; ++t) {
        p.zero_grad();
        for (int i = 0; i < 2; ++i) p.mutable_grad()[i] = 2.0 * p[i] + std::sin(t);
        adam_step(params, st);
        for (int i = 0; i < 2; ++i) {
            const double g = 2.0 * q[i] + std::sin(t);
            m[i] = 0.9 * m[i] + 0.1 * g;
            v[i] = 0.999 * v[i] + 0.001 * g * g;
            const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
            q[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    EXPECT_NEAR(p[0], q[0], 1e-14);
    EXPECT_NEAR(p[1], q[1], 1e-14);
}

TEST(Adam, DescendsOnQuadratic) {
    Tensor p({1}, {1.0}, true);
    std::vector<Tensor> params{p};
    AdamState st;
    for (int i = 0; i < 100; ++i) {
        p.zero_grad();
        backward(sum(p * p));
        adam_step(params, st);
    }
    EXPECT_LT(std::abs(p[0]), 1.0);
}

// --- network + checkpoint ---------------------------------------------------

TEST(Network, LayerGradientsMatchFiniteDifferences) {
    // conv3x3 -> bn -> relu -> pool -> conv1x1 -> unpool -> sigmoid
    std::vector<LayerSpec> layers{conv3x3_layer("c1", 2, 3), batchnorm_layer("bn", 3), relu_layer(3),
                                  maxpool_layer("p", 3),      conv_layer("c2", 3, 3, 1), unpool_layer("u", 3, 3),
                                  sigmoid_layer(3)};
    Network net(layers, 5);
    Tensor x = random_tensor({2, 2, 4, 4}, 101);
    Tensor probe = random_tensor({2, 3, 4, 4}, 102);
    const auto r = check_gradients(net.parameters(), [&] { return sum(net.forward(x, Mode::Train) * probe); });
    EXPECT_LT(r.max_rel, 1e-3) << r.worst;
}

TEST(Network, SameSeedSameParameters) {
    std::vector<LayerSpec> layers{conv3x3_layer("c", 1, 2)};
    Network a(layers, 9), b(layers, 9), c(layers, 10);
    EXPECT_EQ(encode_checkpoint(a.state()), encode_checkpoint(b.state()));
    EXPECT_NE(encode_checkpoint(a.state()), encode_checkpoint(c.state()));
}

TEST(Network, InvalidLayerGraphsAreRejected) {
    EXPECT_THROW(Network({conv3x3_layer("c", 1, 2), conv3x3_layer("d", 3, 1)}, 1), ShapeError);
    EXPECT_THROW(Network({maxpool_layer("p", 1), unpool_layer("u", 1, 5)}, 1), InvalidArgument);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    testing_support::TempDir tmp("ckpt");
    Network net({conv3x3_layer("c", 2, 3), batchnorm_layer("bn", 3)}, 11);
    save_checkpoint(tmp.path() / "a.ckpt", net.state());
    const auto loaded = load_checkpoint(tmp.path() / "a.ckpt");
    EXPECT_EQ(encode_checkpoint(loaded), encode_checkpoint(net.state()));
    Network other({conv3x3_layer("c", 2, 3), batchnorm_layer("bn", 3)}, 12);
    other.load_state(loaded);
    save_checkpoint(tmp.path() / "b.ckpt", other.state());
    EXPECT_EQ(distill::detail::read_file_bytes(tmp.path() / "a.ckpt"), distill::detail::read_file_bytes(tmp.path() / "b.ckpt"));
}

TEST(Checkpoint, LayoutIsMagicThenLittleEndianRecords) {
    const std::string bytes = encode_checkpoint({{"w", Tensor({2}, {1.0, -2.5})}});
    ASSERT_EQ(bytes.size(), 8u + 8 + 1 + 8 + 8 + 16);
    EXPECT_EQ(bytes.substr(0, 8), "DDCKPT01");
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);  // name length
    EXPECT_EQ(bytes[16], 'w');
    EXPECT_EQ(static_cast<unsigned char>(bytes[17]), 1u);  // rank
    EXPECT_EQ(static_cast<unsigned char>(bytes[25]), 2u);  // dim
    // 1.0 = 0x3ff0000000000000, stored low byte first
    EXPECT_EQ(static_cast<unsigned char>(bytes[39]), 0xf0u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[40]), 0x3fu);
}

TEST(Checkpoint, CorruptInputIsAFormatError) {
    const std::string good = encode_checkpoint({{"w", Tensor({2}, {1.0, 2.0})}});
    EXPECT_THROW(decode_checkpoint("XXCKPT01"), FormatError);
    EXPECT_THROW(decode_checkpoint(good.substr(0, good.size() - 3)), FormatError);
    testing_support::TempDir tmp("ckpt_missing");
    EXPECT_THROW(load_checkpoint(tmp.path() / "nope.ckpt"), MissingInput);
}

TEST(Checkpoint, ShapeMismatchOnLoadIsRejected) {
    Network a({conv3x3_layer("c", 1, 2)}, 1), b({conv3x3_layer("c", 1, 3)}, 1);
    EXPECT_THROW(b.load_state(a.state()), ShapeError);
    Network c({conv3x3_layer("other", 1, 2)}, 1);
    EXPECT_THROW(c.load_state(a.state()), InvalidArgument);
}
