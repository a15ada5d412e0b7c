#include <gtest/gtest.h>

#include <cmath>

#include "hairmatte/ops.hpp"
#include "oracles.hpp"

using namespace hairmatte;

TEST(Relu, Elementwise) {
    Tensor t(Shape{1, 1, 1, 3}, {-1.0f, 0.0f, 2.0f});
    Tensor out = relu(t);
    EXPECT_EQ(out[0], 0.0f);
    EXPECT_EQ(out[1], 0.0f);
    EXPECT_EQ(out[2], 2.0f);
}

TEST(Softmax, EqualLogitsGiveUniform) {
    Tensor t = Tensor::full(1, 2, 3, 3, 0.37f);
    Tensor out = softmax_channels(t);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], 0.5f, 1e-7);
}

TEST(Softmax, SumsToOneOnRandomInput) {
    Rng rng(5);
    TensorD t = oracle::random_tensor(Shape{2, 5, 4, 4}, rng, -4.0, 4.0);
    TensorD out = softmax_channels(t);
    for (int n = 0; n < 2; ++n) {
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 4; ++x) {
                double sum = 0.0;
                for (int c = 0; c < 5; ++c) {
                    const double p = out.at(n, c, y, x);
                    EXPECT_GE(p, 0.0);
                    EXPECT_LE(p, 1.0);
                    sum += p;
                }
                EXPECT_NEAR(sum, 1.0, 1e-6);
            }
        }
    }
}

TEST(Softmax, RequiresTwoChannels) {
    EXPECT_THROW(softmax_channels(Tensor::zeros(1, 1, 2, 2)), Error);
}

TEST(Upsample, TilesEachPixel) {
    Tensor t = Tensor::from_rows({{1, 2}, {3, 4}});
    Tensor out = upsample_replicate2x(t);
    const std::vector<float> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    ASSERT_EQ(out.shape(), (Shape{1, 1, 4, 4}));
    EXPECT_EQ(out.vec(), want);
}

TEST(Upsample, PreservesMeanExactly) {
    Rng rng(6);
    Tensor t = Tensor::random_uniform(Shape{1, 2, 5, 7}, rng, 0.0f, 1.0f);
    Tensor out = upsample_replicate2x(t);
    double m_in = 0.0, m_out = 0.0;
    for (float v : t.vec()) m_in += v;
    for (float v : out.vec()) m_out += v;
    EXPECT_DOUBLE_EQ(m_out / out.size(), m_in / t.size());
}

TEST(Upsample, ThreeComposedReach224) {
    Tensor t = Tensor::zeros(1, 1, 28, 28);
    Tensor out = upsample_replicate2x(upsample_replicate2x(upsample_replicate2x(t)));
    EXPECT_EQ(out.h(), 224);
    EXPECT_EQ(out.w(), 224);
}

TEST(BatchNorm, ConstantChannelGivesShift) {
    TensorD x = TensorD::full(2, 1, 3, 3, 5.0);
    TensorD scale = TensorD::full(1, 1, 1, 1, 2.0);
    TensorD shift = TensorD::full(1, 1, 1, 1, -0.75);
    auto running = ops::BnRunningT<double>::identity(1);
    TensorD out = batch_norm(x, scale, shift, running, BnMode::train);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], -0.75, 1e-9);
}

TEST(BatchNorm, InferIdentityWithUnitStats) {
    Rng rng(7);
    TensorD x = oracle::random_tensor(Shape{1, 3, 4, 4}, rng);
    TensorD scale = TensorD::full(1, 3, 1, 1, 1.0);
    TensorD shift = TensorD::zeros(1, 3, 1, 1);
    auto running = ops::BnRunningT<double>::identity(3);
    TensorD out = batch_norm(x, scale, shift, running, BnMode::infer);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out[i], x[i], 1e-6);
}

TEST(BatchNorm, TrainModeMomentsMatchScaleShift) {
    Rng rng(8);
    TensorD x = oracle::random_tensor(Shape{4, 2, 6, 6}, rng, -2.0, 3.0);
    TensorD scale(Shape{1, 2, 1, 1}, {1.7, -0.6});
    TensorD shift(Shape{1, 2, 1, 1}, {0.25, 2.0});
    auto running = ops::BnRunningT<double>::identity(2);
    TensorD out = batch_norm(x, scale, shift, running, BnMode::train);
    for (int c = 0; c < 2; ++c) {
        double sum = 0.0, sq = 0.0;
        int count = 0;
        for (int n = 0; n < 4; ++n) {
            const double* p = out.plane(n, c);
            for (int i = 0; i < 36; ++i) {
                sum += p[i];
                sq += p[i] * p[i];
                ++count;
            }
        }
        const double mean = sum / count;
        const double stddev = std::sqrt(sq / count - mean * mean);
        EXPECT_NEAR(mean, shift[c], 1e-3);
        EXPECT_NEAR(stddev, std::abs(scale[c]), 1e-3);
    }
}

TEST(BatchNorm, EmptyBatchInTrainModeFails) {
    TensorD x(Shape{0, 1, 2, 2});
    TensorD one = TensorD::full(1, 1, 1, 1, 1.0);
    TensorD zero = TensorD::zeros(1, 1, 1, 1);
    auto running = ops::BnRunningT<double>::identity(1);
    EXPECT_THROW(batch_norm(x, one, zero, running, BnMode::train), Error);
}

TEST(BatchNorm, RunningStatsConvergeToBatchStats) {
    Rng rng(9);
    TensorD x = oracle::random_tensor(Shape{8, 1, 4, 4}, rng, 1.0, 3.0);
    TensorD one = TensorD::full(1, 1, 1, 1, 1.0);
    TensorD zero = TensorD::zeros(1, 1, 1, 1);
    auto running = ops::BnRunningT<double>::identity(1);
    for (int i = 0; i < 200; ++i) batch_norm(x, one, zero, running, BnMode::train);
    double sum = 0.0;
    for (double v : x.vec()) sum += v;
    EXPECT_NEAR(running.mean[0], sum / x.size(), 1e-6);
}

TEST(Sobel, ConstantImageHasZeroField) {
    TensorD img = TensorD::full(1, 1, 8, 8, 0.4);
    auto f = sobel_gradients(img, false);
    for (std::size_t i = 0; i < f.mag.size(); ++i) {
        EXPECT_NEAR(f.gx[i], 0.0, 1e-12);
        EXPECT_NEAR(f.gy[i], 0.0, 1e-12);
        EXPECT_NEAR(f.mag[i], 0.0, 1e-12);
    }
}

TEST(Sobel, VerticalStepEdge) {
    // left half 0, right half 1: gy == 0 everywhere, gx > 0 on the two
    // columns whose 3x3 window straddles the step (hand-applied Sobel gives
    // 4 there); normalized gx is ~1 on those columns.
    TensorD img(Shape{1, 1, 8, 8});
    for (int y = 0; y < 8; ++y) {
        for (int x = 4; x < 8; ++x) img.at(0, 0, y, x) = 1.0;
    }
    auto raw = sobel_gradients(img, false);
    auto norm = sobel_gradients(img, true);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            EXPECT_EQ(raw.gy.at(0, 0, y, x), 0.0);
            if (x == 3 || x == 4) {
                EXPECT_EQ(raw.gx.at(0, 0, y, x), 4.0);
                EXPECT_EQ(raw.mag.at(0, 0, y, x), 4.0);
                EXPECT_NEAR(norm.gx.at(0, 0, y, x), 1.0, 1e-5);
            } else {
                EXPECT_EQ(raw.gx.at(0, 0, y, x), 0.0);
            }
        }
    }
}

TEST(Sobel, RotationSwapsAxes) {
    Rng rng(10);
    TensorD img = oracle::random_tensor(Shape{1, 1, 9, 9}, rng, 0.0, 1.0);
    TensorD rotated(img.shape());  // 90 degrees counterclockwise
    const int S = 9;
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            rotated.at(0, 0, S - 1 - x, y) = img.at(0, 0, y, x);
        }
    }
    auto f = sobel_gradients(img, false);
    auto g = sobel_gradients(rotated, false);
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            // (gx, gy) rotates like a vector: gx' = gy, gy' = -gx
            EXPECT_NEAR(g.gx.at(0, 0, S - 1 - x, y), f.gy.at(0, 0, y, x), 1e-12);
            EXPECT_NEAR(g.gy.at(0, 0, S - 1 - x, y), -f.gx.at(0, 0, y, x), 1e-12);
            EXPECT_NEAR(g.mag.at(0, 0, S - 1 - x, y), f.mag.at(0, 0, y, x), 1e-12);
        }
    }
}

TEST(Sobel, NormalizedDirectionBounded) {
    Rng rng(12);
    TensorD img = oracle::random_tensor(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
    auto f = sobel_gradients(img, true);
    for (std::size_t i = 0; i < f.gx.size(); ++i) {
        const double sq = f.gx[i] * f.gx[i] + f.gy[i] * f.gy[i];
        EXPECT_GE(sq, 0.0);
        EXPECT_LE(sq, 1.0 + 1e-5);
        EXPECT_NEAR(f.mag[i],
                    std::sqrt(std::pow(f.gx[i] * (f.mag[i] + 1e-6), 2) +
                              std::pow(f.gy[i] * (f.mag[i] + 1e-6), 2)),
                    1e-6);
    }
}

TEST(PadReplicate, Borders) {
    Tensor t = Tensor::from_rows({{1, 2}, {3, 4}});
    Tensor out = pad_replicate(t, 1);
    ASSERT_EQ(out.shape(), (Shape{1, 1, 4, 4}));
    EXPECT_EQ(out.at(0, 0, 0, 0), 1.0f);
    EXPECT_EQ(out.at(0, 0, 0, 3), 2.0f);
    EXPECT_EQ(out.at(0, 0, 3, 0), 3.0f);
    EXPECT_EQ(out.at(0, 0, 3, 3), 4.0f);
    EXPECT_EQ(out.at(0, 0, 1, 1), 1.0f);
}
