#include <gtest/gtest.h>

#include "hairmatte/conv.hpp"
#include "oracles.hpp"

using namespace hairmatte;

namespace {

ConvParamsT<double> make_params(TensorD kernel, int stride = 1, int dilation = 1, int groups = 1,
                                Padding pad = Padding::Same()) {
    ConvParamsT<double> p;
    p.kernel = std::move(kernel);
    p.stride = stride;
    p.dilation = dilation;
    p.groups = groups;
    p.padding = pad;
    return p;
}

}  // namespace

TEST(Conv, BoxSumByHand) {
    // all-ones 3x3 input with an all-ones 3x3 kernel, "same": the output is
    // the count of in-bounds taps
    Tensor in = Tensor::full(1, 1, 3, 3, 1.0f);
    ConvParams p;
    p.kernel = Tensor::full(1, 1, 3, 3, 1.0f);
    Tensor out = conv2d(in, p);
    ASSERT_EQ(out.shape(), (Shape{1, 1, 3, 3}));
    EXPECT_FLOAT_EQ(out.at(0, 0, 1, 1), 9.0f);
    EXPECT_FLOAT_EQ(out.at(0, 0, 0, 0), 4.0f);
    EXPECT_FLOAT_EQ(out.at(0, 0, 0, 2), 4.0f);
    EXPECT_FLOAT_EQ(out.at(0, 0, 2, 0), 4.0f);
    EXPECT_FLOAT_EQ(out.at(0, 0, 2, 2), 4.0f);
    EXPECT_FLOAT_EQ(out.at(0, 0, 0, 1), 6.0f);
}

TEST(Conv, MatchesNaiveOracleOnRandomShapes) {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const int groups = std::vector<int>{1, 1, 2, 4}[rng.uniform_int(0, 3)];
        const int icpg = rng.uniform_int(1, 3);
        const int ocpg = rng.uniform_int(1, 3);
        const int in_c = groups * icpg, out_c = groups * ocpg;
        const int k = std::vector<int>{1, 3, 5}[rng.uniform_int(0, 2)];
        const int stride = rng.uniform_int(1, 2);
        const int dilation = std::vector<int>{1, 2, 4}[rng.uniform_int(0, 2)];
        const int h = rng.uniform_int(k * dilation + 1, 14);
        const int w = rng.uniform_int(k * dilation + 1, 14);
        const int n = rng.uniform_int(1, 2);
        const bool same = rng.uniform() < 0.5;

        TensorD in = oracle::random_tensor(Shape{n, in_c, h, w}, rng);
        TensorD kernel = oracle::random_tensor(Shape{out_c, icpg, k, k}, rng);
        std::vector<double> bias(out_c);
        for (auto& b : bias) b = rng.uniform(-0.5, 0.5);

        const int pad = same ? ((k - 1) * dilation) / 2 : rng.uniform_int(0, 2);
        auto p = make_params(kernel, stride, dilation, groups,
                             same ? Padding::Same() : Padding::Explicit(pad));
        p.bias = bias;
        TensorD got = conv2d(in, p);
        TensorD want = oracle::naive_conv2d(in, kernel, &bias, stride, dilation, groups, pad);
        ASSERT_EQ(got.shape(), want.shape()) << "trial " << trial;
        for (std::size_t i = 0; i < got.size(); ++i) {
            ASSERT_NEAR(got[i], want[i], 1e-12) << "trial " << trial << " index " << i;
        }
    }
}

TEST(Conv, DilationEqualsZeroInsertedKernel) {
    Rng rng(23);
    for (const int dilation : {1, 2, 4}) {
        for (int trial = 0; trial < 9; ++trial) {
            const int k = 3;
            const int size = rng.uniform_int((k - 1) * dilation + 2, 18);
            TensorD in = oracle::random_tensor(Shape{1, 2, size, size}, rng);
            TensorD kernel = oracle::random_tensor(Shape{2, 2, k, k}, rng);

            TensorD got = conv2d(in, make_params(kernel, 1, dilation, 1, Padding::Explicit(0)));
            TensorD dense = oracle::zero_insert_kernel(kernel, dilation);
            TensorD want = oracle::naive_conv2d(in, dense, nullptr, 1, 1, 1, 0);
            ASSERT_EQ(got.shape(), want.shape());
            for (std::size_t i = 0; i < got.size(); ++i) {
                ASSERT_NEAR(got[i], want[i], 1e-12) << "dilation " << dilation;
            }
        }
    }
}

TEST(Conv, DepthwiseChannelIndependence) {
    Rng rng(31);
    TensorD in = oracle::random_tensor(Shape{1, 2, 6, 6}, rng);
    TensorD kernel = oracle::random_tensor(Shape{2, 1, 3, 3}, rng);
    auto p = make_params(kernel, 1, 1, /*groups=*/2);
    TensorD base = conv2d(in, p);

    TensorD poked = in;
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) poked.at(0, 1, y, x) += 10.0;
    }
    TensorD out = conv2d(poked, p);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) {
            EXPECT_EQ(out.at(0, 0, y, x), base.at(0, 0, y, x));  // channel 0 untouched
            EXPECT_NE(out.at(0, 1, y, x), base.at(0, 1, y, x));
        }
    }
}

TEST(Conv, LinearityWithoutBias) {
    Rng rng(41);
    TensorD x = oracle::random_tensor(Shape{1, 3, 8, 8}, rng);
    TensorD y = oracle::random_tensor(Shape{1, 3, 8, 8}, rng);
    TensorD kernel = oracle::random_tensor(Shape{4, 3, 3, 3}, rng);
    const double a = 0.7, b = -1.3;

    TensorD mix(x.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];

    auto p = make_params(kernel);
    TensorD lhs = conv2d(mix, p);
    TensorD cx = conv2d(x, p), cy = conv2d(y, p);
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        EXPECT_NEAR(lhs[i], a * cx[i] + b * cy[i], 1e-4);
    }
}

TEST(Conv, SamePaddingKeepsCeilDivShapes) {
    TensorD in(Shape{1, 1, 224, 224});
    TensorD k3(Shape{8, 1, 3, 3});
    Shape s = conv2d_output_shape(in.shape(), k3.shape(), ConvGeom{2, 1, 1, Padding::Same()});
    EXPECT_EQ(s.h, 112);
    s = conv2d_output_shape(Shape{1, 8, 7, 7}, Shape{8, 8, 3, 3},
                            ConvGeom{1, 1, 1, Padding::Same()});
    EXPECT_EQ(s.h, 7);
    // dilation widens the padding so "same" still holds
    s = conv2d_output_shape(Shape{1, 8, 28, 28}, Shape{8, 1, 3, 3},
                            ConvGeom{1, 4, 8, Padding::Same()});
    EXPECT_EQ(s.h, 28);
}

TEST(Conv, ShapeErrorsNameTheAxis) {
    TensorD in(Shape{1, 5, 6, 6});
    TensorD kernel(Shape{4, 2, 3, 3});
    try {
        conv2d(in, make_params(kernel));
        FAIL() << "expected a shape error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::shape);
        EXPECT_NE(std::string(e.what()).find("axis c"), std::string::npos) << e.what();
    }

    TensorD small(Shape{1, 2, 2, 2});
    try {
        conv2d(small, make_params(TensorD(Shape{4, 2, 3, 3}), 1, 1, 1, Padding::Explicit(0)));
        FAIL() << "expected a shape error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("axis h"), std::string::npos) << e.what();
    }

    EXPECT_THROW(conv2d(in, make_params(TensorD(Shape{4, 5, 3, 3}), 1, 1, /*groups=*/3)), Error);
}

TEST(Conv, MacCountFormula) {
    // depthwise + pointwise vs dense 3x3 at equal in/out channels:
    // ratio = 1/out_c + 1/9
    const int c = 64, h = 28, w = 28;
    const Shape in{1, c, h, w};
    const std::int64_t dw = conv2d_macs(in, Shape{c, 1, 3, 3}, ConvGeom{1, 1, c, Padding::Same()});
    const std::int64_t pw = conv2d_macs(in, Shape{c, c, 1, 1}, ConvGeom{1, 1, 1, Padding::Same()});
    const std::int64_t dense =
        conv2d_macs(in, Shape{c, c, 3, 3}, ConvGeom{1, 1, 1, Padding::Same()});
    EXPECT_EQ(dw, static_cast<std::int64_t>(h) * w * c * 9);
    EXPECT_EQ(pw, static_cast<std::int64_t>(h) * w * c * c);
    EXPECT_EQ(dense, static_cast<std::int64_t>(h) * w * c * c * 9);
    const double ratio = static_cast<double>(dw + pw) / static_cast<double>(dense);
    EXPECT_NEAR(ratio, 1.0 / c + 1.0 / 9.0, 1e-12);
}
