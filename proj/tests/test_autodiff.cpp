#include <gtest/gtest.h>

#include <functional>

#include "hairmatte/loss.hpp"
#include "hairmatte/ops.hpp"
#include "oracles.hpp"

using namespace hairmatte;

namespace {

using ValueD = ValueT<double>;

// Compares backward() gradients against central differences of the rebuilt
// forward value, probing a handful of random elements per leaf.
void fd_check(const std::vector<ValueD>& leaves, const std::function<ValueD()>& build,
              std::uint64_t seed, double h = 1e-5, double tol = 1e-6, int probes_per_leaf = 6) {
    for (const auto& leaf : leaves) leaf->zero_grad();
    auto loss = build();
    backward(loss);

    Rng rng(seed);
    auto value_of = [&]() { return build()->value[0]; };
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = *leaves[li];
        leaf.ensure_grad();
        for (int probe = 0; probe < probes_per_leaf; ++probe) {
            const std::size_t i =
                static_cast<std::size_t>(rng.next_u64() % leaf.value.size());
            const double analytic = leaf.grad[i];
            const double fd = oracle::central_diff(value_of, leaf.value[i], h);
            const double scale = std::max({1.0, std::abs(analytic), std::abs(fd)});
            EXPECT_NEAR(analytic, fd, tol * scale)
                << "leaf " << li << " element " << i << " seed " << seed;
        }
    }
}

ValueD leaf_random(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    return parameter(oracle::random_tensor(s, rng, lo, hi));
}

}  // namespace

TEST(Autodiff, ReluSubgradientValues) {
    auto x = parameter(TensorD(Shape{1, 1, 1, 3}, {2.0, -1.0, 0.0}));
    auto loss = ops::sum_all(ops::relu(x));
    backward(loss);
    EXPECT_EQ(x->grad[0], 1.0);  // d relu / dx at 2
    EXPECT_EQ(x->grad[1], 0.0);  // at -1
    EXPECT_EQ(x->grad[2], 0.0);  // at 0, by the zero-subgradient choice
}

TEST(Autodiff, ElementwiseOpsPassFiniteDifferences) {
    Rng rng(100);
    auto a = leaf_random(Shape{1, 2, 3, 3}, rng);
    auto b = leaf_random(Shape{1, 2, 3, 3}, rng, 0.5, 2.0);  // away from zero for div
    fd_check({a, b}, [&] { return ops::mean_all(ops::add(a, b)); }, 1);
    fd_check({a, b}, [&] { return ops::mean_all(ops::sub(a, b)); }, 2);
    fd_check({a, b}, [&] { return ops::mean_all(ops::mul(a, b)); }, 3);
    fd_check({a, b}, [&] { return ops::mean_all(ops::div(a, b)); }, 4);
    fd_check({a}, [&] { return ops::sum_all(ops::affine(a, -2.5, 0.75)); }, 5);
    fd_check({a}, [&] { return ops::mean_all(ops::square(a)); }, 6);
}

TEST(Autodiff, MagnitudePassesFiniteDifferences) {
    Rng rng(101);
    auto gx = leaf_random(Shape{1, 1, 4, 4}, rng);
    auto gy = leaf_random(Shape{1, 1, 4, 4}, rng);
    fd_check({gx, gy}, [&] { return ops::sum_all(ops::magnitude(gx, gy)); }, 7);
}

TEST(Autodiff, ShapeOpsPassFiniteDifferences) {
    Rng rng(102);
    auto x = leaf_random(Shape{2, 3, 4, 4}, rng);
    fd_check({x}, [&] { return ops::mean_all(ops::slice_channels(x, 1, 2)); }, 8);
    fd_check({x}, [&] { return ops::mean_all(ops::pad_replicate(x, 2)); }, 9);
    fd_check({x}, [&] { return ops::mean_all(ops::upsample_replicate2x(x)); }, 10);
}

TEST(Autodiff, SoftmaxPassesFiniteDifferences) {
    Rng rng(103);
    auto x = leaf_random(Shape{1, 4, 3, 3}, rng, -2.0, 2.0);
    auto w = constant(oracle::random_tensor(Shape{1, 4, 3, 3}, rng));
    fd_check({x}, [&] { return ops::mean_all(ops::mul(ops::softmax_channels(x), w)); }, 11);
}

TEST(Autodiff, ConvMeanVersusKernelMatchesSpecExample) {
    // mean(conv2d(x, k)) gradient w.r.t. k, h = 1e-3, 1e-3 relative
    Rng rng(104);
    auto x = leaf_random(Shape{1, 2, 5, 5}, rng);
    auto k = leaf_random(Shape{3, 2, 3, 3}, rng);
    auto build = [&] {
        return ops::mean_all(ops::conv2d<double>(x, k, nullptr, ConvGeom{}));
    };
    auto loss = build();
    backward(loss);
    Rng probe_rng(1);
    auto value_of = [&]() { return build()->value[0]; };
    for (int probe = 0; probe < 12; ++probe) {
        const std::size_t i = probe_rng.next_u64() % k->value.size();
        const double analytic = k->grad[i];
        const double fd = oracle::central_diff(value_of, k->value[i], 1e-3);
        EXPECT_NEAR(analytic, fd, 1e-3 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Autodiff, ConvVariantsPassFiniteDifferences) {
    Rng rng(105);
    // grouped, strided, dilated, biased
    auto x = leaf_random(Shape{2, 4, 7, 7}, rng);
    auto k = leaf_random(Shape{6, 2, 3, 3}, rng);
    auto bias = leaf_random(Shape{1, 6, 1, 1}, rng);
    fd_check({x, k, bias},
             [&] {
                 return ops::mean_all(ops::conv2d<double>(
                     x, k, bias, ConvGeom{2, 1, 2, Padding::Same()}));
             },
             12);
    auto kd = leaf_random(Shape{4, 4, 3, 3}, rng);
    fd_check({x, kd},
             [&] {
                 return ops::mean_all(ops::conv2d<double>(
                     x, kd, nullptr, ConvGeom{1, 2, 1, Padding::Explicit(2)}));
             },
             13);
    // depthwise
    auto kw = leaf_random(Shape{4, 1, 3, 3}, rng);
    fd_check({x, kw},
             [&] {
                 return ops::mean_all(ops::conv2d<double>(
                     x, kw, nullptr, ConvGeom{1, 1, 4, Padding::Same()}));
             },
             14);
}

TEST(Autodiff, BatchNormPassesFiniteDifferences) {
    Rng rng(106);
    auto x = leaf_random(Shape{3, 2, 4, 4}, rng);
    auto gamma = leaf_random(Shape{1, 2, 1, 1}, rng, 0.5, 1.5);
    auto beta = leaf_random(Shape{1, 2, 1, 1}, rng);
    auto w = constant(oracle::random_tensor(Shape{3, 2, 4, 4}, rng));
    // weighted sum makes the per-element grads non-uniform
    fd_check({x, gamma, beta},
             [&] {
                 auto y = ops::batch_norm<double>(x, gamma, beta, nullptr, /*training=*/true);
                 return ops::sum_all(ops::mul(y, w));
             },
             15, 1e-5, 1e-5);

    auto running = ops::BnRunningT<double>::identity(2);
    running.mean[0] = 0.3;
    running.var[1] = 2.0;
    fd_check({x, gamma, beta},
             [&] {
                 auto y = ops::batch_norm<double>(x, gamma, beta, &running, /*training=*/false);
                 return ops::sum_all(ops::mul(y, w));
             },
             16);
}

TEST(Autodiff, BceLossPassesFiniteDifferences) {
    Rng rng(107);
    auto p = leaf_random(Shape{1, 2, 4, 4}, rng, 0.05, 0.95);
    TensorD target(Shape{1, 2, 4, 4});
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    fd_check({p}, [&] { return bce_loss(p, target); }, 17);
}

TEST(Autodiff, GradFieldPassesFiniteDifferences) {
    Rng rng(108);
    auto m = leaf_random(Shape{1, 1, 6, 6}, rng, 0.0, 1.0);
    fd_check({m},
             [&] {
                 auto f = ops::grad_field(m, /*normalize=*/true);
                 return ops::sum_all(ops::mul(f.mag, ops::square(f.gx)));
             },
             18, 1e-6, 1e-5);
}

TEST(Autodiff, SharedSubgraphAccumulates) {
    // y = x*x + x: dy/dx = 2x + 1 with x used twice
    auto x = parameter(TensorD::scalar(3.0));
    auto loss = ops::sum_all(ops::add(ops::mul(x, x), x));
    backward(loss);
    EXPECT_NEAR(x->grad[0], 7.0, 1e-12);
}

TEST(Autodiff, Errors) {
    auto c = constant(TensorD::scalar(1.0));
    EXPECT_THROW(backward(c), Error);  // not recorded

    auto x = parameter(TensorD::zeros(1, 1, 2, 2));
    EXPECT_THROW(backward(ops::relu(x)), Error);  // non-scalar loss

    ValueD null;
    EXPECT_THROW(ops::relu(null), Error);  // detached input
}

TEST(Autodiff, NoGradGuardDropsRecording) {
    auto x = parameter(TensorD::scalar(2.0));
    {
        NoGradGuard off;
        auto y = ops::square(x);
        EXPECT_FALSE(y->requires_grad);
        EXPECT_TRUE(y->parents.empty());
    }
    auto y = ops::square(x);
    EXPECT_TRUE(y->requires_grad);
}

TEST(Autodiff, GradsAccumulateAcrossBackwardCalls) {
    auto x = parameter(TensorD::scalar(5.0));
    auto loss1 = ops::square(x);
    backward(loss1);
    auto loss2 = ops::square(x);
    backward(loss2);
    EXPECT_NEAR(x->grad[0], 20.0, 1e-12);  // 10 + 10
    x->zero_grad();
    EXPECT_EQ(x->grad[0], 0.0);
}
