#include <gtest/gtest.h>

#include "hairmatte/rng.hpp"
#include "hairmatte/tensor.hpp"

using namespace hairmatte;

TEST(Tensor, ShapeAndIndexing) {
    Tensor t = Tensor::zeros(2, 3, 4, 5);
    EXPECT_EQ(t.size(), 2u * 3 * 4 * 5);
    t.at(1, 2, 3, 4) = 7.0f;
    EXPECT_EQ(t[t.size() - 1], 7.0f);
    t.at(0, 0, 0, 0) = 1.0f;
    EXPECT_EQ(t[0], 1.0f);
    // row-major with w fastest
    t.at(0, 0, 0, 1) = 2.0f;
    EXPECT_EQ(t[1], 2.0f);
    t.at(0, 0, 1, 0) = 3.0f;
    EXPECT_EQ(t[5], 3.0f);
}

TEST(Tensor, DataLengthInvariant) {
    EXPECT_NO_THROW(Tensor(Shape{1, 1, 2, 2}, {1, 2, 3, 4}));
    EXPECT_THROW(Tensor(Shape{1, 1, 2, 2}, {1, 2, 3}), Error);
    EXPECT_THROW(Tensor(Shape{1, -1, 2, 2}), Error);
}

TEST(Tensor, FromRows) {
    Tensor t = Tensor::from_rows({{1, 2}, {3, 4}});
    EXPECT_EQ(t.shape(), (Shape{1, 1, 2, 2}));
    EXPECT_EQ(t.at(0, 0, 1, 0), 3.0f);
}

TEST(Tensor, FiniteCheck) {
    Tensor t = Tensor::full(1, 1, 2, 2, 1.0f);
    EXPECT_TRUE(t.all_finite());
    t[2] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_FALSE(t.all_finite());
    EXPECT_THROW(t.check_finite("test"), Error);
}

TEST(Tensor, CastRoundTrip) {
    Rng rng(1);
    Tensor t = Tensor::random_uniform(Shape{1, 2, 3, 3}, rng, -1.0f, 1.0f);
    TensorD d = t.cast<double>();
    Tensor back = d.cast<float>();
    EXPECT_EQ(t, back);
}

TEST(Rng, DeterministicStreams) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(a.next_u64(), b.next_u64());
    }
    Rng c1 = Rng::child(7, 0), c2 = Rng::child(7, 1);
    EXPECT_NE(c1.next_u64(), c2.next_u64());
}

TEST(Rng, UniformBounds) {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.uniform(2.0, 5.0);
        EXPECT_GE(v, 2.0);
        EXPECT_LT(v, 5.0);
        const int k = rng.uniform_int(-3, 3);
        EXPECT_GE(k, -3);
        EXPECT_LE(k, 3);
    }
}

TEST(Rng, ShuffleIsPermutation) {
    Rng rng(9);
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    auto original = v;
    rng.shuffle(v);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, original);
}
