#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "hairmatte/image.hpp"
#include "hairmatte/tensor.hpp"

namespace hairmatte {

enum class GuideMode { gray, rgb };

struct GuidedFilterParams {
    int radius = 4;
    double eps = 1e-3;
    GuideMode guide_mode = GuideMode::gray;
};

namespace gf_detail {

// Plane of double-precision window means over (2r+1)^2 boxes. Windows shrink
// at the borders (exact means, no padding). The integral image makes the
// cost independent of the radius.
class BoxMeans {
public:
    BoxMeans(int h, int w) : h_(h), w_(w), integral_((h + 1) * (w + 1), 0.0) {}

    template <typename T>
    void load(const T* plane) {
        for (int y = 0; y < h_; ++y) {
            double row = 0.0;
            const double* above = integral_.data() + y * (w_ + 1);
            double* cur = integral_.data() + (y + 1) * (w_ + 1);
            cur[0] = 0.0;
            for (int x = 0; x < w_; ++x) {
                row += static_cast<double>(plane[y * w_ + x]);
                cur[x + 1] = above[x + 1] + row;
            }
        }
    }

    template <typename T, typename U>
    void load_product(const T* a, const U* b) {
        for (int y = 0; y < h_; ++y) {
            double row = 0.0;
            const double* above = integral_.data() + y * (w_ + 1);
            double* cur = integral_.data() + (y + 1) * (w_ + 1);
            cur[0] = 0.0;
            for (int x = 0; x < w_; ++x) {
                row += static_cast<double>(a[y * w_ + x]) * static_cast<double>(b[y * w_ + x]);
                cur[x + 1] = above[x + 1] + row;
            }
        }
    }

    double mean(int y, int x, int r) const {
        const int y1 = std::max(0, y - r), y2 = std::min(h_ - 1, y + r);
        const int x1 = std::max(0, x - r), x2 = std::min(w_ - 1, x + r);
        const double* s = integral_.data();
        const int stride = w_ + 1;
        const double sum = s[(y2 + 1) * stride + (x2 + 1)] - s[y1 * stride + (x2 + 1)] -
                           s[(y2 + 1) * stride + x1] + s[y1 * stride + x1];
        return sum / ((y2 - y1 + 1) * (x2 - x1 + 1));
    }

private:
    int h_, w_;
    std::vector<double> integral_;
};

inline void mean_plane(const BoxMeans& box, int h, int w, int r, std::vector<double>& out) {
    out.resize(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) out[y * w + x] = box.mean(y, x, r);
    }
}

// 3x3 symmetric solve via Gaussian elimination with partial pivoting.
inline std::array<double, 3> solve3(std::array<std::array<double, 4>, 3> m) {
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int row = col + 1; row < 3; ++row) {
            if (std::abs(m[row][col]) > std::abs(m[pivot][col])) pivot = row;
        }
        std::swap(m[col], m[pivot]);
        require(std::abs(m[col][col]) > 1e-300, ErrorKind::numeric,
                "guided_filter: singular covariance despite regularization");
        for (int row = col + 1; row < 3; ++row) {
            const double f = m[row][col] / m[col][col];
            for (int k = col; k < 4; ++k) m[row][k] -= f * m[col][k];
        }
    }
    std::array<double, 3> x{};
    for (int row = 2; row >= 0; --row) {
        double acc = m[row][3];
        for (int k = row + 1; k < 3; ++k) acc -= m[row][k] * x[k];
        x[row] = acc / m[row][row];
    }
    return x;
}

}  // namespace gf_detail

// Window mean over (2r+1)^2 neighborhoods per channel, border-aware.
template <typename T>
TensorT<T> box_filter(const TensorT<T>& input, int r) {
    require(r >= 1, ErrorKind::usage, "box_filter: radius must be >= 1");
    TensorT<T> out(input.shape());
    const int H = input.h(), W = input.w();
    gf_detail::BoxMeans box(H, W);
    for (int n = 0; n < input.n(); ++n) {
        for (int c = 0; c < input.c(); ++c) {
            box.load(input.plane(n, c));
            T* dst = out.plane(n, c);
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) dst[y * W + x] = static_cast<T>(box.mean(y, x, r));
            }
        }
    }
    return out;
}

// He et al. style edge-preserving filter: fits a*guide+b per window with
// eps-regularized (co)variance, then averages the coefficients over all
// covering windows.
template <typename T>
TensorT<T> guided_filter(const TensorT<T>& guide, const TensorT<T>& input,
                         const GuidedFilterParams& params) {
    require(params.radius >= 1, ErrorKind::usage, "guided_filter: radius must be >= 1");
    require(params.eps > 0.0, ErrorKind::usage, "guided_filter: eps must be positive");
    require(guide.n() == input.n() && guide.h() == input.h() && guide.w() == input.w(),
            ErrorKind::shape,
            "guided_filter: guide " + guide.shape().str() + " and input " + input.shape().str() +
                " must share spatial axes");
    const int expected_guide_c = params.guide_mode == GuideMode::rgb ? 3 : 1;
    require(guide.c() == expected_guide_c, ErrorKind::shape,
            "guided_filter: guide has " + std::to_string(guide.c()) +
                " channels on axis c, mode expects " + std::to_string(expected_guide_c));
    require(input.c() == 1, ErrorKind::shape,
            "guided_filter: input must be single-channel on axis c");

    const int H = input.h(), W = input.w(), r = params.radius;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    TensorT<T> out(input.shape());
    gf_detail::BoxMeans box(H, W);
    std::vector<double> mean_p(hw);

    for (int n = 0; n < input.n(); ++n) {
        const T* p = input.plane(n, 0);
        box.load(p);
        gf_detail::mean_plane(box, H, W, r, mean_p);

        if (params.guide_mode == GuideMode::gray) {
            const T* I = guide.plane(n, 0);
            std::vector<double> mean_i(hw), corr_ii(hw), corr_ip(hw), a(hw), b(hw);
            box.load(I);
            gf_detail::mean_plane(box, H, W, r, mean_i);
            box.load_product(I, I);
            gf_detail::mean_plane(box, H, W, r, corr_ii);
            box.load_product(I, p);
            gf_detail::mean_plane(box, H, W, r, corr_ip);
            for (std::size_t q = 0; q < hw; ++q) {
                const double var_i = corr_ii[q] - mean_i[q] * mean_i[q];
                const double cov_ip = corr_ip[q] - mean_i[q] * mean_p[q];
                a[q] = cov_ip / (var_i + params.eps);
                b[q] = mean_p[q] - a[q] * mean_i[q];
            }
            std::vector<double> mean_a(hw), mean_b(hw);
            box.load(a.data());
            gf_detail::mean_plane(box, H, W, r, mean_a);
            box.load(b.data());
            gf_detail::mean_plane(box, H, W, r, mean_b);
            T* dst = out.plane(n, 0);
            for (std::size_t q = 0; q < hw; ++q) {
                dst[q] = static_cast<T>(mean_a[q] * static_cast<double>(I[q]) + mean_b[q]);
            }
        } else {
            const T* I[3] = {guide.plane(n, 0), guide.plane(n, 1), guide.plane(n, 2)};
            std::vector<double> mean_i[3], corr_ip[3], a[3];
            std::vector<double> corr_ii[6];  // rr, rg, rb, gg, gb, bb
            for (int c = 0; c < 3; ++c) {
                box.load(I[c]);
                gf_detail::mean_plane(box, H, W, r, mean_i[c]);
                box.load_product(I[c], p);
                gf_detail::mean_plane(box, H, W, r, corr_ip[c]);
                a[c].resize(hw);
            }
            int k = 0;
            for (int c0 = 0; c0 < 3; ++c0) {
                for (int c1 = c0; c1 < 3; ++c1) {
                    box.load_product(I[c0], I[c1]);
                    gf_detail::mean_plane(box, H, W, r, corr_ii[k]);
                    ++k;
                }
            }
            std::vector<double> b(hw);
            static constexpr int pair_index[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
            for (std::size_t q = 0; q < hw; ++q) {
                std::array<std::array<double, 4>, 3> m{};
                for (int c0 = 0; c0 < 3; ++c0) {
                    for (int c1 = 0; c1 < 3; ++c1) {
                        m[c0][c1] = corr_ii[pair_index[c0][c1]][q] - mean_i[c0][q] * mean_i[c1][q];
                    }
                    m[c0][c0] += params.eps;
                    m[c0][3] = corr_ip[c0][q] - mean_i[c0][q] * mean_p[q];
                }
                const auto coef = gf_detail::solve3(m);
                double dot = 0.0;
                for (int c = 0; c < 3; ++c) {
                    a[c][q] = coef[c];
                    dot += coef[c] * mean_i[c][q];
                }
                b[q] = mean_p[q] - dot;
            }
            std::vector<double> mean_a[3], mean_b(hw);
            for (int c = 0; c < 3; ++c) {
                box.load(a[c].data());
                gf_detail::mean_plane(box, H, W, r, mean_a[c]);
            }
            box.load(b.data());
            gf_detail::mean_plane(box, H, W, r, mean_b);
            T* dst = out.plane(n, 0);
            for (std::size_t q = 0; q < hw; ++q) {
                double v = mean_b[q];
                for (int c = 0; c < 3; ++c) v += mean_a[c][q] * static_cast<double>(I[c][q]);
                dst[q] = static_cast<T>(v);
            }
        }
    }
    return out;
}

// Refines a coarse hair probability map against the image and clamps the
// result back into [0,1]. A 3-channel image is collapsed to gray unless rgb
// guiding was requested.
template <typename T>
TensorT<T> refine_mask(const TensorT<T>& image, const TensorT<T>& coarse_prob,
                       const GuidedFilterParams& params) {
    TensorT<T> guide = params.guide_mode == GuideMode::gray ? rgb_to_gray(image) : image;
    TensorT<T> refined = guided_filter(guide, coarse_prob, params);
    for (std::size_t i = 0; i < refined.size(); ++i) {
        refined[i] = std::clamp(refined[i], T(0), T(1));
    }
    return refined;
}

}  // namespace hairmatte
