#pragma once

// Independent reference implementations used to derive expected values.
// These deliberately avoid the library's kernels: direct per-output loops,
// explicit bounds checks, double precision throughout.

#include <cmath>
#include <functional>
#include <vector>

#include "hairmatte/rng.hpp"
#include "hairmatte/tensor.hpp"

namespace oracle {

using hairmatte::Rng;
using hairmatte::Shape;
using hairmatte::TensorD;

// Output-centric convolution with zero padding, stride, dilation, groups.
inline TensorD naive_conv2d(const TensorD& in, const TensorD& kernel,
                            const std::vector<double>* bias, int stride, int dilation, int groups,
                            int pad) {
    const int icpg = in.c() / groups;
    const int ocpg = kernel.n() / groups;
    const int eh = (kernel.h() - 1) * dilation + 1;
    const int ew = (kernel.w() - 1) * dilation + 1;
    const int oh = (in.h() + 2 * pad - eh) / stride + 1;
    const int ow = (in.w() + 2 * pad - ew) / stride + 1;
    TensorD out(Shape{in.n(), kernel.n(), oh, ow});
    for (int n = 0; n < in.n(); ++n) {
        for (int oc = 0; oc < kernel.n(); ++oc) {
            const int group = oc / ocpg;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias ? (*bias)[oc] : 0.0;
                    for (int icl = 0; icl < icpg; ++icl) {
                        for (int ky = 0; ky < kernel.h(); ++ky) {
                            for (int kx = 0; kx < kernel.w(); ++kx) {
                                const int iy = oy * stride - pad + ky * dilation;
                                const int ix = ox * stride - pad + kx * dilation;
                                if (iy < 0 || iy >= in.h() || ix < 0 || ix >= in.w()) continue;
                                acc += in.at(n, group * icpg + icl, iy, ix) *
                                       kernel.at(oc, icl, ky, kx);
                            }
                        }
                    }
                    out.at(n, oc, oy, ox) = acc;
                }
            }
        }
    }
    return out;
}

// Expands a kernel with dilation d into its zero-inserted dense equivalent.
inline TensorD zero_insert_kernel(const TensorD& kernel, int dilation) {
    const int kh = (kernel.h() - 1) * dilation + 1;
    const int kw = (kernel.w() - 1) * dilation + 1;
    TensorD out(Shape{kernel.n(), kernel.c(), kh, kw});
    for (int oc = 0; oc < kernel.n(); ++oc) {
        for (int ic = 0; ic < kernel.c(); ++ic) {
            for (int ky = 0; ky < kernel.h(); ++ky) {
                for (int kx = 0; kx < kernel.w(); ++kx) {
                    out.at(oc, ic, ky * dilation, kx * dilation) = kernel.at(oc, ic, ky, kx);
                }
            }
        }
    }
    return out;
}

// Direct transcription of the gradient-consistency formula: Sobel with
// clamped (replicate) borders, direction normalization by (mag + eps),
// magnitude-weighted misalignment, normalized by total magnitude.
inline double brute_grad_consistency(const TensorD& image_gray, const TensorD& mask,
                                     double eps = 1e-6) {
    const int H = image_gray.h(), W = image_gray.w();
    auto px = [&](const TensorD& t, int n, int y, int x) {
        y = y < 0 ? 0 : (y >= H ? H - 1 : y);
        x = x < 0 ? 0 : (x >= W ? W - 1 : x);
        return t.at(n, 0, y, x);
    };
    auto sobel = [&](const TensorD& t, int n, int y, int x, double& gx, double& gy) {
        gx = -px(t, n, y - 1, x - 1) + px(t, n, y - 1, x + 1) - 2.0 * px(t, n, y, x - 1) +
             2.0 * px(t, n, y, x + 1) - px(t, n, y + 1, x - 1) + px(t, n, y + 1, x + 1);
        gy = -px(t, n, y - 1, x - 1) - 2.0 * px(t, n, y - 1, x) - px(t, n, y - 1, x + 1) +
             px(t, n, y + 1, x - 1) + 2.0 * px(t, n, y + 1, x) + px(t, n, y + 1, x + 1);
    };
    double num = 0.0, den = 0.0;
    for (int n = 0; n < image_gray.n(); ++n) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double igx, igy, mgx, mgy;
                sobel(image_gray, n, y, x, igx, igy);
                sobel(mask, n, y, x, mgx, mgy);
                const double imag = std::sqrt(igx * igx + igy * igy);
                const double mmag = std::sqrt(mgx * mgx + mgy * mgy);
                const double inx = igx / (imag + eps), iny = igy / (imag + eps);
                const double mnx = mgx / (mmag + eps), mny = mgy / (mmag + eps);
                const double dot = inx * mnx + iny * mny;
                num += mmag * (1.0 - dot * dot);
                den += mmag;
            }
        }
    }
    return den < 1e-8 ? 0.0 : num / den;
}

// O(r^2)-per-pixel window means with shrinking borders.
inline std::vector<double> naive_box_mean(const std::vector<double>& plane, int H, int W, int r) {
    std::vector<double> out(plane.size());
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            int count = 0;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                    acc += plane[yy * W + xx];
                    ++count;
                }
            }
            out[y * W + x] = acc / count;
        }
    }
    return out;
}

inline std::vector<double> plane_of(const TensorD& t, int n, int c) {
    const std::size_t hw = static_cast<std::size_t>(t.h()) * t.w();
    std::vector<double> out(hw);
    for (std::size_t i = 0; i < hw; ++i) out[i] = t.plane(n, c)[i];
    return out;
}

// Per-window linear model with naive means (gray guide).
inline TensorD naive_guided_gray(const TensorD& guide, const TensorD& input, int r, double eps) {
    const int H = input.h(), W = input.w();
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    TensorD out(input.shape());
    for (int n = 0; n < input.n(); ++n) {
        const auto I = plane_of(guide, n, 0);
        const auto p = plane_of(input, n, 0);
        std::vector<double> II(hw), Ip(hw);
        for (std::size_t q = 0; q < hw; ++q) {
            II[q] = I[q] * I[q];
            Ip[q] = I[q] * p[q];
        }
        const auto mean_i = naive_box_mean(I, H, W, r);
        const auto mean_p = naive_box_mean(p, H, W, r);
        const auto corr_ii = naive_box_mean(II, H, W, r);
        const auto corr_ip = naive_box_mean(Ip, H, W, r);
        std::vector<double> a(hw), b(hw);
        for (std::size_t q = 0; q < hw; ++q) {
            const double var_i = corr_ii[q] - mean_i[q] * mean_i[q];
            const double cov_ip = corr_ip[q] - mean_i[q] * mean_p[q];
            a[q] = cov_ip / (var_i + eps);
            b[q] = mean_p[q] - a[q] * mean_i[q];
        }
        const auto mean_a = naive_box_mean(a, H, W, r);
        const auto mean_b = naive_box_mean(b, H, W, r);
        for (std::size_t q = 0; q < hw; ++q) out.plane(n, 0)[q] = mean_a[q] * I[q] + mean_b[q];
    }
    return out;
}

// RGB guide variant; the 3x3 regularized covariance is inverted via the
// adjugate, independent of the library's elimination.
inline TensorD naive_guided_rgb(const TensorD& guide, const TensorD& input, int r, double eps) {
    const int H = input.h(), W = input.w();
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    TensorD out(input.shape());
    for (int n = 0; n < input.n(); ++n) {
        std::vector<double> I[3];
        for (int c = 0; c < 3; ++c) I[c] = plane_of(guide, n, c);
        const auto p = plane_of(input, n, 0);
        std::vector<double> mean_i[3], corr_ip[3];
        for (int c = 0; c < 3; ++c) {
            mean_i[c] = naive_box_mean(I[c], H, W, r);
            std::vector<double> prod(hw);
            for (std::size_t q = 0; q < hw; ++q) prod[q] = I[c][q] * p[q];
            corr_ip[c] = naive_box_mean(prod, H, W, r);
        }
        std::vector<double> corr_ii[3][3];
        for (int c0 = 0; c0 < 3; ++c0) {
            for (int c1 = 0; c1 < 3; ++c1) {
                std::vector<double> prod(hw);
                for (std::size_t q = 0; q < hw; ++q) prod[q] = I[c0][q] * I[c1][q];
                corr_ii[c0][c1] = naive_box_mean(prod, H, W, r);
            }
        }
        const auto mean_p = naive_box_mean(p, H, W, r);
        std::vector<double> a[3], b(hw);
        for (int c = 0; c < 3; ++c) a[c].resize(hw);
        for (std::size_t q = 0; q < hw; ++q) {
            double S[3][3], v[3];
            for (int c0 = 0; c0 < 3; ++c0) {
                for (int c1 = 0; c1 < 3; ++c1) {
                    S[c0][c1] = corr_ii[c0][c1][q] - mean_i[c0][q] * mean_i[c1][q];
                }
                S[c0][c0] += eps;
                v[c0] = corr_ip[c0][q] - mean_i[c0][q] * mean_p[q];
            }
            const double det =
                S[0][0] * (S[1][1] * S[2][2] - S[1][2] * S[2][1]) -
                S[0][1] * (S[1][0] * S[2][2] - S[1][2] * S[2][0]) +
                S[0][2] * (S[1][0] * S[2][1] - S[1][1] * S[2][0]);
            double inv[3][3];
            inv[0][0] = (S[1][1] * S[2][2] - S[1][2] * S[2][1]) / det;
            inv[0][1] = (S[0][2] * S[2][1] - S[0][1] * S[2][2]) / det;
            inv[0][2] = (S[0][1] * S[1][2] - S[0][2] * S[1][1]) / det;
            inv[1][0] = (S[1][2] * S[2][0] - S[1][0] * S[2][2]) / det;
            inv[1][1] = (S[0][0] * S[2][2] - S[0][2] * S[2][0]) / det;
            inv[1][2] = (S[0][2] * S[1][0] - S[0][0] * S[1][2]) / det;
            inv[2][0] = (S[1][0] * S[2][1] - S[1][1] * S[2][0]) / det;
            inv[2][1] = (S[0][1] * S[2][0] - S[0][0] * S[2][1]) / det;
            inv[2][2] = (S[0][0] * S[1][1] - S[0][1] * S[1][0]) / det;
            double dot = 0.0;
            for (int c0 = 0; c0 < 3; ++c0) {
                a[c0][q] = inv[c0][0] * v[0] + inv[c0][1] * v[1] + inv[c0][2] * v[2];
                dot += a[c0][q] * mean_i[c0][q];
            }
            b[q] = mean_p[q] - dot;
        }
        std::vector<double> mean_a[3];
        for (int c = 0; c < 3; ++c) mean_a[c] = naive_box_mean(a[c], H, W, r);
        const auto mean_b = naive_box_mean(b, H, W, r);
        for (std::size_t q = 0; q < hw; ++q) {
            double val = mean_b[q];
            for (int c = 0; c < 3; ++c) val += mean_a[c][q] * I[c][q];
            out.plane(n, 0)[q] = val;
        }
    }
    return out;
}

// Transcription of the published optimizer recurrences on a scalar stream.
struct AdadeltaScalarRef {
    double eg2 = 0.0;
    double edx2 = 0.0;
    double rho, eps, lr;

    AdadeltaScalarRef(double rho, double eps, double lr) : rho(rho), eps(eps), lr(lr) {}

    double step(double x, double g) {
        eg2 = rho * eg2 + (1.0 - rho) * g * g;
        const double dx = -(std::sqrt(edx2 + eps) / std::sqrt(eg2 + eps)) * g;
        edx2 = rho * edx2 + (1.0 - rho) * dx * dx;
        return x + lr * dx;
    }
};

// Central finite difference of a scalar functional with respect to one slot.
template <typename F, typename T>
double central_diff(F&& f, T& slot, double h) {
    const T original = slot;
    slot = static_cast<T>(original + h);
    const double fp = f();
    slot = static_cast<T>(original - h);
    const double fm = f();
    slot = original;
    return (fp - fm) / (2.0 * h);
}

inline TensorD random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    return TensorD::random_uniform(s, rng, lo, hi);
}

}  // namespace oracle
