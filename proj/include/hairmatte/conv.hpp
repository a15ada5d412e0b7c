#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hairmatte/tensor.hpp"

namespace hairmatte {

// "same" keeps out = ceil(in/stride) via symmetric zero padding of
// ((k-1)*dilation)/2 on each side; only odd kernels are used here so the
// split is exact.
struct Padding {
    bool same = true;
    int amount = 0;

    static Padding Same() { return Padding{true, 0}; }
    static Padding Explicit(int p) { return Padding{false, p}; }

    bool operator==(const Padding&) const = default;
};

struct ConvGeom {
    int stride = 1;
    int dilation = 1;
    int groups = 1;
    Padding padding = Padding::Same();
};

// Spec-level bundle: kernel + geometry, as taken by the plain forward API.
template <typename T>
struct ConvParamsT {
    TensorT<T> kernel;  // (out_c, in_c/groups, kh, kw)
    std::optional<std::vector<T>> bias;
    int stride = 1;
    int dilation = 1;
    int groups = 1;
    Padding padding = Padding::Same();

    ConvGeom geom() const { return ConvGeom{stride, dilation, groups, padding}; }
};

using ConvParams = ConvParamsT<float>;

namespace conv_detail {

struct ResolvedConv {
    int pad = 0;
    int out_h = 0;
    int out_w = 0;
    int in_c_per_group = 0;
    int out_c_per_group = 0;
};

inline int effective_extent(int k, int dilation) { return (k - 1) * dilation + 1; }

inline ResolvedConv resolve(const Shape& in, const Shape& ks, const ConvGeom& g) {
    require(g.stride >= 1, ErrorKind::shape, "conv2d: stride must be positive");
    require(g.dilation >= 1, ErrorKind::shape, "conv2d: dilation must be positive");
    require(g.groups >= 1, ErrorKind::shape, "conv2d: groups must be positive");
    require(in.c % g.groups == 0, ErrorKind::shape,
            "conv2d: groups " + std::to_string(g.groups) + " does not divide input axis c=" +
                std::to_string(in.c));
    require(ks.n % g.groups == 0, ErrorKind::shape,
            "conv2d: groups " + std::to_string(g.groups) + " does not divide output axis c=" +
                std::to_string(ks.n));
    require(ks.c == in.c / g.groups, ErrorKind::shape,
            "conv2d: kernel expects " + std::to_string(ks.c) + " channels per group on axis c, input has " +
                std::to_string(in.c / g.groups));

    ResolvedConv r;
    r.in_c_per_group = in.c / g.groups;
    r.out_c_per_group = ks.n / g.groups;
    const int eh = effective_extent(ks.h, g.dilation);
    const int ew = effective_extent(ks.w, g.dilation);
    if (g.padding.same) {
        require(ks.h % 2 == 1 && ks.w % 2 == 1, ErrorKind::shape,
                "conv2d: \"same\" padding needs odd kernel extents");
        r.pad = (eh - 1) / 2;
    } else {
        require(g.padding.amount >= 0, ErrorKind::shape, "conv2d: negative padding");
        r.pad = g.padding.amount;
    }
    require(in.h + 2 * r.pad >= eh, ErrorKind::shape,
            "conv2d: kernel extent " + std::to_string(eh) + " exceeds padded input on axis h=" +
                std::to_string(in.h));
    require(in.w + 2 * r.pad >= ew, ErrorKind::shape,
            "conv2d: kernel extent " + std::to_string(ew) + " exceeds padded input on axis w=" +
                std::to_string(in.w));
    r.out_h = (in.h + 2 * r.pad - eh) / g.stride + 1;
    r.out_w = (in.w + 2 * r.pad - ew) / g.stride + 1;
    return r;
}

template <typename T>
bool is_pointwise(const TensorT<T>& kernel, const ConvGeom& g, int pad) {
    return kernel.h() == 1 && kernel.w() == 1 && g.stride == 1 && g.groups == 1 && pad == 0;
}

// out[n,oc,:] += w * in[n,ic,:] over whole planes
template <typename T>
void pointwise_forward(TensorT<T>& out, const TensorT<T>& in, const TensorT<T>& kernel,
                       const T* bias) {
    const int N = in.n(), IC = in.c(), OC = kernel.n();
    const std::size_t hw = static_cast<std::size_t>(in.h()) * in.w();
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < OC; ++oc) {
        for (int n = 0; n < N; ++n) {
            T* o = out.plane(n, oc);
            const T b = bias ? bias[oc] : T(0);
            for (std::size_t p = 0; p < hw; ++p) o[p] = b;
            for (int ic = 0; ic < IC; ++ic) {
                const T w = kernel[static_cast<std::size_t>(oc) * IC + ic];
                if (w == T(0)) continue;
                const T* src = in.plane(n, ic);
                for (std::size_t p = 0; p < hw; ++p) o[p] += w * src[p];
            }
        }
    }
}

template <typename T>
void generic_forward(TensorT<T>& out, const TensorT<T>& in, const TensorT<T>& kernel,
                     const T* bias, const ConvGeom& g, const ResolvedConv& r) {
    const int N = in.n(), IH = in.h(), IW = in.w();
    const int OC = kernel.n(), KH = kernel.h(), KW = kernel.w();
    const int icpg = r.in_c_per_group, ocpg = r.out_c_per_group;
    const std::int64_t work = static_cast<std::int64_t>(N) * OC;
#pragma omp parallel for schedule(static) if (work > 1)
    for (std::int64_t no = 0; no < work; ++no) {
        const int n = static_cast<int>(no / OC);
        const int oc = static_cast<int>(no % OC);
        const int group = oc / ocpg;
        const int ic0 = group * icpg;
        T* o = out.plane(n, oc);
        const T b = bias ? bias[oc] : T(0);
        for (int i = 0, e = r.out_h * r.out_w; i < e; ++i) o[i] = b;
        for (int icl = 0; icl < icpg; ++icl) {
            const T* src = in.plane(n, ic0 + icl);
            const T* kslice = kernel.data() +
                              (static_cast<std::size_t>(oc) * icpg + icl) * KH * KW;
            for (int ky = 0; ky < KH; ++ky) {
                for (int kx = 0; kx < KW; ++kx) {
                    const T w = kslice[ky * KW + kx];
                    if (w == T(0)) continue;
                    const int dy = ky * g.dilation - r.pad;
                    const int dx = kx * g.dilation - r.pad;
                    for (int oy = 0; oy < r.out_h; ++oy) {
                        const int iy = oy * g.stride + dy;
                        if (iy < 0 || iy >= IH) continue;
                        T* orow = o + static_cast<std::size_t>(oy) * r.out_w;
                        const T* irow = src + static_cast<std::size_t>(iy) * IW;
                        // valid ox range: 0 <= ox*stride + dx < IW
                        int ox_lo = 0;
                        if (dx < 0) ox_lo = (-dx + g.stride - 1) / g.stride;
                        int ox_hi = r.out_w;  // exclusive
                        if (dx + (r.out_w - 1) * g.stride >= IW) {
                            ox_hi = (IW - dx + g.stride - 1) / g.stride;
                        }
                        if (g.stride == 1) {
                            const T* ip = irow + ox_lo + dx;
                            for (int ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += w * *ip++;
                        } else {
                            for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                orow[ox] += w * irow[ox * g.stride + dx];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void pointwise_backward_input(TensorT<T>& din, const TensorT<T>& dout, const TensorT<T>& kernel) {
    const int N = din.n(), IC = din.c(), OC = dout.c();
    const std::size_t hw = static_cast<std::size_t>(din.h()) * din.w();
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < IC; ++ic) {
        for (int n = 0; n < N; ++n) {
            T* d = din.plane(n, ic);
            for (int oc = 0; oc < OC; ++oc) {
                const T w = kernel[static_cast<std::size_t>(oc) * IC + ic];
                if (w == T(0)) continue;
                const T* g = dout.plane(n, oc);
                for (std::size_t p = 0; p < hw; ++p) d[p] += w * g[p];
            }
        }
    }
}

// Scatter form; safe to parallelize because each (n, ic) plane is owned by
// one iteration.
template <typename T>
void generic_backward_input(TensorT<T>& din, const TensorT<T>& dout, const TensorT<T>& kernel,
                            const ConvGeom& g, const ResolvedConv& r) {
    const int N = din.n(), IC = din.c(), IH = din.h(), IW = din.w();
    const int KH = kernel.h(), KW = kernel.w();
    const int icpg = r.in_c_per_group, ocpg = r.out_c_per_group;
    const std::int64_t work = static_cast<std::int64_t>(N) * IC;
#pragma omp parallel for schedule(static) if (work > 1)
    for (std::int64_t ni = 0; ni < work; ++ni) {
        const int n = static_cast<int>(ni / IC);
        const int ic = static_cast<int>(ni % IC);
        const int group = ic / icpg;
        const int icl = ic % icpg;
        T* d = din.plane(n, ic);
        for (int ocl = 0; ocl < ocpg; ++ocl) {
            const int oc = group * ocpg + ocl;
            const T* go = dout.plane(n, oc);
            const T* kslice = kernel.data() +
                              (static_cast<std::size_t>(oc) * icpg + icl) * KH * KW;
            for (int ky = 0; ky < KH; ++ky) {
                for (int kx = 0; kx < KW; ++kx) {
                    const T w = kslice[ky * KW + kx];
                    if (w == T(0)) continue;
                    const int dy = ky * g.dilation - r.pad;
                    const int dx = kx * g.dilation - r.pad;
                    for (int oy = 0; oy < r.out_h; ++oy) {
                        const int iy = oy * g.stride + dy;
                        if (iy < 0 || iy >= IH) continue;
                        const T* grow = go + static_cast<std::size_t>(oy) * r.out_w;
                        T* drow = d + static_cast<std::size_t>(iy) * IW;
                        int ox_lo = 0;
                        if (dx < 0) ox_lo = (-dx + g.stride - 1) / g.stride;
                        int ox_hi = r.out_w;
                        if (dx + (r.out_w - 1) * g.stride >= IW) {
                            ox_hi = (IW - dx + g.stride - 1) / g.stride;
                        }
                        for (int ox = ox_lo; ox < ox_hi; ++ox) {
                            drow[ox * g.stride + dx] += w * grow[ox];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void pointwise_backward_kernel(TensorT<T>& dkernel, const TensorT<T>& dout, const TensorT<T>& in) {
    const int N = in.n(), IC = in.c(), OC = dout.c();
    const std::size_t hw = static_cast<std::size_t>(in.h()) * in.w();
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < OC; ++oc) {
        for (int ic = 0; ic < IC; ++ic) {
            T acc = T(0);
            for (int n = 0; n < N; ++n) {
                const T* g = dout.plane(n, oc);
                const T* src = in.plane(n, ic);
                for (std::size_t p = 0; p < hw; ++p) acc += g[p] * src[p];
            }
            dkernel[static_cast<std::size_t>(oc) * IC + ic] += acc;
        }
    }
}

template <typename T>
void generic_backward_kernel(TensorT<T>& dkernel, const TensorT<T>& dout, const TensorT<T>& in,
                             const ConvGeom& g, const ResolvedConv& r) {
    const int N = in.n(), IH = in.h(), IW = in.w();
    const int OC = dout.c(), KH = dkernel.h(), KW = dkernel.w();
    const int icpg = r.in_c_per_group, ocpg = r.out_c_per_group;
#pragma omp parallel for schedule(static) if (OC > 1)
    for (int oc = 0; oc < OC; ++oc) {
        const int group = oc / ocpg;
        const int ic0 = group * icpg;
        for (int icl = 0; icl < icpg; ++icl) {
            T* kslice = dkernel.data() + (static_cast<std::size_t>(oc) * icpg + icl) * KH * KW;
            for (int ky = 0; ky < KH; ++ky) {
                for (int kx = 0; kx < KW; ++kx) {
                    const int dy = ky * g.dilation - r.pad;
                    const int dx = kx * g.dilation - r.pad;
                    T acc = T(0);
                    for (int n = 0; n < N; ++n) {
                        const T* go = dout.plane(n, oc);
                        const T* src = in.plane(n, ic0 + icl);
                        for (int oy = 0; oy < r.out_h; ++oy) {
                            const int iy = oy * g.stride + dy;
                            if (iy < 0 || iy >= IH) continue;
                            const T* grow = go + static_cast<std::size_t>(oy) * r.out_w;
                            const T* irow = src + static_cast<std::size_t>(iy) * IW;
                            int ox_lo = 0;
                            if (dx < 0) ox_lo = (-dx + g.stride - 1) / g.stride;
                            int ox_hi = r.out_w;
                            if (dx + (r.out_w - 1) * g.stride >= IW) {
                                ox_hi = (IW - dx + g.stride - 1) / g.stride;
                            }
                            for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                acc += grow[ox] * irow[ox * g.stride + dx];
                            }
                        }
                    }
                    kslice[ky * KW + kx] += acc;
                }
            }
        }
    }
}

template <typename T>
void backward_bias(T* dbias, const TensorT<T>& dout) {
    const int N = dout.n(), OC = dout.c();
    const std::size_t hw = static_cast<std::size_t>(dout.h()) * dout.w();
    for (int oc = 0; oc < OC; ++oc) {
        T acc = T(0);
        for (int n = 0; n < N; ++n) {
            const T* g = dout.plane(n, oc);
            for (std::size_t p = 0; p < hw; ++p) acc += g[p];
        }
        dbias[oc] += acc;
    }
}

}  // namespace conv_detail

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& in, const TensorT<T>& kernel, const T* bias,
                          const ConvGeom& g) {
    const auto r = conv_detail::resolve(in.shape(), kernel.shape(), g);
    TensorT<T> out(Shape{in.n(), kernel.n(), r.out_h, r.out_w});
    if (conv_detail::is_pointwise(kernel, g, r.pad)) {
        conv_detail::pointwise_forward(out, in, kernel, bias);
    } else {
        conv_detail::generic_forward(out, in, kernel, bias, g, r);
    }
    return out;
}

template <typename T>
void conv2d_backward(const TensorT<T>& in, const TensorT<T>& kernel, const ConvGeom& g,
                     const TensorT<T>& dout, TensorT<T>* din, TensorT<T>* dkernel,
                     T* dbias) {
    const auto r = conv_detail::resolve(in.shape(), kernel.shape(), g);
    const bool pw = conv_detail::is_pointwise(kernel, g, r.pad);
    if (din) {
        if (pw) {
            conv_detail::pointwise_backward_input(*din, dout, kernel);
        } else {
            conv_detail::generic_backward_input(*din, dout, kernel, g, r);
        }
    }
    if (dkernel) {
        if (pw) {
            conv_detail::pointwise_backward_kernel(*dkernel, dout, in);
        } else {
            conv_detail::generic_backward_kernel(*dkernel, dout, in, g, r);
        }
    }
    if (dbias) conv_detail::backward_bias(dbias, dout);
}

// Plain (non-recording) forward with the spec-level parameter bundle.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& in, const ConvParamsT<T>& p) {
    if (p.bias) {
        require(static_cast<int>(p.bias->size()) == p.kernel.n(), ErrorKind::shape,
                "conv2d: bias length " + std::to_string(p.bias->size()) +
                    " does not match output axis c=" + std::to_string(p.kernel.n()));
    }
    return conv2d_forward(in, p.kernel, p.bias ? p.bias->data() : nullptr, p.geom());
}

inline Shape conv2d_output_shape(const Shape& in, const Shape& kernel, const ConvGeom& g) {
    const auto r = conv_detail::resolve(in, kernel, g);
    return Shape{in.n, kernel.n, r.out_h, r.out_w};
}

// Multiply-accumulate count of one forward pass (batch included).
inline std::int64_t conv2d_macs(const Shape& in, const Shape& kernel, const ConvGeom& g) {
    const Shape out = conv2d_output_shape(in, kernel, g);
    return static_cast<std::int64_t>(out.numel()) * kernel.c * kernel.h * kernel.w;
}

}  // namespace hairmatte
