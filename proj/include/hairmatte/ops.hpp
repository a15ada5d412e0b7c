#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hairmatte/autodiff.hpp"
#include "hairmatte/conv.hpp"
#include "hairmatte/tensor.hpp"

namespace hairmatte {

// ---------------------------------------------------------------------------
// Plain (non-recording) forward ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    TensorT<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return out;
}

template <typename T>
TensorT<T> softmax_channels(const TensorT<T>& x) {
    require(x.c() >= 2, ErrorKind::shape,
            "softmax_channels: needs at least 2 channels on axis c, got " + std::to_string(x.c()));
    TensorT<T> out(x.shape());
    const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t base = static_cast<std::size_t>(n) * C * hw + p;
            T mx = x[base];
            for (int c = 1; c < C; ++c) mx = std::max(mx, x[base + c * hw]);
            T sum = T(0);
            for (int c = 0; c < C; ++c) {
                const T e = std::exp(x[base + c * hw] - mx);
                out[base + c * hw] = e;
                sum += e;
            }
            for (int c = 0; c < C; ++c) out[base + c * hw] /= sum;
        }
    }
    return out;
}

template <typename T>
TensorT<T> upsample_replicate2x(const TensorT<T>& x) {
    require(x.h() >= 1 && x.w() >= 1, ErrorKind::shape, "upsample_replicate2x: empty spatial axes");
    TensorT<T> out(Shape{x.n(), x.c(), 2 * x.h(), 2 * x.w()});
    const int H = x.h(), W = x.w();
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const T* src = x.plane(n, c);
            T* dst = out.plane(n, c);
            for (int y = 0; y < H; ++y) {
                for (int x2 = 0; x2 < W; ++x2) {
                    const T v = src[y * W + x2];
                    T* d = dst + (2 * y) * (2 * W) + 2 * x2;
                    d[0] = v;
                    d[1] = v;
                    d[2 * W] = v;
                    d[2 * W + 1] = v;
                }
            }
        }
    }
    return out;
}

template <typename T>
TensorT<T> pad_replicate(const TensorT<T>& x, int p) {
    TensorT<T> out(Shape{x.n(), x.c(), x.h() + 2 * p, x.w() + 2 * p});
    const int H = x.h(), W = x.w(), OH = H + 2 * p, OW = W + 2 * p;
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const T* src = x.plane(n, c);
            T* dst = out.plane(n, c);
            for (int y = 0; y < OH; ++y) {
                const int sy = std::clamp(y - p, 0, H - 1);
                for (int xx = 0; xx < OW; ++xx) {
                    const int sx = std::clamp(xx - p, 0, W - 1);
                    dst[y * OW + xx] = src[sy * W + sx];
                }
            }
        }
    }
    return out;
}

namespace sobel_detail {
// horizontal and vertical derivative taps (correlation order)
inline constexpr double kx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
inline constexpr double ky[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};

template <typename T>
TensorT<T> kernel_pair() {
    TensorT<T> k(Shape{2, 1, 3, 3});
    for (int i = 0; i < 9; ++i) {
        k[i] = static_cast<T>(kx[i]);
        k[9 + i] = static_cast<T>(ky[i]);
    }
    return k;
}
}  // namespace sobel_detail

template <typename T>
struct GradFieldT {
    TensorT<T> gx;
    TensorT<T> gy;
    TensorT<T> mag;  // always the unnormalized magnitude
};

using GradField = GradFieldT<float>;

// 3x3 Sobel derivatives with replicate border. With normalize, (gx, gy) are
// divided by (mag + eps) so they form near-unit direction vectors.
template <typename T>
GradFieldT<T> sobel_gradients(const TensorT<T>& x, bool normalize, T eps = T(1e-6)) {
    require(x.c() == 1, ErrorKind::shape,
            "sobel_gradients: expects a single channel on axis c, got " + std::to_string(x.c()));
    const TensorT<T> padded = pad_replicate(x, 1);
    const TensorT<T> k = sobel_detail::kernel_pair<T>();
    const TensorT<T> g =
        conv2d_forward(padded, k, static_cast<const T*>(nullptr),
                       ConvGeom{1, 1, 1, Padding::Explicit(0)});
    GradFieldT<T> f;
    f.gx = TensorT<T>(x.shape());
    f.gy = TensorT<T>(x.shape());
    f.mag = TensorT<T>(x.shape());
    const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
    for (int n = 0; n < x.n(); ++n) {
        const T* gx = g.plane(n, 0);
        const T* gy = g.plane(n, 1);
        T* fx = f.gx.plane(n, 0);
        T* fy = f.gy.plane(n, 0);
        T* fm = f.mag.plane(n, 0);
        for (std::size_t p = 0; p < hw; ++p) {
            const T m = std::sqrt(gx[p] * gx[p] + gy[p] * gy[p]);
            fm[p] = m;
            if (normalize) {
                fx[p] = gx[p] / (m + eps);
                fy[p] = gy[p] / (m + eps);
            } else {
                fx[p] = gx[p];
                fy[p] = gy[p];
            }
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// Recording ops
// ---------------------------------------------------------------------------

namespace ops {

template <typename T>
ValueT<T> add(const ValueT<T>& a, const ValueT<T>& b) {
    check_recorded(a, "add");
    check_recorded(b, "add");
    check_same_shape(a->value, b->value, "add");
    TensorT<T> out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    return make_op<T>(std::move(out), {a, b}, [](NodeT<T>& self) {
        for (int k = 0; k < 2; ++k) {
            auto& p = self.parents[k];
            if (p->requires_grad) p->accumulate(self.grad);
        }
    });
}

template <typename T>
ValueT<T> sub(const ValueT<T>& a, const ValueT<T>& b) {
    check_recorded(a, "sub");
    check_recorded(b, "sub");
    check_same_shape(a->value, b->value, "sub");
    TensorT<T> out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
    return make_op<T>(std::move(out), {a, b}, [](NodeT<T>& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
        auto& b2 = self.parents[1];
        if (b2->requires_grad) {
            b2->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) b2->grad[i] -= self.grad[i];
        }
    });
}

template <typename T>
ValueT<T> mul(const ValueT<T>& a, const ValueT<T>& b) {
    check_recorded(a, "mul");
    check_recorded(b, "mul");
    check_same_shape(a->value, b->value, "mul");
    TensorT<T> out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
    return make_op<T>(std::move(out), {a, b}, [](NodeT<T>& self) {
        auto& a2 = self.parents[0];
        auto& b2 = self.parents[1];
        if (a2->requires_grad) {
            a2->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                a2->grad[i] += self.grad[i] * b2->value[i];
        }
        if (b2->requires_grad) {
            b2->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                b2->grad[i] += self.grad[i] * a2->value[i];
        }
    });
}

template <typename T>
ValueT<T> div(const ValueT<T>& a, const ValueT<T>& b) {
    check_recorded(a, "div");
    check_recorded(b, "div");
    check_same_shape(a->value, b->value, "div");
    TensorT<T> out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] / b->value[i];
    return make_op<T>(std::move(out), {a, b}, [](NodeT<T>& self) {
        auto& a2 = self.parents[0];
        auto& b2 = self.parents[1];
        if (a2->requires_grad) {
            a2->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                a2->grad[i] += self.grad[i] / b2->value[i];
        }
        if (b2->requires_grad) {
            b2->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const T bv = b2->value[i];
                b2->grad[i] -= self.grad[i] * a2->value[i] / (bv * bv);
            }
        }
    });
}

// m*x + b, elementwise with scalar coefficients
template <typename T>
ValueT<T> affine(const ValueT<T>& x, T m, T b) {
    check_recorded(x, "affine");
    TensorT<T> out(x->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = m * x->value[i] + b;
    return make_op<T>(std::move(out), {x}, [m](NodeT<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += m * self.grad[i];
    });
}

template <typename T>
ValueT<T> add_scalar(const ValueT<T>& x, T s) {
    return affine(x, T(1), s);
}

template <typename T>
ValueT<T> mul_scalar(const ValueT<T>& x, T s) {
    return affine(x, s, T(0));
}

template <typename T>
ValueT<T> relu(const ValueT<T>& x) {
    check_recorded(x, "relu");
    TensorT<T> out = hairmatte::relu(x->value);
    return make_op<T>(std::move(out), {x}, [](NodeT<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (p->value[i] > T(0)) p->grad[i] += self.grad[i];
        }
    });
}

template <typename T>
ValueT<T> square(const ValueT<T>& x) {
    check_recorded(x, "square");
    TensorT<T> out(x->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * x->value[i];
    return make_op<T>(std::move(out), {x}, [](NodeT<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            p->grad[i] += T(2) * p->value[i] * self.grad[i];
    });
}

// sqrt(gx^2 + gy^2) with the zero-gradient subgradient at the origin
template <typename T>
ValueT<T> magnitude(const ValueT<T>& gx, const ValueT<T>& gy) {
    check_recorded(gx, "magnitude");
    check_recorded(gy, "magnitude");
    check_same_shape(gx->value, gy->value, "magnitude");
    TensorT<T> out(gx->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T a = gx->value[i], b = gy->value[i];
        out[i] = std::sqrt(a * a + b * b);
    }
    return make_op<T>(std::move(out), {gx, gy}, [](NodeT<T>& self) {
        auto& px = self.parents[0];
        auto& py = self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const T m = self.value[i];
            if (m < T(1e-12)) continue;
            const T g = self.grad[i] / m;
            if (px->requires_grad) {
                px->ensure_grad();
                px->grad[i] += g * px->value[i];
            }
            if (py->requires_grad) {
                py->ensure_grad();
                py->grad[i] += g * py->value[i];
            }
        }
    });
}

template <typename T>
ValueT<T> sum_all(const ValueT<T>& x) {
    check_recorded(x, "sum_all");
    double acc = 0.0;
    for (std::size_t i = 0; i < x->value.size(); ++i) acc += static_cast<double>(x->value[i]);
    return make_op<T>(TensorT<T>::scalar(static_cast<T>(acc)), {x}, [](NodeT<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        const T g = self.grad[0];
        for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
    });
}

template <typename T>
ValueT<T> mean_all(const ValueT<T>& x) {
    check_recorded(x, "mean_all");
    require(x->value.size() > 0, ErrorKind::shape, "mean_all: empty tensor");
    double acc = 0.0;
    for (std::size_t i = 0; i < x->value.size(); ++i) acc += static_cast<double>(x->value[i]);
    const T inv = T(1) / static_cast<T>(x->value.size());
    return make_op<T>(TensorT<T>::scalar(static_cast<T>(acc / x->value.size())), {x},
                      [inv](NodeT<T>& self) {
                          auto& p = self.parents[0];
                          if (!p->requires_grad) return;
                          p->ensure_grad();
                          const T g = self.grad[0] * inv;
                          for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
                      });
}

template <typename T>
ValueT<T> slice_channels(const ValueT<T>& x, int c0, int count) {
    check_recorded(x, "slice_channels");
    const Shape s = x->value.shape();
    require(c0 >= 0 && count >= 1 && c0 + count <= s.c, ErrorKind::shape,
            "slice_channels: range [" + std::to_string(c0) + ", " + std::to_string(c0 + count) +
                ") outside axis c=" + std::to_string(s.c));
    TensorT<T> out(Shape{s.n, count, s.h, s.w});
    const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < count; ++c) {
            std::copy_n(x->value.plane(n, c0 + c), hw, out.plane(n, c));
        }
    }
    return make_op<T>(std::move(out), {x}, [c0, count, hw](NodeT<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int n = 0; n < self.value.n(); ++n) {
            for (int c = 0; c < count; ++c) {
                const T* g = self.grad.plane(n, c);
                T* d = p->grad.plane(n, c0 + c);
                for (std::size_t i = 0; i < hw; ++i) d[i] += g[i];
            }
        }
    });
}

template <typename T>
ValueT<T> pad_replicate(const ValueT<T>& x, int pad) {
    check_recorded(x, "pad_replicate");
    TensorT<T> out = hairmatte::pad_replicate(x->value, pad);
    return make_op<T>(std::move(out), {x}, [pad](NodeT<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        const int H = p->value.h(), W = p->value.w();
        const int OH = H + 2 * pad, OW = W + 2 * pad;
        for (int n = 0; n < p->value.n(); ++n) {
            for (int c = 0; c < p->value.c(); ++c) {
                const T* g = self.grad.plane(n, c);
                T* d = p->grad.plane(n, c);
                for (int y = 0; y < OH; ++y) {
                    const int sy = std::clamp(y - pad, 0, H - 1);
                    for (int xx = 0; xx < OW; ++xx) {
                        const int sx = std::clamp(xx - pad, 0, W - 1);
                        d[sy * W + sx] += g[y * OW + xx];
                    }
                }
            }
        }
    });
}

template <typename T>
ValueT<T> upsample_replicate2x(const ValueT<T>& x) {
    check_recorded(x, "upsample_replicate2x");
    TensorT<T> out = hairmatte::upsample_replicate2x(x->value);
    return make_op<T>(std::move(out), {x}, [](NodeT<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        const int H = p->value.h(), W = p->value.w();
        for (int n = 0; n < p->value.n(); ++n) {
            for (int c = 0; c < p->value.c(); ++c) {
                const T* g = self.grad.plane(n, c);
                T* d = p->grad.plane(n, c);
                for (int y = 0; y < H; ++y) {
                    for (int xx = 0; xx < W; ++xx) {
                        const T* q = g + (2 * y) * (2 * W) + 2 * xx;
                        d[y * W + xx] += q[0] + q[1] + q[2 * W] + q[2 * W + 1];
                    }
                }
            }
        }
    });
}

template <typename T>
ValueT<T> softmax_channels(const ValueT<T>& x) {
    check_recorded(x, "softmax_channels");
    TensorT<T> out = hairmatte::softmax_channels(x->value);
    return make_op<T>(std::move(out), {x}, [](NodeT<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        const int N = self.value.n(), C = self.value.c();
        const std::size_t hw = static_cast<std::size_t>(self.value.h()) * self.value.w();
        for (int n = 0; n < N; ++n) {
            for (std::size_t q = 0; q < hw; ++q) {
                const std::size_t base = static_cast<std::size_t>(n) * C * hw + q;
                T dot = T(0);
                for (int c = 0; c < C; ++c) dot += self.grad[base + c * hw] * self.value[base + c * hw];
                for (int c = 0; c < C; ++c) {
                    const std::size_t i = base + c * hw;
                    p->grad[i] += self.value[i] * (self.grad[i] - dot);
                }
            }
        }
    });
}

template <typename T>
ValueT<T> conv2d(const ValueT<T>& x, const ValueT<T>& kernel, const ValueT<T>& bias,
                 const ConvGeom& geom) {
    check_recorded(x, "conv2d");
    check_recorded(kernel, "conv2d");
    if (bias) {
        require(bias->value.shape() == Shape{1, kernel->value.n(), 1, 1}, ErrorKind::shape,
                "conv2d: bias shape " + bias->value.shape().str() + " does not match output axis c=" +
                    std::to_string(kernel->value.n()));
    }
    TensorT<T> out =
        conv2d_forward(x->value, kernel->value, bias ? bias->value.data() : nullptr, geom);
    std::vector<ValueT<T>> parents = {x, kernel};
    if (bias) parents.push_back(bias);
    return make_op<T>(std::move(out), std::move(parents), [geom](NodeT<T>& self) {
        auto& px = self.parents[0];
        auto& pk = self.parents[1];
        NodeT<T>* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        TensorT<T>* din = nullptr;
        TensorT<T>* dk = nullptr;
        T* db = nullptr;
        if (px->requires_grad) {
            px->ensure_grad();
            din = &px->grad;
        }
        if (pk->requires_grad) {
            pk->ensure_grad();
            dk = &pk->grad;
        }
        if (pb && pb->requires_grad) {
            pb->ensure_grad();
            db = pb->grad.data();
        }
        conv2d_backward(px->value, pk->value, geom, self.grad, din, dk, db);
    });
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

template <typename T>
struct BnRunningT {
    TensorT<T> mean;  // (1,c,1,1)
    TensorT<T> var;

    static BnRunningT identity(int channels) {
        BnRunningT s;
        s.mean = TensorT<T>::zeros(1, channels, 1, 1);
        s.var = TensorT<T>::full(1, channels, 1, 1, T(1));
        return s;
    }
};

inline constexpr double kBnEps = 1e-7;
inline constexpr double kBnMomentum = 0.9;

// Train mode normalizes by batch statistics (biased variance) and folds them
// into the running stats; infer mode reads the running stats. `running` may
// be null only in infer-less test rigs.
template <typename T>
ValueT<T> batch_norm(const ValueT<T>& x, const ValueT<T>& gamma, const ValueT<T>& beta,
                     BnRunningT<T>* running, bool training, T eps = T(kBnEps),
                     T momentum = T(kBnMomentum)) {
    check_recorded(x, "batch_norm");
    check_recorded(gamma, "batch_norm");
    check_recorded(beta, "batch_norm");
    const Shape s = x->value.shape();
    const Shape param_shape{1, s.c, 1, 1};
    require(gamma->value.shape() == param_shape && beta->value.shape() == param_shape,
            ErrorKind::shape, "batch_norm: scale/shift must have one entry per channel on axis c");

    const int C = s.c;
    const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
    TensorT<T> mean(param_shape), inv_std(param_shape);

    if (training) {
        require(s.n > 0 && hw > 0, ErrorKind::shape, "batch_norm: empty batch in train mode");
        const double m = static_cast<double>(s.n) * hw;
        for (int c = 0; c < C; ++c) {
            double sum = 0.0, sq = 0.0;
            for (int n = 0; n < s.n; ++n) {
                const T* src = x->value.plane(n, c);
                for (std::size_t p = 0; p < hw; ++p) {
                    const double v = src[p];
                    sum += v;
                    sq += v * v;
                }
            }
            const double mu = sum / m;
            const double var = std::max(0.0, sq / m - mu * mu);
            mean[c] = static_cast<T>(mu);
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            if (running) {
                running->mean[c] = momentum * running->mean[c] + (T(1) - momentum) * static_cast<T>(mu);
                running->var[c] = momentum * running->var[c] + (T(1) - momentum) * static_cast<T>(var);
            }
        }
    } else {
        require(running != nullptr, ErrorKind::data, "batch_norm: infer mode needs running stats");
        for (int c = 0; c < C; ++c) {
            mean[c] = running->mean[c];
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running->var[c]) +
                                                        static_cast<double>(eps)));
        }
    }

    TensorT<T> out(s);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* src = x->value.plane(n, c);
            T* dst = out.plane(n, c);
            const T mu = mean[c], is = inv_std[c], g = gamma->value[c], b = beta->value[c];
            for (std::size_t p = 0; p < hw; ++p) dst[p] = (src[p] - mu) * is * g + b;
        }
    }

    return make_op<T>(std::move(out), {x, gamma, beta},
                      [mean = std::move(mean), inv_std = std::move(inv_std), training](NodeT<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const Shape s = px->value.shape();
        const int C = s.c;
        const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
        const double m = static_cast<double>(s.n) * hw;
        if (px->requires_grad) px->ensure_grad();
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        for (int c = 0; c < C; ++c) {
            const T mu = mean[c], is = inv_std[c], g = pg->value[c];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int n = 0; n < s.n; ++n) {
                const T* dy = self.grad.plane(n, c);
                const T* xv = px->value.plane(n, c);
                for (std::size_t p = 0; p < hw; ++p) {
                    sum_dy += dy[p];
                    sum_dy_xhat += dy[p] * (xv[p] - mu) * is;
                }
            }
            if (pg->requires_grad) pg->grad[c] += static_cast<T>(sum_dy_xhat);
            if (pb->requires_grad) pb->grad[c] += static_cast<T>(sum_dy);
            if (px->requires_grad) {
                if (training) {
                    const T c1 = static_cast<T>(sum_dy / m);
                    const T c2 = static_cast<T>(sum_dy_xhat / m);
                    for (int n = 0; n < s.n; ++n) {
                        const T* dy = self.grad.plane(n, c);
                        const T* xv = px->value.plane(n, c);
                        T* dx = px->grad.plane(n, c);
                        for (std::size_t p = 0; p < hw; ++p) {
                            const T xhat = (xv[p] - mu) * is;
                            dx[p] += g * is * (dy[p] - c1 - xhat * c2);
                        }
                    }
                } else {
                    for (int n = 0; n < s.n; ++n) {
                        const T* dy = self.grad.plane(n, c);
                        T* dx = px->grad.plane(n, c);
                        for (std::size_t p = 0; p < hw; ++p) dx[p] += dy[p] * g * is;
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Normalized gradient field (shared by the consistency loss and metric)
// ---------------------------------------------------------------------------

template <typename T>
struct GradFieldNodesT {
    ValueT<T> gx;   // normalized when requested
    ValueT<T> gy;
    ValueT<T> mag;  // unnormalized magnitude
};

template <typename T>
GradFieldNodesT<T> grad_field(const ValueT<T>& x, bool normalize, T eps = T(1e-6)) {
    check_recorded(x, "grad_field");
    require(x->value.c() == 1, ErrorKind::shape,
            "grad_field: expects a single channel on axis c, got " + std::to_string(x->value.c()));
    auto padded = pad_replicate(x, 1);
    auto kernel = constant(sobel_detail::kernel_pair<T>());
    auto g = conv2d<T>(padded, kernel, nullptr, ConvGeom{1, 1, 1, Padding::Explicit(0)});
    GradFieldNodesT<T> f;
    f.gx = slice_channels(g, 0, 1);
    f.gy = slice_channels(g, 1, 1);
    f.mag = magnitude(f.gx, f.gy);
    if (normalize) {
        auto denom = add_scalar(f.mag, eps);
        f.gx = div(f.gx, denom);
        f.gy = div(f.gy, denom);
    }
    return f;
}

}  // namespace ops

// Plain spec-level batch_norm on tensors.
enum class BnMode { train, infer };

template <typename T>
TensorT<T> batch_norm(const TensorT<T>& x, const TensorT<T>& scale, const TensorT<T>& shift,
                      ops::BnRunningT<T>& running, BnMode mode) {
    NoGradGuard off;
    auto out = ops::batch_norm(constant(x), constant(scale), constant(shift), &running,
                               mode == BnMode::train);
    return out->value;
}

}  // namespace hairmatte
