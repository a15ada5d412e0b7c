#pragma once

#include <cmath>
#include <utility>

#include "hairmatte/autodiff.hpp"
#include "hairmatte/image.hpp"
#include "hairmatte/ops.hpp"
#include "hairmatte/tensor.hpp"

namespace hairmatte {

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kMagFloor = 1e-8;  // below this total edge mass the consistency loss is 0

template <typename T>
struct LossConfigT {
    T w = T(0.5);            // consistency balancing weight
    T l2_weight = T(2e-5);
    int hair_class_index = 1;
};

using LossConfig = LossConfigT<float>;

struct LossReport {
    double l_m = 0.0;
    double l_c = 0.0;
    double l2 = 0.0;
    double w = 0.0;
    double total = 0.0;  // l_m + w*l_c + l2
};

// ---------------------------------------------------------------------------
// Binary cross entropy, averaged over every element (pixels and classes).
// Fused op: probabilities are clamped to [1e-7, 1-1e-7] inside, and the
// clamped region has zero derivative.
// ---------------------------------------------------------------------------

template <typename T>
ValueT<T> bce_loss(const ValueT<T>& pred, const TensorT<T>& target) {
    check_recorded(pred, "bce_loss");
    check_same_shape(pred->value, target, "bce_loss");
    require(pred->value.size() > 0, ErrorKind::shape, "bce_loss: empty tensors");
    const T lo = T(kProbClamp), hi = T(1) - T(kProbClamp);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred->value.size(); ++i) {
        const double p = std::clamp(pred->value[i], lo, hi);
        const double t = target[i];
        acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    const double mean = acc / static_cast<double>(pred->value.size());
    return make_op<T>(TensorT<T>::scalar(static_cast<T>(mean)), {pred},
                      [target, lo, hi](NodeT<T>& self) {
                          auto& p = self.parents[0];
                          if (!p->requires_grad) return;
                          p->ensure_grad();
                          const T g = self.grad[0] / static_cast<T>(target.size());
                          for (std::size_t i = 0; i < target.size(); ++i) {
                              const T pv = p->value[i];
                              if (pv <= lo || pv >= hi) continue;
                              const T t = target[i];
                              p->grad[i] += g * (-t / pv + (T(1) - t) / (T(1) - pv));
                          }
                      });
}

template <typename T>
double bce_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    NoGradGuard off;
    return static_cast<double>(bce_loss(constant(pred), target)->value[0]);
}

// ---------------------------------------------------------------------------
// Mask-image gradient consistency. Both inputs single-channel, same size;
// batches contribute to one shared sum. Value is in [0,1]: it weights
// 1 - (dot of normalized gradient directions)^2 by the mask edge magnitude.
// ---------------------------------------------------------------------------

template <typename T>
ValueT<T> gradient_consistency_loss(const TensorT<T>& image_gray, const ValueT<T>& hair_prob,
                                    T eps = T(1e-6)) {
    check_recorded(hair_prob, "gradient_consistency_loss");
    require(image_gray.c() == 1, ErrorKind::shape,
            "gradient_consistency_loss: image must be single-channel on axis c");
    check_same_shape(image_gray, hair_prob->value, "gradient_consistency_loss");

    const GradFieldT<T> ifield = sobel_gradients(image_gray, /*normalize=*/true, eps);
    auto mfield = ops::grad_field(hair_prob, /*normalize=*/true, eps);

    auto den = ops::sum_all(mfield.mag);
    if (static_cast<double>(den->value[0]) < kMagFloor) {
        return constant(TensorT<T>::scalar(T(0)));  // no mask edges, nothing to align
    }
    auto dot = ops::add(ops::mul(constant(ifield.gx), mfield.gx),
                        ops::mul(constant(ifield.gy), mfield.gy));
    auto bracket = ops::affine(ops::square(dot), T(-1), T(1));
    auto num = ops::sum_all(ops::mul(mfield.mag, bracket));
    return ops::div(num, den);
}

template <typename T>
double gradient_consistency_loss(const TensorT<T>& image_gray, const TensorT<T>& hair_prob,
                                 T eps = T(1e-6)) {
    NoGradGuard off;
    return static_cast<double>(
        gradient_consistency_loss(image_gray, constant(hair_prob), eps)->value[0]);
}

// ---------------------------------------------------------------------------
// Combined objective
// ---------------------------------------------------------------------------

// Expands a (n,1,h,w) mask into per-class targets. For two classes the mask
// is the foreground plane; for more, it holds integer class indices.
template <typename T>
TensorT<T> one_hot_target(const TensorT<T>& mask, int num_classes) {
    require(mask.c() == 1, ErrorKind::shape, "one_hot_target: mask must be single-channel");
    require(num_classes >= 2, ErrorKind::shape, "one_hot_target: needs at least 2 classes");
    TensorT<T> out(Shape{mask.n(), num_classes, mask.h(), mask.w()});
    const std::size_t hw = static_cast<std::size_t>(mask.h()) * mask.w();
    for (int n = 0; n < mask.n(); ++n) {
        const T* src = mask.plane(n, 0);
        for (std::size_t p = 0; p < hw; ++p) {
            const int cls = static_cast<int>(std::lround(static_cast<double>(src[p])));
            require(cls >= 0 && cls < num_classes, ErrorKind::data,
                    "one_hot_target: mask value " + std::to_string(src[p]) +
                        " outside class range");
            out.plane(n, cls)[p] = T(1);
        }
    }
    return out;
}

template <typename T>
struct LossTermsT {
    ValueT<T> l_m;
    ValueT<T> l_c;
    ValueT<T> objective;  // l_m + w*l_c (the recorded part; l2 is handled analytically)
    double l2 = 0.0;
    double w = 0.0;

    LossReport report() const {
        LossReport r;
        r.l_m = static_cast<double>(l_m->value[0]);
        r.l_c = static_cast<double>(l_c->value[0]);
        r.l2 = l2;
        r.w = w;
        r.total = r.l_m + r.w * r.l_c + r.l2;
        return r;
    }
};

// probs: (n, num_classes, h, w) softmax output. target_mask: (n,1,h,w).
// image: (n,1|3,h,w); only its grayscale gradients feed the consistency
// term, and only through the hair class plane.
template <typename T>
LossTermsT<T> combined_loss(const ValueT<T>& probs, const TensorT<T>& target_mask,
                            const TensorT<T>& image, const LossConfigT<T>& cfg,
                            double l2_value = 0.0) {
    check_recorded(probs, "combined_loss");
    const int num_classes = probs->value.c();
    require(cfg.hair_class_index >= 0 && cfg.hair_class_index < num_classes, ErrorKind::shape,
            "combined_loss: hair class index " + std::to_string(cfg.hair_class_index) +
                " outside axis c=" + std::to_string(num_classes));
    require(cfg.w >= T(0) && cfg.l2_weight >= T(0), ErrorKind::usage,
            "combined_loss: negative loss weights");

    LossTermsT<T> terms;
    terms.w = static_cast<double>(cfg.w);
    terms.l2 = l2_value;
    terms.l_m = bce_loss(probs, one_hot_target(target_mask, num_classes));

    auto hair = ops::slice_channels(probs, cfg.hair_class_index, 1);
    terms.l_c = gradient_consistency_loss(rgb_to_gray(image), hair);

    terms.objective = cfg.w == T(0)
                          ? terms.l_m
                          : ops::add(terms.l_m, ops::mul_scalar(terms.l_c, cfg.w));
    return terms;
}

}  // namespace hairmatte
