#pragma once

#include <algorithm>
#include <array>

#include "hairmatte/image.hpp"
#include "hairmatte/tensor.hpp"

namespace hairmatte {

// Luminance-preserving chromaticity transfer. Each masked pixel keeps its
// own luma and takes the target's chroma direction, scaled back just enough
// to stay inside the RGB gamut; the chroma vector has zero luma, so the
// luminance is exact wherever any positive scale fits. Output is the
// mask-weighted blend with the original pixel.
template <typename T>
TensorT<T> recolor(const TensorT<T>& image, const TensorT<T>& mask,
                   const std::array<T, 3>& target_rgb) {
    require(image.c() == 3, ErrorKind::shape,
            "recolor: image must have 3 channels on axis c, got " + std::to_string(image.c()));
    require(mask.c() == 1, ErrorKind::shape, "recolor: mask must be single-channel on axis c");
    require(image.n() == mask.n() && image.h() == mask.h() && image.w() == mask.w(),
            ErrorKind::shape, "recolor: image " + image.shape().str() + " and mask " +
                                  mask.shape().str() + " sizes differ");

    const double luma_w[3] = {kLumaR, kLumaG, kLumaB};
    const double target_luma = luma_w[0] * target_rgb[0] + luma_w[1] * target_rgb[1] +
                               luma_w[2] * target_rgb[2];
    // zero-luma chroma direction of the target color
    double chroma[3];
    for (int c = 0; c < 3; ++c) chroma[c] = static_cast<double>(target_rgb[c]) - target_luma;

    TensorT<T> out(image.shape());
    const std::size_t hw = static_cast<std::size_t>(image.h()) * image.w();
    for (int n = 0; n < image.n(); ++n) {
        const T* planes[3] = {image.plane(n, 0), image.plane(n, 1), image.plane(n, 2)};
        T* outp[3] = {out.plane(n, 0), out.plane(n, 1), out.plane(n, 2)};
        const T* m = mask.plane(n, 0);
        for (std::size_t p = 0; p < hw; ++p) {
            const double mv = std::clamp(static_cast<double>(m[p]), 0.0, 1.0);
            if (mv == 0.0) {
                for (int c = 0; c < 3; ++c) outp[c][p] = planes[c][p];
                continue;
            }
            const double luma = luma_w[0] * planes[0][p] + luma_w[1] * planes[1][p] +
                                luma_w[2] * planes[2][p];
            // largest s in [0,1] with luma + s*chroma inside [0,1]^3
            double s = 1.0;
            for (int c = 0; c < 3; ++c) {
                if (chroma[c] > 1e-12) {
                    s = std::min(s, (1.0 - luma) / chroma[c]);
                } else if (chroma[c] < -1e-12) {
                    s = std::min(s, luma / -chroma[c]);
                }
            }
            s = std::max(s, 0.0);
            for (int c = 0; c < 3; ++c) {
                const double shifted = std::clamp(luma + s * chroma[c], 0.0, 1.0);
                outp[c][p] = static_cast<T>((1.0 - mv) * planes[c][p] + mv * shifted);
            }
        }
    }
    return out;
}

}  // namespace hairmatte
