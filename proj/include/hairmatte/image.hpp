#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hairmatte/tensor.hpp"

namespace hairmatte {

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

template <typename T>
TensorT<T> rgb_to_gray(const TensorT<T>& img) {
    if (img.c() == 1) return img;
    require(img.c() == 3, ErrorKind::shape,
            "rgb_to_gray: expects 1 or 3 channels on axis c, got " + std::to_string(img.c()));
    TensorT<T> out(Shape{img.n(), 1, img.h(), img.w()});
    const std::size_t hw = static_cast<std::size_t>(img.h()) * img.w();
    for (int n = 0; n < img.n(); ++n) {
        const T* r = img.plane(n, 0);
        const T* g = img.plane(n, 1);
        const T* b = img.plane(n, 2);
        T* dst = out.plane(n, 0);
        for (std::size_t p = 0; p < hw; ++p) {
            dst[p] = static_cast<T>(kLumaR * r[p] + kLumaG * g[p] + kLumaB * b[p]);
        }
    }
    return out;
}

template <typename T>
TensorT<T> flip_horizontal(const TensorT<T>& x) {
    TensorT<T> out(x.shape());
    const int H = x.h(), W = x.w();
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const T* src = x.plane(n, c);
            T* dst = out.plane(n, c);
            for (int y = 0; y < H; ++y) {
                for (int xx = 0; xx < W; ++xx) dst[y * W + xx] = src[y * W + (W - 1 - xx)];
            }
        }
    }
    return out;
}

// Bilinear with half-pixel centers; exact copy when the size already matches.
template <typename T>
TensorT<T> resize_bilinear(const TensorT<T>& x, int th, int tw) {
    require(th >= 1 && tw >= 1, ErrorKind::shape, "resize_bilinear: target must be positive");
    if (th == x.h() && tw == x.w()) return x;
    TensorT<T> out(Shape{x.n(), x.c(), th, tw});
    const int H = x.h(), W = x.w();
    const double sy = static_cast<double>(H) / th;
    const double sx = static_cast<double>(W) / tw;
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const T* src = x.plane(n, c);
            T* dst = out.plane(n, c);
            for (int y = 0; y < th; ++y) {
                const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
                const int y0 = std::min(static_cast<int>(fy), H - 1);
                const int y1 = std::min(y0 + 1, H - 1);
                const double wy = fy - y0;
                for (int xx = 0; xx < tw; ++xx) {
                    const double fx = std::max(0.0, (xx + 0.5) * sx - 0.5);
                    const int x0 = std::min(static_cast<int>(fx), W - 1);
                    const int x1 = std::min(x0 + 1, W - 1);
                    const double wx = fx - x0;
                    const double top = (1.0 - wx) * src[y0 * W + x0] + wx * src[y0 * W + x1];
                    const double bot = (1.0 - wx) * src[y1 * W + x0] + wx * src[y1 * W + x1];
                    dst[y * tw + xx] = static_cast<T>((1.0 - wy) * top + wy * bot);
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary PGM (P5) / PPM (P6) I/O. Uncompressed headers + raw 8-bit payload,
// so byte round-trips are exact.
// ---------------------------------------------------------------------------

namespace pnm_detail {

inline void skip_space(std::istream& in) {
    int c = in.peek();
    while (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#') {
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else {
            in.get();
        }
        c = in.peek();
    }
}

inline int read_int(std::istream& in, const std::string& path) {
    skip_space(in);
    int v = -1;
    in >> v;
    require(in.good() && v >= 0, ErrorKind::format, "truncated or malformed header in " + path);
    return v;
}

}  // namespace pnm_detail

// Returns (1, c, h, w) in [0,1]; c is 1 for P5 and 3 for P6.
inline Tensor load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open image file " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    require(in.good() && m0 == 'P' && (m1 == '5' || m1 == '6'), ErrorKind::format,
            "unsupported image magic in " + path + " (expected P5 or P6)");
    const int channels = m1 == '6' ? 3 : 1;
    const int w = pnm_detail::read_int(in, path);
    const int h = pnm_detail::read_int(in, path);
    const int maxval = pnm_detail::read_int(in, path);
    require(maxval == 255, ErrorKind::format, "unsupported maxval " + std::to_string(maxval) +
                                                  " in " + path + " (only 8-bit supported)");
    in.get();  // single whitespace byte after maxval
    const std::size_t count = static_cast<std::size_t>(w) * h * channels;
    std::vector<std::uint8_t> raw(count);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
    require(static_cast<std::size_t>(in.gcount()) == count, ErrorKind::format,
            "truncated image payload in " + path);

    Tensor out(Shape{1, channels, h, w});
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (std::size_t p = 0; p < hw; ++p) {
        for (int c = 0; c < channels; ++c) {
            out[c * hw + p] = static_cast<float>(raw[p * channels + c]) / 255.0f;
        }
    }
    return out;
}

// Writes P5 for single-channel and P6 for 3-channel input; values are
// clamped to [0,1] and quantized with round-to-nearest.
inline void save_image(const std::string& path, const Tensor& img) {
    require(img.n() == 1, ErrorKind::shape, "save_image: expects batch of 1 on axis n");
    require(img.c() == 1 || img.c() == 3, ErrorKind::shape,
            "save_image: expects 1 or 3 channels on axis c, got " + std::to_string(img.c()));
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot open " + path + " for writing");
    const int channels = img.c();
    out << (channels == 3 ? "P6" : "P5") << "\n" << img.w() << " " << img.h() << "\n255\n";
    const std::size_t hw = static_cast<std::size_t>(img.h()) * img.w();
    std::vector<std::uint8_t> raw(hw * channels);
    for (std::size_t p = 0; p < hw; ++p) {
        for (int c = 0; c < channels; ++c) {
            const float v = std::clamp(img[c * hw + p], 0.0f, 1.0f);
            raw[p * channels + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    require(out.good(), ErrorKind::io, "failed writing image payload to " + path);
}

}  // namespace hairmatte
