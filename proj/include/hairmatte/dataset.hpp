#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "hairmatte/image.hpp"
#include "hairmatte/rng.hpp"
#include "hairmatte/tensor.hpp"
#include "hairmatte/textio.hpp"

namespace hairmatte {

struct Sample {
    Tensor image;  // (1,3,h,w) in [0,1]
    Tensor mask;   // (1,1,h,w) in {0,1}
    std::string id;
};

using Dataset = std::vector<Sample>;

inline void validate_sample(const Sample& s) {
    require(s.image.n() == 1 && s.image.c() == 3, ErrorKind::data,
            "sample " + s.id + ": image must be (1,3,h,w), got " + s.image.shape().str());
    require(s.mask.n() == 1 && s.mask.c() == 1, ErrorKind::data,
            "sample " + s.id + ": mask must be (1,1,h,w), got " + s.mask.shape().str());
    require(s.image.h() == s.mask.h() && s.image.w() == s.mask.w(), ErrorKind::data,
            "sample " + s.id + ": image and mask sizes differ");
    for (float v : s.image.vec()) {
        require(v >= 0.0f && v <= 1.0f && std::isfinite(v), ErrorKind::data,
                "sample " + s.id + ": image values outside [0,1]");
    }
    require(tensor_values_binary(s.mask), ErrorKind::data,
            "sample " + s.id + ": mask values must be 0 or 1");
}

// Doubles the set with horizontal mirrors; originals first, then flips.
inline Dataset flip_augment(const Dataset& data) {
    Dataset out;
    out.reserve(2 * data.size());
    for (const auto& s : data) out.push_back(s);
    for (const auto& s : data) {
        out.push_back(Sample{flip_horizontal(s.image), flip_horizontal(s.mask), s.id + "_flip"});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Directory layout: images/NNNN.ppm, masks/NNNN.pgm and a manifest listing
// id, relative paths and split.
// ---------------------------------------------------------------------------

inline constexpr const char* kManifestName = "manifest.tsv";
inline constexpr const char* kManifestHeader = "hairmatte-dataset 1";

struct ManifestEntry {
    std::string id;
    std::string image_path;  // relative to the dataset dir
    std::string mask_path;
    std::string split;  // train | val | test
};

inline std::vector<ManifestEntry> read_manifest(const std::string& dir) {
    const std::string path = dir + "/" + kManifestName;
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open dataset manifest " + path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == kManifestHeader,
            ErrorKind::format, "unsupported manifest header in " + path);
    std::vector<ManifestEntry> entries;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        require(cols.size() == 4, ErrorKind::format,
                "malformed manifest row \"" + line + "\" in " + path);
        entries.push_back(ManifestEntry{cols[0], cols[1], cols[2], cols[3]});
    }
    return entries;
}

// split == "" loads everything
inline Dataset load_dataset(const std::string& dir, const std::string& split = "") {
    Dataset out;
    for (const auto& e : read_manifest(dir)) {
        if (!split.empty() && e.split != split) continue;
        Sample s;
        s.id = e.id;
        s.image = load_image(dir + "/" + e.image_path);
        require(s.image.c() == 3, ErrorKind::data,
                "dataset " + dir + ": image " + e.image_path + " is not 3-channel");
        Tensor mask_gray = load_image(dir + "/" + e.mask_path);
        require(mask_gray.c() == 1, ErrorKind::data,
                "dataset " + dir + ": mask " + e.mask_path + " is not single-channel");
        s.mask = Tensor(mask_gray.shape());
        for (std::size_t i = 0; i < mask_gray.size(); ++i) {
            s.mask[i] = mask_gray[i] >= 0.5f ? 1.0f : 0.0f;
        }
        validate_sample(s);
        out.push_back(std::move(s));
    }
    require(!out.empty(), ErrorKind::data,
            "dataset " + dir + ": no samples" + (split.empty() ? "" : " in split \"" + split + "\""));
    return out;
}

inline void write_dataset(const std::string& dir,
                          const std::vector<std::pair<Sample, std::string>>& samples_with_split) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    std::ofstream manifest(fs::path(dir) / kManifestName);
    require(manifest.good(), ErrorKind::io, "cannot write manifest in " + dir);
    manifest << kManifestHeader << "\n";
    for (const auto& [s, split] : samples_with_split) {
        const std::string image_rel = "images/" + s.id + ".ppm";
        const std::string mask_rel = "masks/" + s.id + ".pgm";
        save_image(dir + "/" + image_rel, s.image);
        save_image(dir + "/" + mask_rel, s.mask);
        manifest << s.id << "\t" << image_rel << "\t" << mask_rel << "\t" << split << "\n";
    }
    require(manifest.good(), ErrorKind::io, "failed writing manifest in " + dir);
}

// ---------------------------------------------------------------------------
// Synthetic strand scenes: anti-aliased quadratic Bezier "hair" over flat,
// gradient or textured backgrounds, with the exact rasterizer coverage as
// ground truth. Deterministic per (seed, index).
// ---------------------------------------------------------------------------

enum class BackgroundMode { flat, gradient, textured };

inline const char* background_mode_name(BackgroundMode m) {
    switch (m) {
        case BackgroundMode::flat: return "flat";
        case BackgroundMode::gradient: return "gradient";
        case BackgroundMode::textured: return "textured";
    }
    return "flat";
}

inline BackgroundMode parse_background_mode(const std::string& s) {
    if (s == "flat") return BackgroundMode::flat;
    if (s == "gradient") return BackgroundMode::gradient;
    if (s == "textured") return BackgroundMode::textured;
    fail(ErrorKind::usage, "unknown background mode \"" + s + "\" (flat|gradient|textured)");
}

struct SynthConfig {
    std::uint64_t seed = 0;
    int count = 16;
    int canvas = 64;
    int strand_count_min = 4;
    int strand_count_max = 12;
    double strand_width_min = 1.5;
    double strand_width_max = 4.0;
    BackgroundMode background = BackgroundMode::gradient;
    double albedo_min = 0.02;
    double albedo_max = 0.3;
    double highlight_probability = 0.25;
    bool coarse_labels = false;  // degrade masks like crowd-sourced annotations
    int coarse_radius_max = 1;
};

namespace synth_detail {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 bezier(const Vec2& p0, const Vec2& p1, const Vec2& p2, double t) {
    const double u = 1.0 - t;
    return Vec2{u * u * p0.x + 2.0 * u * t * p1.x + t * t * p2.x,
                u * u * p0.y + 2.0 * u * t * p1.y + t * t * p2.y};
}

inline double segment_distance(double px, double py, const Vec2& a, const Vec2& b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len_sq = dx * dx + dy * dy;
    double t = 0.0;
    if (len_sq > 1e-12) {
        t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len_sq, 0.0, 1.0);
    }
    const double cx = a.x + t * dx - px;
    const double cy = a.y + t * dy - py;
    return std::sqrt(cx * cx + cy * cy);
}

// Max-blends the capsule coverage of one polyline segment into `cov`.
inline void rasterize_segment(std::vector<float>& cov, int S, const Vec2& a, const Vec2& b,
                              double half_width) {
    const double pad = half_width + 1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - pad)));
    const int x1 = std::min(S - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + pad)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - pad)));
    const int y1 = std::min(S - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + pad)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double d = segment_distance(x + 0.5, y + 0.5, a, b);
            const double c = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
            if (c > cov[y * S + x]) cov[y * S + x] = static_cast<float>(c);
        }
    }
}

inline void fill_background(Tensor& img, BackgroundMode mode, Rng& rng) {
    const int S = img.h();
    double base[3];
    const double g = rng.uniform(0.55, 0.9);
    for (double& b : base) b = std::clamp(g + rng.uniform(-0.06, 0.06), 0.0, 1.0);
    if (mode == BackgroundMode::flat) {
        for (int c = 0; c < 3; ++c) {
            float* p = img.plane(0, c);
            std::fill_n(p, static_cast<std::size_t>(S) * S, static_cast<float>(base[c]));
        }
        return;
    }
    if (mode == BackgroundMode::gradient) {
        double other[3];
        const double g2 = rng.uniform(0.35, 0.95);
        for (double& b : other) b = std::clamp(g2 + rng.uniform(-0.1, 0.1), 0.0, 1.0);
        const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        const double dx = std::cos(theta), dy = std::sin(theta);
        for (int y = 0; y < S; ++y) {
            for (int x = 0; x < S; ++x) {
                // projection normalized to [0,1] across the canvas diagonal
                const double t =
                    ((x + 0.5) * dx + (y + 0.5) * dy) / (S * (std::abs(dx) + std::abs(dy)) + 1e-9) +
                    0.5;
                const double tt = std::clamp(t, 0.0, 1.0);
                for (int c = 0; c < 3; ++c) {
                    img.plane(0, c)[y * S + x] =
                        static_cast<float>(base[c] * (1.0 - tt) + other[c] * tt);
                }
            }
        }
        return;
    }
    // textured: bilinear-upsampled low-resolution value noise over the base
    const int G = 8;
    std::vector<double> noise(G * G);
    for (double& v : noise) v = rng.uniform(-1.0, 1.0);
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            const double fy = (y + 0.5) / S * (G - 1);
            const double fx = (x + 0.5) / S * (G - 1);
            const int iy = std::min(static_cast<int>(fy), G - 2);
            const int ix = std::min(static_cast<int>(fx), G - 2);
            const double wy = fy - iy, wx = fx - ix;
            const double v = (1 - wy) * ((1 - wx) * noise[iy * G + ix] + wx * noise[iy * G + ix + 1]) +
                             wy * ((1 - wx) * noise[(iy + 1) * G + ix] + wx * noise[(iy + 1) * G + ix + 1]);
            for (int c = 0; c < 3; ++c) {
                img.plane(0, c)[y * S + x] =
                    static_cast<float>(std::clamp(base[c] + 0.12 * v, 0.0, 1.0));
            }
        }
    }
}

}  // namespace synth_detail

// Morphological dilate (radius > 0) or erode (radius < 0) with a disc
// structuring element; used to mimic coarse annotations.
inline Tensor morph_disc(const Tensor& mask, int radius) {
    if (radius == 0) return mask;
    const bool dilate = radius > 0;
    const int r = std::abs(radius);
    Tensor out(mask.shape());
    const int H = mask.h(), W = mask.w();
    const float* src = mask.plane(0, 0);
    float* dst = out.plane(0, 0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            bool hit = !dilate;
            for (int dy = -r; dy <= r && hit == !dilate; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    if (dy * dy + dx * dx > r * r) continue;
                    const int yy = std::clamp(y + dy, 0, H - 1);
                    const int xx = std::clamp(x + dx, 0, W - 1);
                    const bool v = src[yy * W + xx] != 0.0f;
                    if (dilate && v) {
                        hit = true;
                        break;
                    }
                    if (!dilate && !v) {
                        hit = false;
                        break;
                    }
                }
            }
            dst[y * W + x] = hit ? 1.0f : 0.0f;
        }
    }
    return out;
}

inline Tensor coarsen_mask(const Tensor& mask, Rng& rng, int max_radius) {
    if (max_radius <= 0) return mask;
    const int radius = rng.uniform_int(1, max_radius);
    const bool dilate = rng.uniform() < 0.7;  // annotators overshoot more often than not
    return morph_disc(mask, dilate ? radius : -radius);
}

inline Sample generate_synthetic_sample(const SynthConfig& cfg, int index) {
    require(cfg.canvas >= 8, ErrorKind::usage, "synthetic: canvas too small");
    require(cfg.strand_count_min >= 0 && cfg.strand_count_max >= cfg.strand_count_min,
            ErrorKind::usage, "synthetic: invalid strand count range");
    require(cfg.strand_width_min > 0 && cfg.strand_width_max >= cfg.strand_width_min,
            ErrorKind::usage, "synthetic: invalid strand width range");

    using synth_detail::Vec2;
    Rng rng = Rng::child(cfg.seed, static_cast<std::uint64_t>(index));
    const int S = cfg.canvas;
    Sample s;
    s.image = Tensor(Shape{1, 3, S, S});
    s.mask = Tensor(Shape{1, 1, S, S});
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "%04d", index);
    s.id = idbuf;

    synth_detail::fill_background(s.image, cfg.background, rng);

    std::vector<float> total_alpha(static_cast<std::size_t>(S) * S, 0.0f);
    std::vector<float> cov(static_cast<std::size_t>(S) * S, 0.0f);
    const int strands = rng.uniform_int(cfg.strand_count_min, cfg.strand_count_max);
    for (int k = 0; k < strands; ++k) {
        const Vec2 p0{rng.uniform(0.0, S), rng.uniform(0.0, S)};
        const double len = rng.uniform(0.4, 1.0) * S;
        const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        const Vec2 p2{p0.x + len * std::cos(theta), p0.y + len * std::sin(theta)};
        const double bow = rng.uniform(-0.35, 0.35) * len;
        const Vec2 mid{(p0.x + p2.x) / 2 - bow * std::sin(theta),
                       (p0.y + p2.y) / 2 + bow * std::cos(theta)};
        const double width = rng.uniform(cfg.strand_width_min, cfg.strand_width_max);
        double albedo[3];
        const double a = rng.uniform(cfg.albedo_min, cfg.albedo_max);
        for (double& v : albedo) v = std::clamp(a + rng.uniform(-0.02, 0.02), 0.0, 1.0);
        const bool highlight = rng.uniform() < cfg.highlight_probability;
        const double highlight_gain = highlight ? rng.uniform(0.25, 0.5) : 0.0;

        std::fill(cov.begin(), cov.end(), 0.0f);
        const int segments = 48;
        Vec2 prev = p0;
        for (int i = 1; i <= segments; ++i) {
            const Vec2 cur = synth_detail::bezier(p0, mid, p2, static_cast<double>(i) / segments);
            synth_detail::rasterize_segment(cov, S, prev, cur, width / 2.0);
            prev = cur;
        }
        // highlight brightens the middle third of the strand
        std::vector<float> hl;
        if (highlight) {
            hl.assign(cov.size(), 0.0f);
            prev = synth_detail::bezier(p0, mid, p2, 0.35);
            for (int i = 1; i <= segments; ++i) {
                const double t = 0.35 + 0.3 * static_cast<double>(i) / segments;
                const Vec2 cur = synth_detail::bezier(p0, mid, p2, t);
                synth_detail::rasterize_segment(hl, S, prev, cur, width / 2.0);
                prev = cur;
            }
        }
        for (std::size_t p = 0; p < cov.size(); ++p) {
            const float c = cov[p];
            if (c <= 0.0f) continue;
            for (int ch = 0; ch < 3; ++ch) {
                float& px = s.image.plane(0, ch)[p];
                double color = albedo[ch];
                if (highlight && hl[p] > 0.0f) color = std::min(1.0, color + highlight_gain * hl[p]);
                px = static_cast<float>(px * (1.0 - c) + color * c);
            }
            total_alpha[p] = 1.0f - (1.0f - total_alpha[p]) * (1.0f - c);
        }
    }

    float* mask = s.mask.plane(0, 0);
    for (std::size_t p = 0; p < total_alpha.size(); ++p) {
        mask[p] = total_alpha[p] >= 0.5f ? 1.0f : 0.0f;
    }
    if (cfg.coarse_labels) {
        Rng crng = Rng::child(cfg.seed ^ 0x636f617273ULL, static_cast<std::uint64_t>(index));
        s.mask = coarsen_mask(s.mask, crng, cfg.coarse_radius_max);
    }
    return s;
}

inline Dataset generate_synthetic(const SynthConfig& cfg) {
    Dataset out;
    out.reserve(cfg.count);
    for (int i = 0; i < cfg.count; ++i) out.push_back(generate_synthetic_sample(cfg, i));
    return out;
}

}  // namespace hairmatte
