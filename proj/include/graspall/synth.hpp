#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "imageproc.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace graspall::synth {

struct SceneSpec {
    std::uint64_t seed = 0;
    int width = 96;
    int height = 96;
    int garment_count = 2;         // 0..4
    std::vector<int> classes;      // subset of 1..8; drawn from the seed when empty
    double illumination = 1.0;     // 1 = brightest
};

struct DegradeParams {
    double gamma = 1.0;
    double gain = 1.0;
    double black_crush = 0.0;
    double color_temp_shift = 0.0;
    double noise_sigma = 0.0;
    double blur_sigma = 0.0;
};

struct Scene {
    RgbImage rgb;
    DepthMap depth;
    SemanticMask mask;
    SceneSpec spec;
    double mean_luma = 0.0;
};

/// Eight garment categories, ids 1..8. Class identity is carried mostly by
/// luminance (a ramp over [0.16, 0.86]) with mild tints. Illumination
/// degradation remaps brightness, so a dim bright-class garment lands on a
/// dark class's appearance; telling them apart requires knowing the
/// illumination level, which is the ability the pipeline is built around.
inline const double* class_color(int class_id) {
    static const double palette[8][3] = {
        {0.13, 0.15, 0.28}, // glove, luma 0.16
        {0.30, 0.25, 0.22}, // hat, 0.26
        {0.32, 0.38, 0.33}, // scarf, 0.36
        {0.56, 0.42, 0.47}, // sock, 0.47
        {0.52, 0.58, 0.54}, // tie, 0.56
        {0.72, 0.63, 0.66}, // top, 0.66
        {0.74, 0.77, 0.74}, // trousers, 0.76
        {0.88, 0.85, 0.87}, // brief, 0.86
    };
    require(class_id >= 1 && class_id <= 8, "class_color: garment ids are 1..8");
    return palette[class_id - 1];
}

constexpr double kBackdropDepth = 1.2; // meters

/// Garment-like blobs (sums of seeded Gaussians) with sinusoidal wrinkle
/// ridges on a textured backdrop. Depth is the backdrop plane minus the blob
/// height field, so wrinkle ridges become local depth minima. Later blobs
/// occlude earlier ones.
inline Scene generate_scene(const SceneSpec& spec) {
    require(spec.width > 0 && spec.height > 0, "generate_scene: bad dimensions");
    require(spec.garment_count >= 0 && spec.garment_count <= 4,
            "generate_scene: garment_count must be 0..4");

    Scene s;
    s.spec = spec;
    s.rgb = RgbImage(spec.width, spec.height);
    s.depth = DepthMap(spec.width, spec.height, kBackdropDepth, true);
    s.mask = SemanticMask(spec.width, spec.height, 0);

    Rng rng(mix_seed(spec.seed, 0x5ce9e));
    const int W = spec.width, H = spec.height;
    const double dim = std::min(W, H);

    // backdrop: neutral cloth with low-frequency shading. Its albedo varies
    // per scene, so a local patch cannot serve as a gray card for the
    // illumination level; the level has to come from image-wide statistics.
    double albedo = rng.uniform(0.75, 1.40);
    double bf1 = rng.uniform(1.0, 3.0), bf2 = rng.uniform(1.0, 3.0);
    double bp1 = rng.uniform(0.0, 6.28), bp2 = rng.uniform(0.0, 6.28);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            double t = 0.035 * std::sin(6.28318 * bf1 * c / W + bp1) *
                       std::sin(6.28318 * bf2 * r / H + bp2);
            s.rgb.at(r, c, 0) = std::clamp(albedo * 0.42 + t, 0.0, 1.0);
            s.rgb.at(r, c, 1) = std::clamp(albedo * 0.40 + t, 0.0, 1.0);
            s.rgb.at(r, c, 2) = std::clamp(albedo * 0.36 + t, 0.0, 1.0);
        }

    // garment classes, distinct
    std::vector<int> classes = spec.classes;
    if (classes.empty()) {
        std::vector<int> pool = {1, 2, 3, 4, 5, 6, 7, 8};
        for (int i = 0; i < spec.garment_count; ++i) {
            int j = i + rng.index(static_cast<int>(pool.size()) - i);
            std::swap(pool[i], pool[j]);
            classes.push_back(pool[i]);
        }
    }
    s.spec.classes = classes;

    std::vector<double> hfield(static_cast<std::size_t>(W) * H);
    for (int g = 0; g < spec.garment_count; ++g) {
        int cls = classes[g % classes.size()];
        double cx = rng.uniform(0.28, 0.72) * W;
        double cy = rng.uniform(0.28, 0.72) * H;
        int lobes = 3 + rng.index(4);
        struct Lobe {
            double x, y, sx, sy, amp;
        };
        // lobes wide enough that garment interiors span several patch cells
        std::vector<Lobe> ls(lobes);
        for (auto& l : ls) {
            l.x = cx + rng.uniform(-0.16, 0.16) * dim;
            l.y = cy + rng.uniform(-0.16, 0.16) * dim;
            l.sx = rng.uniform(0.10, 0.20) * dim;
            l.sy = rng.uniform(0.10, 0.20) * dim;
            l.amp = rng.uniform(0.5, 1.0);
        }
        double peak = rng.uniform(0.03, 0.055); // meters of bulge
        double wamp = rng.uniform(0.010, 0.018);
        double wf = rng.uniform(4.0, 8.0), wang = rng.uniform(0.0, 3.14), wph = rng.uniform(0.0, 6.28);
        double kx = 6.28318 * wf * std::cos(wang) / dim;
        double ky = 6.28318 * wf * std::sin(wang) / dim;

        double hmax = 0.0;
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                double h = 0.0;
                for (const auto& l : ls) {
                    double dx = (c - l.x) / l.sx, dy = (r - l.y) / l.sy;
                    h += l.amp * std::exp(-0.5 * (dx * dx + dy * dy));
                }
                hfield[static_cast<std::size_t>(r) * W + c] = h;
                hmax = std::max(hmax, h);
            }
        if (hmax <= 0.0) continue;
        const double support = 0.25 * hmax;
        const double* col = class_color(cls);
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                double h = hfield[static_cast<std::size_t>(r) * W + c];
                if (h <= support) continue;
                double hn = h / hmax;
                double wr = std::sin(kx * c + ky * r + wph);
                double height = peak * hn + wamp * std::max(0.0, wr) * hn;
                s.depth.depth_at(r, c) = kBackdropDepth - height;
                s.mask.set(r, c, static_cast<std::uint8_t>(cls));
                double shade = 0.80 + 0.14 * hn + 0.08 * wr;
                for (int ch = 0; ch < 3; ++ch)
                    s.rgb.at(r, c, ch) = std::clamp(col[ch] * shade, 0.0, 1.0);
            }
    }

    s.mean_luma = imageproc::mean_luma_255(imageproc::rgb_to_luma(s.rgb));
    return s;
}

/// Fixed monotone schedules from degradation level (1 = untouched).
inline DegradeParams degrade_schedule(double level) {
    require(level >= 0.0 && level <= 1.0, "degrade_schedule: level must be in [0, 1]");
    DegradeParams p;
    p.gain = level;
    p.gamma = 1.0 + 2.0 * (1.0 - level);
    p.black_crush = 0.05 * (1.0 - level);
    p.color_temp_shift = 0.1 * (1.0 - level);
    p.noise_sigma = 0.03 * (1.0 - level);
    p.blur_sigma = 1.5 * (1.0 - level);
    return p;
}

/// Applies gain, gamma, black crush, color-temperature tilt, noise and blur,
/// in that order; depth and mask are untouched. level = 1 returns the RGB
/// bit-identical. Noise is seeded by (scene seed, level), so degradation is
/// deterministic. The crush threshold acts as a sensor black level, so it
/// clamps the final signal again after noise and blur; otherwise the clipped
/// noise floor would make mean luma non-monotone in the crushed regime.
inline Scene degrade(const Scene& scene, double level) {
    DegradeParams p = degrade_schedule(level);
    Scene out = scene;
    out.spec.illumination = level;

    if (level < 1.0) {
        RgbImage& img = out.rgb;
        for (double& v : img.data) {
            v *= p.gain;
            v = std::pow(v, p.gamma);
            if (v < p.black_crush) v = 0.0;
        }
        for (int i = 0; i < img.pixels(); ++i) {
            img.data[3 * i] *= 1.0 + p.color_temp_shift;
            img.data[3 * i + 2] *= 1.0 - p.color_temp_shift;
        }
        if (p.noise_sigma > 0.0) {
            Rng rng(mix_seed(scene.spec.seed, std::bit_cast<std::uint64_t>(level)));
            for (double& v : img.data) v += p.noise_sigma * rng.normal();
        }
        if (p.blur_sigma > 0.0) img = imageproc::gaussian_blur(img, p.blur_sigma);
        for (double& v : img.data) {
            v = std::clamp(v, 0.0, 1.0);
            if (v < p.black_crush) v = 0.0;
        }
    }

    out.mean_luma = imageproc::mean_luma_255(imageproc::rgb_to_luma(out.rgb));
    return out;
}

// ---------------------------------------------------------------------------
// Corpus layout: <dir>/<seed>/<level>/{rgb.png, depth.pgm, mask.png, meta.json}
// ---------------------------------------------------------------------------

inline std::string level_dir_name(double level) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", level);
    return buf;
}

inline void write_scene_dir(const Scene& s, const std::string& dir) {
    std::filesystem::create_directories(dir);
    io::write_rgb_png(dir + "/rgb.png", s.rgb);
    io::write_depth_pgm(dir + "/depth.pgm", s.depth);
    io::write_mask_png(dir + "/mask.png", s.mask);

    DegradeParams p = degrade_schedule(s.spec.illumination);
    nlohmann::ordered_json meta;
    meta["seed"] = s.spec.seed;
    meta["width"] = s.spec.width;
    meta["height"] = s.spec.height;
    meta["garment_count"] = s.spec.garment_count;
    meta["classes"] = s.spec.classes;
    meta["level"] = s.spec.illumination;
    meta["mean_luma"] = s.mean_luma;
    meta["degrade"] = {{"gain", p.gain},
                       {"gamma", p.gamma},
                       {"black_crush", p.black_crush},
                       {"color_temp_shift", p.color_temp_shift},
                       {"noise_sigma", p.noise_sigma},
                       {"blur_sigma", p.blur_sigma}};
    std::ofstream f(dir + "/meta.json", std::ios::trunc);
    if (!f) throw DataError("cannot write " + dir + "/meta.json");
    f << meta.dump(2) << "\n";
}

struct LoadedScene {
    RgbImage rgb;
    DepthMap depth;
    SemanticMask mask;
    nlohmann::json meta;
    double mean_luma = 0.0;
    std::uint64_t seed = 0;
    double level = 1.0;
};

inline LoadedScene load_scene_dir(const std::string& dir) {
    LoadedScene s;
    s.rgb = io::read_rgb_png(dir + "/rgb.png");
    s.depth = io::read_depth_pgm(dir + "/depth.pgm");
    s.mask = io::read_mask_png(dir + "/mask.png");
    std::ifstream f(dir + "/meta.json");
    if (!f) throw DataError("cannot read " + dir + "/meta.json");
    f >> s.meta;
    s.mean_luma = s.meta.value("mean_luma", 0.0);
    s.seed = s.meta.value("seed", std::uint64_t{0});
    s.level = s.meta.value("level", 1.0);
    return s;
}

/// Renders each seed at full brightness, degrades to every level and writes
/// the triplets. Garment count per scene is drawn from the scene seed.
inline int make_corpus(const std::string& dir, const std::vector<std::uint64_t>& seeds,
                       const std::vector<double>& levels, int width, int height) {
    require(!seeds.empty() && !levels.empty(), "make_corpus: seeds and levels must be nonempty");
    int written = 0;
    for (std::uint64_t seed : seeds) {
        SceneSpec spec;
        spec.seed = seed;
        spec.width = width;
        spec.height = height;
        Rng pick(mix_seed(seed, 0xc0de));
        spec.garment_count = 1 + pick.index(4);
        Scene base = generate_scene(spec);
        for (double level : levels) {
            Scene deg = degrade(base, level);
            write_scene_dir(deg, dir + "/" + std::to_string(seed) + "/" + level_dir_name(level));
            ++written;
        }
    }
    return written;
}

/// Sorted scene directories of a corpus (seed ascending, level ascending).
inline std::vector<std::string> list_corpus(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("corpus directory not found: " + dir);
    std::vector<std::pair<std::uint64_t, std::string>> seeds;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) seeds.emplace_back(std::stoull(e.path().filename().string()),
                                                 e.path().string());
    std::sort(seeds.begin(), seeds.end());
    std::vector<std::string> out;
    for (const auto& [seed, path] : seeds) {
        std::vector<std::pair<double, std::string>> levels;
        for (const auto& e : std::filesystem::directory_iterator(path))
            if (e.is_directory())
                levels.emplace_back(std::stod(e.path().filename().string()), e.path().string());
        std::sort(levels.begin(), levels.end());
        for (const auto& [lvl, p] : levels) out.push_back(p);
    }
    return out;
}

} // namespace graspall::synth
