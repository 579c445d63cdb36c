#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "error.hpp"

namespace graspall {

/// Interleaved RGB, row-major, values in [0, 1].
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<double> data; // width * height * 3

    RgbImage() = default;
    RgbImage(int w, int h, double r = 0.0, double g = 0.0, double b = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3) {
        for (std::size_t i = 0; i < data.size(); i += 3) {
            data[i] = r;
            data[i + 1] = g;
            data[i + 2] = b;
        }
    }

    int pixels() const { return width * height; }

    double& at(int row, int col, int ch) {
        return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
    }
    double at(int row, int col, int ch) const {
        return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
    }
};

/// Single channel, row-major, values in [0, 1].
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> data; // width * height

    GrayImage() = default;
    GrayImage(int w, int h, double v = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, v) {}

    int pixels() const { return width * height; }

    double& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
    double at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }
};

/// Depth in meters with a per-pixel validity flag. Invalid pixels carry no
/// usable depth; operations must not read them.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> depth;        // meters, >= 0 where valid
    std::vector<std::uint8_t> valid;  // 0 or 1

    DepthMap() = default;
    DepthMap(int w, int h, double d = 0.0, bool v = true)
        : width(w), height(h),
          depth(static_cast<std::size_t>(w) * h, d),
          valid(static_cast<std::size_t>(w) * h, v ? 1 : 0) {}

    int pixels() const { return width * height; }

    double& depth_at(int row, int col) { return depth[static_cast<std::size_t>(row) * width + col]; }
    double depth_at(int row, int col) const { return depth[static_cast<std::size_t>(row) * width + col]; }
    bool valid_at(int row, int col) const { return valid[static_cast<std::size_t>(row) * width + col] != 0; }
    void set_valid(int row, int col, bool v) { valid[static_cast<std::size_t>(row) * width + col] = v ? 1 : 0; }

    /// A pixel is a hole when it is flagged invalid, nonpositive or non-finite.
    bool is_hole(int idx) const {
        return valid[idx] == 0 || !(depth[idx] > 0.0) || !std::isfinite(depth[idx]);
    }
};

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(int w, int h, bool v = false)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * h, v ? 1 : 0) {}

    int pixels() const { return width * height; }

    bool at(int row, int col) const { return bits[static_cast<std::size_t>(row) * width + col] != 0; }
    void set(int row, int col, bool v) { bits[static_cast<std::size_t>(row) * width + col] = v ? 1 : 0; }

    int count() const {
        int n = 0;
        for (auto b : bits) n += (b != 0);
        return n;
    }
};

/// Per-pixel class ids; 0 is background.
struct SemanticMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> classes;

    SemanticMask() = default;
    SemanticMask(int w, int h, std::uint8_t c = 0)
        : width(w), height(h), classes(static_cast<std::size_t>(w) * h, c) {}

    int pixels() const { return width * height; }

    std::uint8_t at(int row, int col) const { return classes[static_cast<std::size_t>(row) * width + col]; }
    void set(int row, int col, std::uint8_t c) { classes[static_cast<std::size_t>(row) * width + col] = c; }
};

/// Normalized cumulative luminance distribution sampled at R uniform
/// intensities, plus the 0..255-scaled mean luma.
struct HistogramDescriptor {
    std::vector<double> values; // nondecreasing, last value 1 for nonempty images
    double mean_luma = 0.0;     // in [0, 255]
};

} // namespace graspall
