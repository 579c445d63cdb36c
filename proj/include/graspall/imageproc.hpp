#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "error.hpp"
#include "types.hpp"

namespace graspall::imageproc {

// ---------------------------------------------------------------------------
// Luminance statistics
// ---------------------------------------------------------------------------

/// Rec. 601 luma, 0.299 R + 0.587 G + 0.114 B.
inline GrayImage rgb_to_luma(const RgbImage& img) {
    GrayImage out(img.width, img.height);
    for (int i = 0; i < img.pixels(); ++i) {
        out.data[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] +
                      0.114 * img.data[3 * i + 2];
    }
    return out;
}

inline double mean_luma_255(const GrayImage& g) {
    double s = 0.0;
    for (double v : g.data) s += v;
    return g.pixels() > 0 ? 255.0 * s / g.pixels() : 0.0;
}

/// Cumulative luminance distribution sampled at the R thresholds i/(R-1):
/// values[i] = fraction of pixels with luma <= i/(R-1).
inline HistogramDescriptor histogram_descriptor(const GrayImage& img, int r_points) {
    require(r_points >= 2, "histogram_descriptor: R must be >= 2");
    if (img.pixels() == 0) throw InvalidArgument("histogram_descriptor: empty image");

    std::vector<double> thresholds(r_points);
    for (int i = 0; i < r_points; ++i) thresholds[i] = static_cast<double>(i) / (r_points - 1);

    // Count each pixel at the first threshold it falls under, then prefix-sum.
    std::vector<double> counts(r_points + 1, 0.0);
    for (double v : img.data) {
        auto it = std::lower_bound(thresholds.begin(), thresholds.end(), v);
        counts[static_cast<std::size_t>(it - thresholds.begin())] += 1.0;
    }
    HistogramDescriptor h;
    h.values.resize(r_points);
    double acc = 0.0;
    for (int i = 0; i < r_points; ++i) {
        acc += counts[i];
        h.values[i] = acc / img.pixels();
    }
    h.mean_luma = mean_luma_255(img);
    return h;
}

// ---------------------------------------------------------------------------
// Gaussian smoothing (separable, mirrored border)
// ---------------------------------------------------------------------------

inline std::vector<double> gaussian_kernel(double sigma) {
    require(sigma > 0.0, "gaussian_kernel: sigma must be > 0");
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

inline int mirror_index(int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return std::clamp(i, 0, n - 1);
}

inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    auto k = gaussian_kernel(sigma);
    int radius = static_cast<int>(k.size()) / 2;
    GrayImage tmp(img.width, img.height), out(img.width, img.height);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            double s = 0.0;
            for (int j = -radius; j <= radius; ++j)
                s += k[j + radius] * img.at(r, mirror_index(c + j, img.width));
            tmp.at(r, c) = s;
        }
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            double s = 0.0;
            for (int j = -radius; j <= radius; ++j)
                s += k[j + radius] * tmp.at(mirror_index(r + j, img.height), c);
            out.at(r, c) = s;
        }
    return out;
}

inline RgbImage gaussian_blur(const RgbImage& img, double sigma) {
    auto k = gaussian_kernel(sigma);
    int radius = static_cast<int>(k.size()) / 2;
    RgbImage tmp(img.width, img.height), out(img.width, img.height);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                double s = 0.0;
                for (int j = -radius; j <= radius; ++j)
                    s += k[j + radius] * img.at(r, mirror_index(c + j, img.width), ch);
                tmp.at(r, c, ch) = s;
            }
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                double s = 0.0;
                for (int j = -radius; j <= radius; ++j)
                    s += k[j + radius] * tmp.at(mirror_index(r + j, img.height), c, ch);
                out.at(r, c, ch) = s;
            }
    return out;
}

// ---------------------------------------------------------------------------
// Canny structure maps
// ---------------------------------------------------------------------------

/// Gaussian smooth, Sobel, non-maximum suppression, double-threshold
/// hysteresis. low/high are fractions of the maximum gradient magnitude.
/// Outermost border pixels are never edges. Equal-magnitude NMS ties keep
/// the pixel with the smaller linear index.
inline BinaryMask canny(const GrayImage& img, double sigma, double low, double high) {
    require(sigma > 0.0, "canny: sigma must be > 0");
    require(0.0 <= low && low < high && high <= 1.0, "canny: need 0 <= low < high <= 1");

    const int w = img.width, h = img.height;
    BinaryMask out(w, h, false);
    if (w < 3 || h < 3) return out;

    GrayImage sm = gaussian_blur(img, sigma);

    std::vector<double> mag(static_cast<std::size_t>(w) * h, 0.0);
    std::vector<double> gx(mag.size(), 0.0), gy(mag.size(), 0.0);
    double maxmag = 0.0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            auto s = [&](int dr, int dc) {
                return sm.at(mirror_index(r + dr, h), mirror_index(c + dc, w));
            };
            double dx = (s(-1, 1) + 2 * s(0, 1) + s(1, 1)) - (s(-1, -1) + 2 * s(0, -1) + s(1, -1));
            double dy = (s(1, -1) + 2 * s(1, 0) + s(1, 1)) - (s(-1, -1) + 2 * s(-1, 0) + s(-1, 1));
            std::size_t i = static_cast<std::size_t>(r) * w + c;
            gx[i] = dx;
            gy[i] = dy;
            mag[i] = std::hypot(dx, dy);
            maxmag = std::max(maxmag, mag[i]);
        }
    if (maxmag <= 0.0) return out;

    const double tlow = low * maxmag, thigh = high * maxmag;

    // 0=strong, 1=weak, 2=none after NMS
    std::vector<std::uint8_t> grade(mag.size(), 2);
    const double pi = 3.141592653589793238462643;
    for (int r = 1; r < h - 1; ++r)
        for (int c = 1; c < w - 1; ++c) {
            std::size_t i = static_cast<std::size_t>(r) * w + c;
            if (mag[i] < tlow) continue;
            double theta = std::atan2(gy[i], gx[i]);
            if (theta < 0) theta += pi; // fold to [0, pi)
            int sector = static_cast<int>(std::floor((theta + pi / 8) / (pi / 4))) & 3;
            static const int drs[4] = {0, 1, 1, 1};
            static const int dcs[4] = {1, 1, 0, -1};
            // canonical direction points toward the larger linear index, so
            // the ">= forward, > backward" rule resolves ties row-major
            int dr = drs[sector], dc = dcs[sector];
            double fwd = mag[static_cast<std::size_t>(r + dr) * w + (c + dc)];
            double bwd = mag[static_cast<std::size_t>(r - dr) * w + (c - dc)];
            if (mag[i] >= fwd && mag[i] > bwd) grade[i] = mag[i] >= thigh ? 0 : 1;
        }

    // hysteresis: weak pixels survive only when 8-connected to a strong one
    std::deque<std::size_t> q;
    for (std::size_t i = 0; i < grade.size(); ++i)
        if (grade[i] == 0) {
            out.bits[i] = 1;
            q.push_back(i);
        }
    while (!q.empty()) {
        std::size_t i = q.front();
        q.pop_front();
        int r = static_cast<int>(i) / w, c = static_cast<int>(i) % w;
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                int rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                std::size_t j = static_cast<std::size_t>(rr) * w + cc;
                if (grade[j] == 1 && !out.bits[j]) {
                    out.bits[j] = 1;
                    q.push_back(j);
                }
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Retinex luminance / structure split
// ---------------------------------------------------------------------------

struct RetinexDecomposition {
    RgbImage luminance;  // per-channel Gaussian estimate of illumination
    GrayImage structure; // luma ratio, normalized by `norm` into [0, 1]
    double norm = 1.0;   // kept so the ratio field is recoverable exactly
};

constexpr double kRetinexSigma = 15.0;
constexpr double kRetinexEps = 1e-4;

inline RetinexDecomposition retinex_decompose(const RgbImage& img) {
    RetinexDecomposition d;
    d.luminance = gaussian_blur(img, kRetinexSigma);
    GrayImage luma = rgb_to_luma(img);
    GrayImage luma_l = rgb_to_luma(d.luminance);
    d.structure = GrayImage(img.width, img.height);
    double mx = 0.0;
    for (int i = 0; i < img.pixels(); ++i) {
        d.structure.data[i] = luma.data[i] / (luma_l.data[i] + kRetinexEps);
        mx = std::max(mx, d.structure.data[i]);
    }
    d.norm = mx > 0.0 ? mx : 1.0;
    for (double& v : d.structure.data) v = std::clamp(v / d.norm, 0.0, 1.0);
    return d;
}

/// (luma(I_L) + eps) * structure * norm == luma of the original image.
inline GrayImage retinex_reconstruct_luma(const RetinexDecomposition& d) {
    GrayImage luma_l = rgb_to_luma(d.luminance);
    GrayImage out(d.structure.width, d.structure.height);
    for (int i = 0; i < out.pixels(); ++i)
        out.data[i] = (luma_l.data[i] + kRetinexEps) * d.structure.data[i] * d.norm;
    return out;
}

// ---------------------------------------------------------------------------
// Two-stage depth enhancement: bilateral smoothing + hole interpolation
// ---------------------------------------------------------------------------

namespace detail {

struct DepthSpan {
    double lo = 0.0;
    double scale = 0.0; // 0 when the valid depths are constant
};

inline DepthSpan valid_span(const DepthMap& d) {
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (int i = 0; i < d.pixels(); ++i) {
        if (d.is_hole(i)) continue;
        if (!any) {
            lo = hi = d.depth[i];
            any = true;
        } else {
            lo = std::min(lo, d.depth[i]);
            hi = std::max(hi, d.depth[i]);
        }
    }
    if (!any) throw InvalidArgument("depth map has no valid pixels");
    DepthSpan s;
    s.lo = lo;
    s.scale = hi > lo ? hi - lo : 0.0;
    return s;
}

} // namespace detail

/// Edge-preserving smoothing over valid pixels only. Depth is normalized to
/// [0, 1] per image before the intensity kernel is applied and denormalized
/// after, so sigma_i is resolution- and range-independent.
inline DepthMap bilateral_filter(const DepthMap& d, double sigma_s = 2.0, double sigma_i = 0.1,
                                 int window = 5) {
    require(sigma_s > 0.0 && sigma_i > 0.0, "bilateral_filter: sigmas must be > 0");
    require(window >= 3 && window % 2 == 1, "bilateral_filter: window must be odd and >= 3");

    auto span = detail::valid_span(d);
    if (span.scale == 0.0) return d; // constant map: exact identity

    const int rad = window / 2;
    auto norm = [&](double v) { return (v - span.lo) / span.scale; };

    DepthMap out = d;
    for (int r = 0; r < d.height; ++r)
        for (int c = 0; c < d.width; ++c) {
            int i = r * d.width + c;
            if (d.is_hole(i)) continue;
            double vp = norm(d.depth[i]);
            double acc = 0.0, wsum = 0.0;
            for (int dr = -rad; dr <= rad; ++dr)
                for (int dc = -rad; dc <= rad; ++dc) {
                    int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= d.height || cc < 0 || cc >= d.width) continue;
                    int j = rr * d.width + cc;
                    if (d.is_hole(j)) continue;
                    double vq = norm(d.depth[j]);
                    double ws = std::exp(-0.5 * (dr * dr + dc * dc) / (sigma_s * sigma_s));
                    double wi = std::exp(-0.5 * (vp - vq) * (vp - vq) / (sigma_i * sigma_i));
                    acc += ws * wi * vq;
                    wsum += ws * wi;
                }
            out.depth[i] = span.lo + span.scale * (acc / wsum);
        }
    return out;
}

/// Fills every hole by gradient- and distance-weighted interpolation from
/// valid pixels, sweeping outward layer by layer. Each pass reads the state
/// at the start of the pass, so results do not depend on traversal order.
/// The spatial sigma is tighter than the bilateral default: wrinkle
/// wavelengths are a handful of pixels, and a wide kernel averages across
/// whole ridges. sigma_grad is in per-image normalized depth units.
inline DepthMap fill_holes(const DepthMap& d, double sigma_spatial = 1.0,
                           double sigma_grad = 0.2) {
    auto span = detail::valid_span(d); // throws when everything is a hole
    const double scale = span.scale > 0.0 ? span.scale : 1.0;
    const int w = d.width, h = d.height;
    const int rad = 2; // 5x5 neighborhood per pass

    std::vector<double> val(static_cast<std::size_t>(w) * h, 0.0);
    std::vector<std::uint8_t> known(val.size(), 0);
    for (int i = 0; i < d.pixels(); ++i)
        if (!d.is_hole(i)) {
            val[i] = (d.depth[i] - span.lo) / scale;
            known[i] = 1;
        }

    auto grad2 = [&](int r, int c) {
        // one-sided fallbacks near holes; zero when no usable neighbor pair
        int i = r * w + c;
        auto diff = [&](int ra, int ca, int rb, int cb, double& g) -> bool {
            int a = ra * w + ca, b = rb * w + cb;
            if (ra < 0 || rb < 0 || ra >= h || rb >= h || ca < 0 || cb < 0 || ca >= w || cb >= w)
                return false;
            if (!known[a] || !known[b]) return false;
            g = (val[a] - val[b]) / ((ra != rb ? std::abs(ra - rb) : std::abs(ca - cb)));
            return true;
        };
        double gx = 0.0, gy = 0.0;
        if (!diff(r, c + 1, r, c - 1, gx) && !diff(r, c + 1, r, c, gx)) diff(r, c, r, c - 1, gx);
        if (!diff(r + 1, c, r - 1, c, gy) && !diff(r + 1, c, r, c, gy)) diff(r, c, r - 1, c, gy);
        (void)i;
        return gx * gx + gy * gy;
    };

    int remaining = 0;
    for (auto k : known) remaining += (k == 0);
    while (remaining > 0) {
        std::vector<double> nval = val;
        std::vector<std::uint8_t> nknown = known;
        int filled = 0;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                int i = r * w + c;
                if (known[i]) continue;
                double acc = 0.0, wsum = 0.0;
                for (int dr = -rad; dr <= rad; ++dr)
                    for (int dc = -rad; dc <= rad; ++dc) {
                        int rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                        int j = rr * w + cc;
                        if (!known[j]) continue;
                        double wg = std::exp(-0.5 * grad2(rr, cc) / (sigma_grad * sigma_grad));
                        double ws = std::exp(-0.5 * (dr * dr + dc * dc) / (sigma_spatial * sigma_spatial));
                        acc += wg * ws * val[j];
                        wsum += wg * ws;
                    }
                if (wsum > 0.0) {
                    nval[i] = acc / wsum;
                    nknown[i] = 1;
                    ++filled;
                }
            }
        if (filled == 0) throw NumericError("fill_holes: no progress"); // unreachable on connected grids
        val.swap(nval);
        known.swap(nknown);
        remaining -= filled;
    }

    DepthMap out = d;
    for (int i = 0; i < d.pixels(); ++i) {
        if (d.is_hole(i)) out.depth[i] = span.lo + scale * val[i];
        out.valid[i] = 1;
    }
    return out;
}

} // namespace graspall::imageproc
