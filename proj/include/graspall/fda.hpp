#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "error.hpp"
#include "types.hpp"

namespace graspall::fda {

// FFTW plan creation/destruction is not thread-safe; execution is.
namespace detail {

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

inline void fft2d(const std::vector<std::complex<double>>& in,
                  std::vector<std::complex<double>>& out, int height, int width, int sign) {
    out.resize(in.size());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        plan = fftw_plan_dft_2d(
            height, width,
            reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data())),
            reinterpret_cast<fftw_complex*>(out.data()), sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
}

} // namespace detail

/// DC-centered amplitude/phase per channel. The centered index of the DC bin
/// is (height/2, width/2).
struct Spectrum {
    int width = 0;
    int height = 0;
    std::vector<std::vector<double>> amplitude; // one plane per channel
    std::vector<std::vector<double>> phase;
};

inline Spectrum forward_spectrum(const RgbImage& img) {
    Spectrum s;
    s.width = img.width;
    s.height = img.height;
    s.amplitude.resize(3);
    s.phase.resize(3);
    const int H = img.height, W = img.width;
    const int cy = H / 2, cx = W / 2;
    std::vector<std::complex<double>> in(static_cast<std::size_t>(H) * W), out;
    for (int ch = 0; ch < 3; ++ch) {
        for (int i = 0; i < img.pixels(); ++i) in[i] = img.data[3 * i + ch];
        detail::fft2d(in, out, H, W, FFTW_FORWARD);
        s.amplitude[ch].resize(in.size());
        s.phase[ch].resize(in.size());
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                // fftshift: unshifted (r, c) lands at centered (r + cy, c + cx)
                int rr = (r + cy) % H, cc = (c + cx) % W;
                std::complex<double> v = out[static_cast<std::size_t>(r) * W + c];
                s.amplitude[ch][static_cast<std::size_t>(rr) * W + cc] = std::abs(v);
                s.phase[ch][static_cast<std::size_t>(rr) * W + cc] = std::arg(v);
            }
    }
    return s;
}

/// Inverse of forward_spectrum, without clipping.
inline RgbImage inverse_spectrum(const Spectrum& s) {
    const int H = s.height, W = s.width;
    const int cy = H / 2, cx = W / 2;
    RgbImage img(W, H);
    std::vector<std::complex<double>> in(static_cast<std::size_t>(H) * W), out;
    const double scale = 1.0 / (static_cast<double>(H) * W);
    for (int ch = 0; ch < 3; ++ch) {
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                int rr = (r + cy) % H, cc = (c + cx) % W;
                double a = s.amplitude[ch][static_cast<std::size_t>(rr) * W + cc];
                double p = s.phase[ch][static_cast<std::size_t>(rr) * W + cc];
                in[static_cast<std::size_t>(r) * W + c] = std::polar(a, p);
            }
        detail::fft2d(in, out, H, W, FFTW_BACKWARD);
        for (int i = 0; i < img.pixels(); ++i) img.data[3 * i + ch] = out[i].real() * scale;
    }
    return img;
}

/// Replaces the source amplitude inside the centered low-frequency square
/// with the target amplitude, keeps the source phase everywhere, inverts and
/// clips to [0, 1]. The square has half-side floor(beta * min(H, W));
/// beta = 0 is an exact identity (no swap at all, not even the DC bin).
inline RgbImage fda_transfer(const RgbImage& source, const RgbImage& target, double beta) {
    require(beta >= 0.0 && beta <= 0.5, "fda_transfer: beta must be in [0, 0.5]");
    if (source.width != target.width || source.height != target.height)
        throw InvalidArgument("fda_transfer: source and target dimensions differ");
    if (beta == 0.0) return source;

    const int H = source.height, W = source.width;
    // beta > 0 with a degenerate square still swaps the DC bin
    const int b = static_cast<int>(std::floor(beta * std::min(H, W)));
    const int cy = H / 2, cx = W / 2;

    Spectrum ss = forward_spectrum(source);
    Spectrum ts = forward_spectrum(target);
    for (int ch = 0; ch < 3; ++ch)
        for (int r = std::max(0, cy - b); r <= std::min(H - 1, cy + b); ++r)
            for (int c = std::max(0, cx - b); c <= std::min(W - 1, cx + b); ++c)
                ss.amplitude[ch][static_cast<std::size_t>(r) * W + c] =
                    ts.amplitude[ch][static_cast<std::size_t>(r) * W + c];

    RgbImage out = inverse_spectrum(ss);
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

} // namespace graspall::fda
