#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "error.hpp"
#include "imageproc.hpp"
#include "io.hpp"
#include "linalg.hpp"
#include "memory.hpp"
#include "plc.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace graspall::fusion {

// ---------------------------------------------------------------------------
// Feature maps and the patch-linear encoder/decoder pair
// ---------------------------------------------------------------------------

/// Dense gh x gw x C feature grid; cells is (gh*gw) x C row-major.
struct FeatureMap {
    int gh = 0;
    int gw = 0;
    int channels = 0;
    Mat cells;

    FeatureMap() = default;
    FeatureMap(int h, int w, int c) : gh(h), gw(w), channels(c), cells(h * w, c) {}

    FeatureVector mean_pool() const {
        FeatureVector f(channels);
        for (int r = 0; r < cells.rows; ++r)
            for (int c = 0; c < channels; ++c) f.data[c] += cells.at(r, c);
        for (double& v : f.data) v /= std::max(1, cells.rows);
        return f;
    }
};

/// A library slot viewed as a 1x1 feature grid, for use as a KV source.
inline FeatureMap as_feature_map(const FeatureVector& f) {
    FeatureMap m(1, 1, f.dim());
    for (int c = 0; c < f.dim(); ++c) m.cells.at(0, c) = f.data[c];
    return m;
}

/// Temperature-softmax retrieval over the initialized slots, the library
/// read used at the mask stage. Weights follow the curve distances with the
/// softmax taken over initialized slots only, mirroring the soft lookup of
/// the spectral consistency loss. A library written without luminance
/// distinction holds one slot and the read degenerates to a constant.
inline FeatureVector soft_retrieve(const ResponseLibrary& lib, const plc::CurveBank& bank,
                                   const HistogramDescriptor& h) {
    require(lib.initialized_count() > 0, "soft_retrieve: library is empty");
    require(lib.slots == bank.n_curves, "soft_retrieve: slots != curves");
    std::vector<double> dist = plc::curve_distances(bank, h);
    double mx = -1e300;
    for (int n = 0; n < lib.slots; ++n)
        if (lib.initialized[n]) mx = std::max(mx, -dist[n] / bank.tau);
    std::vector<double> w(lib.slots, 0.0);
    double sum = 0.0;
    for (int n = 0; n < lib.slots; ++n) {
        if (!lib.initialized[n]) continue;
        w[n] = std::exp(-dist[n] / bank.tau - mx);
        sum += w[n];
    }
    FeatureVector out(lib.dim);
    for (int n = 0; n < lib.slots; ++n) {
        if (w[n] == 0.0) continue;
        const double* p = lib.slot_ptr(n);
        for (int c = 0; c < lib.dim; ++c) out.data[c] += (w[n] / sum) * p[c];
    }
    return out;
}

struct PatchEncoder {
    int patch = 8;
    int in_channels = 3;
    int out_channels = 16;
    Mat w;                 // (patch^2 * in_channels) x out_channels
    std::vector<double> b; // out_channels

    static PatchEncoder make(int patch, int in_channels, int out_channels, Rng& rng) {
        require(patch >= 1 && in_channels >= 1 && out_channels >= 1, "PatchEncoder: bad dims");
        PatchEncoder e;
        e.patch = patch;
        e.in_channels = in_channels;
        e.out_channels = out_channels;
        int fan_in = patch * patch * in_channels;
        e.w = Mat::random(fan_in, out_channels, 1.0 / std::sqrt(fan_in), rng);
        // bias starts at -W^T * 0.45 so features of typical mid-gray inputs
        // are centered; uncentered patch features stall SGD badly
        e.b.assign(out_channels, 0.0);
        for (int i = 0; i < fan_in; ++i)
            for (int o = 0; o < out_channels; ++o) e.b[o] -= 0.45 * e.w.at(i, o);
        return e;
    }
};

struct PatchDecoder {
    int patch = 8;
    int out_channels = 3;
    int in_channels = 16;
    Mat w;                 // in_channels x (patch^2 * out_channels)
    std::vector<double> b; // patch^2 * out_channels

    static PatchDecoder make(int patch, int in_channels, int out_channels, Rng& rng) {
        require(patch >= 1 && in_channels >= 1 && out_channels >= 1, "PatchDecoder: bad dims");
        PatchDecoder d;
        d.patch = patch;
        d.out_channels = out_channels;
        d.in_channels = in_channels;
        int fan_out = patch * patch * out_channels;
        d.w = Mat::random(in_channels, fan_out, 1.0 / std::sqrt(in_channels), rng);
        d.b.assign(fan_out, 0.0);
        return d;
    }
};

namespace detail {

inline int grid_cells(int extent, int patch) { return (extent + patch - 1) / patch; }

/// Flattens non-overlapping patches into rows; images whose dimensions are
/// not divisible by the patch size are mirror-padded on the right/bottom.
/// Per-patch layout is pixel-major with interleaved channels.
template <typename AtFn>
Mat image_patches(int width, int height, int channels, int patch, AtFn at) {
    int gh = grid_cells(height, patch), gw = grid_cells(width, patch);
    Mat u(gh * gw, patch * patch * channels);
    for (int gr = 0; gr < gh; ++gr)
        for (int gc = 0; gc < gw; ++gc) {
            double* row = &u.a[static_cast<std::size_t>(gr * gw + gc) * u.cols];
            int k = 0;
            for (int pr = 0; pr < patch; ++pr)
                for (int pc = 0; pc < patch; ++pc) {
                    int r = imageproc::mirror_index(gr * patch + pr, height);
                    int c = imageproc::mirror_index(gc * patch + pc, width);
                    for (int ch = 0; ch < channels; ++ch) row[k++] = at(r, c, ch);
                }
        }
    return u;
}

} // namespace detail

inline Mat patches(const RgbImage& img, int patch) {
    return detail::image_patches(img.width, img.height, 3, patch,
                                 [&](int r, int c, int ch) { return img.at(r, c, ch); });
}

inline Mat patches(const GrayImage& img, int patch) {
    return detail::image_patches(img.width, img.height, 1, patch,
                                 [&](int r, int c, int) { return img.at(r, c); });
}

/// Depth enters the encoder as a per-image min-max normalized gray map;
/// holes contribute 0.
inline GrayImage depth_to_gray(const DepthMap& d) {
    GrayImage g(d.width, d.height, 0.0);
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
    if (!any) return g;
    double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
    for (int i = 0; i < d.pixels(); ++i)
        if (!d.is_hole(i)) g.data[i] = scale != 0.0 ? (d.depth[i] - lo) * scale : 0.5;
    return g;
}

inline FeatureMap features_from_cells(Mat cells, int gh, int gw) {
    FeatureMap f;
    f.gh = gh;
    f.gw = gw;
    f.channels = cells.cols;
    f.cells = std::move(cells);
    return f;
}

/// Linear layer over patch rows: cells = U * W + b.
inline Mat linear_forward(const Mat& u, const Mat& w, const std::vector<double>& b) {
    Mat y = matmul(u, w);
    for (int r = 0; r < y.rows; ++r)
        for (int c = 0; c < y.cols; ++c) y.at(r, c) += b[c];
    return y;
}

inline FeatureMap encode(const RgbImage& img, const PatchEncoder& enc) {
    require(enc.in_channels == 3, "encode: encoder expects 3 channels");
    Mat u = patches(img, enc.patch);
    return features_from_cells(linear_forward(u, enc.w, enc.b),
                               detail::grid_cells(img.height, enc.patch),
                               detail::grid_cells(img.width, enc.patch));
}

inline FeatureMap encode(const GrayImage& img, const PatchEncoder& enc) {
    require(enc.in_channels == 1, "encode: encoder expects 1 channel");
    Mat u = patches(img, enc.patch);
    return features_from_cells(linear_forward(u, enc.w, enc.b),
                               detail::grid_cells(img.height, enc.patch),
                               detail::grid_cells(img.width, enc.patch));
}

inline FeatureMap encode(const DepthMap& d, const PatchEncoder& enc) {
    return encode(depth_to_gray(d), enc);
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Per-cell projection back to patch pixels: rows of (patch^2 * out_channels).
inline Mat decode_cells(const FeatureMap& f, const PatchDecoder& dec, bool apply_sigmoid) {
    require(f.channels == dec.in_channels, "decode: channel mismatch");
    Mat v = linear_forward(f.cells, dec.w, dec.b);
    if (apply_sigmoid)
        for (double& x : v.a) x = sigmoid(x);
    return v;
}

inline RgbImage decode_rgb(const FeatureMap& f, const PatchDecoder& dec, bool apply_sigmoid = true) {
    require(dec.out_channels == 3, "decode_rgb: decoder emits 3 channels");
    Mat v = decode_cells(f, dec, apply_sigmoid);
    RgbImage img(f.gw * dec.patch, f.gh * dec.patch);
    for (int gr = 0; gr < f.gh; ++gr)
        for (int gc = 0; gc < f.gw; ++gc) {
            const double* row = &v.a[static_cast<std::size_t>(gr * f.gw + gc) * v.cols];
            int k = 0;
            for (int pr = 0; pr < dec.patch; ++pr)
                for (int pc = 0; pc < dec.patch; ++pc)
                    for (int ch = 0; ch < 3; ++ch)
                        img.at(gr * dec.patch + pr, gc * dec.patch + pc, ch) = row[k++];
        }
    return img;
}

inline GrayImage decode_gray(const FeatureMap& f, const PatchDecoder& dec, bool apply_sigmoid = true) {
    require(dec.out_channels == 1, "decode_gray: decoder emits 1 channel");
    Mat v = decode_cells(f, dec, apply_sigmoid);
    GrayImage img(f.gw * dec.patch, f.gh * dec.patch);
    for (int gr = 0; gr < f.gh; ++gr)
        for (int gc = 0; gc < f.gw; ++gc) {
            const double* row = &v.a[static_cast<std::size_t>(gr * f.gw + gc) * v.cols];
            int k = 0;
            for (int pr = 0; pr < dec.patch; ++pr)
                for (int pc = 0; pc < dec.patch; ++pc)
                    img.at(gr * dec.patch + pr, gc * dec.patch + pc) = row[k++];
        }
    return img;
}

// ---------------------------------------------------------------------------
// Scaled dot-product cross-attention
// ---------------------------------------------------------------------------

struct AttentionProjections {
    int channels = 0;
    Mat wq, wk, wv; // each channels x channels

    static AttentionProjections make(int channels, Rng& rng) {
        AttentionProjections p;
        p.channels = channels;
        double s = 1.0 / std::sqrt(channels);
        p.wq = Mat::random(channels, channels, s, rng);
        p.wk = Mat::random(channels, channels, s, rng);
        p.wv = Mat::random(channels, channels, s, rng);
        return p;
    }
};

struct AttentionResult {
    FeatureMap out; // grid of the query source (or of the KV grid for vector queries)
    Mat score;      // rows sum to 1
    // forward caches used by attention_backward
    Mat q_in, kv_in, q, k, v;
    bool broadcast_query = false;
};

namespace detail {

inline AttentionResult attention_rows(Mat q_in, Mat kv_in, const AttentionProjections& proj,
                                      int out_gh, int out_gw) {
    require(q_in.cols == proj.channels && kv_in.cols == proj.channels,
            "cross_attention: channel dims must equal the projection size");
    AttentionResult r;
    r.q_in = std::move(q_in);
    r.kv_in = std::move(kv_in);
    r.q = matmul(r.q_in, proj.wq);
    r.k = matmul(r.kv_in, proj.wk);
    r.v = matmul(r.kv_in, proj.wv);
    r.score = matmul_tb(r.q, r.k);
    double inv = 1.0 / std::sqrt(static_cast<double>(proj.channels));
    for (double& x : r.score.a) x *= inv;
    softmax_rows(r.score);
    r.out = features_from_cells(matmul(r.score, r.v), out_gh, out_gw);
    return r;
}

} // namespace detail

/// Q from the query grid, K/V from the KV grid, softmax over KV cells.
inline AttentionResult cross_attention(const FeatureMap& query, const FeatureMap& kv,
                                       const AttentionProjections& proj) {
    return detail::attention_rows(query.cells, kv.cells, proj, query.gh, query.gw);
}

/// A feature-vector query is broadcast to every cell of the KV grid.
inline AttentionResult cross_attention(const FeatureVector& query, const FeatureMap& kv,
                                       const AttentionProjections& proj) {
    Mat q(kv.cells.rows, query.dim());
    for (int r = 0; r < q.rows; ++r)
        for (int c = 0; c < q.cols; ++c) q.at(r, c) = query.data[c];
    AttentionResult res = detail::attention_rows(std::move(q), kv.cells, proj, kv.gh, kv.gw);
    res.broadcast_query = true;
    return res;
}

struct AttentionGrads {
    Mat d_wq, d_wk, d_wv;
    Mat d_query; // gradient w.r.t. the query rows
    Mat d_kv;    // gradient w.r.t. the KV rows
};

inline AttentionGrads attention_backward(const AttentionResult& r, const AttentionProjections& proj,
                                         const Mat& d_out) {
    AttentionGrads g;
    Mat d_v = matmul_ta(r.score, d_out);
    Mat d_score = matmul_tb(d_out, r.v);
    // softmax rows backward
    Mat d_z(d_score.rows, d_score.cols);
    for (int i = 0; i < d_score.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < d_score.cols; ++j) dot += r.score.at(i, j) * d_score.at(i, j);
        for (int j = 0; j < d_score.cols; ++j)
            d_z.at(i, j) = r.score.at(i, j) * (d_score.at(i, j) - dot);
    }
    double inv = 1.0 / std::sqrt(static_cast<double>(proj.channels));
    for (double& x : d_z.a) x *= inv;
    Mat d_q = matmul(d_z, r.k);
    Mat d_k = matmul_ta(d_z, r.q);
    g.d_wq = matmul_ta(r.q_in, d_q);
    g.d_wk = matmul_ta(r.kv_in, d_k);
    g.d_wv = matmul_ta(r.kv_in, d_v);
    g.d_query = matmul_tb(d_q, proj.wq);
    Mat d_kv = matmul_tb(d_k, proj.wk);
    Mat d_kv2 = matmul_tb(d_v, proj.wv);
    for (std::size_t i = 0; i < d_kv.a.size(); ++i) d_kv.a[i] += d_kv2.a[i];
    g.d_kv = std::move(d_kv);
    return g;
}

// ---------------------------------------------------------------------------
// Mask head
// ---------------------------------------------------------------------------

struct MaskHead {
    int channels = 0; // C; the head consumes the 2C concatenation
    int classes = 0;  // 8 garments + background
    Mat w_mlp;             // 2C x C
    std::vector<double> b_mlp;
    Mat w_cls;             // C x classes
    std::vector<double> b_cls;

    static MaskHead make(int channels, int classes, Rng& rng) {
        require(classes >= 2, "MaskHead: need at least 2 classes");
        MaskHead h;
        h.channels = channels;
        h.classes = classes;
        h.w_mlp = Mat::random(2 * channels, channels, 1.0 / std::sqrt(2.0 * channels), rng);
        h.b_mlp.assign(channels, 0.0);
        h.w_cls = Mat::random(channels, classes, 1.0 / std::sqrt(channels), rng);
        h.b_cls.assign(classes, 0.0);
        return h;
    }
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Ablation variants. fixed_slot mirrors a no-PLC model: every read and
/// write uses slot 0 and the curve bank is left untrained. no_library keeps
/// the PLC but skips the library enhancement in the mask path.
enum class Variant : std::uint8_t { full = 0, fixed_slot = 1, no_library = 2 };

struct ModelConfig {
    int patch = 8;
    int channels = 16;
    int classes = 9;
    int plc_curves = 12;
    int plc_points = 256;
    double tau = 0.1;
    double alpha = 0.05;
    double plc_lr = 1e-2;
    double canny_sigma = 1.4;
    double canny_low = 0.1;
    double canny_high = 0.3;
    Variant variant = Variant::full;
};

struct Model {
    ModelConfig cfg;
    plc::CurveBank bank;
    ResponseLibrary lib_l, lib_s;

    PatchEncoder enc_align;  // RGB -> C, luminance restoration path
    PatchDecoder dec_align;  // C -> RGB
    PatchEncoder enc_depth;  // depth gray -> C
    AttentionProjections proj_struct;
    PatchDecoder dec_struct; // C -> edge logits
    PatchEncoder enc_lum;    // retinex luminance map -> C
    PatchEncoder enc_structure; // retinex structure map -> C
    AttentionProjections proj_mask_l, proj_mask_s;
    MaskHead head;
};

inline Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
    Model m;
    m.cfg = cfg;
    m.bank = plc::init_curve_bank(cfg.plc_curves, cfg.plc_points, mix_seed(seed, 1), cfg.tau);
    m.lib_l = ResponseLibrary(cfg.plc_curves, cfg.channels, cfg.alpha);
    m.lib_s = ResponseLibrary(cfg.plc_curves, cfg.channels, cfg.alpha);
    Rng rng(mix_seed(seed, 2));
    m.enc_align = PatchEncoder::make(cfg.patch, 3, cfg.channels, rng);
    m.dec_align = PatchDecoder::make(cfg.patch, cfg.channels, 3, rng);
    m.enc_depth = PatchEncoder::make(cfg.patch, 1, cfg.channels, rng);
    m.proj_struct = AttentionProjections::make(cfg.channels, rng);
    m.dec_struct = PatchDecoder::make(cfg.patch, cfg.channels, 1, rng);
    m.enc_lum = PatchEncoder::make(cfg.patch, 3, cfg.channels, rng);
    m.enc_structure = PatchEncoder::make(cfg.patch, 1, cfg.channels, rng);
    m.proj_mask_l = AttentionProjections::make(cfg.channels, rng);
    m.proj_mask_s = AttentionProjections::make(cfg.channels, rng);
    // the mask-stage enhancements are residual; zero value projections make
    // them start as the identity, so the library path only ever earns weight
    for (double& v : m.proj_mask_l.wv.a) v = 0.0;
    for (double& v : m.proj_mask_s.wv.a) v = 0.0;
    m.head = MaskHead::make(cfg.channels, cfg.classes, rng);
    return m;
}

// ---------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------

/// One rendered view of a scene. Samples of the same group share a scene and
/// depth/mask; only the RGB differs by illumination.
struct Sample {
    RgbImage rgb;
    DepthMap depth;
    SemanticMask mask;
    double level = 1.0;
    int group = 0;

    // caches filled by prepare_dataset
    double mean_luma = 0.0;
    HistogramDescriptor hist;
    RgbImage retinex_lum;
    GrayImage retinex_structure;
    GrayImage depth_gray;
};

struct Group {
    std::vector<int> samples;
    int max_sample = -1; // brightest member by mean_luma
    BinaryMask s_can;    // Canny structure map of the brightest member
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<Group> groups;
    bool prepared = false;
};

/// Computes the per-sample caches (histogram at the bank resolution, retinex
/// split, normalized depth) and per-group anchors (brightest member, Canny
/// reference). Must run before any train_* call.
inline void prepare_dataset(Dataset& ds, const ModelConfig& cfg) {
    for (auto& g : ds.groups) {
        g.max_sample = -1;
        for (int idx : g.samples) {
            Sample& s = ds.samples[idx];
            GrayImage luma = imageproc::rgb_to_luma(s.rgb);
            s.mean_luma = imageproc::mean_luma_255(luma);
            s.hist = imageproc::histogram_descriptor(luma, cfg.plc_points);
            auto rd = imageproc::retinex_decompose(s.rgb);
            s.retinex_lum = std::move(rd.luminance);
            s.retinex_structure = std::move(rd.structure);
            s.depth_gray = depth_to_gray(s.depth);
            if (g.max_sample < 0 || s.mean_luma > ds.samples[g.max_sample].mean_luma)
                g.max_sample = idx;
        }
        if (g.max_sample >= 0) {
            GrayImage luma = imageproc::rgb_to_luma(ds.samples[g.max_sample].rgb);
            g.s_can = imageproc::canny(luma, cfg.canny_sigma, cfg.canny_low, cfg.canny_high);
        }
    }
    ds.prepared = true;
}

inline int slot_for(const Model& m, const HistogramDescriptor& h) {
    if (m.cfg.variant == Variant::fixed_slot) return 0;
    return plc::match_hard(m.bank, h).hard_id;
}

// ---------------------------------------------------------------------------
// Per-sample forward/backward passes (pure; used by training and by the
// finite-difference tests)
// ---------------------------------------------------------------------------

inline void sgd(Mat& w, const Mat& g, double lr) {
    for (std::size_t i = 0; i < w.a.size(); ++i) w.a[i] -= lr * g.a[i];
}

inline void sgd(std::vector<double>& w, const std::vector<double>& g, double lr) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
}

/// Adam state for one parameter tensor. The stacked linear layers are stiff
/// under plain per-sample SGD (hundreds of epochs to converge); Adam with a
/// per-tensor gradient-norm clip trains them in a few dozen.
struct Velocity {
    std::vector<double> m1, m2;
    long t = 0;

    void step(std::vector<double>& w, const std::vector<double>& g, double lr, double) {
        if (m1.size() != w.size()) {
            m1.assign(w.size(), 0.0);
            m2.assign(w.size(), 0.0);
        }
        const double b1 = 0.9, b2 = 0.999, eps = 1e-3, decay = 0.0, limit = 1.0;
        double norm2 = 0.0;
        for (double x : g) norm2 += x * x;
        double scale = norm2 > limit * limit ? limit / std::sqrt(norm2) : 1.0;
        ++t;
        double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < w.size(); ++i) {
            double gi = scale * g[i];
            m1[i] = b1 * m1[i] + (1 - b1) * gi;
            m2[i] = b2 * m2[i] + (1 - b2) * gi * gi;
            w[i] -= lr * ((m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps) + decay * w[i]);
        }
    }
    void step(Mat& w, const Mat& g, double lr, double mu) { step(w.a, g.a, lr, mu); }
};

constexpr double kMomentum = 0.9; // unused by Adam; kept for the call sites

inline std::vector<double> column_sums(const Mat& m) {
    std::vector<double> s(m.cols, 0.0);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) s[c] += m.at(r, c);
    return s;
}

struct AlignPass {
    double loss = 0.0;
    Mat features; // encoder output cells, before any update
    Mat d_enc_w, d_dec_w;
    std::vector<double> d_enc_b, d_dec_b;
};

/// decode(encode(I_n)) -> sigmoid, L1 against the brightest exposure.
inline AlignPass alignment_pass(const Model& m, const Mat& input_patches,
                                const Mat& target_patches) {
    AlignPass p;
    p.features = linear_forward(input_patches, m.enc_align.w, m.enc_align.b);
    Mat v = linear_forward(p.features, m.dec_align.w, m.dec_align.b);
    const double inv_count = 1.0 / (static_cast<double>(v.rows) * v.cols);
    Mat d_v(v.rows, v.cols);
    for (std::size_t i = 0; i < v.a.size(); ++i) {
        double s = sigmoid(v.a[i]);
        double r = s - target_patches.a[i];
        p.loss += std::abs(r) * inv_count;
        double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        d_v.a[i] = sign * s * (1.0 - s) * inv_count;
    }
    p.d_dec_w = matmul_ta(p.features, d_v);
    p.d_dec_b = column_sums(d_v);
    Mat d_y = matmul_tb(d_v, m.dec_align.w);
    p.d_enc_w = matmul_ta(input_patches, d_y);
    p.d_enc_b = column_sums(d_y);
    return p;
}

struct StructurePass {
    double loss = 0.0;
    Mat compensation; // attention output cells
    Mat d_enc_w, d_dec_w, d_wq, d_wk, d_wv;
    std::vector<double> d_enc_b, d_dec_b;
};

/// Depth features queried by a luminance-library slot; decoded edge logits
/// against the Canny map of the brightest exposure (BCE). The slot is a
/// constant in the gradient.
inline StructurePass structure_pass(const Model& m, const Mat& depth_patches,
                                    const FeatureVector& slot, const Mat& target_patches,
                                    int gh, int gw) {
    StructurePass p;
    Mat y = linear_forward(depth_patches, m.enc_depth.w, m.enc_depth.b);
    AttentionResult at =
        cross_attention(slot, features_from_cells(std::move(y), gh, gw), m.proj_struct);
    p.compensation = at.out.cells;
    Mat v = linear_forward(p.compensation, m.dec_struct.w, m.dec_struct.b);

    const double inv_count = 1.0 / (static_cast<double>(v.rows) * v.cols);
    Mat d_v(v.rows, v.cols);
    for (std::size_t i = 0; i < v.a.size(); ++i) {
        double x = v.a[i], t = target_patches.a[i];
        // BCE from logits, stable form
        p.loss += (std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)))) * inv_count;
        d_v.a[i] = (sigmoid(x) - t) * inv_count;
    }
    p.d_dec_w = matmul_ta(p.compensation, d_v);
    p.d_dec_b = column_sums(d_v);
    Mat d_out = matmul_tb(d_v, m.dec_struct.w);
    AttentionGrads ag = attention_backward(at, m.proj_struct, d_out);
    p.d_wq = std::move(ag.d_wq);
    p.d_wk = std::move(ag.d_wk);
    p.d_wv = std::move(ag.d_wv);
    p.d_enc_w = matmul_ta(depth_patches, ag.d_kv);
    p.d_enc_b = column_sums(ag.d_kv);
    return p;
}

/// Pixel-population class counts per cell; rows = cells, cols = classes.
/// Throws when the mask names a class the head does not have.
inline Mat cell_class_counts(const SemanticMask& mask, int patch, int classes) {
    int gh = detail::grid_cells(mask.height, patch), gw = detail::grid_cells(mask.width, patch);
    Mat counts(gh * gw, classes);
    for (int gr = 0; gr < gh; ++gr)
        for (int gc = 0; gc < gw; ++gc)
            for (int pr = 0; pr < patch; ++pr)
                for (int pc = 0; pc < patch; ++pc) {
                    int r = imageproc::mirror_index(gr * patch + pr, mask.height);
                    int c = imageproc::mirror_index(gc * patch + pc, mask.width);
                    int cls = mask.at(r, c);
                    if (cls >= classes)
                        throw InvalidArgument("mask class id " + std::to_string(cls) +
                                              " >= configured classes " + std::to_string(classes));
                    counts.at(gr * gw + gc, cls) += 1.0;
                }
    return counts;
}

struct MaskPass {
    double loss = 0.0;
    Mat logits; // cells x classes
    Mat d_enc_lum_w, d_enc_structure_w;
    std::vector<double> d_enc_lum_b, d_enc_structure_b;
    Mat d_l_wq, d_l_wk, d_l_wv, d_s_wq, d_s_wk, d_s_wv;
    Mat d_mlp_w, d_cls_w;
    std::vector<double> d_mlp_b, d_cls_b;
};

/// Retinex-decomposed features, residually enhanced by cross-attention
/// retrieval from the response libraries (KV rows = initialized slots),
/// concatenated structure first, MLP head, per-cell softmax, pixel-level
/// cross entropy via the per-cell class populations. Library rows are
/// constants in the gradient.
inline MaskPass mask_pass(const Model& m, const Mat& lum_patches, const Mat& structure_patches,
                          const FeatureMap& kv_l, const FeatureMap& kv_s,
                          const Mat& class_counts, int gh, int gw, double total_pixels) {
    const int C = m.cfg.channels;
    MaskPass p;
    Mat y_l = linear_forward(lum_patches, m.enc_lum.w, m.enc_lum.b);
    Mat y_s = linear_forward(structure_patches, m.enc_structure.w, m.enc_structure.b);

    const bool enhance = m.cfg.variant != Variant::no_library;
    AttentionResult at_l, at_s;
    Mat e_l = y_l, e_s = y_s;
    if (enhance) {
        at_l = cross_attention(features_from_cells(y_l, gh, gw), kv_l, m.proj_mask_l);
        at_s = cross_attention(features_from_cells(y_s, gh, gw), kv_s, m.proj_mask_s);
        for (std::size_t i = 0; i < e_l.a.size(); ++i) e_l.a[i] += at_l.out.cells.a[i];
        for (std::size_t i = 0; i < e_s.a.size(); ++i) e_s.a[i] += at_s.out.cells.a[i];
    }

    Mat x(e_l.rows, 2 * C);
    for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < C; ++c) {
            x.at(r, c) = e_s.at(r, c);
            x.at(r, C + c) = e_l.at(r, c);
        }

    Mat hidden = linear_forward(x, m.head.w_mlp, m.head.b_mlp);
    for (double& v : hidden.a) v = std::tanh(v);
    p.logits = linear_forward(hidden, m.head.w_cls, m.head.b_cls);

    // per-cell softmax, CE weighted by the pixel population of each class
    Mat d_logits(p.logits.rows, p.logits.cols);
    for (int r = 0; r < p.logits.rows; ++r) {
        double mx = p.logits.at(r, 0);
        for (int c = 1; c < p.logits.cols; ++c) mx = std::max(mx, p.logits.at(r, c));
        double sum = 0.0;
        for (int c = 0; c < p.logits.cols; ++c) sum += std::exp(p.logits.at(r, c) - mx);
        double log_sum = std::log(sum) + mx;
        double cell_pixels = 0.0;
        for (int c = 0; c < p.logits.cols; ++c) cell_pixels += class_counts.at(r, c);
        for (int c = 0; c < p.logits.cols; ++c) {
            double logp = p.logits.at(r, c) - log_sum;
            double prob = std::exp(logp);
            p.loss -= class_counts.at(r, c) * logp / total_pixels;
            d_logits.at(r, c) = (cell_pixels * prob - class_counts.at(r, c)) / total_pixels;
        }
    }

    p.d_cls_w = matmul_ta(hidden, d_logits);
    p.d_cls_b = column_sums(d_logits);
    Mat d_hidden = matmul_tb(d_logits, m.head.w_cls);
    for (std::size_t i = 0; i < d_hidden.a.size(); ++i)
        d_hidden.a[i] *= 1.0 - hidden.a[i] * hidden.a[i]; // through tanh
    p.d_mlp_w = matmul_ta(x, d_hidden);
    p.d_mlp_b = column_sums(d_hidden);
    Mat d_x = matmul_tb(d_hidden, m.head.w_mlp);

    Mat d_e_s(d_x.rows, C), d_e_l(d_x.rows, C);
    for (int r = 0; r < d_x.rows; ++r)
        for (int c = 0; c < C; ++c) {
            d_e_s.at(r, c) = d_x.at(r, c);
            d_e_l.at(r, c) = d_x.at(r, C + c);
        }

    Mat d_y_l = d_e_l, d_y_s = d_e_s;
    if (enhance) {
        AttentionGrads gl = attention_backward(at_l, m.proj_mask_l, d_e_l);
        AttentionGrads gs = attention_backward(at_s, m.proj_mask_s, d_e_s);
        for (std::size_t i = 0; i < d_y_l.a.size(); ++i) d_y_l.a[i] += gl.d_query.a[i];
        for (std::size_t i = 0; i < d_y_s.a.size(); ++i) d_y_s.a[i] += gs.d_query.a[i];
        p.d_l_wq = std::move(gl.d_wq);
        p.d_l_wk = std::move(gl.d_wk);
        p.d_l_wv = std::move(gl.d_wv);
        p.d_s_wq = std::move(gs.d_wq);
        p.d_s_wk = std::move(gs.d_wk);
        p.d_s_wv = std::move(gs.d_wv);
    }
    p.d_enc_lum_w = matmul_ta(lum_patches, d_y_l);
    p.d_enc_lum_b = column_sums(d_y_l);
    p.d_enc_structure_w = matmul_ta(structure_patches, d_y_s);
    p.d_enc_structure_b = column_sums(d_y_s);
    return p;
}

// ---------------------------------------------------------------------------
// Training procedures (fixed sample order; deterministic for a given model)
// ---------------------------------------------------------------------------

struct TrainLog {
    std::vector<double> epoch_loss;
    int skipped_groups = 0;
};

namespace detail {

/// Deterministic per-epoch sample order; a fixed cycling order biases
/// per-sample SGD noticeably on grouped data.
inline std::vector<int> shuffled(std::vector<int> order, int epoch) {
    Rng rng(mix_seed(0x0d0e0a1ULL, static_cast<std::uint64_t>(epoch)));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
        std::swap(order[i], order[rng.index(i + 1)]);
    return order;
}

inline double squared_norm(const Mat& m) {
    double s = 0.0;
    for (double v : m.a) s += v * v;
    return s;
}

inline double squared_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

} // namespace detail

/// Aligns every exposure of a group to its brightest member, writes encoder
/// features into the luminance library at the matched slot and trains the
/// curve bank on the spectral consistency loss. lr == 0 leaves all learnable
/// state untouched while still populating the library.
inline TrainLog train_luminance_alignment(Model& m, Dataset& ds, int epochs, double lr) {
    require(ds.prepared, "train_luminance_alignment: dataset not prepared");
    TrainLog log;

    std::vector<int> order;        // sample index
    std::vector<int> group_of;     // owning group per dataset sample
    std::vector<Mat> targets(ds.groups.size());
    group_of.assign(ds.samples.size(), -1);
    for (std::size_t gi = 0; gi < ds.groups.size(); ++gi) {
        const Group& g = ds.groups[gi];
        if (g.samples.size() < 2) {
            ++log.skipped_groups;
            continue;
        }
        targets[gi] = patches(ds.samples[g.max_sample].rgb, m.cfg.patch);
        for (int idx : g.samples) {
            order.push_back(idx);
            group_of[idx] = static_cast<int>(gi);
        }
    }

    Velocity v_enc_w, v_enc_b, v_dec_w, v_dec_b;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        // linear decay; constant-rate Adam keeps wandering near the optimum
        double elr = lr * (1.0 - static_cast<double>(epoch) / epochs);
        double loss_sum = 0.0;
        for (int idx : detail::shuffled(order, epoch)) {
            const Sample& s = ds.samples[idx];
            Mat u = patches(s.rgb, m.cfg.patch);
            AlignPass p = alignment_pass(m, u, targets[group_of[idx]]);
            loss_sum += p.loss;
            if (lr > 0.0) {
                v_enc_w.step(m.enc_align.w, p.d_enc_w, elr, kMomentum);
                v_enc_b.step(m.enc_align.b, p.d_enc_b, elr, kMomentum);
                v_dec_w.step(m.dec_align.w, p.d_dec_w, elr, kMomentum);
                v_dec_b.step(m.dec_align.b, p.d_dec_b, elr, kMomentum);
            }
            int slot = slot_for(m, s.hist);
            FeatureVector f = features_from_cells(p.features, 0, 0).mean_pool();
            ema_update(m.lib_l, slot, f);
            if (m.cfg.variant != Variant::fixed_slot && lr > 0.0) {
                auto sc = plc::spectral_consistency_grad(m.bank, s.hist, f, m.lib_l);
                plc_sgd_step(m.bank, sc.grad_params, m.cfg.plc_lr);
            }
        }
        log.epoch_loss.push_back(order.empty() ? 0.0 : loss_sum / order.size());
    }
    return log;
}

/// Trains the depth path against per-group Canny references and fills the
/// structural library.
inline TrainLog train_structure(Model& m, Dataset& ds, int epochs, double lr) {
    require(ds.prepared, "train_structure: dataset not prepared");
    if (m.lib_l.initialized_count() == 0)
        throw InvalidArgument("train_structure: luminance library is empty; run alignment first");
    TrainLog log;

    std::vector<int> order;
    std::vector<int> group_of(ds.samples.size(), -1);
    std::vector<Mat> targets(ds.groups.size());
    for (std::size_t gi = 0; gi < ds.groups.size(); ++gi) {
        const Group& g = ds.groups[gi];
        if (g.samples.empty()) continue;
        if (g.s_can.pixels() == 0) throw InvalidArgument("train_structure: missing Canny map");
        GrayImage can(g.s_can.width, g.s_can.height);
        for (int i = 0; i < can.pixels(); ++i) can.data[i] = g.s_can.bits[i] ? 1.0 : 0.0;
        targets[gi] = patches(can, m.cfg.patch);
        for (int idx : g.samples) {
            order.push_back(idx);
            group_of[idx] = static_cast<int>(gi);
        }
    }

    Velocity v_enc_w, v_enc_b, v_dec_w, v_dec_b, v_wq, v_wk, v_wv;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double elr = lr * (1.0 - static_cast<double>(epoch) / epochs);
        double loss_sum = 0.0;
        for (int idx : detail::shuffled(order, epoch)) {
            const Sample& s = ds.samples[idx];
            int slot = slot_for(m, s.hist);
            FeatureVector q = read_slot_nearest(m.lib_l, slot);
            Mat u = patches(s.depth_gray, m.cfg.patch);
            int gh = detail::grid_cells(s.depth_gray.height, m.cfg.patch);
            int gw = detail::grid_cells(s.depth_gray.width, m.cfg.patch);
            StructurePass p = structure_pass(m, u, q, targets[group_of[idx]], gh, gw);
            loss_sum += p.loss;
            if (lr > 0.0) {
                v_enc_w.step(m.enc_depth.w, p.d_enc_w, elr, kMomentum);
                v_enc_b.step(m.enc_depth.b, p.d_enc_b, elr, kMomentum);
                v_dec_w.step(m.dec_struct.w, p.d_dec_w, elr, kMomentum);
                v_dec_b.step(m.dec_struct.b, p.d_dec_b, elr, kMomentum);
                v_wq.step(m.proj_struct.wq, p.d_wq, elr, kMomentum);
                v_wk.step(m.proj_struct.wk, p.d_wk, elr, kMomentum);
                v_wv.step(m.proj_struct.wv, p.d_wv, elr, kMomentum);
            }
            ema_update(m.lib_s, slot, features_from_cells(p.compensation, 0, 0).mean_pool());
        }
        log.epoch_loss.push_back(order.empty() ? 0.0 : loss_sum / order.size());
    }
    return log;
}

/// Trains the semantic head on the retinex-decomposed, library-enhanced
/// features against ground-truth masks.
inline TrainLog train_mask(Model& m, Dataset& ds, int epochs, double lr) {
    require(ds.prepared, "train_mask: dataset not prepared");
    const bool enhance = m.cfg.variant != Variant::no_library;
    if (enhance && (m.lib_l.initialized_count() == 0 || m.lib_s.initialized_count() == 0))
        throw InvalidArgument("train_mask: response libraries are empty; run earlier stages first");
    TrainLog log;

    std::vector<int> order;
    for (const Group& g : ds.groups)
        for (int idx : g.samples) order.push_back(idx);

    // libraries and the bank are frozen during this stage, so the retrieved
    // vectors are fixed per sample
    std::vector<FeatureMap> kv_l(ds.samples.size()), kv_s(ds.samples.size());
    if (enhance)
        for (int idx : order) {
            const Sample& s = ds.samples[idx];
            int slot = slot_for(m, s.hist);
            if (m.cfg.variant == Variant::fixed_slot) {
                kv_l[idx] = as_feature_map(read_slot_nearest(m.lib_l, slot));
                kv_s[idx] = as_feature_map(read_slot_nearest(m.lib_s, slot));
            } else {
                kv_l[idx] = as_feature_map(soft_retrieve(m.lib_l, m.bank, s.hist));
                kv_s[idx] = as_feature_map(soft_retrieve(m.lib_s, m.bank, s.hist));
            }
        }

    // start the classifier bias at the label log-priors; the background class
    // dominates and SGD otherwise spends most of the budget learning it
    if (epochs > 0 && lr > 0.0 && !order.empty()) {
        std::vector<double> freq(m.cfg.classes, 1.0);
        double total = m.cfg.classes;
        for (int idx : order)
            for (auto cls : ds.samples[idx].mask.classes) {
                freq[cls] += 1.0;
                total += 1.0;
            }
        for (int c = 0; c < m.cfg.classes; ++c) m.head.b_cls[c] = std::log(freq[c] / total);
    }

    Velocity v_el_w, v_el_b, v_es_w, v_es_b, v_l_wq, v_l_wk, v_l_wv, v_s_wq, v_s_wk, v_s_wv;
    Velocity v_mlp_w, v_mlp_b, v_cls_w, v_cls_b;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double elr = lr * (1.0 - static_cast<double>(epoch) / epochs);
        double loss_sum = 0.0;
        for (int idx : detail::shuffled(order, epoch)) {
            const Sample& s = ds.samples[idx];
            Mat u_l = patches(s.retinex_lum, m.cfg.patch);
            Mat u_s = patches(s.retinex_structure, m.cfg.patch);
            Mat counts = cell_class_counts(s.mask, m.cfg.patch, m.cfg.classes);
            int gh = detail::grid_cells(s.mask.height, m.cfg.patch);
            int gw = detail::grid_cells(s.mask.width, m.cfg.patch);
            double total = static_cast<double>(gh) * gw * m.cfg.patch * m.cfg.patch;
            MaskPass p = mask_pass(m, u_l, u_s, kv_l[idx], kv_s[idx], counts, gh, gw, total);
            loss_sum += p.loss;
            if (lr > 0.0) {
                v_el_w.step(m.enc_lum.w, p.d_enc_lum_w, elr, kMomentum);
                v_el_b.step(m.enc_lum.b, p.d_enc_lum_b, elr, kMomentum);
                v_es_w.step(m.enc_structure.w, p.d_enc_structure_w, elr, kMomentum);
                v_es_b.step(m.enc_structure.b, p.d_enc_structure_b, elr, kMomentum);
                if (enhance) {
                    // the slot bias is shared by every cell, so its summed
                    // gradient rides the clip; a reduced rate keeps the
                    // library path a correction rather than the main route
                    const double lr_v = 0.1 * elr;
                    v_l_wq.step(m.proj_mask_l.wq, p.d_l_wq, lr_v, kMomentum);
                    v_l_wk.step(m.proj_mask_l.wk, p.d_l_wk, lr_v, kMomentum);
                    v_l_wv.step(m.proj_mask_l.wv, p.d_l_wv, lr_v, kMomentum);
                    v_s_wq.step(m.proj_mask_s.wq, p.d_s_wq, lr_v, kMomentum);
                    v_s_wk.step(m.proj_mask_s.wk, p.d_s_wk, lr_v, kMomentum);
                    v_s_wv.step(m.proj_mask_s.wv, p.d_s_wv, lr_v, kMomentum);
                }
                v_mlp_w.step(m.head.w_mlp, p.d_mlp_w, elr, kMomentum);
                v_mlp_b.step(m.head.b_mlp, p.d_mlp_b, elr, kMomentum);
                v_cls_w.step(m.head.w_cls, p.d_cls_w, elr, kMomentum);
                v_cls_b.step(m.head.b_cls, p.d_cls_b, elr, kMomentum);
            }
        }
        log.epoch_loss.push_back(order.empty() ? 0.0 : loss_sum / order.size());
    }
    return log;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

/// Deterministic forward pass to a per-pixel class mask. Argmax ties keep
/// the smallest class id; cell predictions are upsampled nearest. The
/// libraries are read by the PLC's soft lookup (hard slot for the no-PLC
/// ablation), matching the training-time retrieval.
inline SemanticMask predict_mask(const Model& m, const RgbImage& img) {
    const bool enhance = m.cfg.variant != Variant::no_library;
    if (enhance && (m.lib_l.initialized_count() == 0 || m.lib_s.initialized_count() == 0))
        throw InvalidArgument("predict_mask: model has empty response libraries (untrained)");

    auto rd = imageproc::retinex_decompose(img);
    Mat u_l = patches(rd.luminance, m.cfg.patch);
    Mat u_s = patches(rd.structure, m.cfg.patch);
    int gh = detail::grid_cells(img.height, m.cfg.patch);
    int gw = detail::grid_cells(img.width, m.cfg.patch);

    Mat y_l = linear_forward(u_l, m.enc_lum.w, m.enc_lum.b);
    Mat y_s = linear_forward(u_s, m.enc_structure.w, m.enc_structure.b);
    if (enhance) {
        GrayImage luma = imageproc::rgb_to_luma(img);
        HistogramDescriptor h = imageproc::histogram_descriptor(luma, m.cfg.plc_points);
        FeatureMap kv_l, kv_s;
        if (m.cfg.variant == Variant::fixed_slot) {
            int slot = slot_for(m, h);
            kv_l = as_feature_map(read_slot_nearest(m.lib_l, slot));
            kv_s = as_feature_map(read_slot_nearest(m.lib_s, slot));
        } else {
            kv_l = as_feature_map(soft_retrieve(m.lib_l, m.bank, h));
            kv_s = as_feature_map(soft_retrieve(m.lib_s, m.bank, h));
        }
        AttentionResult at_l =
            cross_attention(features_from_cells(y_l, gh, gw), kv_l, m.proj_mask_l);
        AttentionResult at_s =
            cross_attention(features_from_cells(y_s, gh, gw), kv_s, m.proj_mask_s);
        for (std::size_t i = 0; i < y_l.a.size(); ++i) y_l.a[i] += at_l.out.cells.a[i];
        for (std::size_t i = 0; i < y_s.a.size(); ++i) y_s.a[i] += at_s.out.cells.a[i];
    }
    const int C = m.cfg.channels;
    Mat x(y_l.rows, 2 * C);
    for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < C; ++c) {
            x.at(r, c) = y_s.at(r, c);
            x.at(r, C + c) = y_l.at(r, c);
        }
    Mat hidden = linear_forward(x, m.head.w_mlp, m.head.b_mlp);
    for (double& v : hidden.a) v = std::tanh(v);
    Mat logits = linear_forward(hidden, m.head.w_cls, m.head.b_cls);

    SemanticMask mask(img.width, img.height);
    for (int gr = 0; gr < gh; ++gr)
        for (int gc = 0; gc < gw; ++gc) {
            const double* row = &logits.a[static_cast<std::size_t>(gr * gw + gc) * logits.cols];
            int best = 0;
            for (int c = 1; c < logits.cols; ++c)
                if (row[c] > row[best]) best = c;
            for (int pr = 0; pr < m.cfg.patch; ++pr)
                for (int pc = 0; pc < m.cfg.patch; ++pc) {
                    int r = gr * m.cfg.patch + pr, c = gc * m.cfg.patch + pc;
                    if (r < img.height && c < img.width)
                        mask.set(r, c, static_cast<std::uint8_t>(best));
                }
        }
    return mask;
}

// ---------------------------------------------------------------------------
// Checkpoint format GAL1. All weights f32 little-endian; the curve bank and
// the two response libraries live in sibling files referenced by name.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_mat(io::Writer& w, const Mat& m) {
    w.u32(static_cast<std::uint32_t>(m.rows));
    w.u32(static_cast<std::uint32_t>(m.cols));
    w.f32_array(m.a);
}

inline Mat get_mat(io::Reader& r) {
    int rows = static_cast<int>(r.u32());
    int cols = static_cast<int>(r.u32());
    Mat m(rows, cols);
    m.a = r.f32_array(static_cast<std::size_t>(rows) * cols);
    return m;
}

inline void put_vec(io::Writer& w, const std::vector<double>& v) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    w.f32_array(v);
}

inline std::vector<double> get_vec(io::Reader& r) {
    return r.f32_array(r.u32());
}

inline void put_encoder(io::Writer& w, const PatchEncoder& e) {
    w.u32(e.patch);
    w.u32(e.in_channels);
    w.u32(e.out_channels);
    put_mat(w, e.w);
    put_vec(w, e.b);
}

inline PatchEncoder get_encoder(io::Reader& r) {
    PatchEncoder e;
    e.patch = static_cast<int>(r.u32());
    e.in_channels = static_cast<int>(r.u32());
    e.out_channels = static_cast<int>(r.u32());
    e.w = get_mat(r);
    e.b = get_vec(r);
    return e;
}

inline void put_decoder(io::Writer& w, const PatchDecoder& d) {
    w.u32(d.patch);
    w.u32(d.out_channels);
    w.u32(d.in_channels);
    put_mat(w, d.w);
    put_vec(w, d.b);
}

inline PatchDecoder get_decoder(io::Reader& r) {
    PatchDecoder d;
    d.patch = static_cast<int>(r.u32());
    d.out_channels = static_cast<int>(r.u32());
    d.in_channels = static_cast<int>(r.u32());
    d.w = get_mat(r);
    d.b = get_vec(r);
    return d;
}

inline void put_proj(io::Writer& w, const AttentionProjections& p) {
    w.u32(p.channels);
    put_mat(w, p.wq);
    put_mat(w, p.wk);
    put_mat(w, p.wv);
}

inline AttentionProjections get_proj(io::Reader& r) {
    AttentionProjections p;
    p.channels = static_cast<int>(r.u32());
    p.wq = get_mat(r);
    p.wk = get_mat(r);
    p.wv = get_mat(r);
    return p;
}

inline std::string dir_of(const std::string& path) {
    auto pos = path.find_last_of("/\\");
    return pos == std::string::npos ? std::string() : path.substr(0, pos + 1);
}

} // namespace detail

constexpr const char* kPlcFile = "plc.bin";
constexpr const char* kLibLFile = "m_l.rlb";
constexpr const char* kLibSFile = "m_s.rlb";

inline std::vector<std::uint8_t> serialize_model(const Model& m) {
    io::Writer w;
    w.magic("GAL1");
    w.u32(1); // version
    w.u32(static_cast<std::uint32_t>(m.cfg.patch));
    w.u32(static_cast<std::uint32_t>(m.cfg.channels));
    w.u32(static_cast<std::uint32_t>(m.cfg.classes));
    w.u32(static_cast<std::uint32_t>(m.cfg.plc_curves));
    w.u32(static_cast<std::uint32_t>(m.cfg.plc_points));
    w.f64(m.cfg.tau);
    w.f64(m.cfg.alpha);
    w.f64(m.cfg.plc_lr);
    w.f64(m.cfg.canny_sigma);
    w.f64(m.cfg.canny_low);
    w.f64(m.cfg.canny_high);
    w.u8(static_cast<std::uint8_t>(m.cfg.variant));
    w.str(kPlcFile);
    w.str(kLibLFile);
    w.str(kLibSFile);
    detail::put_encoder(w, m.enc_align);
    detail::put_decoder(w, m.dec_align);
    detail::put_encoder(w, m.enc_depth);
    detail::put_proj(w, m.proj_struct);
    detail::put_decoder(w, m.dec_struct);
    detail::put_encoder(w, m.enc_lum);
    detail::put_encoder(w, m.enc_structure);
    detail::put_proj(w, m.proj_mask_l);
    detail::put_proj(w, m.proj_mask_s);
    w.u32(static_cast<std::uint32_t>(m.head.channels));
    w.u32(static_cast<std::uint32_t>(m.head.classes));
    detail::put_mat(w, m.head.w_mlp);
    detail::put_vec(w, m.head.b_mlp);
    detail::put_mat(w, m.head.w_cls);
    detail::put_vec(w, m.head.b_cls);
    return std::move(w.buf);
}

/// Writes model.gal plus the referenced plc.bin / m_l.rlb / m_s.rlb next to it.
inline void save_model(const Model& m, const std::string& path) {
    io::write_file(path, serialize_model(m));
    std::string dir = detail::dir_of(path);
    plc::save_curve_bank(m.bank, dir + kPlcFile);
    save_library(m.lib_l, dir + kLibLFile);
    save_library(m.lib_s, dir + kLibSFile);
}

inline Model load_model(const std::string& path) {
    auto buf = io::read_file(path);
    io::Reader r(buf, path);
    r.expect_magic("GAL1");
    if (r.u32() != 1) throw DataError("unsupported checkpoint version: " + path);
    Model m;
    m.cfg.patch = static_cast<int>(r.u32());
    m.cfg.channels = static_cast<int>(r.u32());
    m.cfg.classes = static_cast<int>(r.u32());
    m.cfg.plc_curves = static_cast<int>(r.u32());
    m.cfg.plc_points = static_cast<int>(r.u32());
    m.cfg.tau = r.f64();
    m.cfg.alpha = r.f64();
    m.cfg.plc_lr = r.f64();
    m.cfg.canny_sigma = r.f64();
    m.cfg.canny_low = r.f64();
    m.cfg.canny_high = r.f64();
    m.cfg.variant = static_cast<Variant>(r.u8());
    std::string plc_ref = r.str();
    std::string libl_ref = r.str();
    std::string libs_ref = r.str();
    m.enc_align = detail::get_encoder(r);
    m.dec_align = detail::get_decoder(r);
    m.enc_depth = detail::get_encoder(r);
    m.proj_struct = detail::get_proj(r);
    m.dec_struct = detail::get_decoder(r);
    m.enc_lum = detail::get_encoder(r);
    m.enc_structure = detail::get_encoder(r);
    m.proj_mask_l = detail::get_proj(r);
    m.proj_mask_s = detail::get_proj(r);
    m.head.channels = static_cast<int>(r.u32());
    m.head.classes = static_cast<int>(r.u32());
    m.head.w_mlp = detail::get_mat(r);
    m.head.b_mlp = detail::get_vec(r);
    m.head.w_cls = detail::get_mat(r);
    m.head.b_cls = detail::get_vec(r);

    std::string dir = detail::dir_of(path);
    m.bank = plc::load_curve_bank(dir + plc_ref);
    m.lib_l = load_library(dir + libl_ref);
    m.lib_s = load_library(dir + libs_ref);
    return m;
}

} // namespace graspall::fusion
