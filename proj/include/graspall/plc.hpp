#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "error.hpp"
#include "io.hpp"
#include "memory.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace graspall::plc {

// ---------------------------------------------------------------------------
// Curve bank
// ---------------------------------------------------------------------------

/// N learnable monotone luminance curves of R points each. A curve is
/// cumsum(softplus(params)) / total, which is strictly increasing in (0, 1]
/// with last value exactly 1 for any parameter values — monotonicity is
/// structural, not penalized.
struct CurveBank {
    int n_curves = 0;
    int points = 0;
    std::vector<double> params; // n_curves * points, raw
    double tau = 0.1;           // softmax temperature for soft matching

    const double* row(int n) const { return &params[static_cast<std::size_t>(n) * points]; }
    double* row(int n) { return &params[static_cast<std::size_t>(n) * points]; }
};

struct CurveMatch {
    int hard_id = 0;
    std::vector<double> weights;   // temperature softmax of -distance
    std::vector<double> distances; // L1 per curve
};

inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double softplus_inverse(double y) {
    // log(expm1(y)); for tiny y this degrades gracefully toward log(y)
    return std::log(std::expm1(y));
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Curves start as gamma curves x^g with g log-spaced in [0.05, 20], index 0
/// being the steepest (near-black image) shape, plus seeded noise of
/// amplitude 1e-3. N = 1 gets the identity ramp. A narrower span such as
/// [0.3, 3] cannot tell heavily crushed exposures apart: their cumulative
/// histograms all sit closer to the single steepest curve, and every dim
/// illumination level collapses into one id.
inline CurveBank init_curve_bank(int n_curves, int points, std::uint64_t seed, double tau = 0.1) {
    require(n_curves >= 1, "init_curve_bank: N must be >= 1");
    require(points >= 2, "init_curve_bank: R must be >= 2");
    require(tau > 0.0, "init_curve_bank: tau must be > 0");

    CurveBank bank;
    bank.n_curves = n_curves;
    bank.points = points;
    bank.tau = tau;
    bank.params.resize(static_cast<std::size_t>(n_curves) * points);

    Rng rng(seed);
    const double glo = std::log(0.05), ghi = std::log(20.0);
    for (int n = 0; n < n_curves; ++n) {
        double gamma = n_curves == 1
                           ? 1.0
                           : std::exp(glo + (ghi - glo) * n / (n_curves - 1));
        double prev = 0.0;
        for (int i = 0; i < points; ++i) {
            double target = std::pow(static_cast<double>(i + 1) / points, gamma);
            double inc = target - prev;
            prev = target;
            // scale increments by R so raw params sit near softplus_inverse(1)
            bank.row(n)[i] = softplus_inverse(inc * points) + 1e-3 * rng.normal();
        }
    }
    return bank;
}

inline std::vector<double> curve_values(const CurveBank& bank, int n) {
    require(n >= 0 && n < bank.n_curves, "curve_values: index out of range");
    std::vector<double> c(bank.points);
    double acc = 0.0;
    for (int i = 0; i < bank.points; ++i) {
        acc += softplus(bank.row(n)[i]);
        c[i] = acc;
    }
    for (double& v : c) v /= acc;
    return c;
}

inline std::vector<double> curve_distances(const CurveBank& bank, const HistogramDescriptor& h) {
    if (static_cast<int>(h.values.size()) != bank.points)
        throw InvalidArgument("curve match: histogram has " + std::to_string(h.values.size()) +
                              " points, bank has " + std::to_string(bank.points));
    std::vector<double> d(bank.n_curves, 0.0);
    for (int n = 0; n < bank.n_curves; ++n) {
        auto c = curve_values(bank, n);
        double s = 0.0;
        for (int i = 0; i < bank.points; ++i) s += std::abs(h.values[i] - c[i]);
        d[n] = s;
    }
    return d;
}

inline std::vector<double> soft_weights(const std::vector<double>& distances, double tau) {
    require(tau > 0.0, "soft_weights: tau must be > 0");
    std::vector<double> z(distances.size());
    double mx = -1e300;
    for (std::size_t n = 0; n < distances.size(); ++n) {
        z[n] = -distances[n] / tau;
        mx = std::max(mx, z[n]);
    }
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : z) v /= sum;
    return z;
}

inline CurveMatch match_soft(const CurveBank& bank, const HistogramDescriptor& h) {
    CurveMatch m;
    m.distances = curve_distances(bank, h);
    m.weights = soft_weights(m.distances, bank.tau);
    m.hard_id = 0;
    for (int n = 1; n < bank.n_curves; ++n)
        if (m.distances[n] < m.distances[m.hard_id]) m.hard_id = n; // ties keep the lower index
    return m;
}

inline CurveMatch match_hard(const CurveBank& bank, const HistogramDescriptor& h) {
    return match_soft(bank, h);
}

// ---------------------------------------------------------------------------
// Spectral consistency loss and its analytic gradient
// ---------------------------------------------------------------------------

struct SpectralConsistency {
    double loss = 0.0;
    std::vector<double> grad_params; // n_curves * points
};

/// loss = || f - sum_n w_n M_L[n] ||_1 with w = softmax(-d / tau) taken over
/// the initialized slots only; library entries are constants (stop-gradient,
/// matching the EMA update semantics). The gradient flows
/// w -> distances -> curve -> softplus/cumsum into the raw parameters.
inline SpectralConsistency spectral_consistency_grad(const CurveBank& bank,
                                                     const HistogramDescriptor& h,
                                                     const FeatureVector& f,
                                                     const ResponseLibrary& lib) {
    require(lib.slots == bank.n_curves, "spectral_consistency_grad: slots != curves");
    if (lib.dim != f.dim())
        throw InvalidArgument("spectral_consistency_grad: feature dim != library dim");
    if (lib.initialized_count() == 0)
        throw InvalidArgument("spectral_consistency_grad: library is empty");
    if (static_cast<int>(h.values.size()) != bank.points)
        throw InvalidArgument("spectral_consistency_grad: histogram length != R");

    const int N = bank.n_curves, R = bank.points, D = lib.dim;

    std::vector<std::vector<double>> curves(N);
    std::vector<double> totals(N);
    std::vector<double> dist(N, 0.0);
    for (int n = 0; n < N; ++n) {
        curves[n].resize(R);
        double acc = 0.0;
        for (int i = 0; i < R; ++i) {
            acc += softplus(bank.row(n)[i]);
            curves[n][i] = acc;
        }
        totals[n] = acc;
        for (int i = 0; i < R; ++i) {
            curves[n][i] /= acc;
            dist[n] += std::abs(h.values[i] - curves[n][i]);
        }
    }

    // softmax over initialized slots only; uninitialized curves get zero grad
    std::vector<int> active;
    for (int n = 0; n < N; ++n)
        if (lib.initialized[n]) active.push_back(n);

    double mx = -1e300;
    for (int n : active) mx = std::max(mx, -dist[n] / bank.tau);
    std::vector<double> w(N, 0.0);
    double wsum = 0.0;
    for (int n : active) {
        w[n] = std::exp(-dist[n] / bank.tau - mx);
        wsum += w[n];
    }
    for (int n : active) w[n] /= wsum;

    std::vector<double> m(D, 0.0);
    for (int n : active) {
        const double* s = lib.slot_ptr(n);
        for (int k = 0; k < D; ++k) m[k] += w[n] * s[k];
    }

    SpectralConsistency out;
    std::vector<double> dm(D); // dL/dm
    for (int k = 0; k < D; ++k) {
        double r = f.data[k] - m[k];
        out.loss += std::abs(r);
        dm[k] = r > 0.0 ? -1.0 : (r < 0.0 ? 1.0 : 0.0);
    }

    std::vector<double> gw(N, 0.0); // dL/dw
    double gbar = 0.0;
    for (int n : active) {
        const double* s = lib.slot_ptr(n);
        double g = 0.0;
        for (int k = 0; k < D; ++k) g += dm[k] * s[k];
        gw[n] = g;
        gbar += w[n] * g;
    }

    out.grad_params.assign(static_cast<std::size_t>(N) * R, 0.0);
    for (int n : active) {
        double dz = w[n] * (gw[n] - gbar); // softmax jacobian row
        double dd = -dz / bank.tau;        // dL/d distance_n
        if (dd == 0.0) continue;
        // a_i = dd * sign(C_i - h_i); dL/ds_j = (sum_{i>=j} a_i - sum_i a_i C_i)/T
        std::vector<double> a(R);
        double dot = 0.0;
        for (int i = 0; i < R; ++i) {
            double diff = curves[n][i] - h.values[i];
            a[i] = dd * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
            dot += a[i] * curves[n][i];
        }
        double rev = 0.0;
        double* g = &out.grad_params[static_cast<std::size_t>(n) * R];
        for (int j = R - 1; j >= 0; --j) {
            rev += a[j];
            g[j] = (rev - dot) / totals[n] * sigmoid(bank.row(n)[j]);
        }
    }
    return out;
}

inline void plc_sgd_step(CurveBank& bank, const std::vector<double>& grad_params, double lr) {
    require(lr >= 0.0, "plc_sgd_step: lr must be >= 0");
    require(grad_params.size() == bank.params.size(), "plc_sgd_step: gradient size mismatch");
    for (double g : grad_params)
        if (!std::isfinite(g)) throw NumericError("plc_sgd_step: non-finite gradient");
    for (std::size_t i = 0; i < bank.params.size(); ++i) bank.params[i] -= lr * grad_params[i];
}

// ---------------------------------------------------------------------------
// Format PLC1: magic, u32 N, u32 R, f64 tau, N*R f32 LE params.
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> serialize_curve_bank(const CurveBank& bank) {
    io::Writer w;
    w.magic("PLC1");
    w.u32(static_cast<std::uint32_t>(bank.n_curves));
    w.u32(static_cast<std::uint32_t>(bank.points));
    w.f64(bank.tau);
    w.f32_array(bank.params);
    return std::move(w.buf);
}

inline CurveBank deserialize_curve_bank(const std::vector<std::uint8_t>& buf,
                                        const std::string& name) {
    io::Reader r(buf, name);
    r.expect_magic("PLC1");
    CurveBank bank;
    bank.n_curves = static_cast<int>(r.u32());
    bank.points = static_cast<int>(r.u32());
    bank.tau = r.f64();
    require(bank.n_curves >= 1 && bank.points >= 2, "curve bank file has bad dimensions: " + name);
    bank.params = r.f32_array(static_cast<std::size_t>(bank.n_curves) * bank.points);
    return bank;
}

inline void save_curve_bank(const CurveBank& bank, const std::string& path) {
    io::write_file(path, serialize_curve_bank(bank));
}

inline CurveBank load_curve_bank(const std::string& path) {
    return deserialize_curve_bank(io::read_file(path), path);
}

} // namespace graspall::plc
