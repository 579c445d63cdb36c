#pragma once

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "error.hpp"
#include "io.hpp"

namespace graspall {

struct FeatureVector {
    std::vector<double> data;

    FeatureVector() = default;
    explicit FeatureVector(int dim, double v = 0.0) : data(static_cast<std::size_t>(dim), v) {}

    int dim() const { return static_cast<int>(data.size()); }
};

/// N feature slots keyed by curve id, written with an exponential moving
/// average. The first write to a slot is a direct copy; blending a fresh
/// feature with the zero vector would bias early training.
struct ResponseLibrary {
    int slots = 0;
    int dim = 0;
    double alpha = 0.05;
    std::vector<double> data;              // slots * dim
    std::vector<std::uint8_t> initialized; // per slot

    ResponseLibrary() = default;
    ResponseLibrary(int n, int d, double a = 0.05)
        : slots(n), dim(d), alpha(a),
          data(static_cast<std::size_t>(n) * d, 0.0), initialized(n, 0) {
        require(n >= 1 && d >= 1, "ResponseLibrary: need slots >= 1 and dim >= 1");
        require(a > 0.0 && a < 1.0, "ResponseLibrary: alpha must be in (0,1)");
    }

    const double* slot_ptr(int s) const { return &data[static_cast<std::size_t>(s) * dim]; }
    double* slot_ptr(int s) { return &data[static_cast<std::size_t>(s) * dim]; }

    int initialized_count() const {
        int n = 0;
        for (auto b : initialized) n += (b != 0);
        return n;
    }
};

inline void ema_update(ResponseLibrary& lib, int slot, const FeatureVector& f) {
    require(slot >= 0 && slot < lib.slots, "ema_update: slot out of range");
    if (f.dim() != lib.dim)
        throw InvalidArgument("ema_update: feature dim " + std::to_string(f.dim()) +
                              " != library dim " + std::to_string(lib.dim));
    double* s = lib.slot_ptr(slot);
    if (!lib.initialized[slot]) {
        for (int i = 0; i < lib.dim; ++i) s[i] = f.data[i];
        lib.initialized[slot] = 1;
    } else {
        for (int i = 0; i < lib.dim; ++i) s[i] = (1.0 - lib.alpha) * s[i] + lib.alpha * f.data[i];
    }
}

inline FeatureVector read_slot(const ResponseLibrary& lib, int slot) {
    require(slot >= 0 && slot < lib.slots, "read_slot: slot out of range");
    if (!lib.initialized[slot])
        throw InvalidArgument("read_slot: slot " + std::to_string(slot) +
                              " was never written (illumination level unseen in training)");
    FeatureVector f(lib.dim);
    const double* s = lib.slot_ptr(slot);
    for (int i = 0; i < lib.dim; ++i) f.data[i] = s[i];
    return f;
}

/// Inference fallback: neighboring curve ids represent neighboring
/// illumination levels, so an unseen slot borrows the nearest seen one.
/// Ties go to the smaller index.
inline FeatureVector read_slot_nearest(const ResponseLibrary& lib, int slot) {
    require(slot >= 0 && slot < lib.slots, "read_slot_nearest: slot out of range");
    if (lib.initialized[slot]) return read_slot(lib, slot);
    int best = -1;
    for (int s = 0; s < lib.slots; ++s) {
        if (!lib.initialized[s]) continue;
        if (best < 0 || std::abs(s - slot) < std::abs(best - slot)) best = s;
    }
    if (best < 0) throw InvalidArgument("read_slot_nearest: library is empty");
    return read_slot(lib, best);
}

inline FeatureVector read_soft(const ResponseLibrary& lib, const std::vector<double>& weights) {
    require(static_cast<int>(weights.size()) == lib.slots, "read_soft: weight count != slots");
    double sum = 0.0;
    for (double w : weights) {
        require(w >= -1e-9, "read_soft: negative weight");
        sum += w;
    }
    require(std::abs(sum - 1.0) <= 1e-6, "read_soft: weights must sum to 1");
    FeatureVector out(lib.dim);
    for (int s = 0; s < lib.slots; ++s) {
        if (weights[s] == 0.0) continue;
        if (!lib.initialized[s])
            throw InvalidArgument("read_soft: nonzero weight on uninitialized slot " +
                                  std::to_string(s));
        const double* p = lib.slot_ptr(s);
        for (int i = 0; i < lib.dim; ++i) out.data[i] += weights[s] * p[i];
    }
    return out;
}

// Format RLB1: magic, u32 N, u32 dim, f64 alpha, N init flags, N*dim f32 LE.
inline std::vector<std::uint8_t> serialize_library(const ResponseLibrary& lib) {
    io::Writer w;
    w.magic("RLB1");
    w.u32(static_cast<std::uint32_t>(lib.slots));
    w.u32(static_cast<std::uint32_t>(lib.dim));
    w.f64(lib.alpha);
    for (auto b : lib.initialized) w.u8(b);
    w.f32_array(lib.data);
    return std::move(w.buf);
}

inline ResponseLibrary deserialize_library(const std::vector<std::uint8_t>& buf,
                                           const std::string& name) {
    io::Reader r(buf, name);
    r.expect_magic("RLB1");
    int slots = static_cast<int>(r.u32());
    int dim = static_cast<int>(r.u32());
    double alpha = r.f64();
    ResponseLibrary lib(slots, dim, alpha);
    for (int i = 0; i < slots; ++i) lib.initialized[i] = r.u8();
    lib.data = r.f32_array(static_cast<std::size_t>(slots) * dim);
    return lib;
}

inline void save_library(const ResponseLibrary& lib, const std::string& path) {
    io::write_file(path, serialize_library(lib));
}

inline ResponseLibrary load_library(const std::string& path) {
    return deserialize_library(io::read_file(path), path);
}

} // namespace graspall
