#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "error.hpp"
#include "types.hpp"

namespace graspall::io {

// ---------------------------------------------------------------------------
// Raw files
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    std::streamoff n = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(n));
    if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), n);
    if (!f) throw DataError("short read: " + path);
    return buf;
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& buf) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot create file: " + path);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError("short write: " + path);
}

// ---------------------------------------------------------------------------
// Little-endian scalar packing (model/library/checkpoint formats)
// ---------------------------------------------------------------------------

struct Writer {
    std::vector<std::uint8_t> buf;

    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void magic(const char tag[5]) { bytes(tag, 4); }
    void u32(std::uint32_t v) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                             static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
        bytes(b, 4);
    }
    void u8(std::uint8_t v) { buf.push_back(v); }
    void f32(float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        u32(u);
    }
    void f64(double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        u32(static_cast<std::uint32_t>(u));
        u32(static_cast<std::uint32_t>(u >> 32));
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    /// Doubles are stored as f32 on disk; formats are declared f32 little-endian.
    void f32_array(const std::vector<double>& v) {
        for (double x : v) f32(static_cast<float>(x));
    }
};

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;
    std::string name; // for error messages

    Reader(const std::vector<std::uint8_t>& b, std::string n) : buf(b), name(std::move(n)) {}

    void bytes(void* p, std::size_t n) {
        if (pos + n > buf.size()) throw DataError("truncated file: " + name);
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    void expect_magic(const char tag[5]) {
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, tag, 4) != 0) throw DataError("bad magic in " + name + ", expected " + tag);
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::uint8_t u8() {
        std::uint8_t b;
        bytes(&b, 1);
        return b;
    }
    float f32() {
        std::uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    double f64() {
        std::uint64_t lo = u32();
        std::uint64_t hi = u32();
        std::uint64_t u = lo | (hi << 32);
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    std::string str() {
        std::uint32_t n = u32();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    std::vector<double> f32_array(std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = static_cast<double>(f32());
        return v;
    }
    bool done() const { return pos == buf.size(); }
};

// ---------------------------------------------------------------------------
// PNG, 8-bit gray (color type 0) and RGB (color type 2), no interlace.
// Enough for the corpus formats; not a general-purpose decoder.
// ---------------------------------------------------------------------------

struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0; // 1 or 3
    std::vector<std::uint8_t> data;
};

namespace detail {

inline void put_u32_be(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(static_cast<std::uint8_t>(x >> 24));
    v.push_back(static_cast<std::uint8_t>(x >> 16));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x));
}

inline std::uint32_t get_u32_be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[5],
                         const std::vector<std::uint8_t>& payload) {
    put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
    std::size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    std::uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + payload.size()));
    put_u32_be(out, crc);
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

} // namespace detail

inline void write_png(const std::string& path, const PngImage& img) {
    require(img.channels == 1 || img.channels == 3, "write_png: channels must be 1 or 3");
    require(img.data.size() == static_cast<std::size_t>(img.width) * img.height * img.channels,
            "write_png: data size mismatch");
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;

    // Filter type 0 on every scanline; determinism matters more than ratio here.
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * img.height);
    for (int r = 0; r < img.height; ++r) {
        raw.push_back(0);
        raw.insert(raw.end(), img.data.begin() + r * stride, img.data.begin() + (r + 1) * stride);
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> z(zlen);
    if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw DataError("write_png: deflate failed for " + path);
    z.resize(zlen);

    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<std::uint8_t> ihdr;
    detail::put_u32_be(ihdr, static_cast<std::uint32_t>(img.width));
    detail::put_u32_be(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);                                  // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);          // color type
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    detail::append_chunk(out, "IHDR", ihdr);
    detail::append_chunk(out, "IDAT", z);
    detail::append_chunk(out, "IEND", {});
    write_file(path, out);
}

inline PngImage read_png(const std::string& path) {
    auto buf = read_file(path);
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
        throw DataError("not a PNG file: " + path);

    PngImage img;
    int bit_depth = 0, color_type = -1;
    std::vector<std::uint8_t> idat;
    std::size_t p = 8;
    while (p + 8 <= buf.size()) {
        std::uint32_t len = detail::get_u32_be(&buf[p]);
        if (p + 12 + len > buf.size()) throw DataError("truncated PNG chunk: " + path);
        const char* type = reinterpret_cast<const char*>(&buf[p + 4]);
        const std::uint8_t* payload = &buf[p + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            img.width = static_cast<int>(detail::get_u32_be(payload));
            img.height = static_cast<int>(detail::get_u32_be(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) throw DataError("interlaced PNG unsupported: " + path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        p += 12 + len;
    }
    if (bit_depth != 8 || (color_type != 0 && color_type != 2))
        throw DataError("PNG must be 8-bit gray or RGB: " + path);
    img.channels = color_type == 0 ? 1 : 3;

    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    std::vector<std::uint8_t> raw((stride + 1) * img.height);
    uLongf rawlen = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &rawlen, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        rawlen != raw.size())
        throw DataError("PNG inflate failed: " + path);

    img.data.resize(stride * img.height);
    const int bpp = img.channels;
    std::vector<std::uint8_t> prior(stride, 0);
    for (int r = 0; r < img.height; ++r) {
        const std::uint8_t filter = raw[r * (stride + 1)];
        const std::uint8_t* src = &raw[r * (stride + 1) + 1];
        std::uint8_t* dst = &img.data[r * stride];
        for (std::size_t i = 0; i < stride; ++i) {
            int a = i >= static_cast<std::size_t>(bpp) ? dst[i - bpp] : 0;
            int b = prior[i];
            int c = i >= static_cast<std::size_t>(bpp) ? prior[i - bpp] : 0;
            int x = src[i];
            switch (filter) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += b; break;
                case 3: x += (a + b) / 2; break;
                case 4: x += detail::paeth(a, b, c); break;
                default: throw DataError("unknown PNG filter: " + path);
            }
            dst[i] = static_cast<std::uint8_t>(x & 0xff);
        }
        std::memcpy(prior.data(), dst, stride);
    }
    return img;
}

// ---------------------------------------------------------------------------
// Conversions between library types and 8-bit buffers
// ---------------------------------------------------------------------------

inline std::uint8_t quantize8(double v) {
    double x = v * 255.0 + 0.5;
    if (x < 0.0) x = 0.0;
    if (x > 255.0) x = 255.0;
    return static_cast<std::uint8_t>(x);
}

inline void write_rgb_png(const std::string& path, const RgbImage& img) {
    PngImage p;
    p.width = img.width;
    p.height = img.height;
    p.channels = 3;
    p.data.resize(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) p.data[i] = quantize8(img.data[i]);
    write_png(path, p);
}

inline RgbImage read_rgb_png(const std::string& path) {
    PngImage p = read_png(path);
    RgbImage img(p.width, p.height);
    if (p.channels == 3) {
        for (std::size_t i = 0; i < p.data.size(); ++i) img.data[i] = p.data[i] / 255.0;
    } else {
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            double v = p.data[i] / 255.0;
            img.data[3 * i] = img.data[3 * i + 1] = img.data[3 * i + 2] = v;
        }
    }
    return img;
}

inline void write_mask_png(const std::string& path, const SemanticMask& mask) {
    PngImage p;
    p.width = mask.width;
    p.height = mask.height;
    p.channels = 1;
    p.data = mask.classes;
    write_png(path, p);
}

inline SemanticMask read_mask_png(const std::string& path) {
    PngImage p = read_png(path);
    if (p.channels != 1) throw DataError("mask PNG must be single channel: " + path);
    SemanticMask m(p.width, p.height);
    m.classes = p.data;
    return m;
}

// ---------------------------------------------------------------------------
// 16-bit binary PGM, millimeters, 0 = hole
// ---------------------------------------------------------------------------

inline void write_depth_pgm(const std::string& path, const DepthMap& d) {
    std::vector<std::uint8_t> out;
    std::string hdr = "P5\n" + std::to_string(d.width) + " " + std::to_string(d.height) + "\n65535\n";
    out.insert(out.end(), hdr.begin(), hdr.end());
    for (int i = 0; i < d.pixels(); ++i) {
        std::uint32_t mm = 0;
        if (!d.is_hole(i)) {
            double v = d.depth[i] * 1000.0 + 0.5;
            if (v < 0.0) v = 0.0;
            if (v > 65535.0) v = 65535.0;
            mm = static_cast<std::uint32_t>(v);
        }
        out.push_back(static_cast<std::uint8_t>(mm >> 8)); // big-endian per Netpbm
        out.push_back(static_cast<std::uint8_t>(mm & 0xff));
    }
    write_file(path, out);
}

inline DepthMap read_depth_pgm(const std::string& path) {
    auto buf = read_file(path);
    std::size_t p = 0;
    auto token = [&]() -> std::string {
        while (p < buf.size()) {
            if (buf[p] == '#') {
                while (p < buf.size() && buf[p] != '\n') ++p;
            } else if (std::isspace(buf[p])) {
                ++p;
            } else {
                break;
            }
        }
        std::size_t s = p;
        while (p < buf.size() && !std::isspace(buf[p])) ++p;
        return std::string(buf.begin() + s, buf.begin() + p);
    };
    if (token() != "P5") throw DataError("not a binary PGM: " + path);
    int w = std::stoi(token());
    int h = std::stoi(token());
    int maxval = std::stoi(token());
    if (p >= buf.size() || !std::isspace(buf[p])) throw DataError("bad PGM header: " + path);
    ++p; // single whitespace separates header from samples

    DepthMap d(w, h, 0.0, false);
    const bool wide = maxval > 255;
    const std::size_t need = static_cast<std::size_t>(w) * h * (wide ? 2 : 1);
    if (buf.size() - p < need) throw DataError("truncated PGM: " + path);
    for (int i = 0; i < w * h; ++i) {
        std::uint32_t mm = wide ? (static_cast<std::uint32_t>(buf[p + 2 * i]) << 8) | buf[p + 2 * i + 1]
                                : buf[p + i];
        if (mm > 0) {
            d.depth[i] = mm / 1000.0;
            d.valid[i] = 1;
        }
    }
    return d;
}

} // namespace graspall::io
