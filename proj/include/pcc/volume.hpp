#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "pcc/errors.hpp"

namespace pcc {

// Raw 3D scalar field. Layout is z-major: the linear index is
// (z*H + y)*W + x, i.e. x varies fastest and z slowest.
struct Volume {
    std::size_t h = 0, w = 0, d = 0;
    std::vector<double> voxels;

    Volume() = default;
    Volume(std::size_t h_, std::size_t w_, std::size_t d_, double fill = 0.0)
        : h(h_), w(w_), d(d_), voxels(h_ * w_ * d_, fill) {}

    std::size_t size() const { return h * w * d; }
    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return (z * h + y) * w + x;
    }
    double& at(std::size_t x, std::size_t y, std::size_t z) { return voxels[index(x, y, z)]; }
    double at(std::size_t x, std::size_t y, std::size_t z) const { return voxels[index(x, y, z)]; }

    bool same_shape(const Volume& o) const { return h == o.h && w == o.w && d == o.d; }
};

// ---------------------------------------------------------------------------
// PCCVOL v1 file format.
//
// One ASCII header line "PCCVOL v1 <H> <W> <D>\n" followed by H*W*D 32-bit
// little-endian IEEE floats in z-major order. Values are narrowed to float
// on write and widened back on read; the float32 payload round-trips
// bit-exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_f32_le(std::ostream& os, float v) {
    static_assert(sizeof(float) == 4);
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    const unsigned char raw[4] = {
        static_cast<unsigned char>(bits & 0xff), static_cast<unsigned char>((bits >> 8) & 0xff),
        static_cast<unsigned char>((bits >> 16) & 0xff),
        static_cast<unsigned char>((bits >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(raw), 4);
}

inline float read_f32_le(std::istream& is) {
    unsigned char raw[4];
    is.read(reinterpret_cast<char*>(raw), 4);
    std::uint32_t bits = static_cast<std::uint32_t>(raw[0]) |
                         (static_cast<std::uint32_t>(raw[1]) << 8) |
                         (static_cast<std::uint32_t>(raw[2]) << 16) |
                         (static_cast<std::uint32_t>(raw[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

inline void write_volume(const std::string& path, const Volume& vol) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << "PCCVOL v1 " << vol.h << " " << vol.w << " " << vol.d << "\n";
    for (double v : vol.voxels) detail::write_f32_le(os, static_cast<float>(v));
    if (!os) throw io_error("write failed: " + path);
}

inline Volume read_volume(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    std::string magic, version;
    std::size_t h = 0, w = 0, d = 0;
    if (!(is >> magic >> version >> h >> w >> d) || magic != "PCCVOL" || version != "v1")
        throw io_error(path + ": malformed PCCVOL header (byte offset 0)");
    if (is.get() != '\n') throw io_error(path + ": header not newline-terminated");
    if (h == 0 || w == 0 || d == 0 ||
        h > std::numeric_limits<std::uint32_t>::max() / w / d)
        throw io_error(path + ": implausible extents in header");
    Volume vol(h, w, d);
    const std::size_t header_end = static_cast<std::size_t>(is.tellg());
    for (std::size_t i = 0; i < vol.size(); ++i) {
        vol.voxels[i] = static_cast<double>(detail::read_f32_le(is));
        if (!is)
            throw io_error(path + ": truncated payload at byte offset " +
                           std::to_string(header_end + 4 * i));
        if (!std::isfinite(vol.voxels[i]))
            throw io_error(path + ": non-finite voxel at byte offset " +
                           std::to_string(header_end + 4 * i));
    }
    return vol;
}

}  // namespace pcc
