#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pcc/errors.hpp"
#include "pcc/rng.hpp"
#include "pcc/volume.hpp"

namespace pcc {

// ---------------------------------------------------------------------------
// Parametric phantom generation (stands in for an external brain-phantom
// database): a constant background plus additive smooth ellipsoidal
// structures, Gaussian-blurred, all nonnegative and deterministic per seed.
// ---------------------------------------------------------------------------

struct PhantomSpec {
    std::array<std::size_t, 3> shape{64, 64, 64};  // (H, W, D)
    std::uint64_t seed = 0;
    std::size_t ellipsoids = 6;
    double intensity_lo = 0.4;
    double intensity_hi = 1.0;
    double background = 0.2;
    double blur_width = 1.0;  // Gaussian sigma in voxels; 0 disables blurring

    void validate() const {
        if (shape[0] < 8 || shape[1] < 8 || shape[2] < 8)
            throw contract_error("phantom: extents must be >= 8");
        if (intensity_lo < 0.0 || intensity_hi < intensity_lo || background < 0.0)
            throw contract_error("phantom: intensities must be nonnegative and ordered");
        if (blur_width < 0.0) throw contract_error("phantom: blur width must be nonnegative");
    }
};

struct Ellipsoid {
    double cx, cy, cz;    // center, voxel units
    double rx, ry, rz;    // semi-axes, voxel units
    double intensity;
};

namespace detail {

// Separable Gaussian blur with a kernel truncated at 3 sigma. Renormalized
// per position at the borders so constants stay constant.
inline void gaussian_blur_axis(std::vector<double>& v, std::size_t h, std::size_t w,
                               std::size_t d, int axis, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    for (int i = -radius; i <= radius; ++i)
        kernel[static_cast<std::size_t>(i + radius)] =
            std::exp(-0.5 * (static_cast<double>(i) / sigma) * (static_cast<double>(i) / sigma));
    std::vector<double> out(v.size());
    const std::size_t extents[3] = {w, h, d};
    const std::size_t ext = extents[axis];
    auto index = [&](std::size_t x, std::size_t y, std::size_t z) { return (z * h + y) * w + x; };
    for (std::size_t z = 0; z < d; ++z)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t pos[3] = {x, y, z};
                double acc = 0.0, wsum = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(pos[axis]) + i;
                    if (p < 0 || p >= static_cast<std::ptrdiff_t>(ext)) continue;
                    const double kw = kernel[static_cast<std::size_t>(i + radius)];
                    std::size_t xi = x, yi = y, zi = z;
                    if (axis == 0) xi = static_cast<std::size_t>(p);
                    if (axis == 1) yi = static_cast<std::size_t>(p);
                    if (axis == 2) zi = static_cast<std::size_t>(p);
                    acc += kw * v[index(xi, yi, zi)];
                    wsum += kw;
                }
                out[index(x, y, z)] = acc / wsum;
            }
    v.swap(out);
}

}  // namespace detail

// Deterministic synthetic ground-truth volume. When parts is non-null the
// drawn ellipsoid parameters are reported for geometric checks.
inline Volume gen_phantom(const PhantomSpec& spec, std::vector<Ellipsoid>* parts = nullptr) {
    spec.validate();
    const std::size_t h = spec.shape[0], w = spec.shape[1], d = spec.shape[2];
    Volume vol(h, w, d, spec.background);
    rng::Stream s(spec.seed, 3);
    for (std::size_t e = 0; e < spec.ellipsoids; ++e) {
        Ellipsoid el;
        el.cx = s.uniform(0.2, 0.8) * static_cast<double>(w - 1);
        el.cy = s.uniform(0.2, 0.8) * static_cast<double>(h - 1);
        el.cz = s.uniform(0.2, 0.8) * static_cast<double>(d - 1);
        el.rx = s.uniform(0.08, 0.25) * static_cast<double>(w);
        el.ry = s.uniform(0.08, 0.25) * static_cast<double>(h);
        el.rz = s.uniform(0.08, 0.25) * static_cast<double>(d);
        el.intensity = s.uniform(spec.intensity_lo, spec.intensity_hi);
        if (parts) parts->push_back(el);
        for (std::size_t z = 0; z < d; ++z)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double ux = (static_cast<double>(x) - el.cx) / el.rx;
                    const double uy = (static_cast<double>(y) - el.cy) / el.ry;
                    const double uz = (static_cast<double>(z) - el.cz) / el.rz;
                    const double r2 = ux * ux + uy * uy + uz * uz;
                    if (r2 < 1.0) vol.at(x, y, z) += el.intensity * (1.0 - r2);
                }
    }
    if (spec.blur_width > 0.0)
        for (int axis = 0; axis < 3; ++axis)
            detail::gaussian_blur_axis(vol.voxels, h, w, d, axis, spec.blur_width);
    return vol;
}

// ---------------------------------------------------------------------------
// Low-dose degradation: voxel-wise Poisson count thinning. Each voxel draws
// counts at mean dose_fraction * scale * value and is divided back, giving
// an unbiased but noisier estimate; scale sets counts per unit intensity.
// ---------------------------------------------------------------------------

inline constexpr double kDefaultCountScale = 50.0;

inline Volume simulate_low_dose(const Volume& spet, double dose_fraction, std::uint64_t seed,
                                double scale = kDefaultCountScale) {
    if (!(dose_fraction > 0.0 && dose_fraction <= 1.0))
        throw contract_error("simulate_low_dose: dose fraction must be in (0, 1]");
    if (!(scale > 0.0)) throw contract_error("simulate_low_dose: scale must be positive");
    Volume out(spet.h, spet.w, spet.d);
    const double counts_per_unit = dose_fraction * scale;
    for (std::size_t i = 0; i < spet.size(); ++i) {
        const double v = spet.voxels[i];
        if (v < 0.0)
            throw contract_error("simulate_low_dose: negative voxel at index " +
                                 std::to_string(i));
        rng::Stream s(seed, 0x10000000ull + i);  // one substream per voxel
        out.voxels[i] =
            static_cast<double>(rng::poisson(s, counts_per_unit * v)) / counts_per_unit;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Patch extraction / overlap-averaged reassembly
// ---------------------------------------------------------------------------

struct PatchGrid {
    std::array<std::size_t, 3> volume_shape{};        // (H, W, D)
    std::size_t patch_side = 0;
    std::size_t stride = 0;
    std::vector<std::array<std::size_t, 3>> origins;  // (x, y, z), z-major order
};

namespace detail {

inline std::string divisor_hint(std::size_t span) {
    std::string hint;
    for (std::size_t s = 1; s <= span; ++s)
        if (span % s == 0) hint += (hint.empty() ? "" : ", ") + std::to_string(s);
    return hint;
}

}  // namespace detail

// Origins at every stride multiple per axis, inclusive of the final aligned
// position; (extent - patch_side) must divide evenly by the stride.
inline PatchGrid plan_patches(const Volume& vol, std::size_t patch_side, std::size_t stride) {
    if (patch_side == 0 || stride == 0)
        throw contract_error("plan_patches: side and stride must be positive");
    if (patch_side > vol.h || patch_side > vol.w || patch_side > vol.d)
        throw contract_error("plan_patches: patch side exceeds a volume extent");
    const std::size_t extents[3] = {vol.w, vol.h, vol.d};
    for (std::size_t a = 0; a < 3; ++a) {
        const std::size_t span = extents[a] - patch_side;
        if (span % stride != 0)
            throw contract_error("plan_patches: (extent - side) = " + std::to_string(span) +
                                 " not divisible by stride " + std::to_string(stride) +
                                 "; admissible strides: " + detail::divisor_hint(span));
    }
    PatchGrid grid;
    grid.volume_shape = {vol.h, vol.w, vol.d};
    grid.patch_side = patch_side;
    grid.stride = stride;
    const std::size_t nx = (vol.w - patch_side) / stride + 1;
    const std::size_t ny = (vol.h - patch_side) / stride + 1;
    const std::size_t nz = (vol.d - patch_side) / stride + 1;
    for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x)
                grid.origins.push_back({x * stride, y * stride, z * stride});
    return grid;
}

inline Volume extract_patch(const Volume& vol, const std::array<std::size_t, 3>& origin,
                            std::size_t side) {
    Volume patch(side, side, side);
    for (std::size_t z = 0; z < side; ++z)
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x)
                patch.at(x, y, z) = vol.at(origin[0] + x, origin[1] + y, origin[2] + z);
    return patch;
}

inline std::vector<Volume> extract_patches(const Volume& vol, const PatchGrid& grid) {
    std::vector<Volume> patches;
    patches.reserve(grid.origins.size());
    for (const auto& origin : grid.origins) patches.push_back(extract_patch(vol, origin, grid.patch_side));
    return patches;
}

// Overlap-averaged recomposition: each voxel is the mean of all covering
// patches. Voxels whose covering values are bitwise identical are written
// through unchanged, which makes extract -> assemble an exact identity on
// unmodified patches (a plain sum/count mean would round counts like 3).
inline Volume assemble_patches(const PatchGrid& grid, const std::vector<Volume>& patches) {
    if (patches.size() != grid.origins.size())
        throw contract_error("assemble_patches: expected " + std::to_string(grid.origins.size()) +
                             " patches, got " + std::to_string(patches.size()));
    Volume out(grid.volume_shape[0], grid.volume_shape[1], grid.volume_shape[2]);
    const std::size_t n = out.size();
    std::vector<double> sum(n, 0.0), first(n, 0.0);
    std::vector<std::uint32_t> count(n, 0);
    std::vector<std::uint8_t> uniform(n, 1);
    const std::size_t side = grid.patch_side;
    for (std::size_t p = 0; p < patches.size(); ++p) {
        const Volume& patch = patches[p];
        if (patch.h != side || patch.w != side || patch.d != side)
            throw contract_error("assemble_patches: patch " + std::to_string(p) +
                                 " has the wrong shape");
        const auto& origin = grid.origins[p];
        for (std::size_t z = 0; z < side; ++z)
            for (std::size_t y = 0; y < side; ++y)
                for (std::size_t x = 0; x < side; ++x) {
                    const std::size_t i =
                        out.index(origin[0] + x, origin[1] + y, origin[2] + z);
                    const double v = patch.at(x, y, z);
                    if (count[i] == 0)
                        first[i] = v;
                    else if (v != first[i])
                        uniform[i] = 0;
                    sum[i] += v;
                    ++count[i];
                }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (count[i] == 0) throw contract_error("assemble_patches: grid does not cover the volume");
        out.voxels[i] = uniform[i] ? first[i] : sum[i] / static_cast<double>(count[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset manifest: one line per subject, "<spet_path>\t<lpet_path>".
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string spet_path;
    std::string lpet_path;
};

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path);
    for (const ManifestEntry& e : entries) os << e.spet_path << "\t" << e.lpet_path << "\n";
    if (!os) throw io_error("write failed: " + path);
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open: " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw io_error(path + ": line " + std::to_string(entries.size() + 1) +
                           " is not tab-separated");
        entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return entries;
}

}  // namespace pcc
