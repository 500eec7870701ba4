#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pcc/errors.hpp"
#include "pcc/tensor.hpp"
#include "pcc/volume.hpp"

namespace pcc {

// A volume expressed as n feature columns plus a parallel 3 x n coordinate
// array (row 0 = x, row 1 = y, row 2 = z, each normalized to [0,1]).
// Coordinates are metadata: linear layers never touch them; only the
// reducer/expander rewrite them.
struct PointSet {
    Tensor features;              // d x n, lives on a tape
    std::vector<double> coords;   // 3 x n row-major
    std::optional<std::array<std::size_t, 3>> grid_shape;  // (H, W, D) when on a full lattice

    std::size_t count() const { return features.cols(); }
    std::size_t dim() const { return features.rows(); }
};

namespace detail {

inline double norm_coord(std::size_t i, std::size_t extent) {
    // Single-extent axes map to 0 (the 0/0 -> 0 convention).
    return extent > 1 ? static_cast<double>(i) / static_cast<double>(extent - 1) : 0.0;
}

}  // namespace detail

// Lattice coordinates of a volume's voxels in z-major order, 3 x n.
inline std::vector<double> lattice_coords(std::size_t h, std::size_t w, std::size_t d) {
    const std::size_t n = h * w * d;
    std::vector<double> coords(3 * n);
    std::size_t i = 0;
    for (std::size_t z = 0; z < d; ++z)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x, ++i) {
                coords[0 * n + i] = detail::norm_coord(x, w);
                coords[1 * n + i] = detail::norm_coord(y, h);
                coords[2 * n + i] = detail::norm_coord(z, d);
            }
    return coords;
}

// Converts one or more same-shape volumes (channels) into a point set: the
// raw per-point vector is the C intensities followed by the 3 normalized
// coordinates, then linearly embedded by (embed_w, embed_b).
inline PointSet construct_points(Tape& tape, const std::vector<const Volume*>& channels,
                                 const Tensor& embed_w, const Tensor& embed_b) {
    if (channels.empty()) throw contract_error("construct_points: no input channels");
    const Volume& v0 = *channels[0];
    const std::size_t n = v0.size();
    const std::size_t c = channels.size();
    for (const Volume* v : channels)
        if (!v->same_shape(v0)) throw contract_error("construct_points: channel shape mismatch");
    if (embed_w.cols() != c + 3)
        throw shape_error("construct_points: embedding expects " + std::to_string(c + 3) +
                          " input channels, weight has " + std::to_string(embed_w.cols()));
    std::vector<double> coords = lattice_coords(v0.h, v0.w, v0.d);
    std::vector<double> raw((c + 3) * n);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < n; ++i) raw[ch * n + i] = channels[ch]->voxels[i];
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t i = 0; i < n; ++i) raw[(c + r) * n + i] = coords[r * n + i];
    Tensor raw_t = tape.constant(Shape{c + 3, n}, std::move(raw));
    PointSet ps;
    ps.features = linear(embed_w, raw_t, embed_b);
    ps.coords = std::move(coords);
    ps.grid_shape = {{v0.h, v0.w, v0.d}};
    return ps;
}

inline PointSet construct_points(Tape& tape, const Volume& vol, const Tensor& embed_w,
                                 const Tensor& embed_b) {
    return construct_points(tape, std::vector<const Volume*>{&vol}, embed_w, embed_b);
}

// Linear head mapping each point's features to one scalar, as a 1 x n row in
// lattice order. The differentiable half of points reversion.
inline Tensor revert_to_row(const PointSet& points, const Tensor& head_w, const Tensor& head_b) {
    if (head_w.rows() != 1) throw shape_error("revert_to_row: head must map to one channel");
    return linear(head_w, points.features, head_b);
}

// Writes a 1 x n row back onto the originating voxel lattice.
inline Volume row_to_volume(const std::vector<double>& row,
                            const std::array<std::size_t, 3>& grid) {
    Volume out(grid[0], grid[1], grid[2]);
    if (row.size() != out.size()) throw contract_error("row_to_volume: count mismatch");
    out.voxels = row;
    return out;
}

inline Volume revert_points(const PointSet& points, const Tensor& head_w, const Tensor& head_b) {
    if (!points.grid_shape)
        throw contract_error("revert_points: point set has no originating grid");
    const auto& g = *points.grid_shape;
    if (points.count() != g[0] * g[1] * g[2])
        throw contract_error("revert_points: point count does not fill the grid");
    return row_to_volume(revert_to_row(points, head_w, head_b).values(), g);
}

// ---------------------------------------------------------------------------
// Anchor lattice
// ---------------------------------------------------------------------------

// A^3 coordinates forming an even lattice over [0,1]^3, each at the center
// of its grid cell: (i + 0.5)/A per axis, enumerated z-major. Independent of
// point features.
inline std::vector<double> anchor_grid(std::size_t n_points, std::size_t per_axis) {
    if (per_axis == 0) throw contract_error("anchor_grid: per_axis must be positive");
    const std::size_t a3 = per_axis * per_axis * per_axis;
    if (a3 > n_points)
        throw contract_error("anchor_grid: " + std::to_string(a3) + " anchors exceed " +
                             std::to_string(n_points) + " points");
    std::vector<double> coords(3 * a3);
    const double inv = 1.0 / static_cast<double>(per_axis);
    std::size_t i = 0;
    for (std::size_t z = 0; z < per_axis; ++z)
        for (std::size_t y = 0; y < per_axis; ++y)
            for (std::size_t x = 0; x < per_axis; ++x, ++i) {
                coords[0 * a3 + i] = (static_cast<double>(x) + 0.5) * inv;
                coords[1 * a3 + i] = (static_cast<double>(y) + 0.5) * inv;
                coords[2 * a3 + i] = (static_cast<double>(z) + 0.5) * inv;
            }
    return coords;
}

// ---------------------------------------------------------------------------
// Exact k-nearest-neighbor search
// ---------------------------------------------------------------------------

namespace detail {

// Fixed-size best-k list ordered by (distance^2, index); identical ordering
// to a lexicographic sort of all candidates, so ties resolve to the lowest
// point index exactly as the brute-force oracle does.
struct BestK {
    std::size_t k;
    std::vector<double> d2;
    std::vector<std::size_t> idx;

    explicit BestK(std::size_t k_) : k(k_) {
        d2.reserve(k);
        idx.reserve(k);
    }

    bool full() const { return d2.size() == k; }
    double worst_d2() const { return d2.back(); }

    bool better_than_worst(double cand_d2, std::size_t cand_idx) const {
        if (!full()) return true;
        if (cand_d2 != worst_d2()) return cand_d2 < worst_d2();
        return cand_idx < idx.back();
    }

    void offer(double cand_d2, std::size_t cand_idx) {
        if (!better_than_worst(cand_d2, cand_idx)) return;
        std::size_t pos = d2.size();
        if (full()) {
            d2.pop_back();
            idx.pop_back();
            pos = d2.size();
        }
        while (pos > 0 &&
               (cand_d2 < d2[pos - 1] || (cand_d2 == d2[pos - 1] && cand_idx < idx[pos - 1])))
            --pos;
        d2.insert(d2.begin() + static_cast<std::ptrdiff_t>(pos), cand_d2);
        idx.insert(idx.begin() + static_cast<std::ptrdiff_t>(pos), cand_idx);
    }
};

inline double dist2(const double* px, const double* py, const double* pz, std::size_t i,
                    double qx, double qy, double qz) {
    const double dx = px[i] - qx;
    const double dy = py[i] - qy;
    const double dz = pz[i] - qz;
    return dx * dx + dy * dy + dz * dz;
}

}  // namespace detail

// Per query, the indices of the k points with smallest Euclidean distance;
// ties broken by ascending point index. Exact search over a uniform-grid
// spatial hash with ring-by-ring expansion, so results match an exhaustive
// scan bit for bit.
inline IndexMatrix knn_indices(const std::vector<double>& coords, std::size_t n,
                               const std::vector<double>& queries, std::size_t q,
                               std::size_t k) {
    if (k == 0) throw contract_error("knn_indices: k must be positive");
    if (k > n)
        throw contract_error("knn_indices: k = " + std::to_string(k) + " exceeds n = " +
                             std::to_string(n));
    if (coords.size() != 3 * n || queries.size() != 3 * q)
        throw shape_error("knn_indices: coordinate array size mismatch");
    const double* px = &coords[0];
    const double* py = &coords[n];
    const double* pz = &coords[2 * n];

    // Bucket points into a uniform grid sized to a handful of points per cell.
    double lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
        const double* p = &coords[static_cast<std::size_t>(a) * n];
        lo[a] = *std::min_element(p, p + n);
        hi[a] = *std::max_element(p, p + n);
    }
    const std::size_t target = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::cbrt(static_cast<double>(n) / 2.0)));
    std::size_t cells[3];
    double ext[3];
    double min_ext = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double span = hi[a] - lo[a];
        cells[a] = span > 0.0 ? std::min<std::size_t>(target, 1024) : 1;
        ext[a] = cells[a] > 1 ? span / static_cast<double>(cells[a])
                              : std::numeric_limits<double>::infinity();
        if (ext[a] < min_ext) min_ext = ext[a];
    }
    auto cell_of = [&](double v, int a) -> std::size_t {
        if (cells[a] == 1) return 0;
        double f = (v - lo[a]) / (hi[a] - lo[a]);
        auto c = static_cast<std::ptrdiff_t>(f * static_cast<double>(cells[a]));
        return static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(c, 0, static_cast<std::ptrdiff_t>(cells[a]) - 1));
    };
    const std::size_t n_cells = cells[0] * cells[1] * cells[2];
    auto cell_index = [&](std::size_t cx, std::size_t cy, std::size_t cz) {
        return (cz * cells[1] + cy) * cells[0] + cx;
    };
    // CSR buckets, point ids ascending within each cell.
    std::vector<std::size_t> counts(n_cells + 1, 0);
    std::vector<std::size_t> point_cell(n);
    for (std::size_t i = 0; i < n; ++i) {
        point_cell[i] = cell_index(cell_of(px[i], 0), cell_of(py[i], 1), cell_of(pz[i], 2));
        ++counts[point_cell[i] + 1];
    }
    for (std::size_t c = 0; c < n_cells; ++c) counts[c + 1] += counts[c];
    std::vector<std::size_t> bucket(n);
    {
        std::vector<std::size_t> cursor(counts.begin(), counts.end() - 1);
        for (std::size_t i = 0; i < n; ++i) bucket[cursor[point_cell[i]]++] = i;
    }

    const std::size_t max_ring = std::max({cells[0], cells[1], cells[2]});
    IndexMatrix out{q, k, std::vector<std::size_t>(q * k)};
    detail::BestK best(k);
    for (std::size_t qi = 0; qi < q; ++qi) {
        const double qx = queries[qi], qy = queries[q + qi], qz = queries[2 * q + qi];
        const std::ptrdiff_t cqx = static_cast<std::ptrdiff_t>(cell_of(qx, 0));
        const std::ptrdiff_t cqy = static_cast<std::ptrdiff_t>(cell_of(qy, 1));
        const std::ptrdiff_t cqz = static_cast<std::ptrdiff_t>(cell_of(qz, 2));
        best.d2.clear();
        best.idx.clear();
        for (std::size_t ring = 0; ring <= max_ring; ++ring) {
            // Any point in ring r or beyond is at least (r-1)*min_ext away;
            // once the list is full and strictly closer than that bound, no
            // farther ring can improve it (equality could still lose a tie,
            // so keep scanning on equality).
            if (best.full() && ring > 1) {
                const double bound = static_cast<double>(ring - 1) * min_ext;
                if (bound * bound > best.worst_d2()) break;
            }
            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(ring);
            bool visited_any = false;
            for (std::ptrdiff_t dz = -r; dz <= r; ++dz) {
                const std::ptrdiff_t cz = cqz + dz;
                if (cz < 0 || cz >= static_cast<std::ptrdiff_t>(cells[2])) continue;
                for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                    const std::ptrdiff_t cy = cqy + dy;
                    if (cy < 0 || cy >= static_cast<std::ptrdiff_t>(cells[1])) continue;
                    const bool face_z = (dz == -r || dz == r);
                    const bool face_y = (dy == -r || dy == r);
                    for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                        if (!face_z && !face_y && dx != -r && dx != r) continue;  // shell only
                        const std::ptrdiff_t cx = cqx + dx;
                        if (cx < 0 || cx >= static_cast<std::ptrdiff_t>(cells[0])) continue;
                        visited_any = true;
                        const std::size_t c = cell_index(static_cast<std::size_t>(cx),
                                                         static_cast<std::size_t>(cy),
                                                         static_cast<std::size_t>(cz));
                        for (std::size_t b = counts[c]; b < counts[c + 1]; ++b) {
                            const std::size_t i = bucket[b];
                            best.offer(detail::dist2(px, py, pz, i, qx, qy, qz), i);
                        }
                    }
                }
            }
            if (!visited_any && ring > 0 && best.full()) break;
        }
        for (std::size_t r = 0; r < k; ++r) out.idx[qi * k + r] = best.idx[r];
    }
    return out;
}

}  // namespace pcc
