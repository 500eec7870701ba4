#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "pcc/errors.hpp"
#include "pcc/volume.hpp"

namespace pcc {

// Conventions fixed by this artifact (the usual definitions leave them
// open): PSNR peak = max voxel of the target, SSIM uses a uniform 7^3
// window with K1 = 0.01, K2 = 0.03 and dynamic range max - min of the
// target, and all metrics are per volume.

inline constexpr std::size_t kSsimWindow = 7;
inline constexpr double kPsnrCap = 99.0;  // logged stand-in for +inf on identical inputs

struct MetricReport {
    double psnr = 0.0;  // decibels
    double ssim = 0.0;
    double nmse = 0.0;
};

namespace detail {

inline void require_same_shape(const Volume& a, const Volume& b, const char* what) {
    if (!a.same_shape(b)) throw contract_error(std::string(what) + ": volume shape mismatch");
}

}  // namespace detail

// 10 log10(MAX^2 / MSE) with MAX the target's maximum voxel. Identical
// inputs give +infinity; report writers cap that at kPsnrCap.
inline double psnr(const Volume& estimate, const Volume& target) {
    detail::require_same_shape(estimate, target, "psnr");
    const std::size_t n = target.size();
    double mse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = target.voxels[i] - estimate.voxels[i];
        mse += diff * diff;
    }
    mse /= static_cast<double>(n);
    const double peak = *std::max_element(target.voxels.begin(), target.voxels.end());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

inline double psnr_capped(const Volume& estimate, const Volume& target) {
    return std::min(psnr(estimate, target), kPsnrCap);
}

// ||target - estimate||^2 / ||target||^2.
inline double nmse(const Volume& estimate, const Volume& target) {
    detail::require_same_shape(estimate, target, "nmse");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double diff = target.voxels[i] - estimate.voxels[i];
        num += diff * diff;
        den += target.voxels[i] * target.voxels[i];
    }
    if (den == 0.0) throw contract_error("nmse: target has zero energy");
    return num / den;
}

// Mean over all full-window positions of the local SSIM. Window statistics
// come from summed-area tables; per-window num == den cancellation makes
// ssim(v, v) exactly 1.
inline double ssim(const Volume& estimate, const Volume& target) {
    detail::require_same_shape(estimate, target, "ssim");
    const std::size_t win = kSsimWindow;
    if (target.h < win || target.w < win || target.d < win)
        throw contract_error("ssim: volume smaller than the " + std::to_string(win) +
                             "^3 window");
    const double lo = *std::min_element(target.voxels.begin(), target.voxels.end());
    const double hi = *std::max_element(target.voxels.begin(), target.voxels.end());
    const double range = hi - lo;
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);

    // Summed-area tables over x, y, xx, yy, xy (padded by one plane).
    const std::size_t h = target.h, w = target.w, d = target.d;
    const std::size_t ph = h + 1, pw = w + 1, pd = d + 1;
    auto sat_index = [&](std::size_t x, std::size_t y, std::size_t z) {
        return (z * ph + y) * pw + x;
    };
    std::vector<double> sx(pw * ph * pd, 0.0), sy = sx, sxx = sx, syy = sx, sxy = sx;
    for (std::size_t z = 1; z <= d; ++z)
        for (std::size_t y = 1; y <= h; ++y)
            for (std::size_t x = 1; x <= w; ++x) {
                const double ev = estimate.at(x - 1, y - 1, z - 1);
                const double tv = target.at(x - 1, y - 1, z - 1);
                const std::size_t i = sat_index(x, y, z);
                const std::size_t ix = sat_index(x - 1, y, z), iy = sat_index(x, y - 1, z),
                                  iz = sat_index(x, y, z - 1), ixy = sat_index(x - 1, y - 1, z),
                                  ixz = sat_index(x - 1, y, z - 1), iyz = sat_index(x, y - 1, z - 1),
                                  ixyz = sat_index(x - 1, y - 1, z - 1);
                auto fold = [&](std::vector<double>& t, double v) {
                    t[i] = v + t[ix] + t[iy] + t[iz] - t[ixy] - t[ixz] - t[iyz] + t[ixyz];
                };
                fold(sx, ev);
                fold(sy, tv);
                fold(sxx, ev * ev);
                fold(syy, tv * tv);
                fold(sxy, ev * tv);
            }
    auto window_sum = [&](const std::vector<double>& t, std::size_t x, std::size_t y,
                          std::size_t z) {
        const std::size_t x1 = x + win, y1 = y + win, z1 = z + win;
        return t[sat_index(x1, y1, z1)] - t[sat_index(x, y1, z1)] - t[sat_index(x1, y, z1)] -
               t[sat_index(x1, y1, z)] + t[sat_index(x, y, z1)] + t[sat_index(x, y1, z)] +
               t[sat_index(x1, y, z)] - t[sat_index(x, y, z)];
    };

    const double inv_n = 1.0 / static_cast<double>(win * win * win);
    double total = 0.0;
    std::size_t positions = 0;
    for (std::size_t z = 0; z + win <= d; ++z)
        for (std::size_t y = 0; y + win <= h; ++y)
            for (std::size_t x = 0; x + win <= w; ++x) {
                const double mx = window_sum(sx, x, y, z) * inv_n;
                const double my = window_sum(sy, x, y, z) * inv_n;
                const double vx = window_sum(sxx, x, y, z) * inv_n - mx * mx;
                const double vy = window_sum(syy, x, y, z) * inv_n - my * my;
                const double cxy = window_sum(sxy, x, y, z) * inv_n - mx * my;
                const double num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
                const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
                total += den != 0.0 ? num / den : (num == 0.0 ? 1.0 : 0.0);
                ++positions;
            }
    return total / static_cast<double>(positions);
}

inline MetricReport evaluate_metrics(const Volume& estimate, const Volume& target) {
    return MetricReport{psnr_capped(estimate, target), ssim(estimate, target),
                        nmse(estimate, target)};
}

// Tab-separated evaluation report: one row per subject plus a final mean row.
inline void write_report(std::ostream& os, const std::vector<std::string>& subjects,
                         const std::vector<MetricReport>& reports) {
    if (subjects.size() != reports.size())
        throw contract_error("write_report: subject/report count mismatch");
    os << "subject\tpsnr\tssim\tnmse\n";
    char buf[128];
    MetricReport mean;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s\t%.6f\t%.6f\t%.6f\n", subjects[i].c_str(),
                      reports[i].psnr, reports[i].ssim, reports[i].nmse);
        os << buf;
        mean.psnr += reports[i].psnr;
        mean.ssim += reports[i].ssim;
        mean.nmse += reports[i].nmse;
    }
    const double inv = reports.empty() ? 0.0 : 1.0 / static_cast<double>(reports.size());
    std::snprintf(buf, sizeof buf, "mean\t%.6f\t%.6f\t%.6f\n", mean.psnr * inv, mean.ssim * inv,
                  mean.nmse * inv);
    os << buf;
}

}  // namespace pcc
