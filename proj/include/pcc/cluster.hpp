#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "pcc/errors.hpp"
#include "pcc/pointset.hpp"
#include "pcc/tensor.hpp"

namespace pcc {

// Partition of a point set into clusters by cosine similarity to evenly
// proposed centers. The assignment itself is a discrete routing decision
// (no gradient); the similarity values stay on the tape and remain
// differentiable, which is where the learnable behavior (alpha, beta) acts.
struct ClusterAssignment {
    Tensor centers;      // d x c
    Tensor sim_matrix;   // c x n, full pairwise cosine similarity
    Tensor similarity;   // 1 x n, each point's similarity to its own center
    std::vector<std::size_t> member_of;            // n cluster ids in [0, c)
    std::vector<std::vector<std::size_t>> groups;  // per-cluster point ids, ascending
};

// Largest per-axis count a <= requested whose cube fits n points. Centers
// are proposed on an even lattice, so the effective cluster count is always
// a cube; tiny point sets degrade toward a single cluster.
inline std::size_t feasible_per_axis(std::size_t requested, std::size_t n) {
    if (n == 0) throw contract_error("feasible_per_axis: empty point set");
    std::size_t a = requested;
    while (a > 1 && a * a * a > n) --a;
    return a;
}

// Evenly proposes per_axis^3 centers on the anchor lattice; each center's
// feature is the mean of its k_center nearest points' features. The mean is
// taken in ascending index order: anchors sharing one neighbor set then
// produce bitwise-identical centers instead of ones separated by summation
// noise, which would leave every downstream argmax on a knife edge.
inline Tensor propose_centers(const PointSet& points, std::size_t c_per_axis,
                              std::size_t k_center) {
    const std::size_t n = points.count();
    if (n == 0) throw contract_error("propose_centers: empty point set");
    const std::size_t a = feasible_per_axis(c_per_axis, n);
    const std::size_t kc = std::min(k_center, n);
    std::vector<double> anchors = anchor_grid(n, a);
    IndexMatrix nearest = knn_indices(points.coords, n, anchors, a * a * a, kc);
    for (std::size_t j = 0; j < nearest.rows; ++j)
        std::sort(nearest.idx.begin() + static_cast<std::ptrdiff_t>(j * kc),
                  nearest.idx.begin() + static_cast<std::ptrdiff_t>((j + 1) * kc));
    return gather_mean_cols(points.features, nearest);
}

// Assigns every point to its most similar center (ties to the lowest center
// index) and gathers the winning similarity per point. The argmax is a
// routing decision: when the tape carries a replaying RoutingTrace the
// recorded assignment is reused and only the similarity values are
// recomputed.
inline ClusterAssignment assign_clusters(const PointSet& points, const Tensor& centers) {
    const std::size_t n = points.count();
    const std::size_t c = centers.cols();
    ClusterAssignment out;
    out.centers = centers;
    out.sim_matrix = cosine_similarity(points.features, centers);
    RoutingTrace* trace = points.features.tape()->routing();
    if (trace && trace->replay) {
        if (trace->cursor >= trace->assignments.size())
            throw contract_error("assign_clusters: routing trace exhausted");
        out.member_of = trace->assignments[trace->cursor++];
        if (out.member_of.size() != n)
            throw contract_error("assign_clusters: routing trace does not match the point set");
    } else {
        const std::vector<double>& s = out.sim_matrix.values();
        out.member_of.resize(n);
        for (std::size_t m = 0; m < n; ++m) {
            std::size_t best = 0;
            double best_s = s[m];
            for (std::size_t j = 1; j < c; ++j) {
                const double sj = s[j * n + m];
                if (sj > best_s) {
                    best_s = sj;
                    best = j;
                }
            }
            out.member_of[m] = best;
        }
        if (trace) trace->assignments.push_back(out.member_of);
    }
    out.groups.assign(c, {});
    std::vector<std::size_t> winner_flat(n);
    for (std::size_t m = 0; m < n; ++m) {
        out.groups[out.member_of[m]].push_back(m);
        winner_flat[m] = out.member_of[m] * n + m;
    }
    out.similarity = gather_flat(out.sim_matrix, winner_flat);
    return out;
}

namespace detail {

// sig(alpha * s + beta), elementwise over a 1 x M similarity row.
inline Tensor similarity_weights(const Tensor& sims, const Tensor& alpha, const Tensor& beta) {
    return sigmoid(add(mul(sims, alpha), beta));
}

}  // namespace detail

// Similarity-weighted aggregation of a cluster onto its center:
//   g = (v_c + sum_m w_m v_m) / (1 + sum_m w_m),  w_m = sig(alpha s_m + beta).
// An empty cluster (M = 0) degenerates to the center itself.
inline Tensor aggregate_cluster(const Tensor& members, const Tensor& sims, const Tensor& center,
                                const Tensor& alpha, const Tensor& beta) {
    if (center.cols() != 1) throw shape_error("aggregate_cluster: center must be d x 1");
    const std::size_t m_count = members.cols();
    if (m_count == 0) return center;
    if (sims.rows() != 1 || sims.cols() != m_count || members.rows() != center.rows())
        throw shape_error("aggregate_cluster: member/similarity shape mismatch");
    Tensor w = detail::similarity_weights(sims, alpha, beta);
    Tensor numer = add(center, sum_cols(colwise_scale(members, w)));
    Tensor norm = add_scalar(sum_all(w), 1.0);
    return mul(numer, reciprocal(norm));
}

// Dispatches the aggregated point back to every member:
//   v'_m = v_m + w_m * g.
inline Tensor dispatch_cluster(const Tensor& members, const Tensor& sims, const Tensor& aggregated,
                               const Tensor& alpha, const Tensor& beta) {
    const std::size_t m_count = members.cols();
    if (m_count == 0) return members;
    if (aggregated.cols() != 1 || aggregated.rows() != members.rows())
        throw shape_error("dispatch_cluster: aggregate must be d x 1");
    Tensor w = detail::similarity_weights(sims, alpha, beta);
    return add(members, colwise_scale(repeat_cols(aggregated, m_count), w));
}

// One full context-clustering pass: propose centers, assign by similarity,
// aggregate each cluster, dispatch back. Point count, dimension and
// coordinates are unchanged.
inline PointSet context_cluster_layer(const PointSet& points, const Tensor& alpha,
                                      const Tensor& beta, std::size_t c_per_axis,
                                      std::size_t k_center) {
    const std::size_t n = points.count();
    Tensor centers = propose_centers(points, c_per_axis, k_center);
    ClusterAssignment assign = assign_clusters(points, centers);

    std::vector<Tensor> pieces;
    std::vector<std::size_t> order;
    order.reserve(n);
    for (std::size_t j = 0; j < assign.groups.size(); ++j) {
        const std::vector<std::size_t>& group = assign.groups[j];
        if (group.empty()) continue;
        Tensor members = gather_cols(points.features, group);
        Tensor sims = gather_cols(assign.similarity, group);
        Tensor center = gather_cols(centers, {j});
        Tensor g = aggregate_cluster(members, sims, center, alpha, beta);
        pieces.push_back(dispatch_cluster(members, sims, g, alpha, beta));
        order.insert(order.end(), group.begin(), group.end());
    }
    // Undo the cluster-major column order.
    std::vector<std::size_t> inverse(n);
    for (std::size_t pos = 0; pos < n; ++pos) inverse[order[pos]] = pos;
    PointSet out;
    out.features = gather_cols(concat_cols(pieces), inverse);
    out.coords = points.coords;
    out.grid_shape = points.grid_shape;
    return out;
}

}  // namespace pcc
