#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pcc/cluster.hpp"
#include "pcc/errors.hpp"
#include "pcc/pointset.hpp"
#include "pcc/rng.hpp"
#include "pcc/tensor.hpp"
#include "pcc/volume.hpp"

namespace pcc {

// Architecture hyperparameters. The four reduction stages each halve the
// lattice per axis (point count / 8) and double the channel width; the four
// expansion stages mirror that back, so the final point count equals the
// input count whenever input_side is divisible by 16.
struct ModelConfig {
    std::size_t input_side = 64;  // S, patch edge length
    std::size_t base_width = 16;  // W0
    std::array<std::size_t, 4> anchor_schedule{32, 16, 8, 4};  // per-axis anchors per stage
    std::size_t k = 8;         // neighbors gathered per anchor / per center
    std::size_t clusters = 8;  // total cluster count c (realized as a cube lattice)
    double lambda = 100.0;

    static ModelConfig for_side(std::size_t side, std::size_t width) {
        ModelConfig cfg;
        cfg.input_side = side;
        cfg.base_width = width;
        cfg.anchor_schedule = {side / 2, side / 4, side / 8, side / 16};
        return cfg;
    }

    std::size_t clusters_per_axis() const {
        std::size_t a = 1;
        while ((a + 1) * (a + 1) * (a + 1) <= clusters) ++a;
        return a;
    }

    void validate() const {
        if (input_side < 16 || input_side % 16 != 0)
            throw contract_error("config: input_side must be a multiple of 16, got " +
                                 std::to_string(input_side));
        if (base_width == 0) throw contract_error("config: base_width must be positive");
        if (k == 0 || clusters == 0)
            throw contract_error("config: k and clusters must be positive");
        if (lambda < 0.0) throw contract_error("config: lambda must be nonnegative");
        for (std::size_t i = 0; i < 4; ++i) {
            const std::size_t expect = input_side >> (i + 1);
            if (anchor_schedule[i] != expect || expect == 0)
                throw contract_error("config: anchor_schedule[" + std::to_string(i) +
                                     "] must be " + std::to_string(expect) + " for side " +
                                     std::to_string(input_side));
        }
    }
};

// ---------------------------------------------------------------------------
// Parameter storage
// ---------------------------------------------------------------------------

struct Param {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // accumulated across a batch, cleared by the optimizer
};

// Named parameters in a stable insertion order. That order defines the
// checkpoint manifest, the optimizer-state layout and the gradient reduction
// order, so it must not depend on anything but the construction sequence.
class ParamStore {
  public:
    Param& add(const std::string& name, Shape shape, std::vector<double> value) {
        if (index_.count(name)) throw contract_error("duplicate parameter: " + name);
        if (shape.numel() != value.size())
            throw shape_error("parameter " + name + ": shape/value mismatch");
        index_[name] = params_.size();
        params_.push_back(Param{name, shape, std::move(value), {}});
        return params_.back();
    }

    Param& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw contract_error("unknown parameter: " + name);
        return params_[it->second];
    }
    const Param& at(const std::string& name) const {
        return const_cast<ParamStore*>(this)->at(name);
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::vector<Param>& items() { return params_; }
    const std::vector<Param>& items() const { return params_; }
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const Param& p : params_) n += p.shape.numel();
        return n;
    }

    void zero_grads() {
        for (Param& p : params_) p.grad.assign(p.shape.numel(), 0.0);
    }

  private:
    std::vector<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Materializes parameters onto one tape (each at most once per forward pass)
// and maps tape gradients back afterwards.
class TapeParams {
  public:
    TapeParams(Tape& tape, ParamStore& store, bool trainable)
        : tape_(&tape), store_(&store), trainable_(trainable) {}

    Tensor operator[](const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return it->second;
        Param& p = store_->at(name);
        Tensor t = tape_->input(p.shape, p.value, trainable_);
        bound_.emplace(name, t);
        return t;
    }

    // Adds d(loss)/d(param) into each touched parameter's grad accumulator,
    // iterating in store order for a deterministic reduction.
    void accumulate_grads() {
        for (Param& p : store_->items()) {
            auto it = bound_.find(p.name);
            if (it == bound_.end()) continue;
            const std::vector<double>& g = tape_->grad(it->second);
            if (p.grad.empty()) p.grad.assign(p.shape.numel(), 0.0);
            for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
        }
    }

  private:
    Tape* tape_;
    ParamStore* store_;
    bool trainable_;
    std::unordered_map<std::string, Tensor> bound_;
};

// ---------------------------------------------------------------------------
// Parameter initialization
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> uniform_fan_in(rng::Stream& s, std::size_t rows, std::size_t cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::vector<double> v(rows * cols);
    for (double& x : v) x = s.uniform(-bound, bound);
    return v;
}

inline void add_linear(ParamStore& store, rng::Stream& s, const std::string& prefix,
                       std::size_t d_out, std::size_t d_in) {
    store.add(prefix + ".w", Shape{d_out, d_in}, uniform_fan_in(s, d_out, d_in));
    store.add(prefix + ".b", Shape{d_out, 1}, std::vector<double>(d_out, 0.0));
}

inline void add_block(ParamStore& store, rng::Stream& s, const std::string& prefix,
                      std::size_t d_in, std::size_t d_out, std::size_t k, bool reducer) {
    if (reducer)
        add_linear(store, s, prefix + ".reduce", d_out, k * d_in);
    else
        add_linear(store, s, prefix + ".expand", 8 * d_out, d_in);
    store.add(prefix + ".alpha", Shape{1, 1}, {1.0});
    store.add(prefix + ".beta", Shape{1, 1}, {0.0});
    add_linear(store, s, prefix + ".ffn1", 2 * d_out, d_out);
    add_linear(store, s, prefix + ".ffn2", d_out, 2 * d_out);
}

}  // namespace detail

// Generator parameters. The reversion head starts at zero so the untrained
// generator is the identity map on intensities.
inline ParamStore init_generator_params(const ModelConfig& cfg, std::uint64_t seed,
                                        bool zero_head = true) {
    cfg.validate();
    ParamStore store;
    rng::Stream s(seed, 1);
    const std::size_t w0 = cfg.base_width;
    detail::add_linear(store, s, "embed", w0, 4);
    for (std::size_t i = 0; i < 4; ++i)
        detail::add_block(store, s, "coc" + std::to_string(i + 1), w0 << i, w0 << (i + 1), cfg.k,
                          true);
    for (std::size_t j = 0; j < 4; ++j)
        detail::add_block(store, s, "tcoc" + std::to_string(j + 1), w0 << (4 - j),
                          w0 << (3 - j), cfg.k, false);
    if (zero_head) {
        store.add("head.w", Shape{1, w0}, std::vector<double>(w0, 0.0));
        store.add("head.b", Shape{1, 1}, {0.0});
    } else {
        detail::add_linear(store, s, "head", 1, w0);
    }
    return store;
}

// Discriminator parameters: a two-channel point construction followed by the
// four reduction blocks and a pooled sigmoid head.
inline ParamStore init_discriminator_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParamStore store;
    rng::Stream s(seed, 2);
    const std::size_t w0 = cfg.base_width;
    detail::add_linear(store, s, "embed", w0, 5);
    for (std::size_t i = 0; i < 4; ++i)
        detail::add_block(store, s, "coc" + std::to_string(i + 1), w0 << i, w0 << (i + 1), cfg.k,
                          true);
    detail::add_linear(store, s, "head", 1, w0 << 4);
    return store;
}

// ---------------------------------------------------------------------------
// Point set down/up-sampling
// ---------------------------------------------------------------------------

// Gathers each anchor's k nearest points, concatenates them along the
// channel axis and fuses with a linear projection. Output points sit on the
// anchor lattice.
inline PointSet points_reducer(const PointSet& in, std::size_t per_axis, std::size_t k,
                               const Tensor& proj_w, const Tensor& proj_b) {
    const std::size_t n = in.count();
    std::vector<double> anchors = anchor_grid(n, per_axis);
    const std::size_t q = per_axis * per_axis * per_axis;
    IndexMatrix nearest = knn_indices(in.coords, n, anchors, q, k);
    PointSet out;
    out.features = linear(proj_w, gather_concat_cols(in.features, nearest), proj_b);
    out.coords = std::move(anchors);
    out.grid_shape = {{per_axis, per_axis, per_axis}};
    return out;
}

// Every point becomes 8 children: the projection enlarges the channel
// dimension by 8x, the result is split along the channel axis, and the
// children are placed at the octant centers of the parent's lattice cell.
// Output is reordered to z-major on the refined lattice so that it aligns
// column-for-column with the mirrored reducer stage.
inline PointSet points_expander(const PointSet& in, const Tensor& proj_w, const Tensor& proj_b) {
    if (!in.grid_shape)
        throw contract_error("points_expander: input points are not on a lattice");
    const auto grid = *in.grid_shape;
    const std::size_t gh = grid[0], gw = grid[1], gd = grid[2];
    const std::size_t n = in.count();
    Tensor proj = linear(proj_w, in.features, proj_b);
    if (proj.rows() % 8 != 0)
        throw shape_error("points_expander: projected channels not divisible into 8 children");
    const std::size_t d_out = proj.rows() / 8;
    std::vector<Tensor> octants;
    octants.reserve(8);
    for (std::size_t o = 0; o < 8; ++o) octants.push_back(slice_rows(proj, o * d_out, d_out));
    Tensor stacked = concat_cols(octants);  // octant-major: column o*n + parent

    const std::size_t fh = 2 * gh, fw = 2 * gw, fd = 2 * gd;
    const std::size_t fine_n = 8 * n;
    std::vector<std::size_t> perm(fine_n);
    std::vector<double> coords(3 * fine_n);
    std::size_t f = 0;
    for (std::size_t fz = 0; fz < fd; ++fz)
        for (std::size_t fy = 0; fy < fh; ++fy)
            for (std::size_t fx = 0; fx < fw; ++fx, ++f) {
                const std::size_t parent = ((fz / 2) * gh + (fy / 2)) * gw + (fx / 2);
                const std::size_t oct = ((fz % 2) * 2 + (fy % 2)) * 2 + (fx % 2);
                perm[f] = oct * n + parent;
                coords[0 * fine_n + f] = (static_cast<double>(fx) + 0.5) / static_cast<double>(fw);
                coords[1 * fine_n + f] = (static_cast<double>(fy) + 0.5) / static_cast<double>(fh);
                coords[2 * fine_n + f] = (static_cast<double>(fz) + 0.5) / static_cast<double>(fd);
            }
    PointSet out;
    out.features = gather_cols(stacked, perm);
    out.coords = std::move(coords);
    out.grid_shape = {{fh, fw, fd}};
    return out;
}

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

namespace detail {

// Pointwise feed-forward with a sigmoid-gated activation and residual add:
// x + W2 * (h . sig(h)), h = W1 * x + b1.
inline Tensor feed_forward(const Tensor& x, TapeParams& params, const std::string& prefix) {
    Tensor h = linear(params[prefix + ".ffn1.w"], x, params[prefix + ".ffn1.b"]);
    Tensor gated = mul(h, sigmoid(h));
    return add(x, linear(params[prefix + ".ffn2.w"], gated, params[prefix + ".ffn2.b"]));
}

}  // namespace detail

// Reduction block: points reducer, context clustering, feed-forward.
// Point count is divided by 8 and the channel width doubles.
inline PointSet coc_block(const PointSet& in, TapeParams& params, const std::string& prefix,
                          std::size_t per_axis, const ModelConfig& cfg) {
    PointSet reduced = points_reducer(in, per_axis, cfg.k,
                                      params[prefix + ".reduce.w"], params[prefix + ".reduce.b"]);
    PointSet clustered = context_cluster_layer(reduced, params[prefix + ".alpha"],
                                               params[prefix + ".beta"],
                                               cfg.clusters_per_axis(), cfg.k);
    clustered.features = detail::feed_forward(clustered.features, params, prefix);
    return clustered;
}

// Expansion block: points expander, context clustering, feed-forward, then
// the residual skip from the mirrored reduction stage. Point count grows by
// 8 and the channel width halves; coordinates come from the expander lattice.
inline PointSet tcoc_block(const PointSet& in, const PointSet& skip, TapeParams& params,
                           const std::string& prefix, const ModelConfig& cfg) {
    PointSet expanded = points_expander(in, params[prefix + ".expand.w"],
                                        params[prefix + ".expand.b"]);
    if (!(skip.features.shape() == expanded.features.shape()))
        throw contract_error("tcoc_block: skip shape " +
                             Tape::shape_str(skip.features.shape()) + " does not match " +
                             Tape::shape_str(expanded.features.shape()));
    PointSet clustered = context_cluster_layer(expanded, params[prefix + ".alpha"],
                                               params[prefix + ".beta"],
                                               cfg.clusters_per_axis(), cfg.k);
    clustered.features = detail::feed_forward(clustered.features, params, prefix);
    clustered.features = add(clustered.features, skip.features);
    return clustered;
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

// (point count, channel width) after construction and after each block, in
// order: construct, coc1..coc4, tcoc1..tcoc4.
using StageDims = std::vector<std::pair<std::size_t, std::size_t>>;

// Full generator pass returning the estimated intensities as a 1 x S^3 row
// on the tape (z-major order): a residual per point is predicted from the
// final point features and added to the input intensities.
inline Tensor generator_forward_row(Tape& tape, const Volume& lpet, TapeParams& params,
                                    const ModelConfig& cfg, StageDims* dims = nullptr) {
    cfg.validate();
    const std::size_t s = cfg.input_side;
    if (lpet.h != s || lpet.w != s || lpet.d != s)
        throw contract_error("generator: input must be " + std::to_string(s) + "^3, got " +
                             std::to_string(lpet.h) + "x" + std::to_string(lpet.w) + "x" +
                             std::to_string(lpet.d));
    PointSet e0 = construct_points(tape, lpet, params["embed.w"], params["embed.b"]);
    auto record = [&](const PointSet& ps) {
        if (dims) dims->emplace_back(ps.count(), ps.dim());
    };
    record(e0);
    std::vector<PointSet> skips{e0};
    PointSet x = e0;
    for (std::size_t i = 0; i < 4; ++i) {
        x = coc_block(x, params, "coc" + std::to_string(i + 1), cfg.anchor_schedule[i], cfg);
        record(x);
        if (i < 3) skips.push_back(x);
    }
    for (std::size_t j = 0; j < 4; ++j) {
        x = tcoc_block(x, skips[3 - j], params, "tcoc" + std::to_string(j + 1), cfg);
        record(x);
    }
    Tensor residual = revert_to_row(x, params["head.w"], params["head.b"]);
    Tensor lpet_row = tape.constant(Shape{1, lpet.size()}, lpet.voxels);
    return add(residual, lpet_row);
}

// Gradient-free convenience wrapper producing the estimated volume.
inline Volume generator_forward(const Volume& lpet, ParamStore& gen, const ModelConfig& cfg) {
    Tape tape;
    TapeParams params(tape, gen, false);
    Tensor row = generator_forward_row(tape, lpet, params, cfg);
    return row_to_volume(row.values(), {lpet.h, lpet.w, lpet.d});
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

// Scores a (conditioning, candidate) pair from the perspective of points:
// two-channel construction, four reduction blocks, global mean pool, linear
// head, sigmoid. The candidate enters as a 1 x n row so generator gradients
// can flow through it.
inline Tensor discriminator_forward_row(Tape& tape, const Volume& lpet, const Tensor& cand_row,
                                        TapeParams& params, const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t s = cfg.input_side;
    if (lpet.h != s || lpet.w != s || lpet.d != s)
        throw contract_error("discriminator: conditioning volume must be " + std::to_string(s) +
                             "^3");
    const std::size_t n = lpet.size();
    if (cand_row.rows() != 1 || cand_row.cols() != n)
        throw contract_error("discriminator: candidate row must be 1 x " + std::to_string(n));
    std::vector<double> coords = lattice_coords(lpet.h, lpet.w, lpet.d);
    Tensor lpet_row = tape.constant(Shape{1, n}, lpet.voxels);
    Tensor coord_rows = tape.constant(Shape{3, n}, coords);
    Tensor raw = concat_rows({lpet_row, cand_row, coord_rows});
    PointSet x;
    x.features = linear(params["embed.w"], raw, params["embed.b"]);
    x.coords = std::move(coords);
    x.grid_shape = {{lpet.h, lpet.w, lpet.d}};
    for (std::size_t i = 0; i < 4; ++i)
        x = coc_block(x, params, "coc" + std::to_string(i + 1), cfg.anchor_schedule[i], cfg);
    Tensor pooled = mean_cols(x.features);
    Tensor logit = linear(params["head.w"], pooled, params["head.b"]);
    return sigmoid(logit);
}

inline Tensor discriminator_forward(Tape& tape, const Volume& lpet, const Volume& candidate,
                                    TapeParams& params, const ModelConfig& cfg) {
    if (!lpet.same_shape(candidate))
        throw contract_error("discriminator: volume shape mismatch");
    Tensor cand_row = tape.constant(Shape{1, candidate.size()}, candidate.voxels);
    return discriminator_forward_row(tape, lpet, cand_row, params, cfg);
}

// Gradient-free convenience wrapper.
inline double discriminator_score(const Volume& lpet, const Volume& candidate, ParamStore& disc,
                                  const ModelConfig& cfg) {
    Tape tape;
    TapeParams params(tape, disc, false);
    return discriminator_forward(tape, lpet, candidate, params, cfg).scalar();
}

// ---------------------------------------------------------------------------
// PCCCKPT v1 checkpoint format
// ---------------------------------------------------------------------------
//
// Header line "PCCCKPT v1\n", then an ASCII manifest: a count line followed
// by one "<name> <rows> <cols>" line per tensor, then the concatenated
// parameter values as 64-bit little-endian floats in manifest order.
// Stores are written with a name prefix ("g." / "d.") so one file can hold
// the generator/discriminator pair.

namespace detail {

inline void write_f64_le(std::ostream& os, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char raw[8];
    for (int i = 0; i < 8; ++i) raw[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(raw), 8);
}

inline double read_f64_le(std::istream& is) {
    unsigned char raw[8];
    is.read(reinterpret_cast<char*>(raw), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, const ParamStore*>>& stores) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << "PCCCKPT v1\n";
    std::size_t count = 0;
    for (const auto& [prefix, store] : stores) count += store->size();
    os << count << "\n";
    for (const auto& [prefix, store] : stores)
        for (const Param& p : store->items())
            os << prefix << "." << p.name << " " << p.shape.rows << " " << p.shape.cols << "\n";
    for (const auto& [prefix, store] : stores)
        for (const Param& p : store->items())
            for (double v : p.value) detail::write_f64_le(os, v);
    if (!os) throw io_error("write failed: " + path);
}

inline void load_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, ParamStore*>>& stores) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    std::string magic, version;
    if (!(is >> magic >> version) || magic != "PCCCKPT" || version != "v1")
        throw io_error(path + ": malformed PCCCKPT header");
    std::size_t count = 0;
    if (!(is >> count)) throw io_error(path + ": missing manifest count");
    struct Entry {
        Param* param;
        Shape shape;
    };
    std::vector<Entry> entries;
    entries.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        Shape shape;
        if (!(is >> name >> shape.rows >> shape.cols))
            throw io_error(path + ": truncated manifest at entry " + std::to_string(i));
        const std::size_t dot = name.find('.');
        if (dot == std::string::npos) throw io_error(path + ": unprefixed tensor name " + name);
        const std::string prefix = name.substr(0, dot);
        const std::string local = name.substr(dot + 1);
        ParamStore* target = nullptr;
        for (const auto& [p, store] : stores)
            if (p == prefix) target = store;
        if (!target) throw io_error(path + ": no store for tensor " + name);
        Param& param = target->at(local);
        if (!(param.shape == shape))
            throw io_error(path + ": shape mismatch for " + name + " (" +
                           Tape::shape_str(shape) + " in file, " + Tape::shape_str(param.shape) +
                           " expected)");
        entries.push_back(Entry{&param, shape});
    }
    if (is.get() != '\n') throw io_error(path + ": manifest not newline-terminated");
    for (Entry& e : entries)
        for (std::size_t i = 0; i < e.shape.numel(); ++i) {
            e.param->value[i] = detail::read_f64_le(is);
            if (!is) throw io_error(path + ": truncated payload");
        }
}

}  // namespace pcc
