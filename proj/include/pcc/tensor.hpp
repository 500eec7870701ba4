#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pcc/errors.hpp"

namespace pcc {

// All tensors are dense row-major matrices of 64-bit reals. Channel data is
// laid out rows = channels, cols = points; scalars are 1x1.
struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t numel() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
};

// Rectangular index table, used for kNN results (one row of k neighbor ids
// per query).
struct IndexMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> idx;  // row-major, rows*cols entries

    std::size_t at(std::size_t r, std::size_t c) const { return idx[r * cols + c]; }
};

class Tape;

// Record/replay store for discrete routing decisions (the cluster-assignment
// argmax). Gradients do not flow through routing, so a finite-difference
// probe of the differentiated function must hold these decisions fixed at
// the base point; a trace records them once and replays them under
// perturbation. Without a trace installed, routing is decided live.
struct RoutingTrace {
    bool replay = false;
    std::vector<std::vector<std::size_t>> assignments;
    std::size_t cursor = 0;

    void rewind() { cursor = 0; }
};

// Lightweight handle to a node on a tape. Copying is free; the tape owns all
// storage and must outlive its handles.
class Tensor {
  public:
    Tensor() = default;

    bool valid() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int id() const { return id_; }

    const Shape& shape() const;
    std::size_t rows() const { return shape().rows; }
    std::size_t cols() const { return shape().cols; }
    std::size_t size() const { return shape().numel(); }
    const std::vector<double>& values() const;
    double scalar() const;
    bool requires_grad() const;

  private:
    friend class Tape;
    Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Define-by-run computation record. Forward values are stored per node as
// they are produced; backward() sweeps the record in reverse creation order,
// which is a topological order by construction. A tape is single-threaded;
// concurrent evaluation uses one tape per thread.
class Tape {
  public:
    // The closure receives the tape and the node's own id; it reads its own
    // accumulated gradient and pushes adjoints into its parents.
    using BackwardFn = std::function<void(Tape&, int)>;

    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;  // allocated lazily during backward
        bool requires_grad = false;
        BackwardFn backward;
    };

    Tensor input(Shape shape, std::vector<double> values, bool requires_grad = false) {
        if (shape.numel() != values.size())
            throw shape_error("input: shape " + shape_str(shape) + " does not match " +
                              std::to_string(values.size()) + " values");
        return make(shape, std::move(values), requires_grad, {});
    }

    Tensor constant(Shape shape, std::vector<double> values) {
        return input(shape, std::move(values), false);
    }

    Tensor scalar_const(double v) { return make(Shape{1, 1}, {v}, false, {}); }

    // Computes d(loss)/d(node) for every node reachable from the scalar
    // loss; unreached requires_grad nodes keep zero gradients.
    void backward(const Tensor& loss) {
        if (loss.tape() != this) throw contract_error("backward: loss from another tape");
        if (loss.size() != 1) throw contract_error("backward: loss must be a scalar");
        for (Node& n : nodes_) n.grad.clear();
        grad_of(loss.id()).assign(1, 1.0);
        for (int i = loss.id(); i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.backward && !n.grad.empty()) n.backward(*this, i);
        }
    }

    // Gradient of t from the last backward() sweep (zeros if unreached).
    const std::vector<double>& grad(const Tensor& t) {
        Node& n = node(t.id());
        if (n.grad.empty()) n.grad.assign(n.shape.numel(), 0.0);
        return n.grad;
    }

    std::size_t node_count() const { return nodes_.size(); }

    void set_routing(RoutingTrace* trace) { routing_ = trace; }
    RoutingTrace* routing() const { return routing_; }

    // -- internals shared with the free-function ops ------------------------

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    Tensor make(Shape shape, std::vector<double> values, bool requires_grad, BackwardFn backward) {
        Node n;
        n.shape = shape;
        n.value = std::move(values);
        n.requires_grad = requires_grad;
        if (requires_grad) n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Tensor(this, static_cast<int>(nodes_.size()) - 1);
    }

    std::vector<double>& grad_of(int id) {
        Node& n = node(id);
        if (n.grad.empty()) n.grad.assign(n.shape.numel(), 0.0);
        return n.grad;
    }

    static std::string shape_str(const Shape& s) {
        return std::to_string(s.rows) + "x" + std::to_string(s.cols);
    }

  private:
    // A deque keeps references to existing nodes (and their value
    // vectors) valid while new nodes are appended mid-expression.
    std::deque<Node> nodes_;
    RoutingTrace* routing_ = nullptr;
};

inline const Shape& Tensor::shape() const { return tape_->node(id_).shape; }
inline const std::vector<double>& Tensor::values() const { return tape_->node(id_).value; }
inline bool Tensor::requires_grad() const { return tape_->node(id_).requires_grad; }
inline double Tensor::scalar() const {
    if (size() != 1) throw contract_error("scalar: tensor is " + Tape::shape_str(shape()));
    return values()[0];
}

namespace detail {

inline Tape& same_tape(const Tensor& a, const Tensor& b) {
    if (a.tape() != b.tape() || a.tape() == nullptr)
        throw contract_error("operands live on different tapes");
    return *a.tape();
}

// g += delta, respecting requires_grad.
inline void push_grad(Tape& t, int id, const double* delta, std::size_t n) {
    if (!t.node(id).requires_grad) return;
    std::vector<double>& g = t.grad_of(id);
    for (std::size_t i = 0; i < n; ++i) g[i] += delta[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives. Each op computes its forward value eagerly and, when any
// operand requires gradients, records a closure that pushes adjoints into its
// parents.
// ---------------------------------------------------------------------------

// weight [d_out x d_in] * input [d_in x n] + bias [d_out x 1], column-wise.
inline Tensor linear(const Tensor& weight, const Tensor& input, const Tensor& bias) {
    Tape& t = detail::same_tape(weight, input);
    detail::same_tape(weight, bias);
    const std::size_t d_out = weight.rows(), d_in = weight.cols(), n = input.cols();
    if (input.rows() != d_in || bias.rows() != d_out || bias.cols() != 1)
        throw shape_error("linear: weight " + Tape::shape_str(weight.shape()) + " vs input " +
                          Tape::shape_str(input.shape()) + " vs bias " +
                          Tape::shape_str(bias.shape()));
    const std::vector<double>& w = weight.values();
    const std::vector<double>& x = input.values();
    const std::vector<double>& b = bias.values();
    std::vector<double> out(d_out * n);
    for (std::size_t r = 0; r < d_out; ++r) {
        const double* wr = &w[r * d_in];
        double* or_ = &out[r * n];
        for (std::size_t j = 0; j < n; ++j) or_[j] = b[r];
        for (std::size_t k = 0; k < d_in; ++k) {
            const double wk = wr[k];
            const double* xk = &x[k * n];
            for (std::size_t j = 0; j < n; ++j) or_[j] += wk * xk[j];
        }
    }
    const bool rg = weight.requires_grad() || input.requires_grad() || bias.requires_grad();
    const int wid = weight.id(), xid = input.id(), bid = bias.id();
    return t.make(Shape{d_out, n}, std::move(out), rg,
                  [wid, xid, bid, d_out, d_in, n](Tape& tp, int self) {
                      const std::vector<double>& g = tp.node(self).grad;
                      const std::vector<double>& w = tp.node(wid).value;
                      const std::vector<double>& x = tp.node(xid).value;
                      if (tp.node(wid).requires_grad) {
                          std::vector<double>& gw = tp.grad_of(wid);
                          for (std::size_t r = 0; r < d_out; ++r)
                              for (std::size_t k = 0; k < d_in; ++k) {
                                  double acc = 0.0;
                                  for (std::size_t j = 0; j < n; ++j)
                                      acc += g[r * n + j] * x[k * n + j];
                                  gw[r * d_in + k] += acc;
                              }
                      }
                      if (tp.node(xid).requires_grad) {
                          std::vector<double>& gx = tp.grad_of(xid);
                          for (std::size_t k = 0; k < d_in; ++k)
                              for (std::size_t r = 0; r < d_out; ++r) {
                                  const double wrk = w[r * d_in + k];
                                  for (std::size_t j = 0; j < n; ++j)
                                      gx[k * n + j] += wrk * g[r * n + j];
                              }
                      }
                      if (tp.node(bid).requires_grad) {
                          std::vector<double>& gb = tp.grad_of(bid);
                          for (std::size_t r = 0; r < d_out; ++r) {
                              double acc = 0.0;
                              for (std::size_t j = 0; j < n; ++j) acc += g[r * n + j];
                              gb[r] += acc;
                          }
                      }
                  });
}

namespace detail {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd dfdx) {
    Tape& t = *a.tape();
    const std::vector<double>& x = a.values();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    const int aid = a.id();
    return t.make(a.shape(), std::move(out), a.requires_grad(), [aid, dfdx](Tape& tp, int self) {
        const std::vector<double>& g = tp.node(self).grad;
        const std::vector<double>& x = tp.node(aid).value;
        const std::vector<double>& y = tp.node(self).value;
        std::vector<double>& ga = tp.grad_of(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
    });
}

}  // namespace detail

// Elementwise logistic function; outputs lie strictly inside (0, 1).
inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_op(
        a,
        [](double x) {
            // Split by sign so large |x| never overflows exp().
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        },
        [](double, double y) { return y * (1.0 - y); });
}

// Natural logarithm; inputs must be strictly positive.
inline Tensor log(const Tensor& a) {
    for (double x : a.values())
        if (!(x > 0.0)) throw contract_error("log: input must be > 0, got " + std::to_string(x));
    return detail::unary_op(a, [](double x) { return std::log(x); },
                            [](double x, double) { return 1.0 / x; });
}

// Elementwise |x|; the subgradient at 0 is taken as 0.
inline Tensor abs(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return std::fabs(x); },
                            [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

// Elementwise 1/x; inputs must be nonzero.
inline Tensor reciprocal(const Tensor& a) {
    for (double x : a.values())
        if (x == 0.0) throw contract_error("reciprocal: division by zero");
    return detail::unary_op(a, [](double x) { return 1.0 / x; },
                            [](double, double y) { return -y * y; });
}

namespace detail {

// Elementwise binary with scalar broadcast: either operand may be 1x1.
template <typename Fwd>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd,
                 double db_scale,    // d(out)/d(b) for the non-mul ops
                 bool mul_like) {    // true: grads scale by the other operand
    Tape& t = same_tape(a, b);
    const bool a_scalar = a.size() == 1, b_scalar = b.size() == 1;
    if (!a_scalar && !b_scalar && !(a.shape() == b.shape()))
        throw shape_error("elementwise op on " + Tape::shape_str(a.shape()) + " vs " +
                          Tape::shape_str(b.shape()));
    const Shape out_shape = a_scalar ? b.shape() : a.shape();
    const std::size_t n = out_shape.numel();
    const std::vector<double>& av = a.values();
    const std::vector<double>& bv = b.values();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
    const bool rg = a.requires_grad() || b.requires_grad();
    const int aid = a.id(), bid = b.id();
    return t.make(out_shape, std::move(out), rg,
                  [aid, bid, a_scalar, b_scalar, n, db_scale, mul_like](Tape& tp, int self) {
                      const std::vector<double>& g = tp.node(self).grad;
                      const std::vector<double>& av = tp.node(aid).value;
                      const std::vector<double>& bv = tp.node(bid).value;
                      if (tp.node(aid).requires_grad) {
                          std::vector<double>& ga = tp.grad_of(aid);
                          for (std::size_t i = 0; i < n; ++i) {
                              double d = mul_like ? g[i] * bv[b_scalar ? 0 : i] : g[i];
                              ga[a_scalar ? 0 : i] += d;
                          }
                      }
                      if (tp.node(bid).requires_grad) {
                          std::vector<double>& gb = tp.grad_of(bid);
                          for (std::size_t i = 0; i < n; ++i) {
                              double d = mul_like ? g[i] * av[a_scalar ? 0 : i]
                                                  : g[i] * db_scale;
                              gb[b_scalar ? 0 : i] += d;
                          }
                      }
                  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(a, b, [](double x, double y) { return x + y; }, 1.0, false);
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(a, b, [](double x, double y) { return x - y; }, -1.0, false);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_op(a, b, [](double x, double y) { return x * y; }, 0.0, true);
}

inline Tensor add_scalar(const Tensor& a, double c) { return add(a, a.tape()->scalar_const(c)); }
inline Tensor mul_scalar(const Tensor& a, double c) { return mul(a, a.tape()->scalar_const(c)); }

// Stack along the channel (row) axis.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw contract_error("concat_rows: no parts");
    Tape& t = *parts[0].tape();
    const std::size_t n = parts[0].cols();
    std::size_t rows = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        if (p.cols() != n) throw shape_error("concat_rows: column mismatch");
        detail::same_tape(parts[0], p);
        rows += p.rows();
        rg = rg || p.requires_grad();
    }
    std::vector<double> out;
    out.reserve(rows * n);
    std::vector<int> ids;
    std::vector<std::size_t> part_rows;
    for (const Tensor& p : parts) {
        const std::vector<double>& v = p.values();
        out.insert(out.end(), v.begin(), v.end());
        ids.push_back(p.id());
        part_rows.push_back(p.rows());
    }
    return t.make(Shape{rows, n}, std::move(out), rg,
                  [ids, part_rows, n](Tape& tp, int self) {
                      const std::vector<double>& g = tp.node(self).grad;
                      std::size_t off = 0;
                      for (std::size_t p = 0; p < ids.size(); ++p) {
                          detail::push_grad(tp, ids[p], &g[off * n], part_rows[p] * n);
                          off += part_rows[p];
                      }
                  });
}

// Rows [r0, r0+nrows) as a new tensor.
inline Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t nrows) {
    Tape& t = *a.tape();
    if (r0 + nrows > a.rows()) throw shape_error("slice_rows: out of range");
    const std::size_t n = a.cols();
    const std::vector<double>& v = a.values();
    std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(r0 * n),
                            v.begin() + static_cast<std::ptrdiff_t>((r0 + nrows) * n));
    const int aid = a.id();
    return t.make(Shape{nrows, n}, std::move(out), a.requires_grad(),
                  [aid, r0, nrows, n](Tape& tp, int self) {
                      const std::vector<double>& g = tp.node(self).grad;
                      std::vector<double>& ga = tp.grad_of(aid);
                      for (std::size_t i = 0; i < nrows * n; ++i) ga[r0 * n + i] += g[i];
                  });
}

// Stack along the point (column) axis.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw contract_error("concat_cols: no parts");
    Tape& t = *parts[0].tape();
    const std::size_t d = parts[0].rows();
    std::size_t cols = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        if (p.rows() != d) throw shape_error("concat_cols: row mismatch");
        detail::same_tape(parts[0], p);
        cols += p.cols();
        rg = rg || p.requires_grad();
    }
    std::vector<double> out(d * cols);
    std::vector<int> ids;
    std::vector<std::size_t> part_cols;
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        const std::vector<double>& v = p.values();
        const std::size_t pc = p.cols();
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t j = 0; j < pc; ++j) out[r * cols + off + j] = v[r * pc + j];
        ids.push_back(p.id());
        part_cols.push_back(pc);
        off += pc;
    }
    return t.make(Shape{d, cols}, std::move(out), rg,
                  [ids, part_cols, d, cols](Tape& tp, int self) {
                      const std::vector<double>& g = tp.node(self).grad;
                      std::size_t off = 0;
                      for (std::size_t p = 0; p < ids.size(); ++p) {
                          const std::size_t pc = part_cols[p];
                          if (tp.node(ids[p]).requires_grad) {
                              std::vector<double>& gp = tp.grad_of(ids[p]);
                              for (std::size_t r = 0; r < d; ++r)
                                  for (std::size_t j = 0; j < pc; ++j)
                                      gp[r * pc + j] += g[r * cols + off + j];
                          }
                          off += pc;
                      }
                  });
}

// Select columns by index list (repeats allowed); backward scatter-adds.
inline Tensor gather_cols(const Tensor& a, const std::vector<std::size_t>& idx) {
    Tape& t = *a.tape();
    const std::size_t d = a.rows(), n = a.cols(), m = idx.size();
    for (std::size_t j : idx)
        if (j >= n) throw contract_error("gather_cols: index out of range");
    const std::vector<double>& v = a.values();
    std::vector<double> out(d * m);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t j = 0; j < m; ++j) out[r * m + j] = v[r * n + idx[j]];
    const int aid = a.id();
    return t.make(Shape{d, m}, std::move(out), a.requires_grad(),
                  [aid, idx, d, n, m](Tape& tp, int self) {
                      const std::vector<double>& g = tp.node(self).grad;
                      std::vector<double>& ga = tp.grad_of(aid);
                      for (std::size_t r = 0; r < d; ++r)
                          for (std::size_t j = 0; j < m; ++j) ga[r * n + idx[j]] += g[r * m + j];
                  });
}

// Select scalar entries by flattened index; result is 1 x idx.size().
inline Tensor gather_flat(const Tensor& a, const std::vector<std::size_t>& idx) {
    Tape& t = *a.tape();
    const std::size_t total = a.size(), m = idx.size();
    for (std::size_t j : idx)
        if (j >= total) throw contract_error("gather_flat: index out of range");
    const std::vector<double>& v = a.values();
    std::vector<double> out(m);
    for (std::size_t j = 0; j < m; ++j) out[j] = v[idx[j]];
    const int aid = a.id();
    return t.make(Shape{1, m}, std::move(out), a.requires_grad(), [aid, idx, m](Tape& tp, int self) {
        const std::vector<double>& g = tp.node(self).grad;
        std::vector<double>& ga = tp.grad_of(aid);
        for (std::size_t j = 0; j < m; ++j) ga[idx[j]] += g[j];
    });
}

// For each of the q index rows, gather k columns and stack them along the
// channel axis: out[(r*d)..(r*d+d), j] = a[:, idx(j, r)]. Fuses the
// per-anchor gather+concat of the points reducer into one node.
inline Tensor gather_concat_cols(const Tensor& a, const IndexMatrix& idx) {
    Tape& t = *a.tape();
    const std::size_t d = a.rows(), n = a.cols(), q = idx.rows, k = idx.cols;
    for (std::size_t j : idx.idx)
        if (j >= n) throw contract_error("gather_concat_cols: index out of range");
    const std::vector<double>& v = a.values();
    std::vector<double> out(k * d * q);
    for (std::size_t j = 0; j < q; ++j)
        for (std::size_t r = 0; r < k; ++r) {
            const std::size_t src = idx.at(j, r);
            for (std::size_t c = 0; c < d; ++c) out[(r * d + c) * q + j] = v[c * n + src];
        }
    const int aid = a.id();
    return t.make(Shape{k * d, q}, std::move(out), a.requires_grad(),
                  [aid, idx, d, n, q, k](Tape& tp, int self) {
                      const std::vector<double>& g = tp.node(self).grad;
                      std::vector<double>& ga = tp.grad_of(aid);
                      for (std::size_t j = 0; j < q; ++j)
                          for (std::size_t r = 0; r < k; ++r) {
                              const std::size_t src = idx.at(j, r);
                              for (std::size_t c = 0; c < d; ++c)
                                  ga[c * n + src] += g[(r * d + c) * q + j];
                          }
                  });
}

// For each of the q index rows, the mean of the k gathered columns:
// out[:, j] = mean_r a[:, idx(j, r)].
inline Tensor gather_mean_cols(const Tensor& a, const IndexMatrix& idx) {
    Tape& t = *a.tape();
    const std::size_t d = a.rows(), n = a.cols(), q = idx.rows, k = idx.cols;
    if (k == 0) throw contract_error("gather_mean_cols: empty index rows");
    for (std::size_t j : idx.idx)
        if (j >= n) throw contract_error("gather_mean_cols: index out of range");
    const std::vector<double>& v = a.values();
    std::vector<double> out(d * q, 0.0);
    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::size_t j = 0; j < q; ++j)
        for (std::size_t r = 0; r < k; ++r) {
            const std::size_t src = idx.at(j, r);
            for (std::size_t c = 0; c < d; ++c) out[c * q + j] += v[c * n + src];
        }
    for (double& x : out) x *= inv_k;
    const int aid = a.id();
    return t.make(Shape{d, q}, std::move(out), a.requires_grad(),
                  [aid, idx, d, n, q, k, inv_k](Tape& tp, int self) {
                      const std::vector<double>& g = tp.node(self).grad;
                      std::vector<double>& ga = tp.grad_of(aid);
                      for (std::size_t j = 0; j < q; ++j)
                          for (std::size_t r = 0; r < k; ++r) {
                              const std::size_t src = idx.at(j, r);
                              for (std::size_t c = 0; c < d; ++c)
                                  ga[c * n + src] += g[c * q + j] * inv_k;
                          }
                  });
}

// d x 1 column repeated m times.
inline Tensor repeat_cols(const Tensor& a, std::size_t m) {
    Tape& t = *a.tape();
    if (a.cols() != 1) throw shape_error("repeat_cols: expected a d x 1 column");
    const std::size_t d = a.rows();
    const std::vector<double>& v = a.values();
    std::vector<double> out(d * m);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t j = 0; j < m; ++j) out[r * m + j] = v[r];
    const int aid = a.id();
    return t.make(Shape{d, m}, std::move(out), a.requires_grad(), [aid, d, m](Tape& tp, int self) {
        const std::vector<double>& g = tp.node(self).grad;
        std::vector<double>& ga = tp.grad_of(aid);
        for (std::size_t r = 0; r < d; ++r) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += g[r * m + j];
            ga[r] += acc;
        }
    });
}

// a[d x m] scaled per column by w[1 x m].
inline Tensor colwise_scale(const Tensor& a, const Tensor& w) {
    Tape& t = detail::same_tape(a, w);
    const std::size_t d = a.rows(), m = a.cols();
    if (w.rows() != 1 || w.cols() != m) throw shape_error("colwise_scale: weights must be 1 x cols");
    const std::vector<double>& av = a.values();
    const std::vector<double>& wv = w.values();
    std::vector<double> out(d * m);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t j = 0; j < m; ++j) out[r * m + j] = av[r * m + j] * wv[j];
    const bool rg = a.requires_grad() || w.requires_grad();
    const int aid = a.id(), wid = w.id();
    return t.make(Shape{d, m}, std::move(out), rg, [aid, wid, d, m](Tape& tp, int self) {
        const std::vector<double>& g = tp.node(self).grad;
        const std::vector<double>& av = tp.node(aid).value;
        const std::vector<double>& wv = tp.node(wid).value;
        if (tp.node(aid).requires_grad) {
            std::vector<double>& ga = tp.grad_of(aid);
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t j = 0; j < m; ++j) ga[r * m + j] += g[r * m + j] * wv[j];
        }
        if (tp.node(wid).requires_grad) {
            std::vector<double>& gw = tp.grad_of(wid);
            for (std::size_t j = 0; j < m; ++j) {
                double acc = 0.0;
                for (std::size_t r = 0; r < d; ++r) acc += g[r * m + j] * av[r * m + j];
                gw[j] += acc;
            }
        }
    });
}

namespace detail {

inline Tensor reduce_all(const Tensor& a, double scale) {
    Tape& t = *a.tape();
    const std::vector<double>& v = a.values();
    double acc = 0.0;
    for (double x : v) acc += x;
    const int aid = a.id();
    const std::size_t n = v.size();
    return t.make(Shape{1, 1}, {acc * scale}, a.requires_grad(),
                  [aid, n, scale](Tape& tp, int self) {
                      const double g = tp.node(self).grad[0] * scale;
                      std::vector<double>& ga = tp.grad_of(aid);
                      for (std::size_t i = 0; i < n; ++i) ga[i] += g;
                  });
}

inline Tensor reduce_cols(const Tensor& a, double scale) {
    Tape& t = *a.tape();
    const std::size_t d = a.rows(), n = a.cols();
    const std::vector<double>& v = a.values();
    std::vector<double> out(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += v[r * n + j];
        out[r] = acc * scale;
    }
    const int aid = a.id();
    return t.make(Shape{d, 1}, std::move(out), a.requires_grad(),
                  [aid, d, n, scale](Tape& tp, int self) {
                      const std::vector<double>& g = tp.node(self).grad;
                      std::vector<double>& ga = tp.grad_of(aid);
                      for (std::size_t r = 0; r < d; ++r)
                          for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += g[r] * scale;
                  });
}

}  // namespace detail

inline Tensor sum_all(const Tensor& a) { return detail::reduce_all(a, 1.0); }
inline Tensor mean_all(const Tensor& a) {
    return detail::reduce_all(a, 1.0 / static_cast<double>(a.size()));
}
inline Tensor sum_cols(const Tensor& a) { return detail::reduce_cols(a, 1.0); }
inline Tensor mean_cols(const Tensor& a) {
    return detail::reduce_cols(a, 1.0 / static_cast<double>(a.cols()));
}

// Norm floor below which a feature vector is treated as degenerate rather
// than silently clamped (a zero feature vector indicates an upstream bug).
inline constexpr double kNormEpsilon = 1e-12;

// Pairwise cosine similarity: out(j, m) = <centers_j, points_m> /
// (|centers_j| |points_m|), shape c x n. Entries lie in [-1, 1].
inline Tensor cosine_similarity(const Tensor& points, const Tensor& centers) {
    Tape& t = detail::same_tape(points, centers);
    const std::size_t d = points.rows(), n = points.cols(), c = centers.cols();
    if (centers.rows() != d)
        throw shape_error("cosine_similarity: dimension mismatch " +
                          Tape::shape_str(points.shape()) + " vs " +
                          Tape::shape_str(centers.shape()));
    const std::vector<double>& p = points.values();
    const std::vector<double>& q = centers.values();
    std::vector<double> pn(n), qn(c);
    for (std::size_t m = 0; m < n; ++m) {
        double acc = 0.0;
        for (std::size_t r = 0; r < d; ++r) acc += p[r * n + m] * p[r * n + m];
        pn[m] = std::sqrt(acc);
        if (pn[m] < kNormEpsilon)
            throw degenerate_error("cosine_similarity: point column " + std::to_string(m) +
                                   " has near-zero norm");
    }
    for (std::size_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (std::size_t r = 0; r < d; ++r) acc += q[r * c + j] * q[r * c + j];
        qn[j] = std::sqrt(acc);
        if (qn[j] < kNormEpsilon)
            throw degenerate_error("cosine_similarity: center column " + std::to_string(j) +
                                   " has near-zero norm");
    }
    std::vector<double> out(c * n);
    for (std::size_t j = 0; j < c; ++j)
        for (std::size_t m = 0; m < n; ++m) {
            double dot = 0.0;
            for (std::size_t r = 0; r < d; ++r) dot += q[r * c + j] * p[r * n + m];
            out[j * n + m] = dot / (qn[j] * pn[m]);
        }
    const bool rg = points.requires_grad() || centers.requires_grad();
    const int pid = points.id(), cid = centers.id();
    return t.make(Shape{c, n}, std::move(out), rg,
                  [pid, cid, pn, qn, d, n, c](Tape& tp, int self) {
                      const std::vector<double>& g = tp.node(self).grad;
                      const std::vector<double>& s = tp.node(self).value;
                      const std::vector<double>& p = tp.node(pid).value;
                      const std::vector<double>& q = tp.node(cid).value;
                      // d s_jm / d p_m = q_j/(|q_j||p_m|) - s_jm p_m/|p_m|^2
                      if (tp.node(pid).requires_grad) {
                          std::vector<double>& gp = tp.grad_of(pid);
                          for (std::size_t m = 0; m < n; ++m)
                              for (std::size_t j = 0; j < c; ++j) {
                                  const double gj = g[j * n + m];
                                  if (gj == 0.0) continue;
                                  const double inv = 1.0 / (qn[j] * pn[m]);
                                  const double sp = s[j * n + m] / (pn[m] * pn[m]);
                                  for (std::size_t r = 0; r < d; ++r)
                                      gp[r * n + m] += gj * (q[r * c + j] * inv - sp * p[r * n + m]);
                              }
                      }
                      if (tp.node(cid).requires_grad) {
                          std::vector<double>& gq = tp.grad_of(cid);
                          for (std::size_t j = 0; j < c; ++j)
                              for (std::size_t m = 0; m < n; ++m) {
                                  const double gj = g[j * n + m];
                                  if (gj == 0.0) continue;
                                  const double inv = 1.0 / (qn[j] * pn[m]);
                                  const double sq = s[j * n + m] / (qn[j] * qn[j]);
                                  for (std::size_t r = 0; r < d; ++r)
                                      gq[r * c + j] += gj * (p[r * n + m] * inv - sq * q[r * c + j]);
                              }
                      }
                  });
}

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

// f builds a scalar loss on the given tape from one input tensor. Returns
// max over coordinates of |analytic - central| / max(1, |central|).
inline double finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                                const Shape& shape, const std::vector<double>& point,
                                double step) {
    if (!(step > 0.0)) throw contract_error("finite_diff_check: step must be positive");
    RoutingTrace trace;
    std::vector<double> analytic;
    {
        Tape tape;
        tape.set_routing(&trace);
        Tensor x = tape.input(shape, point, true);
        Tensor loss = f(tape, x);
        tape.backward(loss);
        analytic = tape.grad(x);
    }
    trace.replay = true;
    auto eval = [&](const std::vector<double>& at) {
        Tape tape;
        trace.rewind();
        tape.set_routing(&trace);
        Tensor x = tape.input(shape, at, false);
        return f(tape, x).scalar();
    };
    double worst = 0.0;
    std::vector<double> probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        probe[i] = point[i] + step;
        const double hi = eval(probe);
        probe[i] = point[i] - step;
        const double lo = eval(probe);
        probe[i] = point[i];
        const double central = (hi - lo) / (2.0 * step);
        const double err = std::fabs(analytic[i] - central) / std::max(1.0, std::fabs(central));
        if (err > worst) worst = err;
    }
    return worst;
}

}  // namespace pcc
