#pragma once

// Dense tensor engine with reverse-mode automatic differentiation.
// Tensors are handles to shared nodes on an implicit tape; backward()
// replays the tape in reverse creation order, which fixes the gradient
// accumulation order and keeps repeated runs bitwise identical.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace car {

using Shape = std::vector<size_t>;

inline size_t shape_size(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline uint64_t& node_id_counter() {
    thread_local uint64_t counter = 0;
    return counter;
}

template <typename Real>
struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;        // allocated lazily during backward
    bool requires_grad = false;    // set on leaves the user wants gradients for
    bool needs_grad = false;       // computed per backward pass
    bool backward_done = false;
    uint64_t id = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), Real(0));
    }
};

template <typename Real>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<Real>> n) : node_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), Real(0), requires_grad);
    }

    static Tensor filled(Shape shape, Real v, bool requires_grad = false) {
        auto n = std::make_shared<Node<Real>>();
        n->shape = std::move(shape);
        n->value.assign(shape_size(n->shape), v);
        n->requires_grad = requires_grad;
        n->id = ++node_id_counter();
        return Tensor(n);
    }

    static Tensor from_data(Shape shape, std::vector<Real> data, bool requires_grad = false) {
        if (shape_size(shape) != data.size())
            throw std::invalid_argument("from_data: shape " + shape_str(shape) + " does not match data length " +
                                        std::to_string(data.size()));
        auto n = std::make_shared<Node<Real>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        n->id = ++node_id_counter();
        return Tensor(n);
    }

    static Tensor scalar(Real v) { return from_data({}, {v}); }

    bool valid() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    size_t size() const { return node_->value.size(); }
    size_t dim(size_t i) const { return node_->shape.at(i); }
    size_t rank() const { return node_->shape.size(); }

    std::vector<Real>& data() { return node_->value; }
    const std::vector<Real>& data() const { return node_->value; }
    const std::vector<Real>& grad() const {
        if (node_->grad.empty())
            throw std::logic_error("grad accessed before backward (op=" + std::string(node_->op) + ")");
        return node_->grad;
    }
    bool has_grad() const { return !node_->grad.empty(); }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }
    const char* op_name() const { return node_->op; }
    uint64_t id() const { return node_->id; }

    Real item() const {
        if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
        return node_->value[0];
    }

    void zero_grad() { node_->grad.clear(); }

    std::shared_ptr<Node<Real>> node() const { return node_; }

    // Reverse-mode sweep from a scalar loss. Visits reachable nodes in
    // strictly decreasing creation order, which is a reverse topological
    // order because every op is created after its inputs.
    void backward() const {
        if (size() != 1) throw std::invalid_argument("backward() requires a scalar loss, got " + shape_str(shape()));
        if (node_->backward_done) throw std::logic_error("backward() called twice on the same graph");
        node_->backward_done = true;

        std::vector<std::shared_ptr<Node<Real>>> nodes;
        collect(node_, nodes);
        std::sort(nodes.begin(), nodes.end(),
                  [](const auto& a, const auto& b) { return a->id > b->id; });

        // needs_grad propagates from requires_grad leaves upwards; nodes are
        // in decreasing id order so parents come after children here.
        for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
            auto& n = *it;
            if (n->parents.empty()) {
                n->needs_grad = n->requires_grad;
            } else {
                n->needs_grad = false;
                for (const auto& p : n->parents)
                    if (p->needs_grad) { n->needs_grad = true; break; }
            }
        }
        if (!node_->needs_grad && !node_->requires_grad) return;

        node_->ensure_grad();
        node_->grad[0] = Real(1);
        for (auto& n : nodes) {
            if (!n->backprop || n->grad.empty()) continue;
            n->backprop(*n);
        }
    }

private:
    static void collect(const std::shared_ptr<Node<Real>>& n,
                        std::vector<std::shared_ptr<Node<Real>>>& out) {
        // iterative DFS with visit marks via sorted id set
        std::vector<std::shared_ptr<Node<Real>>> stack{n};
        std::vector<uint64_t> seen;
        auto mark = [&seen](uint64_t id) {
            auto it = std::lower_bound(seen.begin(), seen.end(), id);
            if (it != seen.end() && *it == id) return false;
            seen.insert(it, id);
            return true;
        };
        mark(n->id);
        while (!stack.empty()) {
            auto cur = stack.back();
            stack.pop_back();
            out.push_back(cur);
            for (const auto& p : cur->parents)
                if (mark(p->id)) stack.push_back(p);
        }
    }

    std::shared_ptr<Node<Real>> node_;
};

namespace detail {

template <typename Real>
std::shared_ptr<Node<Real>> make_node(Shape shape, const char* op,
                                      std::vector<std::shared_ptr<Node<Real>>> parents) {
    auto n = std::make_shared<Node<Real>>();
    n->value.assign(shape_size(shape), Real(0));
    n->shape = std::move(shape);
    n->op = op;
    n->parents = std::move(parents);
    n->id = ++node_id_counter();
    return n;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (size_t i = 0; i < rank; ++i) {
        size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1)
            throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                                        " are not broadcast-compatible");
        out[i] = std::max(da, db);
    }
    return out;
}

// Row-major strides with zero stride on broadcast dimensions, aligned to
// the trailing dimensions of the output shape.
inline std::vector<size_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<size_t> strides(out.size(), 0);
    size_t s = 1;
    size_t offset = out.size() - in.size();
    for (size_t i = in.size(); i-- > 0;) {
        strides[i + offset] = (in[i] == 1) ? 0 : s;
        s *= in[i];
    }
    return strides;
}

// Applies fn(out_index, a_index, b_index) over every element of `out`.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<size_t>& sa,
                        const std::vector<size_t>& sb, Fn&& fn) {
    size_t n = shape_size(out);
    size_t rank = out.size();
    std::vector<size_t> idx(rank, 0);
    size_t ia = 0, ib = 0;
    for (size_t i = 0; i < n; ++i) {
        fn(i, ia, ib);
        for (size_t d = rank; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) break;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

// C(MxN) += A(MxK) * B(KxN)
template <typename Real>
void gemm_nn(size_t M, size_t N, size_t K, const Real* A, const Real* B, Real* C) {
    for (size_t m = 0; m < M; ++m) {
        Real* c = C + m * N;
        const Real* a = A + m * K;
        for (size_t k = 0; k < K; ++k) {
            Real amk = a[k];
            const Real* b = B + k * N;
            for (size_t n = 0; n < N; ++n) c[n] += amk * b[n];
        }
    }
}

// C(MxN) += A(KxM)^T * B(KxN)
template <typename Real>
void gemm_tn(size_t M, size_t N, size_t K, const Real* A, const Real* B, Real* C) {
    for (size_t k = 0; k < K; ++k) {
        const Real* a = A + k * M;
        const Real* b = B + k * N;
        for (size_t m = 0; m < M; ++m) {
            Real amk = a[m];
            Real* c = C + m * N;
            for (size_t n = 0; n < N; ++n) c[n] += amk * b[n];
        }
    }
}

// C(MxN) += A(MxK) * B(NxK)^T
template <typename Real>
void gemm_nt(size_t M, size_t N, size_t K, const Real* A, const Real* B, Real* C) {
    for (size_t m = 0; m < M; ++m) {
        const Real* a = A + m * K;
        Real* c = C + m * N;
        for (size_t n = 0; n < N; ++n) {
            const Real* b = B + n * K;
            Real acc = 0;
            for (size_t k = 0; k < K; ++k) acc += a[k] * b[k];
            c[n] += acc;
        }
    }
}

// Decomposes `shape` around `axis` into (outer, n, inner).
inline void axis_split(const Shape& shape, size_t axis, size_t& outer, size_t& n, size_t& inner) {
    if (axis >= shape.size())
        throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
    outer = 1;
    inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= shape[i];
    n = shape[axis];
    for (size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace detail

template <typename Real, typename Fwd, typename Bwd>
Tensor<Real> binary_broadcast_op(const Tensor<Real>& a, const Tensor<Real>& b, const char* name,
                                 Fwd fwd, Bwd bwd) {
    Shape out_shape = detail::broadcast_shape(a.shape(), b.shape(), name);
    auto sa = detail::broadcast_strides(a.shape(), out_shape);
    auto sb = detail::broadcast_strides(b.shape(), out_shape);
    auto n = detail::make_node<Real>(out_shape, name, {a.node(), b.node()});
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = n->value;
    detail::for_each_broadcast(out_shape, sa, sb,
                               [&](size_t i, size_t ia, size_t ib) { ov[i] = fwd(av[ia], bv[ib]); });
    n->backprop = [out_shape, sa, sb, bwd](Node<Real>& self) {
        auto pa = self.parents[0];
        auto pb = self.parents[1];
        if (pa->needs_grad) pa->ensure_grad();
        if (pb->needs_grad) pb->ensure_grad();
        detail::for_each_broadcast(out_shape, sa, sb, [&](size_t i, size_t ia, size_t ib) {
            Real g = self.grad[i];
            Real da = 0, db = 0;
            bwd(pa->value[ia], pb->value[ib], g, da, db);
            if (pa->needs_grad) pa->grad[ia] += da;
            if (pb->needs_grad) pb->grad[ib] += db;
        });
    };
    return Tensor<Real>(n);
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
    return binary_broadcast_op<Real>(
        a, b, "add", [](Real x, Real y) { return x + y; },
        [](Real, Real, Real g, Real& da, Real& db) { da = g; db = g; });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
    return binary_broadcast_op<Real>(
        a, b, "sub", [](Real x, Real y) { return x - y; },
        [](Real, Real, Real g, Real& da, Real& db) { da = g; db = -g; });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
    return binary_broadcast_op<Real>(
        a, b, "mul", [](Real x, Real y) { return x * y; },
        [](Real x, Real y, Real g, Real& da, Real& db) { da = g * y; db = g * x; });
}

template <typename Real, typename Fwd, typename Bwd>
Tensor<Real> unary_op(const Tensor<Real>& a, const char* name, Fwd fwd, Bwd bwd) {
    auto n = detail::make_node<Real>(a.shape(), name, {a.node()});
    const auto& av = a.data();
    for (size_t i = 0; i < av.size(); ++i) n->value[i] = fwd(av[i]);
    n->backprop = [bwd](Node<Real>& self) {
        auto p = self.parents[0];
        if (!p->needs_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            p->grad[i] += self.grad[i] * bwd(p->value[i]);
    };
    return Tensor<Real>(n);
}

template <typename Real>
Tensor<Real> abs_val(const Tensor<Real>& a) {
    return unary_op<Real>(
        a, "abs", [](Real x) { return std::abs(x); },
        [](Real x) { return x > Real(0) ? Real(1) : (x < Real(0) ? Real(-1) : Real(0)); });
}

template <typename Real>
Tensor<Real> square(const Tensor<Real>& a) {
    return unary_op<Real>(
        a, "square", [](Real x) { return x * x; }, [](Real x) { return Real(2) * x; });
}

// max(x - threshold, 0); gradient is zero where x <= threshold.
template <typename Real>
Tensor<Real> relu_max(const Tensor<Real>& a, Real threshold) {
    return unary_op<Real>(
        a, "relu_max",
        [threshold](Real x) { return x > threshold ? x - threshold : Real(0); },
        [threshold](Real x) { return x > threshold ? Real(1) : Real(0); });
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& a) {
    return relu_max(a, Real(0));
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real c) {
    return unary_op<Real>(
        a, "scale", [c](Real x) { return c * x; }, [c](Real) { return c; });
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real c) {
    return unary_op<Real>(
        a, "add_scalar", [c](Real x) { return x + c; }, [](Real) { return Real(1); });
}

// Copies values out of the graph; gradients do not flow through.
template <typename Real>
Tensor<Real> detach(const Tensor<Real>& a) {
    return Tensor<Real>::from_data(a.shape(), a.data());
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape shape) {
    if (shape_size(shape) != a.size())
        throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape) +
                                    " changes element count");
    auto n = detail::make_node<Real>(shape, "reshape", {a.node()});
    n->value = a.data();
    n->backprop = [](Node<Real>& self) {
        auto p = self.parents[0];
        if (!p->needs_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    };
    return Tensor<Real>(n);
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: expects rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    size_t M = a.dim(0), K = a.dim(1), K2 = b.dim(0), N = b.dim(1);
    if (K != K2)
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    auto n = detail::make_node<Real>({M, N}, "matmul", {a.node(), b.node()});
    detail::gemm_nn(M, N, K, a.data().data(), b.data().data(), n->value.data());
    n->backprop = [M, N, K](Node<Real>& self) {
        auto pa = self.parents[0];
        auto pb = self.parents[1];
        if (pa->needs_grad) {
            pa->ensure_grad();
            detail::gemm_nt(M, K, N, self.grad.data(), pb->value.data(), pa->grad.data());
        }
        if (pb->needs_grad) {
            pb->ensure_grad();
            detail::gemm_tn(K, N, M, pa->value.data(), self.grad.data(), pb->grad.data());
        }
    };
    return Tensor<Real>(n);
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: expects rank-2 tensor, got " + shape_str(a.shape()));
    size_t M = a.dim(0), N = a.dim(1);
    auto n = detail::make_node<Real>({N, M}, "transpose", {a.node()});
    for (size_t m = 0; m < M; ++m)
        for (size_t j = 0; j < N; ++j) n->value[j * M + m] = a.data()[m * N + j];
    n->backprop = [M, N](Node<Real>& self) {
        auto p = self.parents[0];
        if (!p->needs_grad) return;
        p->ensure_grad();
        for (size_t m = 0; m < M; ++m)
            for (size_t j = 0; j < N; ++j) p->grad[m * N + j] += self.grad[j * M + m];
    };
    return Tensor<Real>(n);
}

// Rows [begin, end) of a rank-2 tensor.
template <typename Real>
Tensor<Real> slice_rows(const Tensor<Real>& a, size_t begin, size_t end) {
    if (a.rank() != 2) throw std::invalid_argument("slice_rows: expects rank-2 tensor");
    if (begin > end || end > a.dim(0)) throw std::invalid_argument("slice_rows: range out of bounds");
    size_t N = a.dim(1);
    auto n = detail::make_node<Real>({end - begin, N}, "slice_rows", {a.node()});
    std::copy(a.data().begin() + begin * N, a.data().begin() + end * N, n->value.begin());
    n->backprop = [begin, N](Node<Real>& self) {
        auto p = self.parents[0];
        if (!p->needs_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[begin * N + i] += self.grad[i];
    };
    return Tensor<Real>(n);
}

// Numerically stable softmax along `axis`: shifts by the row maximum.
template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& a, size_t axis) {
    size_t outer, cnt, inner;
    detail::axis_split(a.shape(), axis, outer, cnt, inner);
    if (cnt == 0) throw std::invalid_argument("softmax: empty axis");
    auto n = detail::make_node<Real>(a.shape(), "softmax", {a.node()});
    const auto& x = a.data();
    auto& y = n->value;
    for (size_t o = 0; o < outer; ++o) {
        for (size_t in = 0; in < inner; ++in) {
            size_t base = o * cnt * inner + in;
            Real mx = x[base];
            for (size_t k = 1; k < cnt; ++k) mx = std::max(mx, x[base + k * inner]);
            Real sum = 0;
            for (size_t k = 0; k < cnt; ++k) {
                Real e = std::exp(x[base + k * inner] - mx);
                y[base + k * inner] = e;
                sum += e;
            }
            for (size_t k = 0; k < cnt; ++k) y[base + k * inner] /= sum;
        }
    }
    n->backprop = [outer, cnt, inner](Node<Real>& self) {
        auto p = self.parents[0];
        if (!p->needs_grad) return;
        p->ensure_grad();
        for (size_t o = 0; o < outer; ++o) {
            for (size_t in = 0; in < inner; ++in) {
                size_t base = o * cnt * inner + in;
                Real dot = 0;
                for (size_t k = 0; k < cnt; ++k) dot += self.grad[base + k * inner] * self.value[base + k * inner];
                for (size_t k = 0; k < cnt; ++k) {
                    size_t i = base + k * inner;
                    p->grad[i] += self.value[i] * (self.grad[i] - dot);
                }
            }
        }
    };
    return Tensor<Real>(n);
}

// log(sum(exp(x))) along `axis`; the axis is removed from the output shape.
template <typename Real>
Tensor<Real> log_sum_exp(const Tensor<Real>& a, size_t axis) {
    size_t outer, cnt, inner;
    detail::axis_split(a.shape(), axis, outer, cnt, inner);
    if (cnt == 0) throw std::invalid_argument("log_sum_exp: empty axis");
    Shape out_shape;
    for (size_t i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.shape()[i]);
    auto n = detail::make_node<Real>(out_shape, "log_sum_exp", {a.node()});
    const auto& x = a.data();
    for (size_t o = 0; o < outer; ++o) {
        for (size_t in = 0; in < inner; ++in) {
            size_t base = o * cnt * inner + in;
            Real mx = x[base];
            for (size_t k = 1; k < cnt; ++k) mx = std::max(mx, x[base + k * inner]);
            Real sum = 0;
            for (size_t k = 0; k < cnt; ++k) sum += std::exp(x[base + k * inner] - mx);
            n->value[o * inner + in] = mx + std::log(sum);
        }
    }
    n->backprop = [outer, cnt, inner](Node<Real>& self) {
        auto p = self.parents[0];
        if (!p->needs_grad) return;
        p->ensure_grad();
        for (size_t o = 0; o < outer; ++o) {
            for (size_t in = 0; in < inner; ++in) {
                size_t base = o * cnt * inner + in;
                Real lse = self.value[o * inner + in];
                Real g = self.grad[o * inner + in];
                for (size_t k = 0; k < cnt; ++k) {
                    size_t i = base + k * inner;
                    p->grad[i] += g * std::exp(p->value[i] - lse);
                }
            }
        }
    };
    return Tensor<Real>(n);
}

enum class Reduce { sum, mean };

template <typename Real>
Tensor<Real> reduce_axis(const Tensor<Real>& a, Reduce kind, size_t axis) {
    size_t outer, cnt, inner;
    detail::axis_split(a.shape(), axis, outer, cnt, inner);
    if (cnt == 0) throw std::invalid_argument("reduce: reduction over zero elements");
    Shape out_shape;
    for (size_t i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.shape()[i]);
    auto n = detail::make_node<Real>(out_shape, kind == Reduce::sum ? "sum" : "mean", {a.node()});
    Real inv = kind == Reduce::mean ? Real(1) / Real(cnt) : Real(1);
    const auto& x = a.data();
    for (size_t o = 0; o < outer; ++o)
        for (size_t in = 0; in < inner; ++in) {
            Real acc = 0;
            for (size_t k = 0; k < cnt; ++k) acc += x[(o * cnt + k) * inner + in];
            n->value[o * inner + in] = acc * inv;
        }
    n->backprop = [outer, cnt, inner, inv](Node<Real>& self) {
        auto p = self.parents[0];
        if (!p->needs_grad) return;
        p->ensure_grad();
        for (size_t o = 0; o < outer; ++o)
            for (size_t in = 0; in < inner; ++in) {
                Real g = self.grad[o * inner + in] * inv;
                for (size_t k = 0; k < cnt; ++k) p->grad[(o * cnt + k) * inner + in] += g;
            }
    };
    return Tensor<Real>(n);
}

template <typename Real>
Tensor<Real> reduce_all(const Tensor<Real>& a, Reduce kind) {
    if (a.size() == 0) throw std::invalid_argument("reduce: reduction over zero elements");
    auto n = detail::make_node<Real>({}, kind == Reduce::sum ? "sum_all" : "mean_all", {a.node()});
    Real inv = kind == Reduce::mean ? Real(1) / Real(a.size()) : Real(1);
    Real acc = 0;
    for (Real v : a.data()) acc += v;
    n->value[0] = acc * inv;
    n->backprop = [inv](Node<Real>& self) {
        auto p = self.parents[0];
        if (!p->needs_grad) return;
        p->ensure_grad();
        Real g = self.grad[0] * inv;
        for (auto& gi : p->grad) gi += g;
    };
    return Tensor<Real>(n);
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a) { return reduce_all(a, Reduce::sum); }
template <typename Real>
Tensor<Real> mean(const Tensor<Real>& a) { return reduce_all(a, Reduce::mean); }
template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a, size_t axis) { return reduce_axis(a, Reduce::sum, axis); }
template <typename Real>
Tensor<Real> mean(const Tensor<Real>& a, size_t axis) { return reduce_axis(a, Reduce::mean, axis); }

// 2-D convolution over NHWC input, stride 1, same padding.
// weight layout: (KH, KW, Cin, Cout); bias: (Cout).
// Implemented with im2col so forward and both backward products are GEMMs.
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& bias) {
    if (x.rank() != 4) throw std::invalid_argument("conv2d: input must be rank-4 NHWC, got " + shape_str(x.shape()));
    if (w.rank() != 4) throw std::invalid_argument("conv2d: weight must be rank-4 (KH,KW,Cin,Cout)");
    size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
    size_t KH = w.dim(0), KW = w.dim(1), WCi = w.dim(2), Co = w.dim(3);
    if (WCi != Ci)
        throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(x.shape()) + " weight " +
                                    shape_str(w.shape()));
    if (bias.size() != Co) throw std::invalid_argument("conv2d: bias length != Cout");
    if (KH % 2 == 0 || KW % 2 == 0) throw std::invalid_argument("conv2d: kernel dims must be odd");
    size_t PH = KH / 2, PW = KW / 2;
    size_t patch = KH * KW * Ci;
    size_t HW = H * W;

    auto im2col = [=](const Real* img, Real* col) {
        // col: (HW) x patch
        for (size_t y = 0; y < H; ++y)
            for (size_t xx = 0; xx < W; ++xx) {
                Real* row = col + (y * W + xx) * patch;
                size_t c = 0;
                for (size_t ky = 0; ky < KH; ++ky) {
                    long sy = long(y) + long(ky) - long(PH);
                    for (size_t kx = 0; kx < KW; ++kx) {
                        long sx = long(xx) + long(kx) - long(PW);
                        if (sy < 0 || sy >= long(H) || sx < 0 || sx >= long(W)) {
                            std::fill(row + c, row + c + Ci, Real(0));
                        } else {
                            const Real* src = img + (size_t(sy) * W + size_t(sx)) * Ci;
                            std::copy(src, src + Ci, row + c);
                        }
                        c += Ci;
                    }
                }
            }
    };

    auto n = detail::make_node<Real>({B, H, W, Co}, "conv2d", {x.node(), w.node(), bias.node()});
    std::vector<Real> col(HW * patch);
    for (size_t b = 0; b < B; ++b) {
        im2col(x.data().data() + b * HW * Ci, col.data());
        Real* out = n->value.data() + b * HW * Co;
        for (size_t i = 0; i < HW; ++i)
            std::copy(bias.data().begin(), bias.data().end(), out + i * Co);
        detail::gemm_nn(HW, Co, patch, col.data(), w.data().data(), out);
    }
    n->backprop = [=](Node<Real>& self) {
        auto px = self.parents[0];
        auto pw = self.parents[1];
        auto pb = self.parents[2];
        std::vector<Real> colbuf(HW * patch);
        std::vector<Real> dcol(HW * patch);
        if (px->needs_grad) px->ensure_grad();
        if (pw->needs_grad) pw->ensure_grad();
        if (pb->needs_grad) pb->ensure_grad();
        for (size_t b = 0; b < B; ++b) {
            const Real* dout = self.grad.data() + b * HW * Co;
            if (pw->needs_grad) {
                im2col(px->value.data() + b * HW * Ci, colbuf.data());
                detail::gemm_tn(patch, Co, HW, colbuf.data(), dout, pw->grad.data());
            }
            if (pb->needs_grad) {
                for (size_t i = 0; i < HW; ++i)
                    for (size_t c = 0; c < Co; ++c) pb->grad[c] += dout[i * Co + c];
            }
            if (px->needs_grad) {
                std::fill(dcol.begin(), dcol.end(), Real(0));
                detail::gemm_nt(HW, patch, Co, dout, pw->value.data(), dcol.data());
                Real* dimg = px->grad.data() + b * HW * Ci;
                for (size_t y = 0; y < H; ++y)
                    for (size_t xx = 0; xx < W; ++xx) {
                        const Real* row = dcol.data() + (y * W + xx) * patch;
                        size_t c = 0;
                        for (size_t ky = 0; ky < KH; ++ky) {
                            long sy = long(y) + long(ky) - long(PH);
                            for (size_t kx = 0; kx < KW; ++kx) {
                                long sx = long(xx) + long(kx) - long(PW);
                                if (sy >= 0 && sy < long(H) && sx >= 0 && sx < long(W)) {
                                    Real* dst = dimg + (size_t(sy) * W + size_t(sx)) * Ci;
                                    for (size_t ch = 0; ch < Ci; ++ch) dst[ch] += row[c + ch];
                                }
                                c += Ci;
                            }
                        }
                    }
            }
        }
    };
    return Tensor<Real>(n);
}

// Earliest-created tensor in t's graph holding a NaN/Inf, or nullptr.
template <typename Real>
const char* first_nonfinite_op(const Tensor<Real>& t) {
    std::vector<std::shared_ptr<Node<Real>>> stack{t.node()}, nodes;
    std::vector<uint64_t> seen{t.node()->id};
    while (!stack.empty()) {
        auto cur = stack.back();
        stack.pop_back();
        nodes.push_back(cur);
        for (const auto& p : cur->parents) {
            auto it = std::lower_bound(seen.begin(), seen.end(), p->id);
            if (it == seen.end() || *it != p->id) {
                seen.insert(it, p->id);
                stack.push_back(p);
            }
        }
    }
    std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) { return a->id < b->id; });
    for (const auto& n : nodes)
        for (Real v : n->value)
            if (!std::isfinite(v)) return n->op;
    return nullptr;
}

template <typename Real>
bool all_finite(const Tensor<Real>& t) {
    for (Real v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace car
