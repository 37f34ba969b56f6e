#pragma once

// Reverse-mode autodiff on dense row-major tensors. Graphs are built eagerly;
// each op returns a new tensor holding a node with value, parents and a
// backward closure. backward() on a scalar seeds grad=1 and walks the graph in
// reverse topological order. Parallel loops are arranged so that every output
// element is written by exactly one thread; results do not depend on the
// number of threads.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>

#include "scaa/common.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace scaa {

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backward_fn;  // reads this->grad, accumulates into parents

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }
};

inline thread_local bool g_grad_enabled = true;

}  // namespace detail

inline bool grad_enabled() { return detail::g_grad_enabled; }

// RAII switch that disables graph construction (pure forward evaluation).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
    ~NoGradGuard() { detail::g_grad_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename T>
class Tensor {
public:
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor zeros(Shape s, bool requires_grad = false) {
        return filled(std::move(s), T(0), requires_grad);
    }

    static Tensor filled(Shape s, T v, bool requires_grad = false) {
        auto n = std::make_shared<detail::Node<T>>();
        n->value.assign((size_t)numel(s), v);
        n->shape = std::move(s);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor from_vector(Shape s, std::vector<T> data, bool requires_grad = false) {
        SCAA_CHECK((int64_t)data.size() == numel(s), "from_vector: data size ", data.size(),
                   " does not match shape ", shape_str(s));
        auto n = std::make_shared<detail::Node<T>>();
        n->shape = std::move(s);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return from_vector({1}, {v}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t dim(size_t i) const { return node_->shape.at(i); }
    int64_t size() const { return (int64_t)node_->value.size(); }
    int64_t ndim() const { return (int64_t)node_->shape.size(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    const std::vector<T>& value() const { return node_->value; }
    // Direct mutation is only sound for leaves (parameters, buffers); graphs
    // built from earlier values must already be discarded.
    std::vector<T>& mutable_value() { return node_->value; }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const std::vector<T>& grad() const {
        SCAA_CHECK(has_grad(), "grad(): no gradient present");
        return node_->grad;
    }
    void zero_grad() { node_->grad.clear(); }

    T item() const {
        SCAA_CHECK(size() == 1, "item(): tensor has ", size(), " elements");
        return node_->value[0];
    }

    void backward() const {
        SCAA_CHECK(size() == 1, "backward(): root must be scalar, got ", shape_str(shape()));
        node_->ensure_grad();
        node_->grad[0] = T(1);
        run_backward();
    }

    // Walks the graph assuming this node's grad has already been seeded.
    void run_backward() const {
        std::vector<detail::Node<T>*> order;
        topo_sort(node_.get(), order);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            detail::Node<T>* n = *it;
            if (n->backward_fn) n->backward_fn(*n);
        }
    }

    NodePtr node_;

private:
    static void topo_sort(detail::Node<T>* root, std::vector<detail::Node<T>*>& order) {
        // Iterative postorder DFS over grad-requiring nodes.
        if (!root->requires_grad) return;
        std::unordered_set<detail::Node<T>*> visited;
        std::vector<std::pair<detail::Node<T>*, size_t>> stack;
        stack.push_back({root, 0});
        visited.insert(root);
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                detail::Node<T>* p = n->parents[idx++].get();
                if (p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward_fn) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (g_grad_enabled) {
        bool rg = false;
        for (auto& p : parents) rg = rg || p->requires_grad;
        if (rg) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor<T>(std::move(n));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace detail {

// Binary ops accept equal shapes or a single-element operand on either side.
inline void binary_check(const char* op, const Shape& a, const Shape& b) {
    if (numel(a) == 1 || numel(b) == 1 || a == b) return;
    fail(op, ": shape mismatch ", shape_str(a), " vs ", shape_str(b));
}

}  // namespace detail

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, FwdFn f, BwdFn dfdab) {
    detail::binary_check(name, a.shape(), b.shape());
    const auto& av = a.value();
    const auto& bv = b.value();
    const bool as = a.size() == 1, bs = b.size() == 1;
    const int64_t n = std::max(a.size(), b.size());
    std::vector<T> out((size_t)n);
    for (int64_t i = 0; i < n; ++i) out[(size_t)i] = f(av[as ? 0 : (size_t)i], bv[bs ? 0 : (size_t)i]);
    auto an = a.node_, bn = b.node_;
    return detail::make_result<T>(
        as && !bs ? b.shape() : a.shape(), std::move(out), {an, bn},
        [an, bn, as, bs, n, dfdab](detail::Node<T>& self) {
            const bool need_a = an->requires_grad, need_b = bn->requires_grad;
            if (need_a) an->ensure_grad();
            if (need_b) bn->ensure_grad();
            double acc_a = 0.0, acc_b = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const T x = an->value[as ? 0 : (size_t)i];
                const T y = bn->value[bs ? 0 : (size_t)i];
                const T g = self.grad[(size_t)i];
                auto [da, db] = dfdab(x, y);
                if (need_a) {
                    if (as)
                        acc_a += (double)(g * da);
                    else
                        an->grad[(size_t)i] += g * da;
                }
                if (need_b) {
                    if (bs)
                        acc_b += (double)(g * db);
                    else
                        bn->grad[(size_t)i] += g * db;
                }
            }
            if (need_a && as) an->grad[0] += (T)acc_a;
            if (need_b && bs) bn->grad[0] += (T)acc_b;
        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(
        "add", a, b, [](T x, T y) { return x + y; },
        [](T, T) { return std::pair<T, T>(T(1), T(1)); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(
        "sub", a, b, [](T x, T y) { return x - y; },
        [](T, T) { return std::pair<T, T>(T(1), T(-1)); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(
        "mul", a, b, [](T x, T y) { return x * y; },
        [](T x, T y) { return std::pair<T, T>(y, x); });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op(
        "div", a, b, [](T x, T y) { return x / y; },
        [](T x, T y) { return std::pair<T, T>(T(1) / y, -x / (y * y)); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
    const auto& av = a.value();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
    auto an = a.node_;
    return detail::make_result<T>(a.shape(), std::move(out), {an}, [an, c](detail::Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * c;
    });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    const auto& av = a.value();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + c;
    auto an = a.node_;
    return detail::make_result<T>(a.shape(), std::move(out), {an}, [an](detail::Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

// c - x
template <typename T>
Tensor<T> rsub_scalar(const Tensor<T>& a, T c) {
    const auto& av = a.value();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = c - av[i];
    auto an = a.node_;
    return detail::make_result<T>(a.shape(), std::move(out), {an}, [an](detail::Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] -= self.grad[i];
    });
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    double acc = 0.0;
    for (T v : a.value()) acc += (double)v;
    auto an = a.node_;
    return detail::make_result<T>({1}, {(T)acc}, {an}, [an](detail::Node<T>& self) {
        an->ensure_grad();
        const T g = self.grad[0];
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    const int64_t n = a.size();
    SCAA_CHECK(n > 0, "mean_all: empty tensor");
    double acc = 0.0;
    for (T v : a.value()) acc += (double)v;
    auto an = a.node_;
    return detail::make_result<T>({1}, {(T)(acc / (double)n)}, {an}, [an, n](detail::Node<T>& self) {
        an->ensure_grad();
        const T g = self.grad[0] / (T)n;
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    const auto& av = a.value();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
    auto an = a.node_;
    return detail::make_result<T>(a.shape(), std::move(out), {an}, [an](detail::Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (an->value[i] > T(0)) an->grad[i] += self.grad[i];
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    const auto& av = a.value();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = (T)(1.0 / (1.0 + std::exp(-(double)av[i])));
    auto an = a.node_;
    return detail::make_result<T>(a.shape(), std::move(out), {an}, [an](detail::Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const T y = self.value[i];
            an->grad[i] += self.grad[i] * y * (T(1) - y);
        }
    });
}

// Numerically shifted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
    const Shape& s = a.shape();
    SCAA_CHECK(axis >= 0 && axis < (int)s.size(), "softmax: axis ", axis, " out of range for ",
               shape_str(s));
    const int64_t d = s[(size_t)axis];
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[(size_t)i];
    for (size_t i = (size_t)axis + 1; i < s.size(); ++i) inner *= s[i];
    const auto& av = a.value();
    std::vector<T> out(av.size());
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * d * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t j = 0; j < d; ++j) mx = std::max(mx, (double)av[(size_t)(base + j * inner)]);
            double z = 0.0;
            for (int64_t j = 0; j < d; ++j) {
                const double e = std::exp((double)av[(size_t)(base + j * inner)] - mx);
                out[(size_t)(base + j * inner)] = (T)e;
                z += e;
            }
            for (int64_t j = 0; j < d; ++j) out[(size_t)(base + j * inner)] = (T)((double)out[(size_t)(base + j * inner)] / z);
        }
    auto an = a.node_;
    return detail::make_result<T>(a.shape(), std::move(out), {an},
                                  [an, outer, inner, d](detail::Node<T>& self) {
                                      an->ensure_grad();
                                      for (int64_t o = 0; o < outer; ++o)
                                          for (int64_t in = 0; in < inner; ++in) {
                                              const int64_t base = o * d * inner + in;
                                              double dot = 0.0;
                                              for (int64_t j = 0; j < d; ++j) {
                                                  const size_t k = (size_t)(base + j * inner);
                                                  dot += (double)self.grad[k] * (double)self.value[k];
                                              }
                                              for (int64_t j = 0; j < d; ++j) {
                                                  const size_t k = (size_t)(base + j * inner);
                                                  an->grad[k] += self.value[k] * (self.grad[k] - (T)dot);
                                              }
                                          }
                                  });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape s) {
    SCAA_CHECK(numel(s) == a.size(), "reshape: cannot view ", shape_str(a.shape()), " as ",
               shape_str(s));
    auto an = a.node_;
    std::vector<T> out = a.value();
    return detail::make_result<T>(std::move(s), std::move(out), {an}, [an](detail::Node<T>& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& a) {
    return reshape(a, Shape{a.size()});
}

namespace detail {

inline void permute_indices(const Shape& in_shape, const std::vector<int>& perm,
                            std::vector<int64_t>& map) {
    // map[out_flat] = in_flat
    const size_t nd = in_shape.size();
    Shape out_shape(nd);
    for (size_t i = 0; i < nd; ++i) out_shape[i] = in_shape[(size_t)perm[i]];
    auto ist = strides_of(in_shape);
    const int64_t n = numel(in_shape);
    map.resize((size_t)n);
    std::vector<int64_t> out_st = strides_of(out_shape);
    for (int64_t f = 0; f < n; ++f) {
        int64_t rem = f, in_flat = 0;
        for (size_t i = 0; i < nd; ++i) {
            const int64_t c = rem / out_st[i];
            rem -= c * out_st[i];
            in_flat += c * ist[(size_t)perm[i]];
        }
        map[(size_t)f] = in_flat;
    }
}

}  // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& perm) {
    const Shape& s = a.shape();
    SCAA_CHECK(perm.size() == s.size(), "permute: perm rank ", perm.size(), " vs tensor rank ",
               s.size());
    std::vector<bool> seen(s.size(), false);
    for (int p : perm) {
        SCAA_CHECK(p >= 0 && p < (int)s.size() && !seen[(size_t)p], "permute: invalid permutation");
        seen[(size_t)p] = true;
    }
    Shape out_shape(s.size());
    for (size_t i = 0; i < s.size(); ++i) out_shape[i] = s[(size_t)perm[i]];
    auto map = std::make_shared<std::vector<int64_t>>();
    detail::permute_indices(s, perm, *map);
    const auto& av = a.value();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[(size_t)(*map)[i]];
    auto an = a.node_;
    return detail::make_result<T>(std::move(out_shape), std::move(out), {an},
                                  [an, map](detail::Node<T>& self) {
                                      an->ensure_grad();
                                      for (size_t i = 0; i < self.grad.size(); ++i)
                                          an->grad[(size_t)(*map)[i]] += self.grad[i];
                                  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    SCAA_CHECK(!parts.empty(), "concat: no inputs");
    const Shape& s0 = parts[0].shape();
    SCAA_CHECK(axis >= 0 && axis < (int)s0.size(), "concat: axis ", axis, " out of range for ",
               shape_str(s0));
    int64_t axis_total = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        SCAA_CHECK(s.size() == s0.size(), "concat: rank mismatch ", shape_str(s), " vs ",
                   shape_str(s0));
        for (size_t i = 0; i < s.size(); ++i)
            if ((int)i != axis)
                SCAA_CHECK(s[i] == s0[i], "concat: dim ", i, " mismatch ", shape_str(s), " vs ",
                           shape_str(s0));
        axis_total += s[(size_t)axis];
    }
    Shape out_shape = s0;
    out_shape[(size_t)axis] = axis_total;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s0[(size_t)i];
    for (size_t i = (size_t)axis + 1; i < s0.size(); ++i) inner *= s0[i];
    std::vector<T> out((size_t)numel(out_shape));
    std::vector<std::shared_ptr<detail::Node<T>>> parent_nodes;
    std::vector<int64_t> axis_sizes;
    for (const auto& p : parts) {
        parent_nodes.push_back(p.node_);
        axis_sizes.push_back(p.shape()[(size_t)axis]);
    }
    for (int64_t o = 0; o < outer; ++o) {
        int64_t off = 0;
        for (size_t pi = 0; pi < parts.size(); ++pi) {
            const auto& pv = parts[pi].value();
            const int64_t blk = axis_sizes[pi] * inner;
            std::memcpy(out.data() + (o * axis_total + off) * inner, pv.data() + o * blk,
                        (size_t)blk * sizeof(T));
            off += axis_sizes[pi];
        }
    }
    return detail::make_result<T>(
        std::move(out_shape), std::move(out), parent_nodes,
        [parent_nodes, axis_sizes, outer, inner, axis_total](detail::Node<T>& self) {
            for (int64_t o = 0; o < outer; ++o) {
                int64_t off = 0;
                for (size_t pi = 0; pi < parent_nodes.size(); ++pi) {
                    auto& pn = *parent_nodes[pi];
                    const int64_t blk = axis_sizes[pi] * inner;
                    if (pn.requires_grad) {
                        pn.ensure_grad();
                        const T* src = self.grad.data() + (o * axis_total + off) * inner;
                        T* dst = pn.grad.data() + o * blk;
                        for (int64_t i = 0; i < blk; ++i) dst[i] += src[i];
                    }
                    off += axis_sizes[pi];
                }
            }
        });
}

// x[i] along axis 0.
template <typename T>
Tensor<T> slice0(const Tensor<T>& a, int64_t i) {
    const Shape& s = a.shape();
    SCAA_CHECK(!s.empty() && i >= 0 && i < s[0], "slice0: index ", i, " out of range for ",
               shape_str(s));
    Shape out_shape(s.begin() + 1, s.end());
    const int64_t blk = numel(out_shape);
    std::vector<T> out((size_t)blk);
    std::memcpy(out.data(), a.value().data() + i * blk, (size_t)blk * sizeof(T));
    auto an = a.node_;
    return detail::make_result<T>(std::move(out_shape), std::move(out), {an},
                                  [an, i, blk](detail::Node<T>& self) {
                                      an->ensure_grad();
                                      T* dst = an->grad.data() + i * blk;
                                      for (int64_t k = 0; k < blk; ++k) dst[k] += self.grad[(size_t)k];
                                  });
}

// Tile a [C] vector over the given spatial extents, yielding [C, spatial...].
template <typename T>
Tensor<T> broadcast_spatial(const Tensor<T>& v, const Shape& spatial) {
    SCAA_CHECK(v.ndim() == 1, "broadcast_spatial: expected rank-1 input, got ",
               shape_str(v.shape()));
    const int64_t c = v.dim(0), sp = numel(spatial);
    Shape out_shape{c};
    out_shape.insert(out_shape.end(), spatial.begin(), spatial.end());
    std::vector<T> out((size_t)(c * sp));
    const auto& vv = v.value();
    for (int64_t ci = 0; ci < c; ++ci)
        std::fill(out.begin() + ci * sp, out.begin() + (ci + 1) * sp, vv[(size_t)ci]);
    auto vn = v.node_;
    return detail::make_result<T>(std::move(out_shape), std::move(out), {vn},
                                  [vn, c, sp](detail::Node<T>& self) {
                                      vn->ensure_grad();
                                      for (int64_t ci = 0; ci < c; ++ci) {
                                          double acc = 0.0;
                                          const T* g = self.grad.data() + ci * sp;
                                          for (int64_t i = 0; i < sp; ++i) acc += (double)g[i];
                                          vn->grad[(size_t)ci] += (T)acc;
                                      }
                                  });
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace detail {

// Valid output range [lo, hi) such that 0 <= o*stride + off < in_extent.
inline void conv_range(int64_t in_extent, int64_t out_extent, int64_t stride, int64_t off,
                       int64_t& lo, int64_t& hi) {
    lo = 0;
    if (off < 0) lo = (-off + stride - 1) / stride;
    hi = off < in_extent ? std::min(out_extent, (in_extent - 1 - off) / stride + 1) : 0;
    if (hi < lo) hi = lo;
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int64_t stride = 1,
                 int64_t pad = 0) {
    SCAA_CHECK(x.ndim() == 3, "conv2d: input must be [C,H,W], got ", shape_str(x.shape()));
    SCAA_CHECK(w.ndim() == 4, "conv2d: weight must be [Co,Ci,kh,kw], got ", shape_str(w.shape()));
    const int64_t Ci = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    SCAA_CHECK(w.dim(1) == Ci, "conv2d: weight expects ", w.dim(1), " input channels, input has ",
               Ci);
    SCAA_CHECK(b.ndim() == 1 && b.dim(0) == Co, "conv2d: bias must be [", Co, "], got ",
               shape_str(b.shape()));
    SCAA_CHECK(stride >= 1 && pad >= 0, "conv2d: invalid stride/pad");
    const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    SCAA_CHECK(Ho >= 1 && Wo >= 1, "conv2d: kernel ", kh, "x", kw, " too large for input ",
               shape_str(x.shape()), " with pad ", pad);

    const auto& xv = x.value();
    const auto& wv = w.value();
    const auto& bv = b.value();
    std::vector<T> out((size_t)(Co * Ho * Wo));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t co = 0; co < Co; ++co) {
        T* op = out.data() + co * Ho * Wo;
        std::fill(op, op + Ho * Wo, bv[(size_t)co]);
        for (int64_t ci = 0; ci < Ci; ++ci) {
            const T* xp = xv.data() + ci * H * W;
            for (int64_t ky = 0; ky < kh; ++ky) {
                int64_t ylo, yhi;
                detail::conv_range(H, Ho, stride, ky - pad, ylo, yhi);
                for (int64_t kx = 0; kx < kw; ++kx) {
                    const T wgt = wv[(size_t)(((co * Ci + ci) * kh + ky) * kw + kx)];
                    if (wgt == T(0)) continue;
                    int64_t xlo, xhi;
                    detail::conv_range(W, Wo, stride, kx - pad, xlo, xhi);
                    for (int64_t oy = ylo; oy < yhi; ++oy) {
                        const T* xr = xp + (oy * stride + ky - pad) * W + (xlo * stride + kx - pad);
                        T* orow = op + oy * Wo + xlo;
                        if (stride == 1) {
                            for (int64_t i = 0; i < xhi - xlo; ++i) orow[i] += wgt * xr[i];
                        } else {
                            for (int64_t i = 0; i < xhi - xlo; ++i) orow[i] += wgt * xr[i * stride];
                        }
                    }
                }
            }
        }
    }

    auto xn = x.node_, wn = w.node_, bn = b.node_;
    return detail::make_result<T>(
        {Co, Ho, Wo}, std::move(out), {xn, wn, bn},
        [xn, wn, bn, Ci, H, W, Co, Ho, Wo, kh, kw, stride, pad](detail::Node<T>& self) {
            const T* gy = self.grad.data();
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int64_t co = 0; co < Co; ++co) {
                    double acc = 0.0;
                    const T* g = gy + co * Ho * Wo;
                    for (int64_t i = 0; i < Ho * Wo; ++i) acc += (double)g[i];
                    bn->grad[(size_t)co] += (T)acc;
                }
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                for (int64_t co = 0; co < Co; ++co) {
                    const T* g = gy + co * Ho * Wo;
                    for (int64_t ci = 0; ci < Ci; ++ci) {
                        const T* xp = xn->value.data() + ci * H * W;
                        for (int64_t ky = 0; ky < kh; ++ky) {
                            int64_t ylo, yhi;
                            detail::conv_range(H, Ho, stride, ky - pad, ylo, yhi);
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                int64_t xlo, xhi;
                                detail::conv_range(W, Wo, stride, kx - pad, xlo, xhi);
                                double acc = 0.0;
                                for (int64_t oy = ylo; oy < yhi; ++oy) {
                                    const T* xr =
                                        xp + (oy * stride + ky - pad) * W + (xlo * stride + kx - pad);
                                    const T* grow = g + oy * Wo + xlo;
                                    if (stride == 1) {
                                        for (int64_t i = 0; i < xhi - xlo; ++i)
                                            acc += (double)(grow[i] * xr[i]);
                                    } else {
                                        for (int64_t i = 0; i < xhi - xlo; ++i)
                                            acc += (double)(grow[i] * xr[i * stride]);
                                    }
                                }
                                wn->grad[(size_t)(((co * Ci + ci) * kh + ky) * kw + kx)] += (T)acc;
                            }
                        }
                    }
                }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                for (int64_t ci = 0; ci < Ci; ++ci) {
                    T* gx = xn->grad.data() + ci * H * W;
                    for (int64_t co = 0; co < Co; ++co) {
                        const T* g = gy + co * Ho * Wo;
                        for (int64_t ky = 0; ky < kh; ++ky) {
                            int64_t ylo, yhi;
                            detail::conv_range(H, Ho, stride, ky - pad, ylo, yhi);
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const T wgt =
                                    wn->value[(size_t)(((co * Ci + ci) * kh + ky) * kw + kx)];
                                if (wgt == T(0)) continue;
                                int64_t xlo, xhi;
                                detail::conv_range(W, Wo, stride, kx - pad, xlo, xhi);
                                for (int64_t oy = ylo; oy < yhi; ++oy) {
                                    T* xr =
                                        gx + (oy * stride + ky - pad) * W + (xlo * stride + kx - pad);
                                    const T* grow = g + oy * Wo + xlo;
                                    if (stride == 1) {
                                        for (int64_t i = 0; i < xhi - xlo; ++i) xr[i] += wgt * grow[i];
                                    } else {
                                        for (int64_t i = 0; i < xhi - xlo; ++i)
                                            xr[i * stride] += wgt * grow[i];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int64_t stride = 1,
                 int64_t pad = 0) {
    SCAA_CHECK(x.ndim() == 4, "conv3d: input must be [C,D,H,W], got ", shape_str(x.shape()));
    SCAA_CHECK(w.ndim() == 5, "conv3d: weight must be [Co,Ci,kd,kh,kw], got ",
               shape_str(w.shape()));
    const int64_t Ci = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Co = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    SCAA_CHECK(w.dim(1) == Ci, "conv3d: weight expects ", w.dim(1), " input channels, input has ",
               Ci);
    SCAA_CHECK(b.ndim() == 1 && b.dim(0) == Co, "conv3d: bias must be [", Co, "], got ",
               shape_str(b.shape()));
    SCAA_CHECK(stride >= 1 && pad >= 0, "conv3d: invalid stride/pad");
    const int64_t Do = (D + 2 * pad - kd) / stride + 1;
    const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    SCAA_CHECK(Do >= 1 && Ho >= 1 && Wo >= 1, "conv3d: kernel too large for input ",
               shape_str(x.shape()), " with pad ", pad);

    const auto& xv = x.value();
    const auto& wv = w.value();
    const auto& bv = b.value();
    std::vector<T> out((size_t)(Co * Do * Ho * Wo));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t co = 0; co < Co; ++co) {
        T* op = out.data() + co * Do * Ho * Wo;
        std::fill(op, op + Do * Ho * Wo, bv[(size_t)co]);
        for (int64_t ci = 0; ci < Ci; ++ci) {
            const T* xp = xv.data() + ci * D * H * W;
            for (int64_t kz = 0; kz < kd; ++kz) {
                int64_t zlo, zhi;
                detail::conv_range(D, Do, stride, kz - pad, zlo, zhi);
                for (int64_t ky = 0; ky < kh; ++ky) {
                    int64_t ylo, yhi;
                    detail::conv_range(H, Ho, stride, ky - pad, ylo, yhi);
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        const T wgt =
                            wv[(size_t)((((co * Ci + ci) * kd + kz) * kh + ky) * kw + kx)];
                        if (wgt == T(0)) continue;
                        int64_t xlo, xhi;
                        detail::conv_range(W, Wo, stride, kx - pad, xlo, xhi);
                        for (int64_t oz = zlo; oz < zhi; ++oz) {
                            const T* xpl = xp + (oz * stride + kz - pad) * H * W;
                            T* opl = op + oz * Ho * Wo;
                            for (int64_t oy = ylo; oy < yhi; ++oy) {
                                const T* xr =
                                    xpl + (oy * stride + ky - pad) * W + (xlo * stride + kx - pad);
                                T* orow = opl + oy * Wo + xlo;
                                if (stride == 1) {
                                    for (int64_t i = 0; i < xhi - xlo; ++i) orow[i] += wgt * xr[i];
                                } else {
                                    for (int64_t i = 0; i < xhi - xlo; ++i)
                                        orow[i] += wgt * xr[i * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    auto xn = x.node_, wn = w.node_, bn = b.node_;
    return detail::make_result<T>(
        {Co, Do, Ho, Wo}, std::move(out), {xn, wn, bn},
        [xn, wn, bn, Ci, D, H, W, Co, Do, Ho, Wo, kd, kh, kw, stride, pad](detail::Node<T>& self) {
            const T* gy = self.grad.data();
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int64_t co = 0; co < Co; ++co) {
                    double acc = 0.0;
                    const T* g = gy + co * Do * Ho * Wo;
                    for (int64_t i = 0; i < Do * Ho * Wo; ++i) acc += (double)g[i];
                    bn->grad[(size_t)co] += (T)acc;
                }
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                for (int64_t co = 0; co < Co; ++co) {
                    const T* g = gy + co * Do * Ho * Wo;
                    for (int64_t ci = 0; ci < Ci; ++ci) {
                        const T* xp = xn->value.data() + ci * D * H * W;
                        for (int64_t kz = 0; kz < kd; ++kz) {
                            int64_t zlo, zhi;
                            detail::conv_range(D, Do, stride, kz - pad, zlo, zhi);
                            for (int64_t ky = 0; ky < kh; ++ky) {
                                int64_t ylo, yhi;
                                detail::conv_range(H, Ho, stride, ky - pad, ylo, yhi);
                                for (int64_t kx = 0; kx < kw; ++kx) {
                                    int64_t xlo, xhi;
                                    detail::conv_range(W, Wo, stride, kx - pad, xlo, xhi);
                                    double acc = 0.0;
                                    for (int64_t oz = zlo; oz < zhi; ++oz) {
                                        const T* xpl = xp + (oz * stride + kz - pad) * H * W;
                                        const T* gpl = g + oz * Ho * Wo;
                                        for (int64_t oy = ylo; oy < yhi; ++oy) {
                                            const T* xr = xpl + (oy * stride + ky - pad) * W +
                                                          (xlo * stride + kx - pad);
                                            const T* grow = gpl + oy * Wo + xlo;
                                            if (stride == 1) {
                                                for (int64_t i = 0; i < xhi - xlo; ++i)
                                                    acc += (double)(grow[i] * xr[i]);
                                            } else {
                                                for (int64_t i = 0; i < xhi - xlo; ++i)
                                                    acc += (double)(grow[i] * xr[i * stride]);
                                            }
                                        }
                                    }
                                    wn->grad[(size_t)((((co * Ci + ci) * kd + kz) * kh + ky) * kw +
                                                      kx)] += (T)acc;
                                }
                            }
                        }
                    }
                }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                for (int64_t ci = 0; ci < Ci; ++ci) {
                    T* gx = xn->grad.data() + ci * D * H * W;
                    for (int64_t co = 0; co < Co; ++co) {
                        const T* g = gy + co * Do * Ho * Wo;
                        for (int64_t kz = 0; kz < kd; ++kz) {
                            int64_t zlo, zhi;
                            detail::conv_range(D, Do, stride, kz - pad, zlo, zhi);
                            for (int64_t ky = 0; ky < kh; ++ky) {
                                int64_t ylo, yhi;
                                detail::conv_range(H, Ho, stride, ky - pad, ylo, yhi);
                                for (int64_t kx = 0; kx < kw; ++kx) {
                                    const T wgt = wn->value[(size_t)(
                                        (((co * Ci + ci) * kd + kz) * kh + ky) * kw + kx)];
                                    if (wgt == T(0)) continue;
                                    int64_t xlo, xhi;
                                    detail::conv_range(W, Wo, stride, kx - pad, xlo, xhi);
                                    for (int64_t oz = zlo; oz < zhi; ++oz) {
                                        T* gxl = gx + (oz * stride + kz - pad) * H * W;
                                        const T* gpl = g + oz * Ho * Wo;
                                        for (int64_t oy = ylo; oy < yhi; ++oy) {
                                            T* xr = gxl + (oy * stride + ky - pad) * W +
                                                    (xlo * stride + kx - pad);
                                            const T* grow = gpl + oy * Wo + xlo;
                                            if (stride == 1) {
                                                for (int64_t i = 0; i < xhi - xlo; ++i)
                                                    xr[i] += wgt * grow[i];
                                            } else {
                                                for (int64_t i = 0; i < xhi - xlo; ++i)
                                                    xr[i * stride] += wgt * grow[i];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// pooling and normalization
// ---------------------------------------------------------------------------

// Max pooling over the trailing `window.size()` dimensions with non-overlapping
// windows; extents must divide evenly. Ties keep the first element in window
// scan order.
template <typename T>
Tensor<T> maxpool(const Tensor<T>& x, const std::vector<int64_t>& window) {
    const Shape& s = x.shape();
    const size_t k = window.size();
    SCAA_CHECK(k >= 1 && k <= 3 && s.size() >= k, "maxpool: window rank ", k,
               " incompatible with input ", shape_str(s));
    const size_t off = s.size() - k;
    Shape out_shape = s;
    for (size_t i = 0; i < k; ++i) {
        SCAA_CHECK(window[i] >= 1, "maxpool: invalid window");
        SCAA_CHECK(s[off + i] % window[i] == 0, "maxpool: dim ", off + i, " of ", shape_str(s),
                   " not divisible by window ", window[i]);
        out_shape[off + i] = s[off + i] / window[i];
    }
    int64_t outer = 1;
    for (size_t i = 0; i < off; ++i) outer *= s[i];
    std::array<int64_t, 3> in_ext{1, 1, 1}, out_ext{1, 1, 1}, win{1, 1, 1};
    for (size_t i = 0; i < k; ++i) {
        in_ext[3 - k + i] = s[off + i];
        out_ext[3 - k + i] = out_shape[off + i];
        win[3 - k + i] = window[i];
    }
    const int64_t in_block = in_ext[0] * in_ext[1] * in_ext[2];
    const int64_t out_block = out_ext[0] * out_ext[1] * out_ext[2];
    const auto& xv = x.value();
    std::vector<T> out((size_t)(outer * out_block));
    auto argmax = std::make_shared<std::vector<int64_t>>((size_t)(outer * out_block));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t o = 0; o < outer; ++o) {
        const T* xp = xv.data() + o * in_block;
        for (int64_t oz = 0; oz < out_ext[0]; ++oz)
            for (int64_t oy = 0; oy < out_ext[1]; ++oy)
                for (int64_t ox = 0; ox < out_ext[2]; ++ox) {
                    T best{};
                    int64_t best_idx = -1;
                    for (int64_t wz = 0; wz < win[0]; ++wz)
                        for (int64_t wy = 0; wy < win[1]; ++wy)
                            for (int64_t wx = 0; wx < win[2]; ++wx) {
                                const int64_t idx = ((oz * win[0] + wz) * in_ext[1] +
                                                     (oy * win[1] + wy)) *
                                                        in_ext[2] +
                                                    (ox * win[2] + wx);
                                if (best_idx < 0 || xp[idx] > best) {
                                    best = xp[idx];
                                    best_idx = idx;
                                }
                            }
                    const int64_t oidx = (oz * out_ext[1] + oy) * out_ext[2] + ox;
                    out[(size_t)(o * out_block + oidx)] = best;
                    (*argmax)[(size_t)(o * out_block + oidx)] = o * in_block + best_idx;
                }
    }
    auto xn = x.node_;
    return detail::make_result<T>(std::move(out_shape), std::move(out), {xn},
                                  [xn, argmax](detail::Node<T>& self) {
                                      xn->ensure_grad();
                                      for (size_t i = 0; i < self.grad.size(); ++i)
                                          xn->grad[(size_t)(*argmax)[i]] += self.grad[i];
                                  });
}

// Adaptive average pooling over the trailing `target.size()` dimensions.
// Bin o covers [floor(o*In/Out), ceil((o+1)*In/Out)).
template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, const std::vector<int64_t>& target) {
    const Shape& s = x.shape();
    const size_t k = target.size();
    SCAA_CHECK(k >= 1 && k <= 3 && s.size() >= k, "adaptive_avg_pool: target rank ", k,
               " incompatible with input ", shape_str(s));
    const size_t off = s.size() - k;
    Shape out_shape = s;
    for (size_t i = 0; i < k; ++i) {
        SCAA_CHECK(target[i] >= 1 && target[i] <= s[off + i], "adaptive_avg_pool: target ",
                   target[i], " exceeds input extent ", s[off + i], " in ", shape_str(s));
        out_shape[off + i] = target[i];
    }
    int64_t outer = 1;
    for (size_t i = 0; i < off; ++i) outer *= s[i];
    std::array<int64_t, 3> in_ext{1, 1, 1}, out_ext{1, 1, 1};
    for (size_t i = 0; i < k; ++i) {
        in_ext[3 - k + i] = s[off + i];
        out_ext[3 - k + i] = out_shape[off + i];
    }
    const int64_t in_block = in_ext[0] * in_ext[1] * in_ext[2];
    const int64_t out_block = out_ext[0] * out_ext[1] * out_ext[2];
    auto bin_lo = [](int64_t o, int64_t in, int64_t out) { return o * in / out; };
    auto bin_hi = [](int64_t o, int64_t in, int64_t out) { return ((o + 1) * in + out - 1) / out; };
    const auto& xv = x.value();
    std::vector<T> out((size_t)(outer * out_block));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t o = 0; o < outer; ++o) {
        const T* xp = xv.data() + o * in_block;
        T* op = out.data() + o * out_block;
        for (int64_t oz = 0; oz < out_ext[0]; ++oz) {
            const int64_t zlo = bin_lo(oz, in_ext[0], out_ext[0]), zhi = bin_hi(oz, in_ext[0], out_ext[0]);
            for (int64_t oy = 0; oy < out_ext[1]; ++oy) {
                const int64_t ylo = bin_lo(oy, in_ext[1], out_ext[1]), yhi = bin_hi(oy, in_ext[1], out_ext[1]);
                for (int64_t ox = 0; ox < out_ext[2]; ++ox) {
                    const int64_t xlo = bin_lo(ox, in_ext[2], out_ext[2]), xhi = bin_hi(ox, in_ext[2], out_ext[2]);
                    double acc = 0.0;
                    for (int64_t z = zlo; z < zhi; ++z)
                        for (int64_t y = ylo; y < yhi; ++y)
                            for (int64_t xx = xlo; xx < xhi; ++xx)
                                acc += (double)xp[(z * in_ext[1] + y) * in_ext[2] + xx];
                    const int64_t cnt = (zhi - zlo) * (yhi - ylo) * (xhi - xlo);
                    op[(oz * out_ext[1] + oy) * out_ext[2] + ox] = (T)(acc / (double)cnt);
                }
            }
        }
    }
    auto xn = x.node_;
    return detail::make_result<T>(
        std::move(out_shape), std::move(out), {xn},
        [xn, outer, in_ext, out_ext, in_block, out_block, bin_lo, bin_hi](detail::Node<T>& self) {
            xn->ensure_grad();
            // Bins may overlap when extents do not divide evenly, so this
            // scatter stays serial.
            for (int64_t o = 0; o < outer; ++o) {
                const T* gp = self.grad.data() + o * out_block;
                T* gx = xn->grad.data() + o * in_block;
                for (int64_t oz = 0; oz < out_ext[0]; ++oz) {
                    const int64_t zlo = bin_lo(oz, in_ext[0], out_ext[0]), zhi = bin_hi(oz, in_ext[0], out_ext[0]);
                    for (int64_t oy = 0; oy < out_ext[1]; ++oy) {
                        const int64_t ylo = bin_lo(oy, in_ext[1], out_ext[1]), yhi = bin_hi(oy, in_ext[1], out_ext[1]);
                        for (int64_t ox = 0; ox < out_ext[2]; ++ox) {
                            const int64_t xlo = bin_lo(ox, in_ext[2], out_ext[2]), xhi = bin_hi(ox, in_ext[2], out_ext[2]);
                            const int64_t cnt = (zhi - zlo) * (yhi - ylo) * (xhi - xlo);
                            const T g = gp[(oz * out_ext[1] + oy) * out_ext[2] + ox] / (T)cnt;
                            for (int64_t z = zlo; z < zhi; ++z)
                                for (int64_t y = ylo; y < yhi; ++y)
                                    for (int64_t xx = xlo; xx < xhi; ++xx)
                                        gx[(z * in_ext[1] + y) * in_ext[2] + xx] += g;
                        }
                    }
                }
            }
        });
}

// Instance normalization over all dims after the first (channel) dim, biased
// variance, per-channel affine.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                        double eps = 1e-5) {
    const Shape& s = x.shape();
    SCAA_CHECK(s.size() >= 2, "instance_norm: input must have channel + spatial dims, got ",
               shape_str(s));
    const int64_t C = s[0];
    const int64_t n = numel(s) / C;
    SCAA_CHECK(gamma.ndim() == 1 && gamma.dim(0) == C, "instance_norm: gamma must be [", C,
               "], got ", shape_str(gamma.shape()));
    SCAA_CHECK(beta.ndim() == 1 && beta.dim(0) == C, "instance_norm: beta must be [", C, "], got ",
               shape_str(beta.shape()));
    const auto& xv = x.value();
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    std::vector<T> out(xv.size());
    auto stats = std::make_shared<std::vector<double>>((size_t)(2 * C));  // mean, inv_std
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t c = 0; c < C; ++c) {
        const T* xp = xv.data() + c * n;
        double mean = 0.0;
        for (int64_t i = 0; i < n; ++i) mean += (double)xp[i];
        mean /= (double)n;
        double var = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double d = (double)xp[i] - mean;
            var += d * d;
        }
        var /= (double)n;
        const double inv = 1.0 / std::sqrt(var + eps);
        (*stats)[(size_t)(2 * c)] = mean;
        (*stats)[(size_t)(2 * c + 1)] = inv;
        const double g = (double)gv[(size_t)c], b = (double)bv[(size_t)c];
        T* op = out.data() + c * n;
        for (int64_t i = 0; i < n; ++i) op[i] = (T)(((double)xp[i] - mean) * inv * g + b);
    }
    auto xn = x.node_, gn = gamma.node_, bn = beta.node_;
    return detail::make_result<T>(
        s, std::move(out), {xn, gn, bn}, [xn, gn, bn, C, n, stats](detail::Node<T>& self) {
            if (gn->requires_grad) gn->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            if (xn->requires_grad) xn->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (int64_t c = 0; c < C; ++c) {
                const double mean = (*stats)[(size_t)(2 * c)];
                const double inv = (*stats)[(size_t)(2 * c + 1)];
                const T* xp = xn->value.data() + c * n;
                const T* gp = self.grad.data() + c * n;
                double sum_g = 0.0, sum_gx = 0.0;
                for (int64_t i = 0; i < n; ++i) {
                    const double xh = ((double)xp[i] - mean) * inv;
                    sum_g += (double)gp[i];
                    sum_gx += (double)gp[i] * xh;
                }
                if (bn->requires_grad) bn->grad[(size_t)c] += (T)sum_g;
                if (gn->requires_grad) gn->grad[(size_t)c] += (T)sum_gx;
                if (xn->requires_grad) {
                    const double g = (double)gn->value[(size_t)c];
                    const double mg = sum_g / (double)n, mgx = sum_gx / (double)n;
                    T* gx = xn->grad.data() + c * n;
                    for (int64_t i = 0; i < n; ++i) {
                        const double xh = ((double)xp[i] - mean) * inv;
                        gx[i] += (T)(g * inv * ((double)gp[i] - mg - xh * mgx));
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// resampling
// ---------------------------------------------------------------------------

// Nearest-neighbor x2 upsampling of the trailing `spatial_dims` dimensions.
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x, int spatial_dims) {
    const Shape& s = x.shape();
    SCAA_CHECK(spatial_dims >= 1 && spatial_dims <= 3 && (int)s.size() >= spatial_dims,
               "upsample_nearest2x: bad spatial rank for ", shape_str(s));
    const size_t off = s.size() - (size_t)spatial_dims;
    Shape out_shape = s;
    for (size_t i = off; i < s.size(); ++i) out_shape[i] = s[i] * 2;
    int64_t outer = 1;
    for (size_t i = 0; i < off; ++i) outer *= s[i];
    std::array<int64_t, 3> ie{1, 1, 1};
    for (int i = 0; i < spatial_dims; ++i) ie[3 - spatial_dims + i] = s[off + (size_t)i];
    const std::array<int64_t, 3> oe{ie[0] == 1 && spatial_dims < 3 ? 1 : ie[0] * 2,
                                    ie[1] == 1 && spatial_dims < 2 ? 1 : ie[1] * 2, ie[2] * 2};
    const int64_t in_block = ie[0] * ie[1] * ie[2];
    const int64_t out_block = oe[0] * oe[1] * oe[2];
    const auto& xv = x.value();
    std::vector<T> out((size_t)(outer * out_block));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t o = 0; o < outer; ++o) {
        const T* xp = xv.data() + o * in_block;
        T* op = out.data() + o * out_block;
        for (int64_t z = 0; z < oe[0]; ++z)
            for (int64_t y = 0; y < oe[1]; ++y)
                for (int64_t xx = 0; xx < oe[2]; ++xx)
                    op[(z * oe[1] + y) * oe[2] + xx] =
                        xp[((z / (oe[0] / ie[0])) * ie[1] + y / (oe[1] / ie[1])) * ie[2] +
                           xx / 2];
    }
    auto xn = x.node_;
    return detail::make_result<T>(
        std::move(out_shape), std::move(out), {xn},
        [xn, outer, ie, oe, in_block, out_block](detail::Node<T>& self) {
            xn->ensure_grad();
            const int64_t fz = oe[0] / ie[0], fy = oe[1] / ie[1];
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (int64_t o = 0; o < outer; ++o) {
                const T* gp = self.grad.data() + o * out_block;
                T* gx = xn->grad.data() + o * in_block;
                for (int64_t z = 0; z < ie[0]; ++z)
                    for (int64_t y = 0; y < ie[1]; ++y)
                        for (int64_t xx = 0; xx < ie[2]; ++xx) {
                            double acc = 0.0;
                            for (int64_t dz = 0; dz < fz; ++dz)
                                for (int64_t dy = 0; dy < fy; ++dy)
                                    for (int64_t dx = 0; dx < 2; ++dx)
                                        acc += (double)gp[((z * fz + dz) * oe[1] + y * fy + dy) *
                                                              oe[2] +
                                                          xx * 2 + dx];
                            gx[(z * ie[1] + y) * ie[2] + xx] += (T)acc;
                        }
            }
        });
}

// Linear (bi/trilinear) x2 upsampling of the trailing `spatial_dims`
// dimensions, half-pixel convention, edges clamped.
template <typename T>
Tensor<T> upsample_linear2x(const Tensor<T>& x, int spatial_dims) {
    const Shape& s = x.shape();
    SCAA_CHECK(spatial_dims >= 1 && spatial_dims <= 3 && (int)s.size() >= spatial_dims,
               "upsample_linear2x: bad spatial rank for ", shape_str(s));
    const size_t off = s.size() - (size_t)spatial_dims;
    Shape out_shape = s;
    for (size_t i = off; i < s.size(); ++i) out_shape[i] = s[i] * 2;
    int64_t outer = 1;
    for (size_t i = 0; i < off; ++i) outer *= s[i];
    std::array<int64_t, 3> ie{1, 1, 1}, oe{1, 1, 1};
    std::array<bool, 3> active{false, false, false};
    for (int i = 0; i < spatial_dims; ++i) {
        ie[3 - spatial_dims + i] = s[off + (size_t)i];
        oe[3 - spatial_dims + i] = s[off + (size_t)i] * 2;
        active[(size_t)(3 - spatial_dims + i)] = true;
    }
    const int64_t in_block = ie[0] * ie[1] * ie[2];
    const int64_t out_block = oe[0] * oe[1] * oe[2];

    // Per output coordinate: two source indices and the tap weight.
    struct Tap {
        int64_t i0, i1;
        double w1;
    };
    auto make_taps = [](int64_t in, int64_t out, bool act) {
        std::vector<Tap> taps((size_t)out);
        for (int64_t o = 0; o < out; ++o) {
            if (!act || in == 1) {
                taps[(size_t)o] = {o / (out / in), o / (out / in), 0.0};
                continue;
            }
            const double src = (o + 0.5) / 2.0 - 0.5;
            double fl = std::floor(src);
            double w1 = src - fl;
            int64_t i0 = (int64_t)fl, i1 = i0 + 1;
            if (i0 < 0) { i0 = 0; }
            if (i1 > in - 1) { i1 = in - 1; }
            if (i0 > in - 1) { i0 = in - 1; }
            taps[(size_t)o] = {i0, i1, w1};
        }
        return taps;
    };
    auto tz = std::make_shared<std::vector<Tap>>(make_taps(ie[0], oe[0], active[0]));
    auto ty = std::make_shared<std::vector<Tap>>(make_taps(ie[1], oe[1], active[1]));
    auto tx = std::make_shared<std::vector<Tap>>(make_taps(ie[2], oe[2], active[2]));

    const auto& xv = x.value();
    std::vector<T> out((size_t)(outer * out_block));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t o = 0; o < outer; ++o) {
        const T* xp = xv.data() + o * in_block;
        T* op = out.data() + o * out_block;
        for (int64_t z = 0; z < oe[0]; ++z) {
            const Tap& az = (*tz)[(size_t)z];
            for (int64_t y = 0; y < oe[1]; ++y) {
                const Tap& ay = (*ty)[(size_t)y];
                for (int64_t xx = 0; xx < oe[2]; ++xx) {
                    const Tap& ax = (*tx)[(size_t)xx];
                    double v = 0.0;
                    for (int cz = 0; cz < 2; ++cz) {
                        const double wz = cz ? az.w1 : 1.0 - az.w1;
                        if (wz == 0.0) continue;
                        const int64_t iz = cz ? az.i1 : az.i0;
                        for (int cy = 0; cy < 2; ++cy) {
                            const double wy = cy ? ay.w1 : 1.0 - ay.w1;
                            if (wy == 0.0) continue;
                            const int64_t iy = cy ? ay.i1 : ay.i0;
                            for (int cx = 0; cx < 2; ++cx) {
                                const double wx = cx ? ax.w1 : 1.0 - ax.w1;
                                if (wx == 0.0) continue;
                                const int64_t ix = cx ? ax.i1 : ax.i0;
                                v += wz * wy * wx * (double)xp[(iz * ie[1] + iy) * ie[2] + ix];
                            }
                        }
                    }
                    op[(z * oe[1] + y) * oe[2] + xx] = (T)v;
                }
            }
        }
    }
    auto xn = x.node_;
    return detail::make_result<T>(
        std::move(out_shape), std::move(out), {xn},
        [xn, outer, ie, oe, in_block, out_block, tz, ty, tx](detail::Node<T>& self) {
            xn->ensure_grad();
            // Taps of adjacent outputs overlap; keep the scatter serial.
            for (int64_t o = 0; o < outer; ++o) {
                const T* gp = self.grad.data() + o * out_block;
                T* gx = xn->grad.data() + o * in_block;
                for (int64_t z = 0; z < oe[0]; ++z) {
                    const Tap& az = (*tz)[(size_t)z];
                    for (int64_t y = 0; y < oe[1]; ++y) {
                        const Tap& ay = (*ty)[(size_t)y];
                        for (int64_t xx = 0; xx < oe[2]; ++xx) {
                            const Tap& ax = (*tx)[(size_t)xx];
                            const double g = (double)gp[(z * oe[1] + y) * oe[2] + xx];
                            for (int cz = 0; cz < 2; ++cz) {
                                const double wz = cz ? az.w1 : 1.0 - az.w1;
                                if (wz == 0.0) continue;
                                const int64_t iz = cz ? az.i1 : az.i0;
                                for (int cy = 0; cy < 2; ++cy) {
                                    const double wy = cy ? ay.w1 : 1.0 - ay.w1;
                                    if (wy == 0.0) continue;
                                    const int64_t iy = cy ? ay.i1 : ay.i0;
                                    for (int cx = 0; cx < 2; ++cx) {
                                        const double wx = cx ? ax.w1 : 1.0 - ax.w1;
                                        if (wx == 0.0) continue;
                                        const int64_t ix = cx ? ax.i1 : ax.i0;
                                        gx[(iz * ie[1] + iy) * ie[2] + ix] += (T)(wz * wy * wx * g);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// contraction (two-operand einsum)
// ---------------------------------------------------------------------------

namespace detail {

struct EinsumPlan {
    std::string letters;               // distinct letters, output letters first
    std::vector<int64_t> extents;      // per letter
    std::vector<int64_t> stride_a, stride_b, stride_o;  // 0 when letter absent
    size_t n_out = 0;                  // first n_out letters form the output
    Shape out_shape;
};

// `out_hint` supplies extents for output indices absent from both inputs
// (broadcast); only backward passes use that form.
inline EinsumPlan make_einsum_plan(const char* who, const std::string& spec_a, const Shape& sa,
                                   const std::string& spec_b, const Shape& sb,
                                   const std::string& spec_o, const Shape* out_hint) {
    SCAA_CHECK(spec_a.size() == sa.size(), who, ": spec '", spec_a, "' does not match operand ",
               shape_str(sa));
    SCAA_CHECK(spec_b.size() == sb.size(), who, ": spec '", spec_b, "' does not match operand ",
               shape_str(sb));
    auto check_unique = [&](const std::string& sp) {
        for (size_t i = 0; i < sp.size(); ++i)
            for (size_t j = i + 1; j < sp.size(); ++j)
                SCAA_CHECK(sp[i] != sp[j], who, ": repeated index '", sp[i], "' within one operand");
    };
    check_unique(spec_a);
    check_unique(spec_b);
    check_unique(spec_o);

    EinsumPlan plan;
    std::unordered_map<char, int64_t> extent;
    auto record = [&](const std::string& sp, const Shape& s) {
        for (size_t i = 0; i < sp.size(); ++i) {
            auto it = extent.find(sp[i]);
            if (it == extent.end()) {
                extent[sp[i]] = s[i];
            } else {
                SCAA_CHECK(it->second == s[i], who, ": index '", sp[i], "' has extent ", it->second,
                           " vs ", s[i]);
            }
        }
    };
    record(spec_a, sa);
    record(spec_b, sb);

    for (size_t i = 0; i < spec_o.size(); ++i) {
        const char c = spec_o[i];
        if (!extent.count(c)) {
            SCAA_CHECK(out_hint != nullptr, who, ": output index '", c,
                       "' does not appear in any input");
            extent[c] = (*out_hint)[i];
        }
        plan.letters.push_back(c);
    }
    plan.n_out = spec_o.size();
    for (char c : spec_a + spec_b)
        if (plan.letters.find(c) == std::string::npos) plan.letters.push_back(c);
    SCAA_CHECK(plan.letters.size() <= 12, who, ": too many distinct indices");

    for (char c : plan.letters) plan.extents.push_back(extent[c]);
    auto strides_for = [&](const std::string& sp, const Shape& s) {
        auto st = strides_of(s);
        std::vector<int64_t> r(plan.letters.size(), 0);
        for (size_t i = 0; i < sp.size(); ++i)
            r[plan.letters.find(sp[i])] = st[i];
        return r;
    };
    plan.stride_a = strides_for(spec_a, sa);
    plan.stride_b = strides_for(spec_b, sb);
    for (size_t i = 0; i < plan.n_out; ++i) plan.out_shape.push_back(plan.extents[i]);
    auto ost = strides_of(plan.out_shape);
    plan.stride_o.assign(plan.letters.size(), 0);
    for (size_t i = 0; i < plan.n_out; ++i) plan.stride_o[i] = ost[i];
    return plan;
}

template <typename T>
std::vector<T> einsum_eval(const EinsumPlan& plan, const std::vector<T>& a,
                           const std::vector<T>& b) {
    const size_t nl = plan.letters.size();
    const int64_t n_out_el = numel(plan.out_shape);
    int64_t n_contract = 1;
    for (size_t i = plan.n_out; i < nl; ++i) n_contract *= plan.extents[i];
    std::vector<T> out((size_t)n_out_el);
    std::vector<int64_t> out_strided = strides_of(plan.out_shape);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t f = 0; f < n_out_el; ++f) {
        // Decode output odometer.
        int64_t base_a = 0, base_b = 0, rem = f;
        for (size_t i = 0; i < plan.n_out; ++i) {
            const int64_t c = rem / out_strided[i];
            rem -= c * out_strided[i];
            base_a += c * plan.stride_a[i];
            base_b += c * plan.stride_b[i];
        }
        double acc = 0.0;
        std::array<int64_t, 12> idx{};
        for (int64_t t = 0; t < n_contract; ++t) {
            int64_t off_a = base_a, off_b = base_b;
            for (size_t i = plan.n_out; i < nl; ++i) {
                off_a += idx[i - plan.n_out] * plan.stride_a[i];
                off_b += idx[i - plan.n_out] * plan.stride_b[i];
            }
            acc += (double)a[(size_t)off_a] * (double)b[(size_t)off_b];
            for (size_t i = nl; i-- > plan.n_out;) {
                if (++idx[i - plan.n_out] < plan.extents[i]) break;
                idx[i - plan.n_out] = 0;
            }
        }
        out[(size_t)f] = (T)acc;
    }
    return out;
}

}  // namespace detail

// contract(a, b, "cdhw,d->chw"): multiply-accumulate contraction of two
// operands with explicit index names.
template <typename T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, const std::string& spec) {
    const auto arrow = spec.find("->");
    SCAA_CHECK(arrow != std::string::npos, "contract: spec '", spec, "' is missing '->'");
    const auto comma = spec.find(',');
    SCAA_CHECK(comma != std::string::npos && comma < arrow, "contract: spec '", spec,
               "' must name two operands");
    const std::string spec_a = spec.substr(0, comma);
    const std::string spec_b = spec.substr(comma + 1, arrow - comma - 1);
    const std::string spec_o = spec.substr(arrow + 2);
    auto plan = detail::make_einsum_plan("contract", spec_a, a.shape(), spec_b, b.shape(), spec_o,
                                         nullptr);
    auto out = detail::einsum_eval(plan, a.value(), b.value());
    auto an = a.node_, bn = b.node_;
    return detail::make_result<T>(
        plan.out_shape, std::move(out), {an, bn},
        [an, bn, spec_a, spec_b, spec_o](detail::Node<T>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                auto plan_a = detail::make_einsum_plan("contract", spec_o, self.shape, spec_b,
                                                       bn->shape, spec_a, &an->shape);
                auto ga = detail::einsum_eval(plan_a, self.grad, bn->value);
                for (size_t i = 0; i < ga.size(); ++i) an->grad[i] += ga[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                auto plan_b = detail::make_einsum_plan("contract", spec_o, self.shape, spec_a,
                                                       an->shape, spec_b, &bn->shape);
                auto gb = detail::einsum_eval(plan_b, self.grad, an->value);
                for (size_t i = 0; i < gb.size(); ++i) bn->grad[i] += gb[i];
            }
        });
}

}  // namespace scaa
