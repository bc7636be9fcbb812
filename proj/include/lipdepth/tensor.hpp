
// Copyright 2026-present the lipdepth project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lipdepth/errors.hpp"
#include "lipdepth/kernels.hpp"

namespace lipdepth {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

// One recorded op on the tape. Nodes are created in execution order, parents
// always precede consumers; backward walks the graph once in reverse.
template <class T>
struct TensorNode {
    Shape shape;
    std::size_t count = 0;
    std::vector<T> value;
    std::vector<T> grad;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backward_step;
    const char* op = "leaf";
    bool requires_grad = false;
    bool is_leaf = true;
    bool backward_done = false;
    bool released = false;

    const std::vector<T>& values() const {
        if (released) {
            throw std::runtime_error(std::string("tensor value of '") + op +
                                     "' was released by backward()");
        }
        return value;
    }

    T* grad_ptr() {
        if (grad.size() != count) grad.assign(count, T(0));
        return grad.data();
    }

    void release_buffers() {
        value = std::vector<T>();
        grad = std::vector<T>();
        parents.clear();
        backward_step = nullptr;
        released = true;
    }
};

template <class T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape) {
        return from_vector(std::move(shape), {}, /*fill*/ true, T(0));
    }

    static Tensor full(Shape shape, T v) { return from_vector(std::move(shape), {}, true, v); }

    static Tensor from_vector(Shape shape, std::vector<T> data, bool fill = false, T fill_value = T(0)) {
        const std::size_t n = shape_numel(shape);
        if (fill) {
            data.assign(n, fill_value);
        } else if (data.size() != n) {
            throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
        auto node = std::make_shared<TensorNode<T>>();
        node->shape = std::move(shape);
        node->count = n;
        node->value = std::move(data);
        return Tensor(std::move(node));
    }

    static Tensor scalar(T v) { return from_vector({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::size_t size() const { return node_->count; }

    std::span<const T> values() const { return node_->values(); }

    // leaf-only in-place access (optimizer updates, attack iterates)
    std::span<T> values_mut() {
        if (!node_->is_leaf) {
            throw std::runtime_error("values_mut: only leaf tensors may be mutated in place");
        }
        return node_->value;
    }

    std::span<const T> grad() const {
        if (node_->grad.size() != node_->count) {
            throw std::runtime_error("grad: no gradient present (run backward first)");
        }
        return node_->grad;
    }

    bool has_grad() const { return node_->grad.size() == node_->count; }

    T item() const {
        if (size() != 1) throw ShapeError("item: tensor is not scalar, shape " + shape_str(shape()));
        return node_->values()[0];
    }

    bool requires_grad() const { return node_->requires_grad; }

    Tensor& set_requires_grad(bool v) {
        if (!node_->is_leaf) throw std::runtime_error("set_requires_grad: only valid on leaves");
        node_->requires_grad = v;
        return *this;
    }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    Tensor detach() const {
        return from_vector(node_->shape, std::vector<T>(node_->values()));
    }

    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

    explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

template <class T>
void check_finite(const std::vector<T>& v, const char* op) {
    if (!kernels::active<T>().all_finite(v.data(), v.size())) {
        throw NumericsError(std::string(op) + ": non-finite value in output");
    }
}

template <class T>
Tensor<T> make_op_node(Shape shape, std::vector<T> value, const char* op,
                       std::vector<std::shared_ptr<TensorNode<T>>> parents,
                       std::function<void(TensorNode<T>&)> step) {
    check_finite(value, op);
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->count = value.size();
    node->value = std::move(value);
    node->op = op;
    node->is_leaf = false;
    bool needs_grad = false;
    for (const auto& p : parents) needs_grad = needs_grad || p->requires_grad;
    if (needs_grad) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward_step = std::move(step);
    }
    return Tensor<T>(std::move(node));
}

inline int normalize_axis(int axis, int rank, const char* op) {
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
    }
    return a;
}

// collapse to (outer, len, inner) around `axis`
struct AxisSplit {
    std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, int axis) {
    AxisSplit s;
    for (int i = 0; i < axis; ++i) s.outer *= static_cast<std::size_t>(shape[i]);
    s.len = static_cast<std::size_t>(shape[axis]);
    for (std::size_t i = axis + 1; i < shape.size(); ++i) {
        s.inner *= static_cast<std::size_t>(shape[i]);
    }
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Visits every reachable node exactly
// once; leaf grads accumulate additively (callers zero them between steps).
// Non-leaf value/grad buffers are released as soon as the sweep is done with
// them, so intermediate activations must be read before calling backward.
template <class T>
void backward(const Tensor<T>& loss) {
    const auto& root = loss.node();
    if (!root) throw std::runtime_error("backward: empty tensor");
    if (root->count != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(root->shape));
    }
    if (!root->requires_grad) {
        throw std::runtime_error("backward: tape is empty (loss has no grad path)");
    }
    if (root->backward_done) {
        throw std::runtime_error("backward: called twice on the same loss without a new forward");
    }
    root->backward_done = true;

    struct Frame {
        TensorNode<T>* node;
        std::size_t next;
    };
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> visited;
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            TensorNode<T>* p = f.node->parents[f.next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    root->grad_ptr()[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* n = *it;
        if (n->backward_step) {
            n->grad_ptr();
            n->backward_step(*n);
        }
        if (!n->is_leaf && n != root.get()) n->release_buffers();
    }
    root->grad = std::vector<T>();
    root->parents.clear();
    root->backward_step = nullptr;
}

// ---------------------------------------------------------------------------
// primitive ops
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false) {
    const auto& an = a.node();
    const auto& bn = b.node();
    const Shape& ash = an->shape;
    const Shape& bsh = bn->shape;
    const auto& ops = kernels::active<T>();

    if (ash.size() < 2) throw ShapeError("matmul: lhs must have rank >= 2, got " + shape_str(ash));

    // batched (B,m,k) x (B,k,n) / (B,n,k)
    if (bsh.size() == 3) {
        if (ash.size() != 3 || ash[0] != bsh[0]) {
            throw ShapeError("matmul: batched operands must share batch dim, got " +
                             shape_str(ash) + " x " + shape_str(bsh));
        }
        const int batch = ash[0], m = ash[1], k = ash[2];
        const int n = transpose_b ? bsh[1] : bsh[2];
        const int bk = transpose_b ? bsh[2] : bsh[1];
        if (bk != k) {
            throw ShapeError("matmul: inner dims differ, " + shape_str(ash) + " x " +
                             shape_str(bsh) + (transpose_b ? " (rhs transposed)" : ""));
        }
        std::vector<T> out(static_cast<std::size_t>(batch) * m * n);
        const std::size_t as = static_cast<std::size_t>(m) * k;
        const std::size_t bs = static_cast<std::size_t>(bk) * (transpose_b ? k : n);
        const std::size_t cs = static_cast<std::size_t>(m) * n;
        const T* ap = an->values().data();
        const T* bp = bn->values().data();
        for (int i = 0; i < batch; ++i) {
            if (transpose_b) {
                ops.gemm_nt(ap + i * as, bp + i * bs, out.data() + i * cs, m, n, k, false);
            } else {
                ops.gemm_nn(ap + i * as, bp + i * bs, out.data() + i * cs, m, n, k, false);
            }
        }
        return detail::make_op_node<T>(
            {batch, m, n}, std::move(out), "matmul", {an, bn},
            [an, bn, batch, m, n, k, as, bs, cs, transpose_b](TensorNode<T>& node) {
                const auto& kt = kernels::active<T>();
                const T* g = node.grad.data();
                for (int i = 0; i < batch; ++i) {
                    const T* gi = g + i * cs;
                    const T* av = an->values().data() + i * as;
                    const T* bv = bn->values().data() + i * bs;
                    if (an->requires_grad) {
                        T* da = an->grad_ptr() + i * as;
                        if (transpose_b) {
                            kt.gemm_nn(gi, bv, da, m, k, n, true);
                        } else {
                            kt.gemm_nt(gi, bv, da, m, k, n, true);
                        }
                    }
                    if (bn->requires_grad) {
                        T* db = bn->grad_ptr() + i * bs;
                        if (transpose_b) {
                            kt.gemm_tn(gi, av, db, n, k, m, true);
                        } else {
                            kt.gemm_tn(av, gi, db, k, n, m, true);
                        }
                    }
                }
            });
    }

    if (bsh.size() != 2) {
        throw ShapeError("matmul: rhs must have rank 2 or 3, got " + shape_str(bsh));
    }

    // (..., k) x (k, n), leading dims of lhs collapsed into rows
    const int k = ash.back();
    const int n = transpose_b ? bsh[0] : bsh[1];
    const int bk = transpose_b ? bsh[1] : bsh[0];
    if (bk != k) {
        throw ShapeError("matmul: inner dims differ, " + shape_str(ash) + " x " + shape_str(bsh) +
                         (transpose_b ? " (rhs transposed)" : ""));
    }
    const int rows = static_cast<int>(an->count / static_cast<std::size_t>(k));
    Shape out_shape(ash.begin(), ash.end() - 1);
    out_shape.push_back(n);
    std::vector<T> out(static_cast<std::size_t>(rows) * n);
    if (transpose_b) {
        ops.gemm_nt(an->values().data(), bn->values().data(), out.data(), rows, n, k, false);
    } else {
        ops.gemm_nn(an->values().data(), bn->values().data(), out.data(), rows, n, k, false);
    }
    return detail::make_op_node<T>(
        std::move(out_shape), std::move(out), "matmul", {an, bn},
        [an, bn, rows, n, k, transpose_b](TensorNode<T>& node) {
            const auto& kt = kernels::active<T>();
            const T* g = node.grad.data();
            if (an->requires_grad) {
                T* da = an->grad_ptr();
                if (transpose_b) {
                    kt.gemm_nn(g, bn->values().data(), da, rows, k, n, true);
                } else {
                    kt.gemm_nt(g, bn->values().data(), da, rows, k, n, true);
                }
            }
            if (bn->requires_grad) {
                T* db = bn->grad_ptr();
                if (transpose_b) {
                    kt.gemm_tn(g, an->values().data(), db, n, k, rows, true);
                } else {
                    kt.gemm_tn(an->values().data(), g, db, k, n, rows, true);
                }
            }
        });
}

namespace detail {

// elementwise binary with optional suffix broadcast of rhs
template <class T, class Fwd, class Bwd>
Tensor<T> binary_suffix_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd,
                           Bwd bwd) {
    const auto& an = a.node();
    const auto& bn = b.node();
    const Shape& ash = an->shape;
    const Shape& bsh = bn->shape;
    if (bsh.size() > ash.size()) {
        throw ShapeError(std::string(name) + ": rhs rank exceeds lhs, " + shape_str(ash) + " vs " +
                         shape_str(bsh));
    }
    for (std::size_t i = 0; i < bsh.size(); ++i) {
        if (bsh[bsh.size() - 1 - i] != ash[ash.size() - 1 - i]) {
            throw ShapeError(std::string(name) + ": rhs " + shape_str(bsh) +
                             " is not a trailing suffix of lhs " + shape_str(ash));
        }
    }
    const std::size_t inner = bn->count;
    const std::size_t outer = an->count / (inner ? inner : 1);
    std::vector<T> out(an->count);
    fwd(an->values().data(), bn->values().data(), out.data(), outer, inner);
    return make_op_node<T>(ash, std::move(out), name, {an, bn},
                           [an, bn, outer, inner, bwd](TensorNode<T>& node) {
                               bwd(*an, *bn, node, outer, inner);
                           });
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_suffix_op<T>(
        a, b, "add",
        [](const T* x, const T* y, T* out, std::size_t outer, std::size_t inner) {
            const auto& kt = kernels::active<T>();
            for (std::size_t o = 0; o < outer; ++o) {
                kt.add(x + o * inner, y, out + o * inner, inner);
            }
        },
        [](TensorNode<T>& an, TensorNode<T>& bn, TensorNode<T>& node, std::size_t outer,
           std::size_t inner) {
            const auto& kt = kernels::active<T>();
            const T* g = node.grad.data();
            if (an.requires_grad) kt.axpy(T(1), g, an.grad_ptr(), node.count);
            if (bn.requires_grad) {
                T* db = bn.grad_ptr();
                for (std::size_t o = 0; o < outer; ++o) kt.axpy(T(1), g + o * inner, db, inner);
            }
        });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_suffix_op<T>(
        a, b, "sub",
        [](const T* x, const T* y, T* out, std::size_t outer, std::size_t inner) {
            const auto& kt = kernels::active<T>();
            for (std::size_t o = 0; o < outer; ++o) {
                kt.sub(x + o * inner, y, out + o * inner, inner);
            }
        },
        [](TensorNode<T>& an, TensorNode<T>& bn, TensorNode<T>& node, std::size_t outer,
           std::size_t inner) {
            const auto& kt = kernels::active<T>();
            const T* g = node.grad.data();
            if (an.requires_grad) kt.axpy(T(1), g, an.grad_ptr(), node.count);
            if (bn.requires_grad) {
                T* db = bn.grad_ptr();
                for (std::size_t o = 0; o < outer; ++o) kt.axpy(T(-1), g + o * inner, db, inner);
            }
        });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_suffix_op<T>(
        a, b, "mul",
        [](const T* x, const T* y, T* out, std::size_t outer, std::size_t inner) {
            const auto& kt = kernels::active<T>();
            for (std::size_t o = 0; o < outer; ++o) {
                kt.mul(x + o * inner, y, out + o * inner, inner);
            }
        },
        [](TensorNode<T>& an, TensorNode<T>& bn, TensorNode<T>& node, std::size_t outer,
           std::size_t inner) {
            const auto& kt = kernels::active<T>();
            const T* g = node.grad.data();
            const T* xv = an.values().data();
            const T* yv = bn.values().data();
            if (an.requires_grad) {
                T* da = an.grad_ptr();
                for (std::size_t o = 0; o < outer; ++o) {
                    kt.mul_acc(g + o * inner, yv, da + o * inner, inner);
                }
            }
            if (bn.requires_grad) {
                T* db = bn.grad_ptr();
                for (std::size_t o = 0; o < outer; ++o) {
                    kt.mul_acc(g + o * inner, xv + o * inner, db, inner);
                }
            }
        });
}

// y[i, ...] = w[i] * x[i, ...]; the weights are plain constants (DropPath
// masks), so no gradient flows into them.
template <class T>
Tensor<T> row_scale(const Tensor<T>& x, std::vector<T> weights) {
    const auto& xn = x.node();
    if (xn->shape.empty() || static_cast<std::size_t>(xn->shape[0]) != weights.size()) {
        throw ShapeError("row_scale: weight count " + std::to_string(weights.size()) +
                         " does not match leading dim of " + shape_str(xn->shape));
    }
    const std::size_t rows = weights.size();
    const std::size_t inner = xn->count / rows;
    std::vector<T> out(xn->count);
    const auto& kt = kernels::active<T>();
    const T* xv = xn->values().data();
    for (std::size_t r = 0; r < rows; ++r) {
        kt.scale(weights[r], xv + r * inner, out.data() + r * inner, inner);
    }
    return detail::make_op_node<T>(
        xn->shape, std::move(out), "row_scale", {xn},
        [xn, w = std::move(weights), inner](TensorNode<T>& node) {
            const auto& kt = kernels::active<T>();
            if (!xn->requires_grad) return;
            T* dx = xn->grad_ptr();
            const T* g = node.grad.data();
            for (std::size_t r = 0; r < w.size(); ++r) {
                kt.axpy(w[r], g + r * inner, dx + r * inner, inner);
            }
        });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    const auto& xn = x.node();
    std::vector<T> out(xn->count);
    kernels::active<T>().scale(c, xn->values().data(), out.data(), xn->count);
    return detail::make_op_node<T>(xn->shape, std::move(out), "scale", {xn},
                                   [xn, c](TensorNode<T>& node) {
                                       if (!xn->requires_grad) return;
                                       kernels::active<T>().axpy(c, node.grad.data(),
                                                                 xn->grad_ptr(), node.count);
                                   });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
    const auto& xn = x.node();
    std::vector<T> out(xn->count);
    kernels::active<T>().gelu(xn->values().data(), out.data(), xn->count);
    return detail::make_op_node<T>(xn->shape, std::move(out), "gelu", {xn},
                                   [xn](TensorNode<T>& node) {
                                       if (!xn->requires_grad) return;
                                       kernels::active<T>().gelu_grad(xn->values().data(),
                                                                      node.grad.data(),
                                                                      xn->grad_ptr(), node.count);
                                   });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    const auto& xn = x.node();
    std::vector<T> out(xn->count);
    kernels::active<T>().relu(xn->values().data(), out.data(), xn->count);
    return detail::make_op_node<T>(xn->shape, std::move(out), "relu", {xn},
                                   [xn](TensorNode<T>& node) {
                                       if (!xn->requires_grad) return;
                                       kernels::active<T>().relu_grad(xn->values().data(),
                                                                      node.grad.data(),
                                                                      xn->grad_ptr(), node.count);
                                   });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const auto& xn = x.node();
    const int ax = detail::normalize_axis(axis, static_cast<int>(xn->shape.size()), "softmax");
    const auto split = detail::split_axis(xn->shape, ax);
    std::vector<T> out(xn->count);
    const auto& kt = kernels::active<T>();
    const T* xv = xn->values().data();
    std::vector<T> row(split.len);
    for (std::size_t o = 0; o < split.outer; ++o) {
        for (std::size_t in = 0; in < split.inner; ++in) {
            const std::size_t base = (o * split.len) * split.inner + in;
            if (split.inner == 1) {
                const T* src = xv + base;
                T* dst = out.data() + base;
                const T mx = kt.reduce_max(src, split.len);
                for (std::size_t i = 0; i < split.len; ++i) row[i] = src[i] - mx;
                kt.vexp(row.data(), dst, split.len);
                const T total = kt.reduce_sum(dst, split.len);
                kt.scale(T(1) / total, dst, dst, split.len);
            } else {
                for (std::size_t i = 0; i < split.len; ++i) row[i] = xv[base + i * split.inner];
                const T mx = kt.reduce_max(row.data(), split.len);
                for (std::size_t i = 0; i < split.len; ++i) row[i] -= mx;
                kt.vexp(row.data(), row.data(), split.len);
                const T total = kt.reduce_sum(row.data(), split.len);
                for (std::size_t i = 0; i < split.len; ++i) {
                    out[base + i * split.inner] = row[i] / total;
                }
            }
        }
    }
    return detail::make_op_node<T>(
        xn->shape, std::move(out), "softmax", {xn}, [xn, split](TensorNode<T>& node) {
            if (!xn->requires_grad) return;
            // dx = s * (dy - sum(dy * s)) per slice
            const T* s = node.values().data();
            const T* g = node.grad.data();
            T* dx = xn->grad_ptr();
            for (std::size_t o = 0; o < split.outer; ++o) {
                for (std::size_t in = 0; in < split.inner; ++in) {
                    const std::size_t base = (o * split.len) * split.inner + in;
                    T acc = T(0);
                    for (std::size_t i = 0; i < split.len; ++i) {
                        const std::size_t idx = base + i * split.inner;
                        acc += g[idx] * s[idx];
                    }
                    for (std::size_t i = 0; i < split.len; ++i) {
                        const std::size_t idx = base + i * split.inner;
                        dx[idx] += s[idx] * (g[idx] - acc);
                    }
                }
            }
        });
}

template <class T>
Tensor<T> layernorm(const Tensor<T>& x, int axis, T eps) {
    if (!(eps > T(0))) throw DomainError("layernorm: eps must be > 0");
    const auto& xn = x.node();
    const int ax = detail::normalize_axis(axis, static_cast<int>(xn->shape.size()), "layernorm");
    const auto split = detail::split_axis(xn->shape, ax);
    std::vector<T> out(xn->count);
    std::vector<T> inv_sigma(split.outer * split.inner);
    const T* xv = xn->values().data();
    const T invn = T(1) / static_cast<T>(split.len);
    std::vector<T> row(split.len);
    for (std::size_t o = 0; o < split.outer; ++o) {
        for (std::size_t in = 0; in < split.inner; ++in) {
            const std::size_t base = (o * split.len) * split.inner + in;
            for (std::size_t i = 0; i < split.len; ++i) row[i] = xv[base + i * split.inner];
            T mean = T(0);
            for (std::size_t i = 0; i < split.len; ++i) mean += row[i];
            mean *= invn;
            T var = T(0);
            for (std::size_t i = 0; i < split.len; ++i) {
                const T d = row[i] - mean;
                var += d * d;
            }
            var *= invn;
            const T is = T(1) / std::sqrt(var + eps);
            inv_sigma[o * split.inner + in] = is;
            for (std::size_t i = 0; i < split.len; ++i) {
                out[base + i * split.inner] = (row[i] - mean) * is;
            }
        }
    }
    return detail::make_op_node<T>(
        xn->shape, std::move(out), "layernorm", {xn},
        [xn, split, sig = std::move(inv_sigma)](TensorNode<T>& node) {
            if (!xn->requires_grad) return;
            const T* y = node.values().data();
            const T* g = node.grad.data();
            T* dx = xn->grad_ptr();
            const T invn = T(1) / static_cast<T>(split.len);
            for (std::size_t o = 0; o < split.outer; ++o) {
                for (std::size_t in = 0; in < split.inner; ++in) {
                    const std::size_t base = (o * split.len) * split.inner + in;
                    const T is = sig[o * split.inner + in];
                    T gsum = T(0), gysum = T(0);
                    for (std::size_t i = 0; i < split.len; ++i) {
                        const std::size_t idx = base + i * split.inner;
                        gsum += g[idx];
                        gysum += g[idx] * y[idx];
                    }
                    gsum *= invn;
                    gysum *= invn;
                    for (std::size_t i = 0; i < split.len; ++i) {
                        const std::size_t idx = base + i * split.inner;
                        dx[idx] += is * (g[idx] - gsum - y[idx] * gysum);
                    }
                }
            }
        });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
    const auto& xn = x.node();
    if (shape_numel(new_shape) != xn->count) {
        throw ShapeError("reshape: cannot reshape " + shape_str(xn->shape) + " to " +
                         shape_str(new_shape));
    }
    std::vector<T> out(xn->values());
    return detail::make_op_node<T>(std::move(new_shape), std::move(out), "reshape", {xn},
                                   [xn](TensorNode<T>& node) {
                                       if (!xn->requires_grad) return;
                                       kernels::active<T>().axpy(T(1), node.grad.data(),
                                                                 xn->grad_ptr(), node.count);
                                   });
}

namespace detail {

template <class T>
void permute_copy(const T* src, T* dst, const Shape& in_shape, const std::vector<int>& perm,
                  bool invert) {
    const int r = static_cast<int>(in_shape.size());
    std::vector<std::size_t> in_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) {
        in_strides[i] = in_strides[i + 1] * static_cast<std::size_t>(in_shape[i + 1]);
    }
    Shape out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = in_shape[perm[i]];
    std::vector<std::size_t> out_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) {
        out_strides[i] = out_strides[i + 1] * static_cast<std::size_t>(out_shape[i + 1]);
    }
    // walk the output in order; gather from the permuted input position
    std::vector<int> idx(r, 0);
    const std::size_t total = shape_numel(in_shape);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t src_off = 0;
        for (int i = 0; i < r; ++i) {
            src_off += static_cast<std::size_t>(idx[i]) * in_strides[perm[i]];
        }
        if (invert) {
            dst[src_off] += src[flat];
        } else {
            dst[flat] = src[src_off];
        }
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
}

}  // namespace detail

template <class T>
Tensor<T> transpose(const Tensor<T>& x, std::vector<int> perm) {
    const auto& xn = x.node();
    const int r = static_cast<int>(xn->shape.size());
    if (static_cast<int>(perm.size()) != r) {
        throw ShapeError("transpose: permutation length " + std::to_string(perm.size()) +
                         " does not match rank " + std::to_string(r));
    }
    std::vector<bool> seen(static_cast<std::size_t>(r), false);
    for (int p : perm) {
        if (p < 0 || p >= r || seen[static_cast<std::size_t>(p)]) {
            throw ShapeError("transpose: invalid permutation");
        }
        seen[static_cast<std::size_t>(p)] = true;
    }
    Shape out_shape(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) out_shape[i] = xn->shape[perm[i]];
    std::vector<T> out(xn->count);
    detail::permute_copy(xn->values().data(), out.data(), xn->shape, perm, false);
    return detail::make_op_node<T>(
        std::move(out_shape), std::move(out), "transpose", {xn},
        [xn, perm = std::move(perm)](TensorNode<T>& node) {
            if (!xn->requires_grad) return;
            detail::permute_copy(node.grad.data(), xn->grad_ptr(), xn->shape, perm, true);
        });
}

// default 2-d transpose
template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
    if (x.rank() != 2) throw ShapeError("transpose: default overload requires rank 2");
    return transpose(x, {1, 0});
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    const auto& xn = x.node();
    const T total = kernels::active<T>().reduce_sum(xn->values().data(), xn->count);
    return detail::make_op_node<T>({1}, {total}, "sum", {xn}, [xn](TensorNode<T>& node) {
        if (!xn->requires_grad) return;
        T* dx = xn->grad_ptr();
        const T g = node.grad[0];
        for (std::size_t i = 0; i < xn->count; ++i) dx[i] += g;
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    const auto& xn = x.node();
    const T total = kernels::active<T>().reduce_sum(xn->values().data(), xn->count);
    const T m = total / static_cast<T>(xn->count);
    return detail::make_op_node<T>({1}, {m}, "mean", {xn}, [xn](TensorNode<T>& node) {
        if (!xn->requires_grad) return;
        T* dx = xn->grad_ptr();
        const T g = node.grad[0] / static_cast<T>(xn->count);
        for (std::size_t i = 0; i < xn->count; ++i) dx[i] += g;
    });
}

// mean cross-entropy over the batch from raw logits (N, C)
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
    const auto& xn = logits.node();
    if (xn->shape.size() != 2) {
        throw ShapeError("cross_entropy: logits must be (N, C), got " + shape_str(xn->shape));
    }
    const int n = xn->shape[0], c = xn->shape[1];
    if (static_cast<int>(labels.size()) != n) {
        throw ShapeError("cross_entropy: label count " + std::to_string(labels.size()) +
                         " does not match batch " + std::to_string(n));
    }
    const auto& kt = kernels::active<T>();
    const T* xv = xn->values().data();
    std::vector<T> probs(xn->count);
    T loss = T(0);
    for (int i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || y >= c) {
            throw DomainError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(c - 1) + "]");
        }
        const T* row = xv + static_cast<std::size_t>(i) * c;
        T* prow = probs.data() + static_cast<std::size_t>(i) * c;
        const T mx = kt.reduce_max(row, static_cast<std::size_t>(c));
        for (int j = 0; j < c; ++j) prow[j] = row[j] - mx;
        kt.vexp(prow, prow, static_cast<std::size_t>(c));
        const T total = kt.reduce_sum(prow, static_cast<std::size_t>(c));
        kt.scale(T(1) / total, prow, prow, static_cast<std::size_t>(c));
        loss += std::log(total) - (row[y] - mx);
    }
    loss /= static_cast<T>(n);
    std::vector<int> labels_copy(labels.begin(), labels.end());
    return detail::make_op_node<T>(
        {1}, {loss}, "cross_entropy", {xn},
        [xn, n, c, p = std::move(probs), ls = std::move(labels_copy)](TensorNode<T>& node) {
            if (!xn->requires_grad) return;
            T* dx = xn->grad_ptr();
            const T g = node.grad[0] / static_cast<T>(n);
            for (int i = 0; i < n; ++i) {
                const T* prow = p.data() + static_cast<std::size_t>(i) * c;
                T* drow = dx + static_cast<std::size_t>(i) * c;
                for (int j = 0; j < c; ++j) drow[j] += g * prow[j];
                drow[ls[i]] -= g;
            }
        });
}

// (N, C, H, W) -> (N, T, C*p*p) with T = (H/p)*(W/p); feature order is
// channel-major, then the p x p pixels row-major.
template <class T>
Tensor<T> patchify(const Tensor<T>& x, int patch) {
    const auto& xn = x.node();
    if (xn->shape.size() != 4) {
        throw ShapeError("patchify: input must be (N, C, H, W), got " + shape_str(xn->shape));
    }
    const int n = xn->shape[0], c = xn->shape[1], h = xn->shape[2], w = xn->shape[3];
    if (patch <= 0 || h % patch != 0 || w % patch != 0) {
        throw ShapeError("patchify: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by patch " + std::to_string(patch));
    }
    const int gh = h / patch, gw = w / patch;
    const int tokens = gh * gw;
    const int feat = c * patch * patch;
    std::vector<T> out(static_cast<std::size_t>(n) * tokens * feat);
    const T* xv = xn->values().data();
    const std::size_t img = static_cast<std::size_t>(c) * h * w;
    for (int i = 0; i < n; ++i) {
        for (int ty = 0; ty < gh; ++ty) {
            for (int tx = 0; tx < gw; ++tx) {
                T* dst = out.data() +
                         ((static_cast<std::size_t>(i) * tokens) + ty * gw + tx) * feat;
                for (int ch = 0; ch < c; ++ch) {
                    const T* src = xv + i * img + static_cast<std::size_t>(ch) * h * w +
                                   static_cast<std::size_t>(ty * patch) * w + tx * patch;
                    for (int py = 0; py < patch; ++py) {
                        for (int px = 0; px < patch; ++px) {
                            dst[(ch * patch + py) * patch + px] = src[py * w + px];
                        }
                    }
                }
            }
        }
    }
    return detail::make_op_node<T>(
        {n, tokens, feat}, std::move(out), "patchify", {xn},
        [xn, n, c, h, w, patch, gh, gw, tokens, feat, img](TensorNode<T>& node) {
            if (!xn->requires_grad) return;
            T* dx = xn->grad_ptr();
            const T* g = node.grad.data();
            for (int i = 0; i < n; ++i) {
                for (int ty = 0; ty < gh; ++ty) {
                    for (int tx = 0; tx < gw; ++tx) {
                        const T* src = g + ((static_cast<std::size_t>(i) * tokens) + ty * gw + tx) *
                                               feat;
                        for (int ch = 0; ch < c; ++ch) {
                            T* dst = dx + i * img + static_cast<std::size_t>(ch) * h * w +
                                     static_cast<std::size_t>(ty * patch) * w + tx * patch;
                            for (int py = 0; py < patch; ++py) {
                                for (int px = 0; px < patch; ++px) {
                                    dst[py * w + px] += src[(ch * patch + py) * patch + px];
                                }
                            }
                        }
                    }
                }
            }
        });
}

// prepend a learned token (shape (D)) to every sequence: (N, T, D) -> (N, T+1, D)
template <class T>
Tensor<T> prepend_token(const Tensor<T>& token, const Tensor<T>& x) {
    const auto& tn = token.node();
    const auto& xn = x.node();
    if (xn->shape.size() != 3 || tn->shape.size() != 1 || tn->shape[0] != xn->shape[2]) {
        throw ShapeError("prepend_token: expected token (D) and x (N, T, D), got " +
                         shape_str(tn->shape) + " and " + shape_str(xn->shape));
    }
    const int n = xn->shape[0], t = xn->shape[1], d = xn->shape[2];
    std::vector<T> out(static_cast<std::size_t>(n) * (t + 1) * d);
    const T* xv = xn->values().data();
    const T* tv = tn->values().data();
    for (int i = 0; i < n; ++i) {
        T* dst = out.data() + static_cast<std::size_t>(i) * (t + 1) * d;
        std::memcpy(dst, tv, sizeof(T) * static_cast<std::size_t>(d));
        std::memcpy(dst + d, xv + static_cast<std::size_t>(i) * t * d,
                    sizeof(T) * static_cast<std::size_t>(t) * d);
    }
    return detail::make_op_node<T>(
        {n, t + 1, d}, std::move(out), "prepend_token", {tn, xn},
        [tn, xn, n, t, d](TensorNode<T>& node) {
            const auto& kt = kernels::active<T>();
            const T* g = node.grad.data();
            if (tn->requires_grad) {
                T* dt = tn->grad_ptr();
                for (int i = 0; i < n; ++i) {
                    kt.axpy(T(1), g + static_cast<std::size_t>(i) * (t + 1) * d, dt,
                            static_cast<std::size_t>(d));
                }
            }
            if (xn->requires_grad) {
                T* dx = xn->grad_ptr();
                for (int i = 0; i < n; ++i) {
                    kt.axpy(T(1), g + static_cast<std::size_t>(i) * (t + 1) * d + d,
                            dx + static_cast<std::size_t>(i) * t * d,
                            static_cast<std::size_t>(t) * d);
                }
            }
        });
}

// (N, T, D) -> (N, D), picking one token position
template <class T>
Tensor<T> select_token(const Tensor<T>& x, int index) {
    const auto& xn = x.node();
    if (xn->shape.size() != 3) {
        throw ShapeError("select_token: input must be (N, T, D), got " + shape_str(xn->shape));
    }
    const int n = xn->shape[0], t = xn->shape[1], d = xn->shape[2];
    if (index < 0 || index >= t) throw ShapeError("select_token: index out of range");
    std::vector<T> out(static_cast<std::size_t>(n) * d);
    const T* xv = xn->values().data();
    for (int i = 0; i < n; ++i) {
        std::memcpy(out.data() + static_cast<std::size_t>(i) * d,
                    xv + (static_cast<std::size_t>(i) * t + index) * d,
                    sizeof(T) * static_cast<std::size_t>(d));
    }
    return detail::make_op_node<T>({n, d}, std::move(out), "select_token", {xn},
                                   [xn, n, t, d, index](TensorNode<T>& node) {
                                       if (!xn->requires_grad) return;
                                       const auto& kt = kernels::active<T>();
                                       T* dx = xn->grad_ptr();
                                       const T* g = node.grad.data();
                                       for (int i = 0; i < n; ++i) {
                                           kt.axpy(T(1), g + static_cast<std::size_t>(i) * d,
                                                   dx + (static_cast<std::size_t>(i) * t + index) * d,
                                                   static_cast<std::size_t>(d));
                                       }
                                   });
}

}  // namespace lipdepth
