
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

#include "lipdepth/kernels.hpp"

#include <cmath>
#include <cstring>

namespace lipdepth::kernels::detail {

namespace {

// tanh-form GELU; the same polynomial is used by the AVX2 path so the two
// backends agree to rounding error.
constexpr double kGeluC1 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC2 = 0.044715;

template <class T>
void gemm_nn_impl(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        }
        const T* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
void gemm_nt_impl(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<std::size_t>(j) * k;
            T acc = T(0);
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

template <class T>
void gemm_tn_impl(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate) {
    if (!accumulate) {
        std::memset(c, 0, sizeof(T) * static_cast<std::size_t>(m) * n);
    }
    for (int p = 0; p < k; ++p) {
        const T* arow = a + static_cast<std::size_t>(p) * m;
        const T* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const T av = arow[i];
            T* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
void add_impl(const T* x, const T* y, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

template <class T>
void sub_impl(const T* x, const T* y, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

template <class T>
void mul_impl(const T* x, const T* y, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

template <class T>
void mul_acc_impl(const T* x, const T* y, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] += x[i] * y[i];
}

template <class T>
void axpy_impl(T a, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
void scale_impl(T a, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

template <class T>
void vexp_impl(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

template <class T>
void gelu_impl(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const T v = x[i];
        const T u = static_cast<T>(kGeluC1) * (v + static_cast<T>(kGeluC2) * v * v * v);
        y[i] = T(0.5) * v * (T(1) + std::tanh(u));
    }
}

template <class T>
void gelu_grad_impl(const T* x, const T* dy, T* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const T v = x[i];
        const T u = static_cast<T>(kGeluC1) * (v + static_cast<T>(kGeluC2) * v * v * v);
        const T t = std::tanh(u);
        const T du = static_cast<T>(kGeluC1) * (T(1) + T(3) * static_cast<T>(kGeluC2) * v * v);
        dx[i] += dy[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * du);
    }
}

template <class T>
void relu_impl(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_grad_impl(const T* x, const T* dy, T* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] > T(0)) dx[i] += dy[i];
    }
}

template <class T>
T reduce_sum_impl(const T* x, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <class T>
T reduce_max_impl(const T* x, std::size_t n) {
    T best = x[0];
    for (std::size_t i = 1; i < n; ++i) {
        if (x[i] > best) best = x[i];
    }
    return best;
}

template <class T>
T dot_impl(const T* x, const T* y, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

template <class T>
bool all_finite_impl(const T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

template <class T>
Table<T> make_table() {
    Table<T> t;
    t.gemm_nn = &gemm_nn_impl<T>;
    t.gemm_nt = &gemm_nt_impl<T>;
    t.gemm_tn = &gemm_tn_impl<T>;
    t.add = &add_impl<T>;
    t.sub = &sub_impl<T>;
    t.mul = &mul_impl<T>;
    t.mul_acc = &mul_acc_impl<T>;
    t.axpy = &axpy_impl<T>;
    t.scale = &scale_impl<T>;
    t.vexp = &vexp_impl<T>;
    t.gelu = &gelu_impl<T>;
    t.gelu_grad = &gelu_grad_impl<T>;
    t.relu = &relu_impl<T>;
    t.relu_grad = &relu_grad_impl<T>;
    t.reduce_sum = &reduce_sum_impl<T>;
    t.reduce_max = &reduce_max_impl<T>;
    t.dot = &dot_impl<T>;
    t.all_finite = &all_finite_impl<T>;
    return t;
}

}  // namespace

template <>
const Table<float>& scalar_table<float>() {
    static const Table<float> t = make_table<float>();
    return t;
}

template <>
const Table<double>& scalar_table<double>() {
    static const Table<double> t = make_table<double>();
    return t;
}

}  // namespace lipdepth::kernels::detail
