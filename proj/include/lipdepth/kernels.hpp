
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

#include <cstddef>
#include <string>

namespace lipdepth::kernels {

enum class Backend { scalar, avx2 };

std::string backend_name(Backend b);

// Dense inner-loop kernels, instantiated for float and double. All matrices
// are row-major. gemm_* write C = op(A)*op(B), adding into C when
// `accumulate` is set.
template <class T>
struct Table {
    // A (m x k), B (k x n), C (m x n)
    void (*gemm_nn)(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate);
    // A (m x k), B (n x k), C (m x n) = A * B^T
    void (*gemm_nt)(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate);
    // A (k x m), B (k x n), C (m x n) = A^T * B
    void (*gemm_tn)(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate);

    void (*add)(const T* x, const T* y, T* out, std::size_t n);
    void (*sub)(const T* x, const T* y, T* out, std::size_t n);
    void (*mul)(const T* x, const T* y, T* out, std::size_t n);
    void (*mul_acc)(const T* x, const T* y, T* out, std::size_t n);  // out += x*y
    void (*axpy)(T a, const T* x, T* y, std::size_t n);              // y += a*x
    void (*scale)(T a, const T* x, T* y, std::size_t n);             // y = a*x
    void (*vexp)(const T* x, T* y, std::size_t n);
    void (*gelu)(const T* x, T* y, std::size_t n);
    void (*gelu_grad)(const T* x, const T* dy, T* dx, std::size_t n);  // dx += dy * gelu'(x)
    void (*relu)(const T* x, T* y, std::size_t n);
    void (*relu_grad)(const T* x, const T* dy, T* dx, std::size_t n);  // dx += dy * (x > 0)
    T (*reduce_sum)(const T* x, std::size_t n);
    T (*reduce_max)(const T* x, std::size_t n);  // n >= 1
    T (*dot)(const T* x, const T* y, std::size_t n);
    bool (*all_finite)(const T* x, std::size_t n);
};

bool backend_supported(Backend b);

// Selected once at startup: AVX2 when the CPU supports it, else scalar.
// LIPDEPTH_BACKEND=scalar|avx2 overrides the default selection.
Backend active_backend();

// Switches the active table; throws std::runtime_error if unsupported here.
void set_backend(Backend b);

template <class T>
const Table<T>& table(Backend b);

template <class T>
const Table<T>& active();

namespace detail {
// Reference implementations; also the fallback entries of every table.
template <class T>
const Table<T>& scalar_table();
#if defined(LIPDEPTH_HAVE_AVX2)
template <class T>
const Table<T>& avx2_table();
#endif
}  // namespace detail

}  // namespace lipdepth::kernels
