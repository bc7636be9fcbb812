
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

// Scalar reference kernels vs the runtime-dispatched AVX2 variants. Every
// entry of the table is equivalence-tested over random inputs, including
// non-multiple-of-lane tails.

#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "lipdepth/kernels.hpp"
#include "lipdepth/rng.hpp"

using lipdepth::Rng;
namespace kernels = lipdepth::kernels;

namespace {

template <class T>
std::vector<T> random_vec(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return v;
}

template <class T>
void check_close(const std::vector<T>& a, const std::vector<T>& b, double rtol, double atol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
        const double bound = atol + rtol * std::max(std::abs(static_cast<double>(a[i])),
                                                    std::abs(static_cast<double>(b[i])));
        if (diff > bound) {
            CAPTURE(i);
            CAPTURE(a[i]);
            CAPTURE(b[i]);
            REQUIRE(diff <= bound);
        }
    }
}

// independent oracle: plain dot-product gemm, a different loop order than the
// shipped scalar kernel
template <class T>
std::vector<T> gemm_oracle(const std::vector<T>& a, const std::vector<T>& b, int m, int n, int k,
                           char mode) {
    std::vector<T> c(static_cast<std::size_t>(m) * n, T(0));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                double av, bv;
                if (mode == 't') {  // A stored (k, m)
                    av = a[static_cast<std::size_t>(p) * m + i];
                } else {
                    av = a[static_cast<std::size_t>(i) * k + p];
                }
                if (mode == 'n') {  // B stored (k, n)
                    bv = b[static_cast<std::size_t>(p) * n + j];
                } else if (mode == 'b') {  // B stored (n, k)
                    bv = b[static_cast<std::size_t>(j) * k + p];
                } else {  // mode 't': B stored (k, n)
                    bv = b[static_cast<std::size_t>(p) * n + j];
                }
                acc += av * bv;
            }
            c[static_cast<std::size_t>(i) * n + j] = static_cast<T>(acc);
        }
    }
    return c;
}

template <class T>
double tol_r() {
    return std::is_same_v<T, float> ? 2e-5 : 1e-12;
}

template <class T>
void gemm_suite(const kernels::Table<T>& kt) {
    Rng rng(1234);
    const int shapes[][3] = {{1, 1, 1},   {3, 3, 3},   {5, 7, 9},   {8, 8, 8},
                             {16, 64, 48}, {13, 65, 21}, {64, 64, 64}, {2, 130, 17}};
    for (const auto& s : shapes) {
        const int m = s[0], n = s[1], k = s[2];
        auto a = random_vec<T>(rng, static_cast<std::size_t>(m) * k);
        auto b = random_vec<T>(rng, static_cast<std::size_t>(k) * n);
        auto bt = random_vec<T>(rng, static_cast<std::size_t>(n) * k);
        auto at = random_vec<T>(rng, static_cast<std::size_t>(k) * m);

        std::vector<T> c(static_cast<std::size_t>(m) * n);
        kt.gemm_nn(a.data(), b.data(), c.data(), m, n, k, false);
        check_close(c, gemm_oracle(a, b, m, n, k, 'n'), tol_r<T>() * k, tol_r<T>());

        kt.gemm_nt(a.data(), bt.data(), c.data(), m, n, k, false);
        check_close(c, gemm_oracle(a, bt, m, n, k, 'b'), tol_r<T>() * k, tol_r<T>());

        kt.gemm_tn(at.data(), b.data(), c.data(), m, n, k, false);
        check_close(c, gemm_oracle(at, b, m, n, k, 't'), tol_r<T>() * k, tol_r<T>());

        // accumulate mode adds on top of existing contents
        std::vector<T> base = random_vec<T>(rng, c.size());
        std::vector<T> acc = base;
        kt.gemm_nn(a.data(), b.data(), acc.data(), m, n, k, true);
        auto expect = gemm_oracle(a, b, m, n, k, 'n');
        for (std::size_t i = 0; i < expect.size(); ++i) expect[i] += base[i];
        check_close(acc, expect, tol_r<T>() * k, tol_r<T>());
    }
}

template <class T>
void elementwise_suite(const kernels::Table<T>& kt, const kernels::Table<T>& ref, double rtol) {
    Rng rng(99);
    for (std::size_t n : {std::size_t(1), std::size_t(7), std::size_t(8), std::size_t(65),
                          std::size_t(1024), std::size_t(103)}) {
        auto x = random_vec<T>(rng, n);
        auto y = random_vec<T>(rng, n);
        std::vector<T> out_a(n), out_b(n);

        kt.add(x.data(), y.data(), out_a.data(), n);
        ref.add(x.data(), y.data(), out_b.data(), n);
        check_close(out_a, out_b, 0.0, 0.0);

        kt.sub(x.data(), y.data(), out_a.data(), n);
        ref.sub(x.data(), y.data(), out_b.data(), n);
        check_close(out_a, out_b, 0.0, 0.0);

        kt.mul(x.data(), y.data(), out_a.data(), n);
        ref.mul(x.data(), y.data(), out_b.data(), n);
        check_close(out_a, out_b, 0.0, 0.0);

        out_a = y;
        out_b = y;
        kt.mul_acc(x.data(), y.data(), out_a.data(), n);
        ref.mul_acc(x.data(), y.data(), out_b.data(), n);
        check_close(out_a, out_b, rtol, rtol);

        out_a = y;
        out_b = y;
        kt.axpy(T(0.37), x.data(), out_a.data(), n);
        ref.axpy(T(0.37), x.data(), out_b.data(), n);
        check_close(out_a, out_b, rtol, rtol);

        kt.scale(T(-1.5), x.data(), out_a.data(), n);
        ref.scale(T(-1.5), x.data(), out_b.data(), n);
        check_close(out_a, out_b, 0.0, 0.0);

        kt.vexp(x.data(), out_a.data(), n);
        ref.vexp(x.data(), out_b.data(), n);
        check_close(out_a, out_b, rtol, rtol);

        kt.gelu(x.data(), out_a.data(), n);
        ref.gelu(x.data(), out_b.data(), n);
        check_close(out_a, out_b, rtol, rtol);

        std::fill(out_a.begin(), out_a.end(), T(0));
        std::fill(out_b.begin(), out_b.end(), T(0));
        kt.gelu_grad(x.data(), y.data(), out_a.data(), n);
        ref.gelu_grad(x.data(), y.data(), out_b.data(), n);
        check_close(out_a, out_b, rtol, rtol);

        kt.relu(x.data(), out_a.data(), n);
        ref.relu(x.data(), out_b.data(), n);
        check_close(out_a, out_b, 0.0, 0.0);

        std::fill(out_a.begin(), out_a.end(), T(0));
        std::fill(out_b.begin(), out_b.end(), T(0));
        kt.relu_grad(x.data(), y.data(), out_a.data(), n);
        ref.relu_grad(x.data(), y.data(), out_b.data(), n);
        check_close(out_a, out_b, 0.0, 0.0);

        const double sr = static_cast<double>(kt.reduce_sum(x.data(), n));
        const double se = static_cast<double>(ref.reduce_sum(x.data(), n));
        CHECK(std::abs(sr - se) <= rtol * (1.0 + std::abs(se)) * static_cast<double>(n));

        CHECK(kt.reduce_max(x.data(), n) == ref.reduce_max(x.data(), n));

        const double dr = static_cast<double>(kt.dot(x.data(), y.data(), n));
        const double de = static_cast<double>(ref.dot(x.data(), y.data(), n));
        CHECK(std::abs(dr - de) <= rtol * (1.0 + std::abs(de)) * static_cast<double>(n));

        CHECK(kt.all_finite(x.data(), n));
    }
}

template <class T>
void all_finite_suite(const kernels::Table<T>& kt) {
    Rng rng(5);
    for (std::size_t n : {std::size_t(1), std::size_t(9), std::size_t(64), std::size_t(129)}) {
        for (std::size_t pos : {std::size_t(0), n / 2, n - 1}) {
            for (T bad : {std::numeric_limits<T>::infinity(), -std::numeric_limits<T>::infinity(),
                          std::numeric_limits<T>::quiet_NaN()}) {
                auto x = random_vec<T>(rng, n);
                CHECK(kt.all_finite(x.data(), n));
                x[pos] = bad;
                CHECK_FALSE(kt.all_finite(x.data(), n));
            }
        }
    }
}

}  // namespace

TEST_CASE("scalar gemm kernels match the independent dot-product oracle") {
    gemm_suite<float>(kernels::table<float>(kernels::Backend::scalar));
    gemm_suite<double>(kernels::table<double>(kernels::Backend::scalar));
}

TEST_CASE("gelu matches its closed form at pinned points") {
    const auto& kt = kernels::table<double>(kernels::Backend::scalar);
    const double xs[] = {-3.0, -1.0, 0.0, 0.5, 1.0, 3.0};
    for (double x : xs) {
        double y;
        kt.gelu(&x, &y, 1);
        const double u = 0.7978845608028654 * (x + 0.044715 * x * x * x);
        CHECK(y == doctest::Approx(0.5 * x * (1.0 + std::tanh(u))).epsilon(1e-14));
    }
    double y0;
    const double zero = 0.0;
    kt.gelu(&zero, &y0, 1);
    CHECK(y0 == 0.0);
}

TEST_CASE("scalar all_finite flags NaN and Inf anywhere") {
    all_finite_suite<float>(kernels::table<float>(kernels::Backend::scalar));
    all_finite_suite<double>(kernels::table<double>(kernels::Backend::scalar));
}

TEST_CASE("avx2 kernels are equivalent to the scalar reference") {
    if (!kernels::backend_supported(kernels::Backend::avx2)) {
        MESSAGE("avx2 not supported on this host; dispatch stays on scalar");
        CHECK(kernels::active_backend() == kernels::Backend::scalar);
        return;
    }
    const auto& vf = kernels::table<float>(kernels::Backend::avx2);
    const auto& vd = kernels::table<double>(kernels::Backend::avx2);
    const auto& sf = kernels::table<float>(kernels::Backend::scalar);
    const auto& sd = kernels::table<double>(kernels::Backend::scalar);

    gemm_suite<float>(vf);
    gemm_suite<double>(vd);
    elementwise_suite<float>(vf, sf, 5e-6);
    elementwise_suite<double>(vd, sd, 1e-13);
    all_finite_suite<float>(vf);
    all_finite_suite<double>(vd);
}

TEST_CASE("backend dispatch is switchable and sticky") {
    const auto original = kernels::active_backend();
    kernels::set_backend(kernels::Backend::scalar);
    CHECK(kernels::active_backend() == kernels::Backend::scalar);
    CHECK(kernels::backend_name(kernels::active_backend()) == "scalar");
    if (kernels::backend_supported(kernels::Backend::avx2)) {
        kernels::set_backend(kernels::Backend::avx2);
        CHECK(kernels::active_backend() == kernels::Backend::avx2);
    }
    kernels::set_backend(original);
}
