
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

// AVX2/FMA kernels. This TU is compiled with -mavx2 -mfma; it is only entered
// through the dispatch table after a cpuid check.

#include "lipdepth/kernels.hpp"

#if defined(LIPDEPTH_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstring>

namespace lipdepth::kernels::detail {

namespace {

constexpr double kGeluC1 = 0.7978845608028654;  // sqrt(2/pi), same as scalar path
constexpr double kGeluC2 = 0.044715;

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    const __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 0x55));
    return _mm_cvtss_f32(lo);
}

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    lo = _mm_add_sd(lo, _mm_unpackhi_pd(lo, lo));
    return _mm_cvtsd_f64(lo);
}

inline float hmax(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    const __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_max_ps(lo, hi);
    lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 0x55));
    return _mm_cvtss_f32(lo);
}

inline double hmax(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    lo = _mm_max_sd(lo, _mm_unpackhi_pd(lo, lo));
    return _mm_cvtsd_f64(lo);
}

// Cephes-style expf polynomial, |rel err| < 2 ulp over the clamped range.
inline __m256 exp256(__m256 x) {
    const __m256 exp_hi = _mm256_set1_ps(88.3762626647950f);
    const __m256 exp_lo = _mm256_set1_ps(-88.3762626647949f);
    const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
    const __m256 ln2_hi = _mm256_set1_ps(0.693359375f);
    const __m256 ln2_lo = _mm256_set1_ps(-2.12194440e-4f);
    const __m256 one = _mm256_set1_ps(1.0f);

    x = _mm256_max_ps(_mm256_min_ps(x, exp_hi), exp_lo);
    __m256 fx = _mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f));
    fx = _mm256_floor_ps(fx);
    x = _mm256_fnmadd_ps(fx, ln2_hi, x);
    x = _mm256_fnmadd_ps(fx, ln2_lo, x);

    const __m256 z = _mm256_mul_ps(x, x);
    __m256 y = _mm256_set1_ps(1.9875691500e-4f);
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
    y = _mm256_fmadd_ps(y, z, _mm256_add_ps(x, one));

    __m256i n = _mm256_cvtps_epi32(fx);
    n = _mm256_add_epi32(n, _mm256_set1_epi32(127));
    n = _mm256_slli_epi32(n, 23);
    return _mm256_mul_ps(y, _mm256_castsi256_ps(n));
}

inline __m256 tanh256(__m256 z) {
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 two = _mm256_set1_ps(2.0f);
    const __m256 e = exp256(_mm256_mul_ps(z, two));
    return _mm256_sub_ps(one, _mm256_div_ps(two, _mm256_add_ps(e, one)));
}

// ---------------------------------------------------------------------------
// float gemm
// ---------------------------------------------------------------------------

// One row of C over a tile of NV full vectors plus a scalar tail, accumulators
// held in registers across the whole k loop.
template <int NV>
void gemm_nn_row_f(const float* arow, const float* b, float* crow, int n, int k, int tw,
                   bool accumulate) {
    __m256 acc[NV > 0 ? NV : 1];
    float tacc[8];
    if (accumulate) {
        for (int v = 0; v < NV; ++v) acc[v] = _mm256_loadu_ps(crow + 8 * v);
        for (int t = 0; t < tw; ++t) tacc[t] = crow[NV * 8 + t];
    } else {
        for (int v = 0; v < NV; ++v) acc[v] = _mm256_setzero_ps();
        for (int t = 0; t < tw; ++t) tacc[t] = 0.0f;
    }
    for (int p = 0; p < k; ++p) {
        const float as = arow[p];
        const __m256 av = _mm256_set1_ps(as);
        const float* brow = b + static_cast<std::size_t>(p) * n;
        for (int v = 0; v < NV; ++v) {
            acc[v] = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + 8 * v), acc[v]);
        }
        for (int t = 0; t < tw; ++t) tacc[t] += as * brow[NV * 8 + t];
    }
    for (int v = 0; v < NV; ++v) _mm256_storeu_ps(crow + 8 * v, acc[v]);
    for (int t = 0; t < tw; ++t) crow[NV * 8 + t] = tacc[t];
}

void gemm_nn_f(const float* a, const float* b, float* c, int m, int n, int k, bool accumulate) {
    constexpr int kTileJ = 64;
    for (int j0 = 0; j0 < n; j0 += kTileJ) {
        const int jw = std::min(kTileJ, n - j0);
        const int nv = jw / 8;
        const int tw = jw - nv * 8;
        for (int i = 0; i < m; ++i) {
            const float* arow = a + static_cast<std::size_t>(i) * k;
            float* crow = c + static_cast<std::size_t>(i) * n + j0;
            switch (nv) {
                case 8: gemm_nn_row_f<8>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 7: gemm_nn_row_f<7>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 6: gemm_nn_row_f<6>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 5: gemm_nn_row_f<5>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 4: gemm_nn_row_f<4>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 3: gemm_nn_row_f<3>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 2: gemm_nn_row_f<2>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 1: gemm_nn_row_f<1>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 0: gemm_nn_row_f<0>(arow, b + j0, crow, n, k, tw, accumulate); break;
            }
        }
    }
}

void gemm_nt_f(const float* a, const float* b, float* c, int m, int n, int k, bool accumulate) {
    const int kv = k / 8 * 8;
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<std::size_t>(i) * k;
        float* crow = c + static_cast<std::size_t>(i) * n;
        int j = 0;
        for (; j + 3 < n; j += 4) {
            const float* b0 = b + static_cast<std::size_t>(j) * k;
            const float* b1 = b0 + k;
            const float* b2 = b1 + k;
            const float* b3 = b2 + k;
            __m256 acc0 = _mm256_setzero_ps();
            __m256 acc1 = _mm256_setzero_ps();
            __m256 acc2 = _mm256_setzero_ps();
            __m256 acc3 = _mm256_setzero_ps();
            for (int p = 0; p < kv; p += 8) {
                const __m256 va = _mm256_loadu_ps(arow + p);
                acc0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b0 + p), acc0);
                acc1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b1 + p), acc1);
                acc2 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b2 + p), acc2);
                acc3 = _mm256_fmadd_ps(va, _mm256_loadu_ps(b3 + p), acc3);
            }
            float s0 = hsum(acc0), s1 = hsum(acc1), s2 = hsum(acc2), s3 = hsum(acc3);
            for (int p = kv; p < k; ++p) {
                const float av = arow[p];
                s0 += av * b0[p];
                s1 += av * b1[p];
                s2 += av * b2[p];
                s3 += av * b3[p];
            }
            if (accumulate) {
                crow[j] += s0;
                crow[j + 1] += s1;
                crow[j + 2] += s2;
                crow[j + 3] += s3;
            } else {
                crow[j] = s0;
                crow[j + 1] = s1;
                crow[j + 2] = s2;
                crow[j + 3] = s3;
            }
        }
        for (; j < n; ++j) {
            const float* brow = b + static_cast<std::size_t>(j) * k;
            __m256 acc = _mm256_setzero_ps();
            for (int p = 0; p < kv; p += 8) {
                acc = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p), acc);
            }
            float s = hsum(acc);
            for (int p = kv; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

void gemm_tn_f(const float* a, const float* b, float* c, int m, int n, int k, bool accumulate) {
    if (!accumulate) {
        std::memset(c, 0, sizeof(float) * static_cast<std::size_t>(m) * n);
    }
    const int nv = n / 8 * 8;
    const int kb = k / 4 * 4;
    // four rank-1 updates per pass so each C row is loaded/stored once per four FMAs
    for (int p = 0; p < kb; p += 4) {
        const float* a0 = a + static_cast<std::size_t>(p) * m;
        const float* a1 = a0 + m;
        const float* a2 = a1 + m;
        const float* a3 = a2 + m;
        const float* b0 = b + static_cast<std::size_t>(p) * n;
        const float* b1 = b0 + n;
        const float* b2 = b1 + n;
        const float* b3 = b2 + n;
        for (int i = 0; i < m; ++i) {
            const __m256 v0 = _mm256_set1_ps(a0[i]);
            const __m256 v1 = _mm256_set1_ps(a1[i]);
            const __m256 v2 = _mm256_set1_ps(a2[i]);
            const __m256 v3 = _mm256_set1_ps(a3[i]);
            float* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < nv; j += 8) {
                __m256 acc = _mm256_loadu_ps(crow + j);
                acc = _mm256_fmadd_ps(v0, _mm256_loadu_ps(b0 + j), acc);
                acc = _mm256_fmadd_ps(v1, _mm256_loadu_ps(b1 + j), acc);
                acc = _mm256_fmadd_ps(v2, _mm256_loadu_ps(b2 + j), acc);
                acc = _mm256_fmadd_ps(v3, _mm256_loadu_ps(b3 + j), acc);
                _mm256_storeu_ps(crow + j, acc);
            }
            for (int j = nv; j < n; ++j) {
                crow[j] += a0[i] * b0[j] + a1[i] * b1[j] + a2[i] * b2[j] + a3[i] * b3[j];
            }
        }
    }
    for (int p = kb; p < k; ++p) {
        const float* arow = a + static_cast<std::size_t>(p) * m;
        const float* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const float as = arow[i];
            const __m256 av = _mm256_set1_ps(as);
            float* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < nv; j += 8) {
                _mm256_storeu_ps(
                    crow + j,
                    _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), _mm256_loadu_ps(crow + j)));
            }
            for (int j = nv; j < n; ++j) crow[j] += as * brow[j];
        }
    }
}

// ---------------------------------------------------------------------------
// double gemm (same structure, 4-wide lanes)
// ---------------------------------------------------------------------------

template <int NV>
void gemm_nn_row_d(const double* arow, const double* b, double* crow, int n, int k, int tw,
                   bool accumulate) {
    __m256d acc[NV > 0 ? NV : 1];
    double tacc[4];
    if (accumulate) {
        for (int v = 0; v < NV; ++v) acc[v] = _mm256_loadu_pd(crow + 4 * v);
        for (int t = 0; t < tw; ++t) tacc[t] = crow[NV * 4 + t];
    } else {
        for (int v = 0; v < NV; ++v) acc[v] = _mm256_setzero_pd();
        for (int t = 0; t < tw; ++t) tacc[t] = 0.0;
    }
    for (int p = 0; p < k; ++p) {
        const double as = arow[p];
        const __m256d av = _mm256_set1_pd(as);
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int v = 0; v < NV; ++v) {
            acc[v] = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4 * v), acc[v]);
        }
        for (int t = 0; t < tw; ++t) tacc[t] += as * brow[NV * 4 + t];
    }
    for (int v = 0; v < NV; ++v) _mm256_storeu_pd(crow + 4 * v, acc[v]);
    for (int t = 0; t < tw; ++t) crow[NV * 4 + t] = tacc[t];
}

void gemm_nn_d(const double* a, const double* b, double* c, int m, int n, int k, bool accumulate) {
    constexpr int kTileJ = 32;
    for (int j0 = 0; j0 < n; j0 += kTileJ) {
        const int jw = std::min(kTileJ, n - j0);
        const int nv = jw / 4;
        const int tw = jw - nv * 4;
        for (int i = 0; i < m; ++i) {
            const double* arow = a + static_cast<std::size_t>(i) * k;
            double* crow = c + static_cast<std::size_t>(i) * n + j0;
            switch (nv) {
                case 8: gemm_nn_row_d<8>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 7: gemm_nn_row_d<7>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 6: gemm_nn_row_d<6>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 5: gemm_nn_row_d<5>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 4: gemm_nn_row_d<4>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 3: gemm_nn_row_d<3>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 2: gemm_nn_row_d<2>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 1: gemm_nn_row_d<1>(arow, b + j0, crow, n, k, tw, accumulate); break;
                case 0: gemm_nn_row_d<0>(arow, b + j0, crow, n, k, tw, accumulate); break;
            }
        }
    }
}

void gemm_nt_d(const double* a, const double* b, double* c, int m, int n, int k, bool accumulate) {
    const int kv = k / 4 * 4;
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            __m256d acc = _mm256_setzero_pd();
            for (int p = 0; p < kv; p += 4) {
                acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(brow + p), acc);
            }
            double s = hsum(acc);
            for (int p = kv; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

void gemm_tn_d(const double* a, const double* b, double* c, int m, int n, int k, bool accumulate) {
    if (!accumulate) {
        std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(m) * n);
    }
    const int nv = n / 4 * 4;
    const int kb = k / 4 * 4;
    for (int p = 0; p < kb; p += 4) {
        const double* a0 = a + static_cast<std::size_t>(p) * m;
        const double* a1 = a0 + m;
        const double* a2 = a1 + m;
        const double* a3 = a2 + m;
        const double* b0 = b + static_cast<std::size_t>(p) * n;
        const double* b1 = b0 + n;
        const double* b2 = b1 + n;
        const double* b3 = b2 + n;
        for (int i = 0; i < m; ++i) {
            const __m256d v0 = _mm256_set1_pd(a0[i]);
            const __m256d v1 = _mm256_set1_pd(a1[i]);
            const __m256d v2 = _mm256_set1_pd(a2[i]);
            const __m256d v3 = _mm256_set1_pd(a3[i]);
            double* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < nv; j += 4) {
                __m256d acc = _mm256_loadu_pd(crow + j);
                acc = _mm256_fmadd_pd(v0, _mm256_loadu_pd(b0 + j), acc);
                acc = _mm256_fmadd_pd(v1, _mm256_loadu_pd(b1 + j), acc);
                acc = _mm256_fmadd_pd(v2, _mm256_loadu_pd(b2 + j), acc);
                acc = _mm256_fmadd_pd(v3, _mm256_loadu_pd(b3 + j), acc);
                _mm256_storeu_pd(crow + j, acc);
            }
            for (int j = nv; j < n; ++j) {
                crow[j] += a0[i] * b0[j] + a1[i] * b1[j] + a2[i] * b2[j] + a3[i] * b3[j];
            }
        }
    }
    for (int p = kb; p < k; ++p) {
        const double* arow = a + static_cast<std::size_t>(p) * m;
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double as = arow[i];
            const __m256d av = _mm256_set1_pd(as);
            double* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < nv; j += 4) {
                _mm256_storeu_pd(
                    crow + j,
                    _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(crow + j)));
            }
            for (int j = nv; j < n; ++j) crow[j] += as * brow[j];
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise / reductions
// ---------------------------------------------------------------------------

void add_f(const float* x, const float* y, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void add_d(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub_f(const float* x, const float* y, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] - y[i];
}

void sub_d(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] - y[i];
}

void mul_f(const float* x, const float* y, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void mul_d(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void mul_acc_f(const float* x, const float* y, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i),
                                                  _mm256_loadu_ps(out + i)));
    }
    for (; i < n; ++i) out[i] += x[i] * y[i];
}

void mul_acc_d(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i),
                                                  _mm256_loadu_pd(out + i)));
    }
    for (; i < n; ++i) out[i] += x[i] * y[i];
}

void axpy_f(float a, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_d(double a, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_f(float a, const float* x, float* y, std::size_t n) {
    const __m256 av = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    }
    for (; i < n; ++i) y[i] = a * x[i];
}

void scale_d(double a, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) y[i] = a * x[i];
}

void vexp_f(const float* x, float* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, exp256(_mm256_loadu_ps(x + i)));
    }
    if (i < n) {
        float buf_in[8];
        float buf_out[8];
        const std::size_t rem = n - i;
        std::memcpy(buf_in, x + i, rem * sizeof(float));
        for (std::size_t t = rem; t < 8; ++t) buf_in[t] = 0.0f;
        _mm256_storeu_ps(buf_out, exp256(_mm256_loadu_ps(buf_in)));
        std::memcpy(y + i, buf_out, rem * sizeof(float));
    }
}

void gelu_f(const float* x, float* y, std::size_t n) {
    const __m256 half = _mm256_set1_ps(0.5f);
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 c1 = _mm256_set1_ps(static_cast<float>(kGeluC1));
    const __m256 c2 = _mm256_set1_ps(static_cast<float>(kGeluC2));
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        const __m256 v3 = _mm256_mul_ps(v, _mm256_mul_ps(v, v));
        const __m256 u = _mm256_mul_ps(c1, _mm256_fmadd_ps(c2, v3, v));
        const __m256 t = tanh256(u);
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_mul_ps(half, v), _mm256_add_ps(one, t)));
    }
    for (; i < n; ++i) {
        const float v = x[i];
        const float u =
            static_cast<float>(kGeluC1) * (v + static_cast<float>(kGeluC2) * v * v * v);
        y[i] = 0.5f * v * (1.0f + std::tanh(u));
    }
}

void gelu_grad_f(const float* x, const float* dy, float* dx, std::size_t n) {
    const __m256 half = _mm256_set1_ps(0.5f);
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 three = _mm256_set1_ps(3.0f);
    const __m256 c1 = _mm256_set1_ps(static_cast<float>(kGeluC1));
    const __m256 c2 = _mm256_set1_ps(static_cast<float>(kGeluC2));
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        const __m256 v2 = _mm256_mul_ps(v, v);
        const __m256 u = _mm256_mul_ps(c1, _mm256_fmadd_ps(c2, _mm256_mul_ps(v2, v), v));
        const __m256 t = tanh256(u);
        const __m256 du = _mm256_mul_ps(c1, _mm256_fmadd_ps(_mm256_mul_ps(three, c2), v2, one));
        const __m256 sech2 = _mm256_fnmadd_ps(t, t, one);  // 1 - t^2
        __m256 g = _mm256_mul_ps(half, _mm256_add_ps(one, t));
        g = _mm256_fmadd_ps(_mm256_mul_ps(half, v), _mm256_mul_ps(sech2, du), g);
        _mm256_storeu_ps(dx + i,
                         _mm256_fmadd_ps(_mm256_loadu_ps(dy + i), g, _mm256_loadu_ps(dx + i)));
    }
    for (; i < n; ++i) {
        const float v = x[i];
        const float u =
            static_cast<float>(kGeluC1) * (v + static_cast<float>(kGeluC2) * v * v * v);
        const float t = std::tanh(u);
        const float du = static_cast<float>(kGeluC1) *
                         (1.0f + 3.0f * static_cast<float>(kGeluC2) * v * v);
        dx[i] += dy[i] * (0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du);
    }
}

void relu_f(const float* x, float* y, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_d(const double* x, double* y, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_f(const float* x, const float* dy, float* dx, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        const __m256 gated = _mm256_and_ps(mask, _mm256_loadu_ps(dy + i));
        _mm256_storeu_ps(dx + i, _mm256_add_ps(gated, _mm256_loadu_ps(dx + i)));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0f) dx[i] += dy[i];
    }
}

void relu_grad_d(const double* x, const double* dy, double* dx, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        const __m256d gated = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
        _mm256_storeu_pd(dx + i, _mm256_add_pd(gated, _mm256_loadu_pd(dx + i)));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0) dx[i] += dy[i];
    }
}

float reduce_sum_f(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

double reduce_sum_d(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

float reduce_max_f(const float* x, std::size_t n) {
    if (n < 8) {
        float best = x[0];
        for (std::size_t i = 1; i < n; ++i) best = x[i] > best ? x[i] : best;
        return best;
    }
    __m256 acc = _mm256_loadu_ps(x);
    std::size_t i = 8;
    for (; i + 8 <= n; i += 8) acc = _mm256_max_ps(acc, _mm256_loadu_ps(x + i));
    float best = hmax(acc);
    for (; i < n; ++i) best = x[i] > best ? x[i] : best;
    return best;
}

double reduce_max_d(const double* x, std::size_t n) {
    if (n < 4) {
        double best = x[0];
        for (std::size_t i = 1; i < n; ++i) best = x[i] > best ? x[i] : best;
        return best;
    }
    __m256d acc = _mm256_loadu_pd(x);
    std::size_t i = 4;
    for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
    double best = hmax(acc);
    for (; i < n; ++i) best = x[i] > best ? x[i] : best;
    return best;
}

float dot_f(const float* x, const float* y, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
    }
    float s = hsum(acc);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

double dot_d(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

// finite iff |x| <= max finite; the compare is false for NaN as well.
bool all_finite_f(const float* x, std::size_t n) {
    const __m256 absmask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
    const __m256 maxfinite = _mm256_set1_ps(FLT_MAX);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 av = _mm256_and_ps(_mm256_loadu_ps(x + i), absmask);
        const __m256 ok = _mm256_cmp_ps(av, maxfinite, _CMP_LE_OQ);
        if (_mm256_movemask_ps(ok) != 0xff) return false;
    }
    for (; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

bool all_finite_d(const double* x, std::size_t n) {
    const __m256d absmask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    const __m256d maxfinite = _mm256_set1_pd(DBL_MAX);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d av = _mm256_and_pd(_mm256_loadu_pd(x + i), absmask);
        const __m256d ok = _mm256_cmp_pd(av, maxfinite, _CMP_LE_OQ);
        if (_mm256_movemask_pd(ok) != 0xf) return false;
    }
    for (; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

}  // namespace

template <>
const Table<float>& avx2_table<float>() {
    static const Table<float> t = [] {
        Table<float> v;
        v.gemm_nn = &gemm_nn_f;
        v.gemm_nt = &gemm_nt_f;
        v.gemm_tn = &gemm_tn_f;
        v.add = &add_f;
        v.sub = &sub_f;
        v.mul = &mul_f;
        v.mul_acc = &mul_acc_f;
        v.axpy = &axpy_f;
        v.scale = &scale_f;
        v.vexp = &vexp_f;
        v.gelu = &gelu_f;
        v.gelu_grad = &gelu_grad_f;
        v.relu = &relu_f;
        v.relu_grad = &relu_grad_f;
        v.reduce_sum = &reduce_sum_f;
        v.reduce_max = &reduce_max_f;
        v.dot = &dot_f;
        v.all_finite = &all_finite_f;
        return v;
    }();
    return t;
}

template <>
const Table<double>& avx2_table<double>() {
    static const Table<double> t = [] {
        Table<double> v = scalar_table<double>();  // transcendentals stay scalar in double
        v.gemm_nn = &gemm_nn_d;
        v.gemm_nt = &gemm_nt_d;
        v.gemm_tn = &gemm_tn_d;
        v.add = &add_d;
        v.sub = &sub_d;
        v.mul = &mul_d;
        v.mul_acc = &mul_acc_d;
        v.axpy = &axpy_d;
        v.scale = &scale_d;
        v.relu = &relu_d;
        v.relu_grad = &relu_grad_d;
        v.reduce_sum = &reduce_sum_d;
        v.reduce_max = &reduce_max_d;
        v.dot = &dot_d;
        v.all_finite = &all_finite_d;
        return v;
    }();
    return t;
}

}  // namespace lipdepth::kernels::detail

#endif  // LIPDEPTH_HAVE_AVX2
