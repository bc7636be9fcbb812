
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

// Quick gemm throughput probe for the shapes the tiny ViT actually runs.

#include <chrono>
#include <cstdio>
#include <vector>

#include "lipdepth/kernels.hpp"
#include "lipdepth/rng.hpp"

using Clock = std::chrono::steady_clock;

template <class T>
void bench(const char* label, int m, int n, int k) {
    lipdepth::Rng rng(7);
    std::vector<T> a(static_cast<std::size_t>(m) * k);
    std::vector<T> b(static_cast<std::size_t>(k) * n);
    std::vector<T> c(static_cast<std::size_t>(m) * n);
    for (auto& v : a) v = static_cast<T>(rng.uniform(-1, 1));
    for (auto& v : b) v = static_cast<T>(rng.uniform(-1, 1));

    const auto& kt = lipdepth::kernels::active<T>();
    const double flop = 2.0 * m * n * k;
    int reps = static_cast<int>(2e9 / flop) + 1;
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) kt.gemm_nn(a.data(), b.data(), c.data(), m, n, k, false);
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("%-26s nn %4dx%4dx%4d  %7.2f GFLOP/s\n", label, m, n, k, flop * reps / dt / 1e9);

    const auto t1 = Clock::now();
    for (int r = 0; r < reps; ++r) kt.gemm_nt(a.data(), b.data(), c.data(), m, n, k, false);
    const double dt1 = std::chrono::duration<double>(Clock::now() - t1).count();
    std::printf("%-26s nt %4dx%4dx%4d  %7.2f GFLOP/s\n", label, m, n, k, flop * reps / dt1 / 1e9);

    const auto t2 = Clock::now();
    for (int r = 0; r < reps; ++r) kt.gemm_tn(a.data(), b.data(), c.data(), m, n, k, false);
    const double dt2 = std::chrono::duration<double>(Clock::now() - t2).count();
    std::printf("%-26s tn %4dx%4dx%4d  %7.2f GFLOP/s\n", label, m, n, k, flop * reps / dt2 / 1e9);
}

int main() {
    std::printf("backend: %s\n",
                lipdepth::kernels::backend_name(lipdepth::kernels::active_backend()).c_str());
    bench<float>("float token x weight", 8320, 64, 64);    // (N*T, D) @ (D, D)
    bench<float>("float mlp", 8320, 128, 64);               // (N*T, D) @ (D, 2D)
    bench<float>("float attn scores", 65, 65, 16);          // per head
    bench<double>("double token x weight", 8320, 64, 64);
    return 0;
}
