
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

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace lipdepth::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(LIPDEPTH_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend pick_default() {
    if (const char* env = std::getenv("LIPDEPTH_BACKEND")) {
        const std::string name(env);
        if (name == "scalar") return Backend::scalar;
        if (name == "avx2") {
            if (!cpu_has_avx2()) {
                throw std::runtime_error("LIPDEPTH_BACKEND=avx2 but this CPU lacks AVX2/FMA");
            }
            return Backend::avx2;
        }
        throw std::runtime_error("unknown LIPDEPTH_BACKEND value: " + name);
    }
    return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

Backend& current() {
    static Backend b = pick_default();
    return b;
}

}  // namespace

std::string backend_name(Backend b) {
    return b == Backend::avx2 ? "avx2" : "scalar";
}

bool backend_supported(Backend b) {
    return b == Backend::scalar || cpu_has_avx2();
}

Backend active_backend() { return current(); }

void set_backend(Backend b) {
    if (!backend_supported(b)) {
        throw std::runtime_error("kernel backend not supported on this host: " + backend_name(b));
    }
    current() = b;
}

template <class T>
const Table<T>& table(Backend b) {
#if defined(LIPDEPTH_HAVE_AVX2)
    if (b == Backend::avx2) {
        if (!cpu_has_avx2()) {
            throw std::runtime_error("avx2 kernel table requested on a CPU without AVX2/FMA");
        }
        return detail::avx2_table<T>();
    }
#else
    if (b == Backend::avx2) {
        throw std::runtime_error("avx2 kernels were not compiled into this build");
    }
#endif
    return detail::scalar_table<T>();
}

template <class T>
const Table<T>& active() {
    return table<T>(current());
}

template const Table<float>& table<float>(Backend);
template const Table<double>& table<double>(Backend);
template const Table<float>& active<float>();
template const Table<double>& active<double>();

}  // namespace lipdepth::kernels
