
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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lipdepth/errors.hpp"
#include "lipdepth/rng.hpp"
#include "lipdepth/schedule.hpp"
#include "lipdepth/tensor.hpp"

namespace lipdepth {

// row-major dense matrix, double precision throughout the bound calculus
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// per-layer Lipschitz constants; kappa_full = prod ell_l
struct NetworkSpec {
    std::vector<double> layer_lipschitz;

    void validate() const;
    int layers() const { return static_cast<int>(layer_lipschitz.size()); }
};

// one sampled sub-network; 1 = layer active, 0 = replaced by identity
struct MaskSample {
    std::vector<std::uint8_t> mask;
};

struct SpectralResult {
    double sigma = 0.0;
    bool converged = false;
    int iterations = 0;
};

// power iteration on W^T W; random start vector from the passed Rng.
// Defaults: 100 iterations max, tol 1e-9 on successive estimates.
SpectralResult spectral_norm(const Matrix& w, int iters, double tol, Rng& rng);

// builds a NetworkSpec with ell_l = sigma_1(W_l)
NetworkSpec spec_from_weights(const std::vector<Matrix>& weights, int iters, double tol, Rng& rng);

// uniform bound lambda = max_l ell_l
double uniform_lambda(const NetworkSpec& spec);

double full_lipschitz(const NetworkSpec& spec);
double mask_lipschitz(const NetworkSpec& spec, const MaskSample& mask);

// E[ell^mask] = (1-p)*ell + p
double expected_factor(double p, double ell);

// E[kappa(mask)] = prod_l E[ell_l^mask_l]; exact under independent masks
double expected_network_bound(const NetworkSpec& spec, const DropSchedule& schedule);

struct MonteCarloKappa {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t samples = 0;
    // fixed-width histogram over [hist_min, hist_max]
    double hist_min = 0.0;
    double hist_max = 0.0;
    std::vector<std::size_t> histogram;
};

MonteCarloKappa monte_carlo_kappa(const NetworkSpec& spec, const DropSchedule& schedule,
                                  std::size_t samples, Rng& rng, int bins = 32);

enum class PerturbDirection { random, gradient_aligned };

// Table-1 style statistics of |f(x+delta)-f(x)| / |delta| at fixed
// |delta|_2 = epsilon
struct LipschitzReport {
    double mean = 0.0;
    double median = 0.0;
    double max = 0.0;
    double epsilon = 0.0;
    std::string norm = "L2";
    int sample_count = 0;

    // model_id, mean, median, max, epsilon, samples
    std::string to_csv_row(const std::string& model_id) const;
};

namespace detail {

template <class T>
Tensor<T> add_values(const Tensor<T>& x, const std::vector<T>& delta) {
    std::vector<T> out(x.values().begin(), x.values().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += delta[i];
    return Tensor<T>::from_vector(x.shape(), std::move(out));
}

template <class T>
void normalize_rows_to(std::vector<T>& v, std::size_t rows, std::size_t inner, double target,
                       Rng& rng) {
    for (std::size_t r = 0; r < rows; ++r) {
        T* p = v.data() + r * inner;
        double nrm = 0.0;
        for (std::size_t i = 0; i < inner; ++i) nrm += static_cast<double>(p[i]) * p[i];
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) {
            // dead direction; fall back to a fresh random one
            for (std::size_t i = 0; i < inner; ++i) p[i] = static_cast<T>(rng.gaussian());
            nrm = 0.0;
            for (std::size_t i = 0; i < inner; ++i) nrm += static_cast<double>(p[i]) * p[i];
            nrm = std::sqrt(nrm);
        }
        const T s = static_cast<T>(target / nrm);
        for (std::size_t i = 0; i < inner; ++i) p[i] *= s;
    }
}

}  // namespace detail

// Local Lipschitz estimator. ModelT only needs logits(const Tensor<T>&).
// random: per-sample Gaussian direction scaled to |delta|_2 = epsilon.
// gradient_aligned: starts from grad_x |f(x)|_2 and refines with 3
// power-iteration-style steps (J delta by finite difference, J^T v by
// reverse mode) to probe a near-worst-case direction.
template <class T, class ModelT>
LipschitzReport local_lipschitz_estimate(ModelT& model, const Tensor<T>& batch, double epsilon,
                                         PerturbDirection direction, Rng& rng) {
    if (!(epsilon > 0.0)) throw DomainError("local_lipschitz_estimate: epsilon must be > 0");
    if (batch.size() == 0 || batch.shape().empty() || batch.dim(0) == 0) {
        throw DomainError("local_lipschitz_estimate: batch is empty");
    }
    const std::size_t n = static_cast<std::size_t>(batch.dim(0));
    const std::size_t inner = batch.size() / n;

    std::vector<T> delta(batch.size());
    if (direction == PerturbDirection::random) {
        for (auto& d : delta) d = static_cast<T>(rng.gaussian());
        detail::normalize_rows_to(delta, n, inner, epsilon, rng);
    } else {
        // start from the gradient of |f(x)|_2 (same direction as grad of
        // sum f^2, which avoids a sqrt node)
        Tensor<T> xt = batch.detach().set_requires_grad(true);
        Tensor<T> y = model.logits(xt);
        backward(sum(mul(y, y)));
        const auto g = xt.grad();
        delta.assign(g.begin(), g.end());
        detail::normalize_rows_to(delta, n, inner, epsilon, rng);

        const std::size_t out_count = static_cast<std::size_t>(y.size());
        const std::size_t out_inner = out_count / n;
        for (int step = 0; step < 3; ++step) {
            // v = (f(x+delta) - f(x)) / eps, normalized per sample
            Tensor<T> y0 = model.logits(batch);
            Tensor<T> y1 = model.logits(detail::add_values(batch, delta));
            std::vector<T> v(out_count);
            for (std::size_t i = 0; i < out_count; ++i) {
                v[i] = (y1.values()[i] - y0.values()[i]);
            }
            detail::normalize_rows_to(v, n, out_inner, 1.0, rng);
            // delta <- J^T v, renormalized
            Tensor<T> xs = batch.detach().set_requires_grad(true);
            Tensor<T> ys = model.logits(xs);
            Tensor<T> vt = Tensor<T>::from_vector(ys.shape(), v);
            backward(sum(mul(ys, vt)));
            const auto g2 = xs.grad();
            delta.assign(g2.begin(), g2.end());
            detail::normalize_rows_to(delta, n, inner, epsilon, rng);
        }
    }

    const Tensor<T> base = model.logits(batch);
    const Tensor<T> moved = model.logits(detail::add_values(batch, delta));
    const std::size_t out_inner = static_cast<std::size_t>(base.size()) / n;
    std::vector<double> ratios(n);
    for (std::size_t r = 0; r < n; ++r) {
        double num = 0.0;
        for (std::size_t i = 0; i < out_inner; ++i) {
            const double d = static_cast<double>(moved.values()[r * out_inner + i]) -
                             static_cast<double>(base.values()[r * out_inner + i]);
            num += d * d;
        }
        ratios[r] = std::sqrt(num) / epsilon;
    }

    LipschitzReport rep;
    rep.epsilon = epsilon;
    rep.sample_count = static_cast<int>(n);
    std::sort(ratios.begin(), ratios.end());
    rep.max = ratios.back();
    const std::size_t mid = n / 2;
    rep.median = (n % 2 == 1) ? ratios[mid] : 0.5 * (ratios[mid - 1] + ratios[mid]);
    double s = 0.0;
    for (double v : ratios) s += v;
    rep.mean = s / static_cast<double>(n);
    return rep;
}

}  // namespace lipdepth
