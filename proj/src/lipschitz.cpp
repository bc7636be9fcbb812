
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

#include "lipdepth/lipschitz.hpp"

#include <cmath>
#include <cstdio>

#include "lipdepth/kernels.hpp"

namespace lipdepth {

namespace {

double vec_norm(const std::vector<double>& v) {
    return std::sqrt(kernels::active<double>().dot(v.data(), v.data(), v.size()));
}

}  // namespace

void NetworkSpec::validate() const {
    if (layer_lipschitz.empty()) throw DomainError("NetworkSpec: no layers");
    for (double ell : layer_lipschitz) {
        if (!(ell >= 0.0) || !std::isfinite(ell)) {
            throw DomainError("NetworkSpec: layer constants must be finite and >= 0");
        }
    }
}

SpectralResult spectral_norm(const Matrix& w, int iters, double tol, Rng& rng) {
    if (w.rows <= 0 || w.cols <= 0 || w.data.size() != static_cast<std::size_t>(w.rows) * w.cols) {
        throw ShapeError("spectral_norm: empty or inconsistent matrix");
    }
    if (iters < 1) throw DomainError("spectral_norm: iters must be >= 1");
    const auto& kt = kernels::active<double>();
    if (!kt.all_finite(w.data.data(), w.data.size())) {
        throw NumericsError("spectral_norm: matrix contains non-finite entries");
    }

    std::vector<double> v(static_cast<std::size_t>(w.cols));
    for (auto& x : v) x = rng.gaussian();
    {
        const double nrm = vec_norm(v);
        for (auto& x : v) x /= nrm;
    }
    std::vector<double> u(static_cast<std::size_t>(w.rows));
    std::vector<double> vt(static_cast<std::size_t>(w.cols));

    SpectralResult res;
    double prev = -1.0;
    for (int it = 1; it <= iters; ++it) {
        res.iterations = it;
        // u = W v
        kt.gemm_nn(w.data.data(), v.data(), u.data(), w.rows, 1, w.cols, false);
        const double un = vec_norm(u);
        if (un == 0.0) {
            res.sigma = 0.0;
            res.converged = true;
            return res;
        }
        for (auto& x : u) x /= un;
        // vt = W^T u
        kt.gemm_tn(w.data.data(), u.data(), vt.data(), w.cols, 1, w.rows, false);
        const double est = vec_norm(vt);
        if (est == 0.0) {
            res.sigma = un;
            res.converged = true;
            return res;
        }
        for (std::size_t i = 0; i < vt.size(); ++i) v[i] = vt[i] / est;
        res.sigma = est;
        if (prev >= 0.0 && std::abs(est - prev) < tol) {
            res.converged = true;
            return res;
        }
        prev = est;
    }
    res.converged = false;
    return res;
}

NetworkSpec spec_from_weights(const std::vector<Matrix>& weights, int iters, double tol,
                              Rng& rng) {
    NetworkSpec spec;
    spec.layer_lipschitz.reserve(weights.size());
    for (const auto& w : weights) {
        spec.layer_lipschitz.push_back(spectral_norm(w, iters, tol, rng).sigma);
    }
    spec.validate();
    return spec;
}

double uniform_lambda(const NetworkSpec& spec) {
    spec.validate();
    double best = 0.0;
    for (double ell : spec.layer_lipschitz) best = std::max(best, ell);
    return best;
}

double full_lipschitz(const NetworkSpec& spec) {
    spec.validate();
    double prod = 1.0;
    for (double ell : spec.layer_lipschitz) prod *= ell;
    return prod;
}

double mask_lipschitz(const NetworkSpec& spec, const MaskSample& mask) {
    spec.validate();
    if (mask.mask.size() != spec.layer_lipschitz.size()) {
        throw ShapeError("mask_lipschitz: mask length " + std::to_string(mask.mask.size()) +
                         " vs " + std::to_string(spec.layer_lipschitz.size()) + " layers");
    }
    double prod = 1.0;
    for (std::size_t l = 0; l < mask.mask.size(); ++l) {
        if (mask.mask[l]) prod *= spec.layer_lipschitz[l];
    }
    return prod;
}

double expected_factor(double p, double ell) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("expected_factor: p outside [0, 1]");
    }
    if (!(ell >= 0.0)) throw DomainError("expected_factor: ell must be >= 0");
    return (1.0 - p) * ell + p;
}

double expected_network_bound(const NetworkSpec& spec, const DropSchedule& schedule) {
    spec.validate();
    if (static_cast<int>(spec.layer_lipschitz.size()) != schedule.block_count) {
        throw ShapeError("expected_network_bound: " +
                         std::to_string(spec.layer_lipschitz.size()) + " layers vs schedule L=" +
                         std::to_string(schedule.block_count));
    }
    double prod = 1.0;
    for (std::size_t l = 0; l < spec.layer_lipschitz.size(); ++l) {
        prod *= expected_factor(schedule.probs[l], spec.layer_lipschitz[l]);
    }
    return prod;
}

MonteCarloKappa monte_carlo_kappa(const NetworkSpec& spec, const DropSchedule& schedule,
                                  std::size_t samples, Rng& rng, int bins) {
    spec.validate();
    if (samples < 1) throw DomainError("monte_carlo_kappa: samples must be >= 1");
    if (static_cast<int>(spec.layer_lipschitz.size()) != schedule.block_count) {
        throw ShapeError("monte_carlo_kappa: spec/schedule length mismatch");
    }
    std::vector<double> draws(samples);
    MaskSample mask;
    mask.mask.resize(spec.layer_lipschitz.size());
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t l = 0; l < mask.mask.size(); ++l) {
            // active with probability 1 - p(l)
            mask.mask[l] = rng.bernoulli(schedule.probs[l]) ? 0 : 1;
        }
        draws[s] = mask_lipschitz(spec, mask);
    }
    MonteCarloKappa out;
    out.samples = samples;
    double mean = 0.0;
    for (double d : draws) mean += d;
    mean /= static_cast<double>(samples);
    out.mean = mean;
    double var = 0.0;
    for (double d : draws) var += (d - mean) * (d - mean);
    out.stddev = samples > 1 ? std::sqrt(var / static_cast<double>(samples - 1)) : 0.0;

    out.hist_min = draws[0];
    out.hist_max = draws[0];
    for (double d : draws) {
        out.hist_min = std::min(out.hist_min, d);
        out.hist_max = std::max(out.hist_max, d);
    }
    out.histogram.assign(static_cast<std::size_t>(bins), 0);
    const double width = out.hist_max - out.hist_min;
    for (double d : draws) {
        int b = width > 0.0 ? static_cast<int>((d - out.hist_min) / width * bins) : 0;
        b = std::min(b, bins - 1);
        ++out.histogram[static_cast<std::size_t>(b)];
    }
    return out;
}

std::string LipschitzReport::to_csv_row(const std::string& model_id) const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.9f,%d", model_id.c_str(), mean, median,
                  max, epsilon, sample_count);
    return buf;
}

}  // namespace lipdepth
