
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

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lipdepth/errors.hpp"
#include "lipdepth/rng.hpp"
#include "lipdepth/tensor.hpp"

namespace lipdepth {

// Immutable sample store. Images use feature_shape {3, 32, 32} with values
// already divided by 255; synthetic point sets use feature_shape {dim}.
struct Dataset {
    std::vector<float> data;
    std::vector<int> labels;
    Shape feature_shape;
    std::string split;

    int count() const { return static_cast<int>(labels.size()); }
    std::size_t feature_size() const { return shape_numel(feature_shape); }
    void validate() const;
};

// One CIFAR-10 binary batch file: any number of 3073-byte records
// (1 label byte + 3072 pixel bytes, row-major R,G,B planes).
Dataset load_cifar10_file(const std::string& path);

// Standard layout under `dir`: data_batch_1..5.bin (train, 50,000 records
// total) or test_batch.bin (test, 10,000 records). split is "train"/"test".
Dataset load_cifar10_binary(const std::string& dir, const std::string& split);

// Writes images (values k/255) back to the binary record format.
void save_cifar10_file(const Dataset& dataset, const std::string& path);

// seeded sample of n records without replacement
Dataset subset(const Dataset& dataset, int n, Rng& rng);

// Linearly separable Gaussian classes inside the unit box, margin apart along
// deterministic axes; the 2-class case is exactly separated by the generating
// hyperplane (used by the attack oracles).
Dataset synthetic_gaussians(int classes, int n, int dim, Rng& rng, double margin = 1.0);

struct GaussianGeometry {
    std::vector<double> hyperplane;  // unit normal (2-class case)
    double offset = 0.0;             // w.x > offset <=> class 1
};
GaussianGeometry synthetic_gaussian_geometry(int classes, int dim);

// Procedural 10-class 3x32x32 texture benchmark (oriented sinusoid gratings
// with class tints, random phase/brightness and pixel noise). Stands in for
// CIFAR-10 when the real binaries are not present; same layout, same loader
// path once written with save_cifar10_file.
Dataset synthetic_textures(int n, const std::string& split, Rng& rng);

// writes a full standard-layout dataset dir (5 train batches + test batch)
void write_synthetic_cifar_dir(const std::string& dir, Rng& rng);

template <class T>
std::pair<Tensor<T>, std::vector<int>> make_batch(const Dataset& dataset,
                                                  std::span<const int> indices) {
    const std::size_t feat = dataset.feature_size();
    std::vector<T> buf(indices.size() * feat);
    std::vector<int> labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0 || idx >= dataset.count()) {
            throw DomainError("make_batch: index out of range");
        }
        const float* src = dataset.data.data() + static_cast<std::size_t>(idx) * feat;
        for (std::size_t j = 0; j < feat; ++j) buf[i * feat + j] = static_cast<T>(src[j]);
        labels[i] = dataset.labels[static_cast<std::size_t>(idx)];
    }
    Shape shape;
    shape.push_back(static_cast<int>(indices.size()));
    for (int d : dataset.feature_shape) shape.push_back(d);
    return {Tensor<T>::from_vector(std::move(shape), std::move(buf)), std::move(labels)};
}

template <class T>
std::pair<Tensor<T>, std::vector<int>> make_batch_range(const Dataset& dataset, int begin,
                                                        int end) {
    std::vector<int> idx(static_cast<std::size_t>(end - begin));
    for (int i = begin; i < end; ++i) idx[static_cast<std::size_t>(i - begin)] = i;
    return make_batch<T>(dataset, idx);
}

}  // namespace lipdepth
