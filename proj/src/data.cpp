
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

#include "lipdepth/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace lipdepth {

namespace {

constexpr int kRecordBytes = 3073;  // 1 label + 3 * 32 * 32 pixels
constexpr int kPixelBytes = 3072;
constexpr int kTrainRecords = 50000;
constexpr int kTestRecords = 10000;

}  // namespace

void Dataset::validate() const {
    if (data.size() != static_cast<std::size_t>(count()) * feature_size()) {
        throw ShapeError("dataset: data/label count mismatch");
    }
    if (feature_shape.size() == 3) {
        for (float v : data) {
            if (!(v >= 0.0f && v <= 1.0f)) {
                throw DomainError("dataset: pixel value outside [0, 1]");
            }
        }
    }
}

Dataset load_cifar10_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    in.seekg(0, std::ios::end);
    const std::int64_t bytes = in.tellg();
    in.seekg(0, std::ios::beg);
    if (bytes <= 0 || bytes % kRecordBytes != 0) {
        throw IoError(path + ": size " + std::to_string(bytes) +
                      " is not a multiple of the 3073-byte record");
    }
    const int records = static_cast<int>(bytes / kRecordBytes);

    Dataset ds;
    ds.feature_shape = {3, 32, 32};
    ds.labels.resize(static_cast<std::size_t>(records));
    ds.data.resize(static_cast<std::size_t>(records) * kPixelBytes);
    std::vector<unsigned char> rec(kRecordBytes);
    for (int i = 0; i < records; ++i) {
        if (!in.read(reinterpret_cast<char*>(rec.data()), kRecordBytes)) {
            throw IoError(path + ": truncated read at record " + std::to_string(i));
        }
        const int label = rec[0];
        if (label > 9) {
            throw IoError(path + ": corrupt record " + std::to_string(i) + ", label byte " +
                          std::to_string(label) + " > 9");
        }
        ds.labels[static_cast<std::size_t>(i)] = label;
        float* dst = ds.data.data() + static_cast<std::size_t>(i) * kPixelBytes;
        for (int j = 0; j < kPixelBytes; ++j) {
            dst[j] = static_cast<float>(rec[j + 1]) / 255.0f;
        }
    }
    return ds;
}

Dataset load_cifar10_binary(const std::string& dir, const std::string& split) {
    namespace fs = std::filesystem;
    Dataset ds;
    ds.feature_shape = {3, 32, 32};
    ds.split = split;
    if (split == "train") {
        for (int b = 1; b <= 5; ++b) {
            const std::string path = (fs::path(dir) / ("data_batch_" + std::to_string(b) + ".bin")).string();
            Dataset part = load_cifar10_file(path);
            ds.data.insert(ds.data.end(), part.data.begin(), part.data.end());
            ds.labels.insert(ds.labels.end(), part.labels.begin(), part.labels.end());
        }
        if (ds.count() != kTrainRecords) {
            throw IoError(dir + ": train split has " + std::to_string(ds.count()) +
                          " records, expected " + std::to_string(kTrainRecords));
        }
    } else if (split == "test") {
        const std::string path = (fs::path(dir) / "test_batch.bin").string();
        Dataset part = load_cifar10_file(path);
        ds.data = std::move(part.data);
        ds.labels = std::move(part.labels);
        if (ds.count() != kTestRecords) {
            throw IoError(dir + ": test split has " + std::to_string(ds.count()) +
                          " records, expected " + std::to_string(kTestRecords));
        }
    } else {
        throw DomainError("load_cifar10_binary: split must be 'train' or 'test', got " + split);
    }
    return ds;
}

void save_cifar10_file(const Dataset& dataset, const std::string& path) {
    if (dataset.feature_size() != kPixelBytes) {
        throw ShapeError("save_cifar10_file: dataset is not 3x32x32");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    std::vector<unsigned char> rec(kRecordBytes);
    for (int i = 0; i < dataset.count(); ++i) {
        rec[0] = static_cast<unsigned char>(dataset.labels[static_cast<std::size_t>(i)]);
        const float* src = dataset.data.data() + static_cast<std::size_t>(i) * kPixelBytes;
        for (int j = 0; j < kPixelBytes; ++j) {
            const float scaled = std::round(src[j] * 255.0f);
            rec[j + 1] = static_cast<unsigned char>(std::clamp(scaled, 0.0f, 255.0f));
        }
        out.write(reinterpret_cast<const char*>(rec.data()), kRecordBytes);
    }
    if (!out) throw IoError("short write to " + path);
}

Dataset subset(const Dataset& dataset, int n, Rng& rng) {
    if (n > dataset.count()) {
        throw DomainError("subset: requested " + std::to_string(n) + " of " +
                          std::to_string(dataset.count()) + " records");
    }
    std::vector<int> idx(static_cast<std::size_t>(dataset.count()));
    for (int i = 0; i < dataset.count(); ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < n; ++i) {
        const int j = i + static_cast<int>(rng.uniform_int(
                              static_cast<std::uint64_t>(dataset.count() - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    Dataset out;
    out.feature_shape = dataset.feature_shape;
    out.split = dataset.split;
    const std::size_t feat = dataset.feature_size();
    out.labels.resize(static_cast<std::size_t>(n));
    out.data.resize(static_cast<std::size_t>(n) * feat);
    for (int i = 0; i < n; ++i) {
        const int s = idx[static_cast<std::size_t>(i)];
        out.labels[static_cast<std::size_t>(i)] = dataset.labels[static_cast<std::size_t>(s)];
        std::copy_n(dataset.data.begin() + static_cast<std::ptrdiff_t>(s * feat), feat,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i) * static_cast<std::ptrdiff_t>(feat));
    }
    return out;
}

GaussianGeometry synthetic_gaussian_geometry(int classes, int dim) {
    GaussianGeometry g;
    if (classes == 2) {
        g.hyperplane.assign(static_cast<std::size_t>(dim),
                            1.0 / std::sqrt(static_cast<double>(dim)));
        g.offset = 0.5 * std::sqrt(static_cast<double>(dim));
    }
    return g;
}

Dataset synthetic_gaussians(int classes, int n, int dim, Rng& rng, double margin) {
    if (classes < 2) throw DomainError("synthetic_gaussians: need >= 2 classes");
    if (dim < 1 || n < 1) throw DomainError("synthetic_gaussians: n and dim must be >= 1");
    Dataset ds;
    ds.feature_shape = {dim};
    ds.split = "synthetic";
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.data.resize(static_cast<std::size_t>(n) * dim);

    const auto geom = synthetic_gaussian_geometry(classes, dim);
    std::vector<double> x(static_cast<std::size_t>(dim));
    for (int i = 0; i < n; ++i) {
        const int label = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(classes)));
        ds.labels[static_cast<std::size_t>(i)] = label;
        for (int attempt = 0;; ++attempt) {
            if (classes == 2) {
                // exact margin around the generating hyperplane
                const double sign = label == 1 ? 1.0 : -1.0;
                const double along = margin / 2.0 + std::abs(rng.gaussian()) * 0.05;
                for (int j = 0; j < dim; ++j) {
                    const double perp = rng.gaussian() * 0.05;
                    x[static_cast<std::size_t>(j)] =
                        0.5 + sign * along * geom.hyperplane[static_cast<std::size_t>(j)] + perp;
                }
                // keep the perpendicular noise orthogonal to the hyperplane
                double dot = 0.0;
                for (int j = 0; j < dim; ++j) {
                    dot += (x[static_cast<std::size_t>(j)] - 0.5) *
                           geom.hyperplane[static_cast<std::size_t>(j)];
                }
                const double want = sign * along;
                for (int j = 0; j < dim; ++j) {
                    x[static_cast<std::size_t>(j)] +=
                        (want - dot) * geom.hyperplane[static_cast<std::size_t>(j)];
                }
            } else {
                const int axis = label % dim;
                const double sign = (label / dim) % 2 == 0 ? 1.0 : -1.0;
                for (int j = 0; j < dim; ++j) {
                    x[static_cast<std::size_t>(j)] = 0.5 + rng.gaussian() * 0.06;
                }
                x[static_cast<std::size_t>(axis)] += sign * 0.25;
            }
            bool in_box = true;
            for (int j = 0; j < dim; ++j) {
                if (x[static_cast<std::size_t>(j)] < 0.0 || x[static_cast<std::size_t>(j)] > 1.0) {
                    in_box = false;
                    break;
                }
            }
            if (in_box) break;
            if (attempt > 1000) {
                throw DomainError("synthetic_gaussians: margin too large for the unit box");
            }
        }
        for (int j = 0; j < dim; ++j) {
            ds.data[static_cast<std::size_t>(i) * dim + j] =
                static_cast<float>(x[static_cast<std::size_t>(j)]);
        }
    }
    return ds;
}

Dataset synthetic_textures(int n, const std::string& split, Rng& rng) {
    constexpr int kSide = 32;
    constexpr double kTwoPi = 6.283185307179586;
    Dataset ds;
    ds.feature_shape = {3, kSide, kSide};
    ds.split = split;
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.data.resize(static_cast<std::size_t>(n) * 3 * kSide * kSide);

    for (int i = 0; i < n; ++i) {
        const int c = static_cast<int>(rng.uniform_int(10));
        ds.labels[static_cast<std::size_t>(i)] = c;
        const double angle = 3.141592653589793 * c / 10.0;
        const double freq = 1.5 + 0.35 * c;
        const double ca = std::cos(angle), sa = std::sin(angle);
        double tint[3];
        tint[0] = 0.5 + 0.35 * std::sin(2.1 * c + 0.3);
        tint[1] = 0.5 + 0.35 * std::sin(2.1 * c + 2.4);
        tint[2] = 0.5 + 0.35 * std::sin(2.1 * c + 4.5);
        const double phase = rng.uniform(0.0, kTwoPi);
        const double amp = rng.uniform(0.18, 0.26);
        const double bright = rng.uniform(-0.06, 0.06);

        float* img = ds.data.data() + static_cast<std::size_t>(i) * 3 * kSide * kSide;
        for (int y = 0; y < kSide; ++y) {
            for (int x = 0; x < kSide; ++x) {
                const double u = (x * ca + y * sa) * freq * kTwoPi / kSide;
                const double base = 0.48 + amp * std::sin(u + phase) + bright;
                for (int ch = 0; ch < 3; ++ch) {
                    const double noise = rng.uniform(-0.14, 0.14);
                    const double v = base * (0.55 + 0.5 * tint[ch]) + noise;
                    img[ch * kSide * kSide + y * kSide + x] =
                        static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
            }
        }
    }
    return ds;
}

void write_synthetic_cifar_dir(const std::string& dir, Rng& rng) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    for (int b = 1; b <= 5; ++b) {
        Rng part = rng.fork(static_cast<std::uint64_t>(b));
        Dataset ds = synthetic_textures(kTrainRecords / 5, "train", part);
        save_cifar10_file(ds, (fs::path(dir) / ("data_batch_" + std::to_string(b) + ".bin")).string());
    }
    Rng part = rng.fork(99);
    Dataset test = synthetic_textures(kTestRecords, "test", part);
    save_cifar10_file(test, (fs::path(dir) / "test_batch.bin").string());
}

}  // namespace lipdepth
