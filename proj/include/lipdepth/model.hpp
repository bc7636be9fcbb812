
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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lipdepth/errors.hpp"
#include "lipdepth/rng.hpp"
#include "lipdepth/schedule.hpp"
#include "lipdepth/tensor.hpp"

namespace lipdepth {

inline constexpr int kInputChannels = 3;
inline constexpr double kLayerNormEps = 1e-6;

// unscaled: a kept branch passes through as-is (a dropped block is an exact
// identity, matching the bound calculus). inverted_scaling: kept branches are
// multiplied by 1/(1-p), the common DropPath variant.
enum class DropPathMode { unscaled, inverted_scaling };

// full: deterministic inference, no drops. sampled: drops stay active at
// eval time (FLOPs/robustness ablations only).
enum class EvalMode { full, sampled };

std::string droppath_mode_name(DropPathMode m);
DropPathMode droppath_mode_from_name(const std::string& name);
std::string eval_mode_name(EvalMode m);
EvalMode eval_mode_from_name(const std::string& name);

struct ViTConfig {
    int image_size = 32;
    int patch_size = 4;
    int embed_dim = 64;
    int depth = 12;
    int heads = 4;
    double mlp_ratio = 2.0;
    int num_classes = 10;
    DropPathMode droppath_mode = DropPathMode::unscaled;
    EvalMode eval_mode = EvalMode::full;

    void validate() const;
    int tokens() const {  // grid tokens + class token
        const int g = image_size / patch_size;
        return g * g + 1;
    }
    int patch_dim() const { return kInputChannels * patch_size * patch_size; }
    int mlp_hidden() const { return static_cast<int>(std::llround(embed_dim * mlp_ratio)); }

    nlohmann::json to_json() const;
    static ViTConfig from_json(const nlohmann::json& j);
};

// ViT-Tiny/16 at 224 as reported in the comparison table; used for FLOPs
// accounting only (never trained here)
ViTConfig paper_shape_config();

template <class T>
struct Block {
    Tensor<T> ln1_g, ln1_b;
    Tensor<T> wq, bq, wk, bk, wv, bv;
    Tensor<T> wproj, bproj;
    Tensor<T> ln2_g, ln2_b;
    Tensor<T> wfc1, bfc1, wfc2, bfc2;
};

// Per-sample drop decisions from one forward pass; depth x batch, 1 = block
// branch dropped for that sample.
struct DropTrace {
    int depth = 0;
    int batch = 0;
    std::vector<std::uint8_t> dropped;

    bool dropped_at(int block, int sample) const {
        return dropped[static_cast<std::size_t>(block) * batch + sample] != 0;
    }
};

// number of blocks whose branch executed for one sample
inline int count_active_blocks(const DropTrace& trace, int sample) {
    int active = 0;
    for (int l = 0; l < trace.depth; ++l) {
        if (!trace.dropped_at(l, sample)) ++active;
    }
    return active;
}

template <class T>
struct Model {
    ViTConfig config;
    DropSchedule schedule;

    Tensor<T> patch_w, patch_b;
    Tensor<T> cls_token;
    Tensor<T> pos_embed;
    std::vector<Block<T>> blocks;
    Tensor<T> final_ln_g, final_ln_b;
    Tensor<T> head_w, head_b;

    // declaration order; also the checkpoint serialization order
    std::vector<Tensor<T>*> parameters() {
        std::vector<Tensor<T>*> out;
        out.reserve(4 + blocks.size() * 16 + 4);
        out.push_back(&patch_w);
        out.push_back(&patch_b);
        out.push_back(&cls_token);
        out.push_back(&pos_embed);
        for (auto& b : blocks) {
            for (Tensor<T>* t : {&b.ln1_g, &b.ln1_b, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv,
                                 &b.wproj, &b.bproj, &b.ln2_g, &b.ln2_b, &b.wfc1, &b.bfc1,
                                 &b.wfc2, &b.bfc2}) {
                out.push_back(t);
            }
        }
        out.push_back(&final_ln_g);
        out.push_back(&final_ln_b);
        out.push_back(&head_w);
        out.push_back(&head_b);
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto* p : parameters()) n += p->size();
        return n;
    }

    // deterministic inference; the surface attacks and estimators probe
    Tensor<T> logits(const Tensor<T>& batch) const;

    // drop-sampled forward for EOT attacks and FLOPs measurement
    Tensor<T> logits_sampled(const Tensor<T>& batch, Rng& rng, DropTrace* trace = nullptr) const;
};

namespace detail {

template <class T>
Tensor<T> param(Shape shape, Rng& rng, double stddev) {
    std::vector<T> v(shape_numel(shape));
    if (stddev > 0.0) {
        for (auto& x : v) x = static_cast<T>(rng.truncated_gaussian(0.0, stddev, 2.0));
    }
    auto t = Tensor<T>::from_vector(std::move(shape), std::move(v));
    t.set_requires_grad(true);
    return t;
}

template <class T>
Tensor<T> const_param(Shape shape, T value) {
    auto t = Tensor<T>::full(std::move(shape), value);
    t.set_requires_grad(true);
    return t;
}

}  // namespace detail

// Initializes per the usual ViT recipe: truncated normal (std 0.02,
// clipped at 2 sigma) for weight matrices, positional embedding and class
// token; zeros for biases; ones for layernorm gains. Deterministic per seed.
template <class T>
Model<T> build_vit(const ViTConfig& config, const DropSchedule& schedule, Rng& rng) {
    config.validate();
    schedule.validate();
    if (schedule.block_count != config.depth) {
        throw ShapeError("build_vit: schedule has " + std::to_string(schedule.block_count) +
                         " blocks but model depth is " + std::to_string(config.depth));
    }
    constexpr double kInitStd = 0.02;
    const int d = config.embed_dim;
    const int hidden = config.mlp_hidden();

    Model<T> m;
    m.config = config;
    m.schedule = schedule;
    m.patch_w = detail::param<T>({config.patch_dim(), d}, rng, kInitStd);
    m.patch_b = detail::const_param<T>({d}, T(0));
    m.cls_token = detail::param<T>({d}, rng, kInitStd);
    m.pos_embed = detail::param<T>({config.tokens(), d}, rng, kInitStd);
    m.blocks.resize(static_cast<std::size_t>(config.depth));
    for (auto& b : m.blocks) {
        b.ln1_g = detail::const_param<T>({d}, T(1));
        b.ln1_b = detail::const_param<T>({d}, T(0));
        b.wq = detail::param<T>({d, d}, rng, kInitStd);
        b.bq = detail::const_param<T>({d}, T(0));
        b.wk = detail::param<T>({d, d}, rng, kInitStd);
        b.bk = detail::const_param<T>({d}, T(0));
        b.wv = detail::param<T>({d, d}, rng, kInitStd);
        b.bv = detail::const_param<T>({d}, T(0));
        b.wproj = detail::param<T>({d, d}, rng, kInitStd);
        b.bproj = detail::const_param<T>({d}, T(0));
        b.ln2_g = detail::const_param<T>({d}, T(1));
        b.ln2_b = detail::const_param<T>({d}, T(0));
        b.wfc1 = detail::param<T>({d, hidden}, rng, kInitStd);
        b.bfc1 = detail::const_param<T>({hidden}, T(0));
        b.wfc2 = detail::param<T>({hidden, d}, rng, kInitStd);
        b.bfc2 = detail::const_param<T>({d}, T(0));
    }
    m.final_ln_g = detail::const_param<T>({d}, T(1));
    m.final_ln_b = detail::const_param<T>({d}, T(0));
    m.head_w = detail::param<T>({d, config.num_classes}, rng, kInitStd);
    m.head_b = detail::const_param<T>({config.num_classes}, T(0));
    return m;
}

// Forward pass. training (or eval_mode=sampled) applies per-sample DropPath:
// a dropped block contributes nothing from either residual branch, so the
// skip path alone remains and the block acts as the identity for that sample.
template <class T>
Tensor<T> forward(const Model<T>& m, const Tensor<T>& batch, bool training, Rng* rng = nullptr,
                  DropTrace* trace = nullptr) {
    const ViTConfig& cfg = m.config;
    if (batch.rank() != 4 || batch.dim(1) != kInputChannels || batch.dim(2) != cfg.image_size ||
        batch.dim(3) != cfg.image_size) {
        throw ShapeError("forward: batch must be (N, " + std::to_string(kInputChannels) + ", " +
                         std::to_string(cfg.image_size) + ", " + std::to_string(cfg.image_size) +
                         "), got " + shape_str(batch.shape()));
    }
    const int n = batch.dim(0);
    const int d = cfg.embed_dim;
    const int heads = cfg.heads;
    const int hd = d / heads;
    const bool use_drops = training || cfg.eval_mode == EvalMode::sampled;

    if (trace) {
        trace->depth = cfg.depth;
        trace->batch = n;
        trace->dropped.assign(static_cast<std::size_t>(cfg.depth) * n, 0);
    }

    Tensor<T> x = patchify(batch, cfg.patch_size);
    x = add(matmul(x, m.patch_w), m.patch_b);
    x = prepend_token(m.cls_token, x);
    x = add(x, m.pos_embed);
    const int t = x.dim(1);

    for (int l = 0; l < cfg.depth; ++l) {
        const Block<T>& b = m.blocks[static_cast<std::size_t>(l)];
        const double p = m.schedule.probs[static_cast<std::size_t>(l)];

        // one Bernoulli draw per (block, sample); the whole block is dropped
        // as a unit, matching the layer-mask semantics of the bound
        bool apply_mask = false;
        std::vector<T> keep_weights;
        if (use_drops && p > 0.0) {
            if (!rng) {
                throw DomainError("forward: drop sampling requires an Rng");
            }
            apply_mask = true;
            keep_weights.resize(static_cast<std::size_t>(n));
            const T keep = cfg.droppath_mode == DropPathMode::inverted_scaling && p < 1.0
                               ? static_cast<T>(1.0 / (1.0 - p))
                               : T(1);
            for (int i = 0; i < n; ++i) {
                const bool dropped = rng->bernoulli(p);
                keep_weights[static_cast<std::size_t>(i)] = dropped ? T(0) : keep;
                if (trace && dropped) {
                    trace->dropped[static_cast<std::size_t>(l) * n + i] = 1;
                }
            }
        }

        Tensor<T> h = layernorm(x, -1, static_cast<T>(kLayerNormEps));
        h = add(mul(h, b.ln1_g), b.ln1_b);
        Tensor<T> q = add(matmul(h, b.wq), b.bq);
        Tensor<T> k = add(matmul(h, b.wk), b.bk);
        Tensor<T> v = add(matmul(h, b.wv), b.bv);
        q = reshape(transpose(reshape(q, {n, t, heads, hd}), {0, 2, 1, 3}), {n * heads, t, hd});
        k = reshape(transpose(reshape(k, {n, t, heads, hd}), {0, 2, 1, 3}), {n * heads, t, hd});
        v = reshape(transpose(reshape(v, {n, t, heads, hd}), {0, 2, 1, 3}), {n * heads, t, hd});
        Tensor<T> scores = scale(matmul(q, k, /*transpose_b=*/true),
                                 static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
        Tensor<T> attn = softmax(scores, -1);
        Tensor<T> ctx = matmul(attn, v);
        ctx = reshape(transpose(reshape(ctx, {n, heads, t, hd}), {0, 2, 1, 3}), {n, t, d});
        Tensor<T> att_out = add(matmul(ctx, b.wproj), b.bproj);
        if (apply_mask) att_out = row_scale(att_out, keep_weights);
        x = add(x, att_out);

        Tensor<T> h2 = layernorm(x, -1, static_cast<T>(kLayerNormEps));
        h2 = add(mul(h2, b.ln2_g), b.ln2_b);
        Tensor<T> f = gelu(add(matmul(h2, b.wfc1), b.bfc1));
        Tensor<T> mlp_out = add(matmul(f, b.wfc2), b.bfc2);
        if (apply_mask) mlp_out = row_scale(mlp_out, keep_weights);
        x = add(x, mlp_out);
    }

    Tensor<T> out = layernorm(x, -1, static_cast<T>(kLayerNormEps));
    out = add(mul(out, m.final_ln_g), m.final_ln_b);
    Tensor<T> cls = select_token(out, 0);
    return add(matmul(cls, m.head_w), m.head_b);
}

template <class T>
Tensor<T> Model<T>::logits(const Tensor<T>& batch) const {
    if (config.eval_mode != EvalMode::full) {
        Model<T> full = *this;
        full.config.eval_mode = EvalMode::full;
        return forward(full, batch, /*training=*/false);
    }
    return forward(*this, batch, /*training=*/false);
}

template <class T>
Tensor<T> Model<T>::logits_sampled(const Tensor<T>& batch, Rng& rng, DropTrace* trace) const {
    Model<T> sampled = *this;
    sampled.config.eval_mode = EvalMode::sampled;
    return forward(sampled, batch, /*training=*/false, &rng, trace);
}

}  // namespace lipdepth
