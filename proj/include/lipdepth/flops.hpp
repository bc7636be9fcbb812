
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

#include <string>
#include <vector>

#include "json.hpp"
#include "lipdepth/model.hpp"
#include "lipdepth/schedule.hpp"

namespace lipdepth {

// Analytic per-forward-pass accounting. Convention: FLOPs = 2 x MACs (one
// multiply plus one add); a linear layer of shape m x n over T tokens costs
// 2*T*m*n. Nonlinearities (layernorm/softmax/gelu) are charged
// nonlinearity_cost per element.
struct FlopsReport {
    double fixed_flops = 0.0;  // patch embed + final norm + head
    std::vector<double> per_block_flops;
    double total_full = 0.0;
    double expected_under_schedule = 0.0;  // filled by expected_flops
    double nonlinearity_cost = 5.0;
    std::string units = "FLOPs (2*MACs; multiplies and adds counted separately)";

    nlohmann::json to_json() const;
};

FlopsReport count_flops(const ViTConfig& config, double nonlinearity_cost = 5.0);

// fixed + sum_l (1 - p(l)) * block_l under independent per-block drops
double expected_flops(const FlopsReport& report, const DropSchedule& schedule);

// executed FLOPs for one sample given its drop trace
double executed_flops(const FlopsReport& report, const DropTrace& trace, int sample);

// Average executed FLOPs over `samples` drop-sampled forward passes of the
// given batch, using count_active_blocks traces.
template <class T>
double measured_flops(const Model<T>& model, const Tensor<T>& batch, int samples, Rng& rng) {
    if (samples < 1) throw DomainError("measured_flops: samples must be >= 1");
    const FlopsReport report = count_flops(model.config);
    double total = 0.0;
    std::size_t draws = 0;
    DropTrace trace;
    for (int s = 0; s < samples; ++s) {
        model.logits_sampled(batch, rng, &trace);
        for (int i = 0; i < trace.batch; ++i) {
            total += executed_flops(report, trace, i);
            ++draws;
        }
    }
    return total / static_cast<double>(draws);
}

}  // namespace lipdepth
