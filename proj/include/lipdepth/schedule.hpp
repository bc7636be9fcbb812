
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

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace lipdepth {

enum class ScheduleKind { none, linear, custom };

std::string schedule_kind_name(ScheduleKind k);
ScheduleKind schedule_kind_from_name(const std::string& name);

// Per-block DropPath probabilities p(1..L). Blocks are transformer blocks
// only; patch embedding and the head are never dropped.
struct DropSchedule {
    std::vector<double> probs;
    ScheduleKind kind = ScheduleKind::none;
    std::optional<double> kappa_target;  // custom only
    std::optional<double> p_max;         // linear only
    int block_count = 0;

    // enforces the type invariants; throws DomainError/ShapeError
    void validate() const;

    double sum() const;

    nlohmann::json to_json() const;
    static DropSchedule from_json(const nlohmann::json& j);
};

// all-zero schedule (the no-drop baseline)
DropSchedule none_schedule(int block_count);

// p(l) = 1 - kappa_target^(l/L); kappa_target in (0, 1]. kappa_target > 1
// would yield negative probabilities and is rejected.
DropSchedule custom_schedule(int block_count, double kappa_target);

// p(l) = p_max * (l-1)/(L-1); first block never dropped. L == 1 gives {p_max}.
DropSchedule linear_schedule(int block_count, double p_max);

// sufficient condition sum p(l) <= log(kappa_target) / (lambda - 1).
// A negative right-hand side cannot be met by any nonnegative schedule; the
// result then carries the infeasible_regime flag.
struct BudgetCheck {
    bool satisfied = false;
    double lhs = 0.0;
    double rhs = 0.0;
    bool infeasible_regime = false;

    nlohmann::json to_json() const;
};

BudgetCheck budget_check(const DropSchedule& schedule, double lambda, double kappa_target);

}  // namespace lipdepth
