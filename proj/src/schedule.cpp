
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

#include "lipdepth/schedule.hpp"

#include <cmath>

#include "lipdepth/errors.hpp"

namespace lipdepth {

std::string schedule_kind_name(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::none: return "none";
        case ScheduleKind::linear: return "linear";
        case ScheduleKind::custom: return "custom";
    }
    return "none";
}

ScheduleKind schedule_kind_from_name(const std::string& name) {
    if (name == "none") return ScheduleKind::none;
    if (name == "linear") return ScheduleKind::linear;
    if (name == "custom") return ScheduleKind::custom;
    throw DomainError("unknown schedule kind: " + name);
}

void DropSchedule::validate() const {
    if (block_count < 1) throw DomainError("schedule: block count must be >= 1");
    if (static_cast<int>(probs.size()) != block_count) {
        throw ShapeError("schedule: " + std::to_string(probs.size()) + " probs for " +
                         std::to_string(block_count) + " blocks");
    }
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw DomainError("schedule: drop probability " + std::to_string(p) +
                              " outside [0, 1]");
        }
    }
    if (kind == ScheduleKind::none) {
        for (double p : probs) {
            if (p != 0.0) throw DomainError("schedule: kind 'none' must be all zeros");
        }
    }
    if (kind == ScheduleKind::custom) {
        if (!kappa_target || !(*kappa_target > 0.0)) {
            throw DomainError("schedule: custom kind requires kappa_target > 0");
        }
        const double kappa = *kappa_target;
        const int depth = block_count;
        for (int l = 1; l <= depth; ++l) {
            const double expect =
                1.0 - std::pow(kappa, static_cast<double>(l) / static_cast<double>(depth));
            if (std::abs(probs[l - 1] - expect) > 1e-12) {
                throw DomainError("schedule: custom probs do not match 1 - kappa^(l/L)");
            }
            if (l > 1 && probs[l - 1] < probs[l - 2]) {
                throw DomainError("schedule: custom probs must be nondecreasing");
            }
        }
    }
}

double DropSchedule::sum() const {
    double s = 0.0;
    for (double p : probs) s += p;
    return s;
}

nlohmann::json DropSchedule::to_json() const {
    nlohmann::json j;
    j["kind"] = schedule_kind_name(kind);
    j["L"] = block_count;
    j["kappa_target"] = kappa_target ? nlohmann::json(*kappa_target) : nlohmann::json(nullptr);
    j["p_max"] = p_max ? nlohmann::json(*p_max) : nlohmann::json(nullptr);
    j["probs"] = probs;
    return j;
}

DropSchedule DropSchedule::from_json(const nlohmann::json& j) {
    DropSchedule s;
    s.kind = schedule_kind_from_name(j.at("kind").get<std::string>());
    s.block_count = j.at("L").get<int>();
    if (j.contains("kappa_target") && !j.at("kappa_target").is_null()) {
        s.kappa_target = j.at("kappa_target").get<double>();
    }
    if (j.contains("p_max") && !j.at("p_max").is_null()) {
        s.p_max = j.at("p_max").get<double>();
    }
    s.probs = j.at("probs").get<std::vector<double>>();
    s.validate();
    return s;
}

DropSchedule none_schedule(int block_count) {
    if (block_count < 1) throw DomainError("none_schedule: block count must be >= 1");
    DropSchedule s;
    s.kind = ScheduleKind::none;
    s.block_count = block_count;
    s.probs.assign(static_cast<std::size_t>(block_count), 0.0);
    return s;
}

DropSchedule custom_schedule(int block_count, double kappa_target) {
    if (block_count < 1) throw DomainError("custom_schedule: block count must be >= 1");
    if (!(kappa_target > 0.0)) {
        throw DomainError("custom_schedule: kappa_target must be > 0, got " +
                          std::to_string(kappa_target));
    }
    if (kappa_target > 1.0) {
        throw DomainError(
            "custom_schedule: infeasible schedule, kappa_target " + std::to_string(kappa_target) +
            " > 1 would give negative drop probabilities (p(l) = 1 - kappa^(l/L))");
    }
    DropSchedule s;
    s.kind = ScheduleKind::custom;
    s.block_count = block_count;
    s.kappa_target = kappa_target;
    s.probs.resize(static_cast<std::size_t>(block_count));
    for (int l = 1; l <= block_count; ++l) {
        s.probs[l - 1] =
            1.0 - std::pow(kappa_target, static_cast<double>(l) / static_cast<double>(block_count));
    }
    return s;
}

DropSchedule linear_schedule(int block_count, double p_max) {
    if (block_count < 1) throw DomainError("linear_schedule: block count must be >= 1");
    if (!(p_max >= 0.0 && p_max <= 1.0)) {
        throw DomainError("linear_schedule: p_max must lie in [0, 1], got " +
                          std::to_string(p_max));
    }
    DropSchedule s;
    s.kind = ScheduleKind::linear;
    s.block_count = block_count;
    s.p_max = p_max;
    s.probs.resize(static_cast<std::size_t>(block_count));
    if (block_count == 1) {
        s.probs[0] = p_max;
    } else {
        for (int l = 1; l <= block_count; ++l) {
            s.probs[l - 1] = p_max * static_cast<double>(l - 1) / static_cast<double>(block_count - 1);
        }
    }
    return s;
}

nlohmann::json BudgetCheck::to_json() const {
    return nlohmann::json{{"satisfied", satisfied},
                          {"lhs", lhs},
                          {"rhs", rhs},
                          {"infeasible_regime", infeasible_regime}};
}

BudgetCheck budget_check(const DropSchedule& schedule, double lambda, double kappa_target) {
    if (lambda == 1.0) {
        throw DomainError("budget_check: invalid-lambda, lambda == 1 divides by zero");
    }
    if (!(kappa_target > 0.0)) {
        throw DomainError("budget_check: kappa_target must be > 0");
    }
    BudgetCheck out;
    out.lhs = schedule.sum();
    out.rhs = std::log(kappa_target) / (lambda - 1.0);
    out.infeasible_regime = out.rhs < 0.0;
    out.satisfied = out.lhs <= out.rhs;
    return out;
}

}  // namespace lipdepth
