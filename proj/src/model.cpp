
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

#include "lipdepth/model.hpp"

namespace lipdepth {

std::string droppath_mode_name(DropPathMode m) {
    return m == DropPathMode::inverted_scaling ? "inverted_scaling" : "unscaled";
}

DropPathMode droppath_mode_from_name(const std::string& name) {
    if (name == "unscaled") return DropPathMode::unscaled;
    if (name == "inverted_scaling") return DropPathMode::inverted_scaling;
    throw DomainError("unknown droppath_mode: " + name);
}

std::string eval_mode_name(EvalMode m) { return m == EvalMode::sampled ? "sampled" : "full"; }

EvalMode eval_mode_from_name(const std::string& name) {
    if (name == "full") return EvalMode::full;
    if (name == "sampled") return EvalMode::sampled;
    throw DomainError("unknown eval_mode: " + name);
}

void ViTConfig::validate() const {
    if (depth < 1) throw DomainError("ViTConfig: depth must be >= 1");
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
        throw DomainError("ViTConfig: image_size must be divisible by patch_size");
    }
    if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) {
        throw DomainError("ViTConfig: embed_dim must be divisible by heads");
    }
    if (num_classes < 2) throw DomainError("ViTConfig: num_classes must be >= 2");
    if (!(mlp_ratio > 0.0)) throw DomainError("ViTConfig: mlp_ratio must be > 0");
}

nlohmann::json ViTConfig::to_json() const {
    return nlohmann::json{{"image_size", image_size},
                          {"patch_size", patch_size},
                          {"embed_dim", embed_dim},
                          {"depth", depth},
                          {"heads", heads},
                          {"mlp_ratio", mlp_ratio},
                          {"num_classes", num_classes},
                          {"droppath_mode", droppath_mode_name(droppath_mode)},
                          {"eval_mode", eval_mode_name(eval_mode)}};
}

ViTConfig ViTConfig::from_json(const nlohmann::json& j) {
    ViTConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.depth = j.at("depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<double>();
    c.num_classes = j.at("num_classes").get<int>();
    c.droppath_mode = droppath_mode_from_name(j.at("droppath_mode").get<std::string>());
    c.eval_mode = eval_mode_from_name(j.at("eval_mode").get<std::string>());
    c.validate();
    return c;
}

ViTConfig paper_shape_config() {
    ViTConfig c;
    c.image_size = 224;
    c.patch_size = 16;
    c.embed_dim = 192;
    c.depth = 12;
    c.heads = 3;
    c.mlp_ratio = 4.0;
    c.num_classes = 10;
    return c;
}

}  // namespace lipdepth
