/*
 * Copyright 2026 The sfpa Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sfpa/ablation.hpp"
#include "sfpa/adapt.hpp"
#include "sfpa/evalkit.hpp"
#include "sfpa/models.hpp"
#include "sfpa/toydata.hpp"

namespace sfpa::cli {

struct Paths {
    std::string data_dir = "data";
    std::string checkpoint_dir = "checkpoints";
    std::string report_dir = "reports";
    std::string log_dir = "logs";
};

struct DataSizes {
    std::size_t source_train = 200;
    std::size_t target_train = 200;
    std::size_t test_size = 200;
};

struct EvalOptions {
    std::vector<std::string> models{"source", "intermediate", "target"};
    std::vector<std::string> datasets{"source_test", "target_test"};
    std::size_t batch_size = 32;
};

struct AblateOptions {
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::vector<std::string> studies{"framework", "losses", "sparsity", "params"};
    std::vector<double> alpha_grid{0.5, 0.7, 0.9};
    std::vector<double> beta_grid{0.3, 0.5, 0.7};
    std::vector<double> gamma_grid{0.65, 0.85, 1.0};
};

struct RunConfig {
    std::uint64_t seed = 0;
    Paths paths;
    DataSizes data;
    toydata::SkeletonSpec skeleton = toydata::default_skeleton();
    toydata::DomainStyle source_style = toydata::DomainStyle::source();
    toydata::DomainStyle target_style = toydata::DomainStyle::target();
    std::optional<toydata::DomainStyle> unseen_style;
    ArchConfig arch;
    adapt::PretrainConfig pretrain;
    adapt::AdaptConfig adapt;  // adapt.weights doubles as the top-level "weights" section
    std::size_t checkpoint_every = 0;  // epochs between intermediate checkpoints; 0 writes only the final ones
    evalkit::PckConfig pck;
    EvalOptions eval;
    AblateOptions ablate;

    /// Suite settings of the ablate command.
    evalkit::SuiteConfig suite(std::size_t threads) const;
};

nlohmann::json to_json(const RunConfig& cfg);

/// Overlays `user` on the defaults. Throws ConfigError on unknown keys,
/// wrong types or values rejected by the module validators.
RunConfig parse_config(const nlohmann::json& user);

/// Empty path gives the defaults. A missing file throws MissingInput; bad
/// JSON throws ConfigError.
RunConfig load_config(const std::filesystem::path& path);

/// "key = default" for every configuration key, one per line.
std::string describe_keys();

}  // namespace sfpa::cli
