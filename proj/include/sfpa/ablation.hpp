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
#include <optional>
#include <string>
#include <vector>

#include "sfpa/adapt.hpp"
#include "sfpa/evalkit.hpp"

namespace sfpa::evalkit {

enum class Study { kFramework, kLosses, kSparsity, kParams };

std::string study_name(Study s);
/// Parses "framework", "losses", "sparsity" or "params"; throws ContractViolation otherwise.
Study parse_study(const std::string& name);

struct SuiteConfig {
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::size_t source_train = 200;
    std::size_t target_train = 200;
    std::size_t test_size = 200;
    ArchConfig arch;
    adapt::PretrainConfig pretrain;
    adapt::AdaptConfig adapt;  // defaults shared by every entry; the study overrides variant and weights
    PckConfig pck;
    toydata::SkeletonSpec skeleton = toydata::default_skeleton();
    toydata::DomainStyle source_style = toydata::DomainStyle::source();
    toydata::DomainStyle target_style = toydata::DomainStyle::target();
    std::optional<toydata::DomainStyle> unseen_style;  // extra held-out style evaluated after adaptation
    std::vector<Study> studies{Study::kFramework, Study::kLosses, Study::kSparsity, Study::kParams};
    std::vector<double> alpha_grid{0.5, 0.7, 0.9};
    std::vector<double> beta_grid{0.3, 0.5, 0.7};
    std::vector<double> gamma_grid{0.65, 0.85, 1.0};
    std::size_t threads = 1;

    void validate() const;
};

enum class Split : std::uint64_t { kSourceTrain = 1, kSourceTest, kTargetTrain, kTargetTest, kUnseenTest };

/// Generator seed of one dataset split, derived from the run seed.
std::uint64_t split_seed(std::uint64_t seed, Split split);

/// Datasets and pretrained source model of one seed.
struct SeedContext {
    std::uint64_t seed = 0;
    toydata::Dataset source_train;
    toydata::Dataset source_test;
    toydata::Dataset target_train;
    toydata::Dataset target_test;
    std::optional<toydata::Dataset> unseen_test;
    PoseNet source;
};

/// Generates the seed's datasets from independent streams and pretrains its source model.
SeedContext prepare_seed(const SuiteConfig& cfg, std::uint64_t seed);

/// One row of a study. An entry without `adapt` is the source-only model.
struct AblationEntry {
    std::string id;
    std::optional<adapt::AdaptConfig> adapt;
};

std::vector<AblationEntry> study_entries(Study study, const SuiteConfig& cfg);

/// Identical keys mean identical training runs.
std::string run_key(const adapt::AdaptConfig& cfg);

struct RunOutcome {
    EvalReport intermediate;
    EvalReport target;
    EvalReport source;  // adapted source model (regressor fine-tuned in the source-protect step)
    std::optional<EvalReport> unseen;  // intermediate model on the unseen style
};

/// Adapts copies of the seed's source model and evaluates on the held-out target set.
RunOutcome run_entry(const SeedContext& ctx, const adapt::AdaptConfig& cfg, const PckConfig& pck);

struct StudyTable {
    Study study;
    std::vector<ReportRow> rows;  // entry-major, then seed
};

/// Trains every distinct configuration once per seed (seeds run on up to
/// `threads` workers) and reports the intermediate model of each entry.
std::vector<StudyTable> run_ablation(const SuiteConfig& cfg);

/// Mean overall PCK of the rows with `config_id`.
double mean_pck(const StudyTable& table, const std::string& config_id);

}  // namespace sfpa::evalkit
