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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfpa/models.hpp"
#include "sfpa/posemaps.hpp"
#include "sfpa/toydata.hpp"

namespace sfpa::evalkit {

struct PckConfig {
    double threshold = 0.05;
    std::optional<double> normalizer;  // defaults to max(H, W) of the image

    double normalizer_for(ImageSize image) const;
    void validate() const;
};

/// Correctness of every keypoint; std::nullopt where the ground truth is not visible.
std::vector<std::optional<bool>> pck(const Keypoints& pred, const Keypoints& gt, const PckConfig& cfg,
                                     ImageSize image);

struct GroupScore {
    std::string name;
    std::size_t correct = 0;
    std::size_t total = 0;
    double pck = 0.0;  // percent; 0 when total is 0

    bool operator==(const GroupScore&) const = default;
};

struct EvalReport {
    std::string model_id;
    std::size_t samples = 0;
    std::size_t correct = 0;
    std::size_t total = 0;
    double overall = 0.0;  // percent of visible keypoints within threshold
    std::vector<GroupScore> groups;

    bool operator==(const EvalReport&) const = default;
};

/// Maps a (B, C, H, W) image batch to (B, K, H', W') heatmaps.
using Predictor = std::function<Tensor(const Tensor& images)>;

EvalReport evaluate(const Predictor& predict, const toydata::Dataset& data, const PckConfig& cfg,
                    const std::string& model_id, std::size_t batch_size = 32);
EvalReport evaluate(const PoseNet& net, const toydata::Dataset& data, const PckConfig& cfg,
                    const std::string& model_id, std::size_t batch_size = 32);

struct ReportRow {
    std::string config_id;
    std::uint64_t seed = 0;
    EvalReport report;
};

/// Header: config_id,seed,model_id,samples,overall,<group>... ; PCKs with 4 decimals.
std::string to_csv(std::span<const ReportRow> rows);
/// Pipe table with one row per entry; `title` becomes a level-3 heading when non-empty.
std::string to_markdown(std::span<const ReportRow> rows, const std::string& title = {});

}  // namespace sfpa::evalkit
