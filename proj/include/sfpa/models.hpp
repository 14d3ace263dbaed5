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
#include <string>
#include <vector>

#include "sfpa/tensorgrad/checkpoint_io.hpp"
#include "sfpa/tensorgrad/tensor.hpp"

namespace sfpa {

struct ArchConfig {
    std::size_t in_channels = 1;
    std::size_t image_size = 64;
    std::vector<std::size_t> extractor_channels{16, 32, 64};  // one stride-2 conv block each
    std::vector<std::size_t> regressor_channels{32, 32};      // one transposed-conv block each
    std::size_t num_keypoints = 5;
    std::size_t heatmap_size = 16;

    /// Throws ContractViolation if the layer stack cannot map image_size to heatmap_size.
    void validate() const;
    /// Number of leading regressor blocks that upsample by 2.
    std::size_t upsampling_blocks() const;

    bool operator==(const ArchConfig&) const = default;
};

enum class ParamGroup { kExtractor, kRegressor };

/// Heatmap regressor f = F(G(x)): G is a stack of stride-2 conv+relu blocks,
/// F a stack of transposed-conv+relu blocks followed by a 1x1 conv head.
class PoseNet {
public:
    /// He-initialised weights drawn from a generator seeded with `seed`.
    PoseNet(ArchConfig config, std::uint64_t seed);

    const ArchConfig& config() const { return config_; }

    Tensor extract(const Tensor& images) const;
    Tensor regress(const Tensor& features) const;
    Tensor forward(const Tensor& images) const { return regress(extract(images)); }

    std::vector<NamedTensor>& group(ParamGroup g) { return g == ParamGroup::kExtractor ? extractor_ : regressor_; }
    const std::vector<NamedTensor>& group(ParamGroup g) const {
        return g == ParamGroup::kExtractor ? extractor_ : regressor_;
    }
    std::vector<Tensor> group_tensors(ParamGroup g) const;
    /// Extractor parameters first, then regressor parameters.
    std::vector<NamedTensor> parameters() const;

    void set_trainable(ParamGroup g, bool trainable);
    void set_trainable(bool trainable);
    void zero_grad();

    /// Deep copy with independent storage.
    PoseNet clone() const;

    /// FNV-1a over the raw bytes of a parameter group.
    std::uint64_t group_hash(ParamGroup g) const;

private:
    ArchConfig config_;
    std::vector<NamedTensor> extractor_;
    std::vector<NamedTensor> regressor_;
};

PoseNet build_posenet(const ArchConfig& config, std::uint64_t seed);

/// Source, intermediate and target networks of one adaptation run.
struct ModelTriplet {
    PoseNet source;
    PoseNet intermediate;
    PoseNet target;

    /// Intermediate and target start as copies of the source model.
    static ModelTriplet from_source(const PoseNet& source);
};

struct EmaConfig {
    double eta = 0.999;
};

/// intermediate <- eta * intermediate + (1 - eta) * target, over every parameter.
void ema_update(PoseNet& intermediate, const PoseNet& target, double eta);

void save_checkpoint(const PoseNet& net, const std::filesystem::path& path);
/// Throws LoadError: kBadMagic / kTruncated from the archive reader,
/// kMissingParameter ("missing parameter <name>"), kUnexpectedParameter or
/// kShapeMismatch when the file does not fit `config`.
PoseNet load_checkpoint(const std::filesystem::path& path, const ArchConfig& config);

}  // namespace sfpa
