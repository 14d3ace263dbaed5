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
#include <span>
#include <string>
#include <vector>

#include "sfpa/posemaps.hpp"
#include "sfpa/tensorgrad/tensor.hpp"

namespace sfpa::toydata {

/// Articulated skeleton: a tree of joints with bone lengths and per-joint
/// angle ranges. A child of the root draws an absolute bone direction from
/// its range; deeper joints draw an angle relative to their parent's bone.
struct SkeletonSpec {
    std::vector<std::string> joint_names;
    std::vector<int> parents;           // -1 for the root
    std::vector<double> bone_lengths;   // pixels, length of the bone ending at this joint (root: 0)
    std::vector<double> angle_min_deg;  // per joint (root ignored)
    std::vector<double> angle_max_deg;
    std::vector<std::string> groups;  // segment group of each joint
    double root_margin = 20.0;        // root drawn uniformly inside [margin, size - margin]
    double joint_margin = 2.0;        // every joint must stay this far inside the frame
    double root_radius = 2.5;         // filled disc marking the root joint

    std::size_t num_joints() const { return joint_names.size(); }
    /// Distinct groups in order of first appearance.
    std::vector<std::string> group_order() const;
    /// Throws ContractViolation on cyclic parents, non-positive bones or size mismatches.
    void validate() const;
    bool operator==(const SkeletonSpec&) const = default;
};

/// Two-armed five-joint skeleton: root, then elbow and tip on each side.
SkeletonSpec default_skeleton();

struct DomainStyle {
    std::string name = "source";
    double line_width = 1.0;
    double noise_sigma = 0.0;
    double texture_amplitude = 0.0;
    double gain = 1.0;
    double occlusion_prob = 0.0;  // chance of one blanked square patch per image

    void validate() const;
    bool operator==(const DomainStyle&) const = default;

    static DomainStyle source();
    static DomainStyle target();
    /// Third style, never used for training; exercises generalisation.
    static DomainStyle unseen();
};

struct PoseSample {
    std::vector<double> image;  // channels x H x W, row-major, values in [0, 1]
    Keypoints keypoints;
};

struct Dataset {
    SkeletonSpec skeleton;
    DomainStyle style;
    std::uint64_t seed = 0;
    ImageSize image;
    std::size_t channels = 1;
    std::vector<PoseSample> samples;

    std::size_t size() const { return samples.size(); }
    std::size_t image_numel() const { return channels * image.height * image.width; }
};

struct GenerateOptions {
    ImageSize image{64, 64};
    std::size_t channels = 1;
};

/// Deterministic per (seed, sample index). Throws GenerationError if a pose
/// with every joint inside the frame is not found in 100 attempts.
Dataset generate(const SkeletonSpec& spec, const DomainStyle& style, std::size_t n, std::uint64_t seed,
                 const GenerateOptions& options = {});

/// Noise-free, gain-1 line drawing of one pose in [0, 1].
std::vector<double> render_pose(const SkeletonSpec& spec, const Keypoints& kps, ImageSize image, double line_width);

/// Images of `indices` stacked into a (B, C, H, W) tensor.
Tensor batch_images(const Dataset& data, std::span<const std::size_t> indices);
/// Ground-truth heatmaps (B, K, H', W') of `indices`.
Tensor batch_heatmaps(const Dataset& data, std::span<const std::size_t> indices, std::size_t heatmap_size,
                      double sigma);

/// Directory layout: meta.json, images.bin (f64 LE, concatenated row-major
/// images), annotations.json (per-sample keypoints and visibility).
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
/// Throws LoadError (kIo, kPayloadSizeMismatch, kSchema).
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace sfpa::toydata
