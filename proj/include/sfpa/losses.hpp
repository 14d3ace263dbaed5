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

#include "sfpa/tensorgrad/tensor.hpp"

namespace sfpa::losses {

struct LossWeights {
    double alpha = 0.7;   // residual loss, intermediate objective
    double beta = 0.5;    // contrastive loss, target objective
    double gamma = 0.85;  // information maximisation, target objective
    double tau = 0.3;     // residual softmax temperature

    /// Throws ContractViolation unless every weight is positive.
    void validate() const;
};

/// Spatial space for the contrastive and information-maximisation losses:
/// horizontal/vertical projection vectors, or the flattened heatmap.
enum class SpatialMode { kVector, kHeatmap };

// All losses take model outputs of shape (B, K, H', W') (a single (K, H', W')
// sample is accepted too) and return a scalar recorded on the tape.

/// Mean over all elements of the squared difference.
Tensor mse_heatmap(const Tensor& pred, const Tensor& target);

/// Source-vs-intermediate calibration; differentiable in both arguments.
Tensor finetune_loss(const Tensor& src_out, const Tensor& in_out);

/// Mean over samples and keypoints of KL(softmax(res_src / tau) || softmax(res_in / tau)).
/// The residual support drops each model's argmax pixel from both heatmaps.
/// `src_out` is treated as a constant.
Tensor residual_loss(const Tensor& src_out, const Tensor& in_out, double tau);

/// Keypoint-level InfoNCE between intermediate (detached) and target heatmaps:
/// positives are same-index pairs, the other K - 1 target keypoints are the
/// negatives. In vector mode the similarity averages the cosines of the two
/// projection pairs; in heatmap mode it is the cosine of flattened maps.
Tensor contrastive_loss(const Tensor& in_out, const Tensor& tg_out, SpatialMode mode = SpatialMode::kVector);

/// Similarity matrix (B, K, K) used by contrastive_loss: entry [b, j, k]
/// compares intermediate keypoint j with target keypoint k.
Tensor keypoint_similarity(const Tensor& in_out, const Tensor& tg_out, SpatialMode mode = SpatialMode::kVector);

struct ImTerms {
    Tensor total;  // ent_x + ent_y - div
    Tensor ent_x;  // vector mode: mean entropy of softmax(vx); heatmap mode: of softmax(flattened map)
    Tensor ent_y;  // vector mode: mean entropy of softmax(vy); heatmap mode: zero
    Tensor div;    // entropy of the keypoint-averaged softmax(flattened map)
};

ImTerms im_terms(const Tensor& tg_out, SpatialMode mode = SpatialMode::kVector);
Tensor im_loss(const Tensor& tg_out, SpatialMode mode = SpatialMode::kVector);

/// MSE pulling the target model onto the (detached) intermediate outputs.
Tensor consistency_loss(const Tensor& in_out, const Tensor& tg_out);

struct TargetLossOptions {
    bool use_contrastive = true;
    bool use_im = true;
    SpatialMode contrastive_mode = SpatialMode::kVector;
    SpatialMode im_mode = SpatialMode::kVector;
};

struct TargetTerms {
    Tensor total;  // con + beta * cst + gamma * im (disabled terms contribute nothing)
    Tensor con;
    Tensor cst;  // undefined when disabled
    Tensor im;   // undefined when disabled
};

TargetTerms target_objective(const Tensor& in_out, const Tensor& tg_out, const LossWeights& weights,
                             const TargetLossOptions& options = {});

}  // namespace sfpa::losses
