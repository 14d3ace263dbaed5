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

#include <algorithm>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "sfpa/errors.hpp"
#include "sfpa/tensorgrad/tensor.hpp"

namespace sfpa {

struct ImageSize {
    std::size_t height = 64;
    std::size_t width = 64;
};

/// K keypoints in image pixel units, one (x, y) row per joint.
struct Keypoints {
    Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> coords;
    std::vector<bool> visible;

    Keypoints() = default;
    explicit Keypoints(std::size_t k) : coords(static_cast<Eigen::Index>(k), 2), visible(k, true) { coords.setZero(); }

    std::size_t size() const { return visible.size(); }
    Eigen::Vector2d point(std::size_t j) const { return coords.row(static_cast<Eigen::Index>(j)).transpose(); }
};

/// K heatmaps of size H' x W' for one sample, tied to its image geometry.
struct HeatmapSet {
    Tensor maps;  // (K, H', W')
    ImageSize image;
    double sigma = 2.0;
};

/// Horizontal (length W') and vertical (length H') marginals of a heatmap.
struct ProjectionPair {
    Eigen::VectorXd vx;
    Eigen::VectorXd vy;
};

/// Temperature-softmax distributions over the support left after removing
/// the argmax pixel of each heatmap from both.
struct ResidualPair {
    Eigen::VectorXd p_src;
    Eigen::VectorXd p_in;
    std::vector<std::size_t> mask;  // removed flat indices, ascending, size 1 or 2
};

/// Row-major view of map `index` inside a (..., H', W') tensor.
Eigen::Map<const RowMatrix> heatmap_view(const Tensor& maps, std::size_t index);

/// Ground-truth transform T: one unnormalised Gaussian (peak 1) per visible
/// keypoint, centred on the heatmap cell that contains the keypoint. Image
/// point (x, y) falls in cell (floor(y * H' / H), floor(x * W' / W)).
HeatmapSet encode(const Keypoints& kps, ImageSize image, std::size_t heatmap_h, std::size_t heatmap_w,
                  double sigma = 2.0);

/// Argmax decoding with the pixel-centre convention: cell (r, c) maps to
/// ((c + 0.5) * W / W', (r + 0.5) * H / H'). Ties go to the lowest flat
/// index; a map whose maximum is not positive decodes as invisible.
Keypoints decode(const HeatmapSet& heatmaps);
Keypoints decode(const Tensor& maps, ImageSize image);
/// (B, K, H', W') model output -> one Keypoints per sample.
std::vector<Keypoints> decode_batch(const Tensor& maps, ImageSize image);

/// Flat row-major argmax of a heatmap, ties to the lowest index.
template <typename Derived>
std::size_t flat_argmax(const Eigen::MatrixBase<Derived>& h) {
    std::size_t best = 0;
    double best_v = h(0, 0);
    const auto cols = static_cast<std::size_t>(h.cols());
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
        for (Eigen::Index c = 0; c < h.cols(); ++c) {
            if (h(r, c) > best_v) {
                best_v = h(r, c);
                best = static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c);
            }
        }
    }
    return best;
}

/// Axis-sum projection: vx[c] = sum_r h(r, c), vy[r] = sum_c h(r, c).
template <typename Derived>
ProjectionPair project(const Eigen::MatrixBase<Derived>& h) {
    return {h.colwise().sum().transpose(), h.rowwise().sum()};
}

/// Indices removed from both residual heatmaps: argmax of each input.
template <typename D1, typename D2>
std::vector<std::size_t> residual_mask(const Eigen::MatrixBase<D1>& h_src, const Eigen::MatrixBase<D2>& h_in) {
    if (h_src.rows() != h_in.rows() || h_src.cols() != h_in.cols()) {
        throw ContractViolation("residual_mask: heatmap shapes differ");
    }
    const std::size_t m1 = flat_argmax(h_src);
    const std::size_t m2 = flat_argmax(h_in);
    if (m1 == m2) return {m1};
    return {std::min(m1, m2), std::max(m1, m2)};
}

template <typename D1, typename D2>
ResidualPair residual_pair(const Eigen::MatrixBase<D1>& h_src, const Eigen::MatrixBase<D2>& h_in, double tau) {
    if (!(tau > 0.0)) throw ContractViolation("residual_pair: tau must be positive");
    ResidualPair out;
    out.mask = residual_mask(h_src, h_in);
    const auto cols = static_cast<std::size_t>(h_src.cols());
    const std::size_t total = static_cast<std::size_t>(h_src.rows()) * cols;
    const std::size_t support = total - out.mask.size();

    auto softmax_support = [&](const auto& h) {
        Eigen::VectorXd logits(static_cast<Eigen::Index>(support));
        Eigen::Index k = 0;
        for (std::size_t i = 0; i < total; ++i) {
            if (std::find(out.mask.begin(), out.mask.end(), i) != out.mask.end()) continue;
            logits(k++) = h(static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols)) / tau;
        }
        const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
        return Eigen::VectorXd(e / e.sum());
    };
    out.p_src = softmax_support(h_src);
    out.p_in = softmax_support(h_in);
    return out;
}

}  // namespace sfpa
