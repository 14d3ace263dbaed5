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

#include "sfpa/posemaps.hpp"

#include <algorithm>
#include <cmath>

namespace sfpa {

Eigen::Map<const RowMatrix> heatmap_view(const Tensor& maps, std::size_t index) {
    if (maps.rank() < 2) throw ContractViolation("heatmap_view: tensor " + shape_str(maps.shape()) + " has rank < 2");
    const std::size_t h = maps.dim(-2), w = maps.dim(-1);
    if ((index + 1) * h * w > maps.numel()) {
        throw ContractViolation("heatmap_view: index " + std::to_string(index) + " out of range for " +
                                shape_str(maps.shape()));
    }
    return {maps.data().data() + index * h * w, static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(w)};
}

HeatmapSet encode(const Keypoints& kps, ImageSize image, std::size_t heatmap_h, std::size_t heatmap_w, double sigma) {
    if (!(sigma > 0.0)) throw ContractViolation("encode: sigma must be positive");
    if (heatmap_h == 0 || heatmap_w == 0) throw ContractViolation("encode: heatmap size must be positive");
    const std::size_t k = kps.size();
    if (static_cast<std::size_t>(kps.coords.rows()) != k) throw ContractViolation("encode: coords/visibility size mismatch");
    std::vector<double> data(k * heatmap_h * heatmap_w, 0.0);
    const double denom = 2.0 * sigma * sigma;
    const double sx = static_cast<double>(heatmap_w) / static_cast<double>(image.width);
    const double sy = static_cast<double>(heatmap_h) / static_cast<double>(image.height);
    for (std::size_t j = 0; j < k; ++j) {
        if (!kps.visible[j]) continue;
        const double x = kps.coords(static_cast<Eigen::Index>(j), 0);
        const double y = kps.coords(static_cast<Eigen::Index>(j), 1);
        if (!(x >= 0.0 && x < static_cast<double>(image.width) && y >= 0.0 && y < static_cast<double>(image.height))) {
            throw ContractViolation("encode: keypoint " + std::to_string(j) + " outside the image");
        }
        const double cx = std::min(std::floor(x * sx), static_cast<double>(heatmap_w - 1));
        const double cy = std::min(std::floor(y * sy), static_cast<double>(heatmap_h - 1));
        double* map = data.data() + j * heatmap_h * heatmap_w;
        for (std::size_t r = 0; r < heatmap_h; ++r) {
            const double dy = static_cast<double>(r) - cy;
            for (std::size_t c = 0; c < heatmap_w; ++c) {
                const double dx = static_cast<double>(c) - cx;
                map[r * heatmap_w + c] = std::exp(-(dx * dx + dy * dy) / denom);
            }
        }
    }
    return {Tensor(Shape{k, heatmap_h, heatmap_w}, std::move(data)), image, sigma};
}

namespace {

Keypoints decode_maps(const Tensor& maps, std::size_t offset, std::size_t k, ImageSize image) {
    const std::size_t h = maps.dim(-2), w = maps.dim(-1);
    const double cell_w = static_cast<double>(image.width) / static_cast<double>(w);
    const double cell_h = static_cast<double>(image.height) / static_cast<double>(h);
    Keypoints out(k);
    for (std::size_t j = 0; j < k; ++j) {
        const auto view = heatmap_view(maps, offset + j);
        const std::size_t idx = flat_argmax(view);
        const std::size_t r = idx / w, c = idx % w;
        out.coords(static_cast<Eigen::Index>(j), 0) = (static_cast<double>(c) + 0.5) * cell_w;
        out.coords(static_cast<Eigen::Index>(j), 1) = (static_cast<double>(r) + 0.5) * cell_h;
        out.visible[j] = view(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) > 0.0;
    }
    return out;
}

}  // namespace

Keypoints decode(const Tensor& maps, ImageSize image) {
    if (maps.rank() != 3) throw ContractViolation("decode: expected (K, H', W') maps, got " + shape_str(maps.shape()));
    return decode_maps(maps, 0, maps.dim(0), image);
}

Keypoints decode(const HeatmapSet& heatmaps) { return decode(heatmaps.maps, heatmaps.image); }

std::vector<Keypoints> decode_batch(const Tensor& maps, ImageSize image) {
    if (maps.rank() != 4) {
        throw ContractViolation("decode_batch: expected (B, K, H', W') maps, got " + shape_str(maps.shape()));
    }
    const std::size_t batch = maps.dim(0), k = maps.dim(1);
    std::vector<Keypoints> out;
    out.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) out.push_back(decode_maps(maps, b * k, k, image));
    return out;
}

}  // namespace sfpa
