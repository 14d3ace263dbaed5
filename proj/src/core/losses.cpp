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

#include "sfpa/losses.hpp"

#include <vector>

#include "sfpa/errors.hpp"
#include "sfpa/posemaps.hpp"
#include "sfpa/tensorgrad/ops.hpp"

namespace sfpa::losses {

namespace {

constexpr double kNormGuard = 1e-12;

Tensor as_batch(const Tensor& maps, const char* op) {
    if (maps.rank() == 4) return maps;
    if (maps.rank() == 3) {
        Shape s{1};
        s.insert(s.end(), maps.shape().begin(), maps.shape().end());
        return reshape(maps, s);
    }
    throw ContractViolation(std::string(op) + ": expected (B, K, H', W') heatmaps, got " + shape_str(maps.shape()));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
    }
}

// -sum(p * log p) along the last axis, from logits.
Tensor entropy_of_logits(const Tensor& logits) {
    Tensor logp = log_softmax(logits, -1);
    return scale(sum(mul(exp(logp), logp), -1), -1.0);
}

// Cosine similarity matrix (B, K, K) between rows of a and rows of b (both (B, K, L)).
Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
    const std::size_t batch = a.dim(0), k = a.dim(1);
    Tensor dots = matmul(a, transpose(b));
    Tensor na = reshape(add_scalar(norm(a, -1), kNormGuard), {batch, k, 1});
    Tensor nb = reshape(add_scalar(norm(b, -1), kNormGuard), {batch, 1, k});
    return div(dots, matmul(na, nb));
}

}  // namespace

void LossWeights::validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0) || !(gamma > 0.0) || !(tau > 0.0)) {
        throw ContractViolation("LossWeights: alpha, beta, gamma and tau must all be positive");
    }
}

Tensor mse_heatmap(const Tensor& pred, const Tensor& target) {
    require_same_shape("mse_heatmap", pred, target);
    Tensor d = sub(pred, target);
    return mean(mul(d, d));
}

Tensor finetune_loss(const Tensor& src_out, const Tensor& in_out) { return mse_heatmap(src_out, in_out); }

Tensor residual_loss(const Tensor& src_out, const Tensor& in_out, double tau) {
    if (!(tau > 0.0)) throw ContractViolation("residual_loss: tau must be positive");
    require_same_shape("residual_loss", src_out, in_out);
    const Tensor src = as_batch(src_out.detach(), "residual_loss");
    const Tensor in = as_batch(in_out, "residual_loss");
    const std::size_t rows = src.dim(0) * src.dim(1);
    const std::size_t h = src.dim(2), w = src.dim(3);
    const Tensor in_rows = reshape(in, {rows, h * w});

    std::vector<Tensor> per_map;
    per_map.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto src_map = heatmap_view(src, r);
        const auto in_map = heatmap_view(in, r);
        const std::vector<std::size_t> removed = residual_mask(src_map, in_map);
        std::vector<bool> keep(h * w, true);
        for (auto i : removed) keep[i] = false;

        // Reference distribution p = softmax(res_src / tau), a constant.
        const ResidualPair ref = residual_pair(src_map, in_map, tau);
        const auto n = static_cast<std::size_t>(ref.p_src.size());
        std::vector<double> p(n), p_log_p(n);
        double neg_entropy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = ref.p_src(static_cast<Eigen::Index>(i));
            neg_entropy += p[i] * std::log(p[i]);
        }
        Tensor log_q = log_softmax(scale(masked_select(slice(in_rows, 0, r, r + 1), keep), 1.0 / tau), 0);
        Tensor cross = sum(mul(log_q, Tensor(Shape{n}, std::move(p))));
        per_map.push_back(add_scalar(scale(cross, -1.0), neg_entropy));
    }
    return mean(stack(per_map));
}

Tensor keypoint_similarity(const Tensor& in_out, const Tensor& tg_out, SpatialMode mode) {
    require_same_shape("contrastive_loss", in_out, tg_out);
    const Tensor in = as_batch(in_out.detach(), "contrastive_loss");
    const Tensor tg = as_batch(tg_out, "contrastive_loss");
    const std::size_t batch = in.dim(0), k = in.dim(1), h = in.dim(2), w = in.dim(3);
    if (mode == SpatialMode::kHeatmap) {
        return cosine_matrix(reshape(in, {batch, k, h * w}), reshape(tg, {batch, k, h * w}));
    }
    // Horizontal vectors marginalise rows (axis 2), vertical ones columns (axis 3).
    Tensor cos_x = cosine_matrix(sum(in, 2), sum(tg, 2));
    Tensor cos_y = cosine_matrix(sum(in, 3), sum(tg, 3));
    return scale(add(cos_x, cos_y), 0.5);
}

Tensor contrastive_loss(const Tensor& in_out, const Tensor& tg_out, SpatialMode mode) {
    const Tensor tg = as_batch(tg_out, "contrastive_loss");
    const std::size_t batch = tg.dim(0), k = tg.dim(1);
    if (k < 2) throw ContractViolation("contrastive_loss: needs at least two keypoints, got " + std::to_string(k));
    Tensor logits = log_softmax(keypoint_similarity(in_out, tg_out, mode), -1);
    std::vector<bool> diagonal(batch * k * k, false);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < k; ++j) diagonal[(b * k + j) * k + j] = true;
    return scale(mean(masked_select(logits, diagonal)), -1.0);
}

ImTerms im_terms(const Tensor& tg_out, SpatialMode mode) {
    const Tensor tg = as_batch(tg_out, "im_loss");
    const std::size_t batch = tg.dim(0), k = tg.dim(1), h = tg.dim(2), w = tg.dim(3);
    const Tensor flat = reshape(tg, {batch, k, h * w});

    ImTerms terms;
    if (mode == SpatialMode::kVector) {
        terms.ent_x = mean(entropy_of_logits(sum(tg, 2)));
        terms.ent_y = mean(entropy_of_logits(sum(tg, 3)));
    } else {
        terms.ent_x = mean(entropy_of_logits(flat));
        terms.ent_y = Tensor::scalar(0.0);
    }
    Tensor mean_dist = mean(softmax(flat, -1), 1);  // (B, H'W')
    terms.div = mean(scale(sum(mul(mean_dist, log(mean_dist)), -1), -1.0));
    terms.total = sub(add(terms.ent_x, terms.ent_y), terms.div);
    return terms;
}

Tensor im_loss(const Tensor& tg_out, SpatialMode mode) { return im_terms(tg_out, mode).total; }

Tensor consistency_loss(const Tensor& in_out, const Tensor& tg_out) {
    require_same_shape("consistency_loss", in_out, tg_out);
    return mse_heatmap(tg_out, in_out.detach());
}

TargetTerms target_objective(const Tensor& in_out, const Tensor& tg_out, const LossWeights& weights,
                             const TargetLossOptions& options) {
    TargetTerms terms;
    terms.con = consistency_loss(in_out, tg_out);
    terms.total = terms.con;
    if (options.use_contrastive) {
        terms.cst = contrastive_loss(in_out, tg_out, options.contrastive_mode);
        terms.total = add(terms.total, scale(terms.cst, weights.beta));
    }
    if (options.use_im) {
        terms.im = im_loss(tg_out, options.im_mode);
        terms.total = add(terms.total, scale(terms.im, weights.gamma));
    }
    return terms;
}

}  // namespace sfpa::losses
