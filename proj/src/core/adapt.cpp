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

#include "sfpa/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "sfpa/errors.hpp"
#include "sfpa/tensorgrad/ops.hpp"

namespace sfpa::adapt {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad()) continue;
        const auto g = p.grad();
        auto w = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g[k];
            v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g[k] * g[k];
            w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + options_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double AnnealSchedule::factor(std::size_t t) const { return std::pow(1.0 + a * static_cast<double>(t), -b); }

void PretrainConfig::validate() const {
    if (batch_size == 0) throw ContractViolation("pretrain: batch_size must be positive");
    if (!(lr > 0.0) || !(lr_after_drop > 0.0)) throw ContractViolation("pretrain: learning rates must be positive");
    if (!(heatmap_sigma > 0.0)) throw ContractViolation("pretrain: heatmap_sigma must be positive");
}

PoseNet pretrain(PoseNet net, const toydata::Dataset& source, const PretrainConfig& cfg,
                 const std::function<void(const EpochLog&)>& on_epoch) {
    cfg.validate();
    if (source.size() == 0) throw ContractViolation("pretrain: empty source dataset");
    if (source.skeleton.num_joints() != net.config().num_keypoints) {
        throw ContractViolation("pretrain: dataset has " + std::to_string(source.skeleton.num_joints()) +
                                " keypoints, network predicts " + std::to_string(net.config().num_keypoints));
    }
    net.set_trainable(true);
    std::vector<Tensor> params;
    for (const auto& p : net.parameters()) params.push_back(p.tensor);
    Adam opt(params);

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(source.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = cfg.lr_at_epoch(epoch);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const Tensor images = toydata::batch_images(source, idx);
            const Tensor target = toydata::batch_heatmaps(source, idx, net.config().heatmap_size, cfg.heatmap_sigma);
            opt.zero_grad();
            const Tensor loss = losses::mse_heatmap(net.forward(images), target);
            total += loss.item();
            ++batches;
            backward(loss);
            opt.step(lr);
        }
        opt.zero_grad();
        if (on_epoch) on_epoch(EpochLog{epoch, lr, total / static_cast<double>(batches)});
    }
    return net;
}

void AdaptConfig::validate() const {
    if (iters_per_epoch == 0 && epochs != 0) throw ContractViolation("AdaptConfig: iters_per_epoch must be positive");
    if (batch_size == 0) throw ContractViolation("AdaptConfig: batch_size must be positive");
    weights.validate();
    if (!(ema.eta >= 0.0 && ema.eta <= 1.0)) throw ContractViolation("AdaptConfig: ema eta must lie in [0, 1]");
    if (!(rates.source_regressor > 0.0) || !(rates.intermediate_extractor > 0.0) || !(rates.target_extractor > 0.0) ||
        !(rates.target_regressor > 0.0)) {
        throw ContractViolation("AdaptConfig: learning rates must be positive");
    }
    if (!(anneal.a >= 0.0) || !(anneal.b >= 0.0)) throw ContractViolation("AdaptConfig: anneal constants must be >= 0");
}

Adapter::Adapter(ModelTriplet& triplet, AdaptConfig cfg)
    : models_(triplet),
      cfg_(std::move(cfg)),
      source_regressor_(triplet.source.group_tensors(ParamGroup::kRegressor)),
      intermediate_extractor_(triplet.intermediate.group_tensors(ParamGroup::kExtractor)),
      target_extractor_(triplet.target.group_tensors(ParamGroup::kExtractor)),
      target_regressor_(triplet.target.group_tensors(ParamGroup::kRegressor)) {
    cfg_.validate();
    models_.source.set_trainable(ParamGroup::kExtractor, false);
    models_.source.set_trainable(ParamGroup::kRegressor, true);
    models_.intermediate.set_trainable(ParamGroup::kExtractor, true);
    models_.intermediate.set_trainable(ParamGroup::kRegressor, false);
    models_.target.set_trainable(true);
}

LearningRates Adapter::learning_rates(std::size_t t) const {
    const double f = cfg_.anneal.factor(t);
    return LearningRates{cfg_.rates.source_regressor * f, cfg_.rates.intermediate_extractor * f,
                         cfg_.rates.target_extractor * f, cfg_.rates.target_regressor * f};
}

StepALosses Adapter::step_a(const Tensor& images, std::size_t t) {
    const LearningRates lr = learning_rates(t);
    source_regressor_.zero_grad();
    intermediate_extractor_.zero_grad();
    const Tensor src_out = models_.source.forward(images);
    const Tensor in_out = models_.intermediate.forward(images);
    const Tensor l_ft = losses::finetune_loss(src_out, in_out);
    StepALosses out{l_ft.item(), 0.0};
    Tensor objective = l_ft;
    if (cfg_.variant.use_residual) {
        const Tensor l_res = losses::residual_loss(src_out, in_out, cfg_.weights.tau);
        out.l_res = l_res.item();
        objective = add(objective, scale(l_res, cfg_.weights.alpha));
    }
    // L_res treats the source side as constant, so F^sr only sees L_ft.
    backward(objective);
    source_regressor_.step(lr.source_regressor);
    intermediate_extractor_.step(lr.intermediate_extractor);
    source_regressor_.zero_grad();
    intermediate_extractor_.zero_grad();
    return out;
}

StepBLosses Adapter::step_b(const Tensor& images, std::size_t t) {
    const LearningRates lr = learning_rates(t);
    Tensor in_out;
    {
        NoGradGuard guard;
        in_out = models_.intermediate.forward(images);
    }
    target_extractor_.zero_grad();
    target_regressor_.zero_grad();
    const Tensor tg_out = models_.target.forward(images);
    const losses::TargetTerms terms = losses::target_objective(in_out, tg_out, cfg_.weights, cfg_.variant.target);
    StepBLosses out;
    out.l_tgt = terms.total.item();
    out.l_con = terms.con.item();
    if (terms.cst.defined()) out.l_cst = terms.cst.item();
    if (terms.im.defined()) out.l_im = terms.im.item();
    backward(terms.total);
    target_extractor_.step(lr.target_extractor);
    target_regressor_.step(lr.target_regressor);
    target_extractor_.zero_grad();
    target_regressor_.zero_grad();
    ema_update(models_.intermediate, models_.target, cfg_.ema.eta);
    return out;
}

std::string to_json_line(const IterationLog& log) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json j{{"iter", log.iter},
                     {"lr_groups",
                      {{"F_sr", log.lr.source_regressor},
                       {"G_in", log.lr.intermediate_extractor},
                       {"G_tg", log.lr.target_extractor},
                       {"F_tg", log.lr.target_regressor}}},
                     {"l_ft", opt(log.l_ft)},
                     {"l_res", opt(log.l_res)},
                     {"l_con", log.l_con},
                     {"l_cst", opt(log.l_cst)},
                     {"l_im", opt(log.l_im)}};
    return j.dump();
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), order_(n), cursor_(n), rng_(seed) {
    if (n == 0 || batch_size == 0) throw ContractViolation("BatchSampler: empty dataset or zero batch size");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::vector<std::size_t> BatchSampler::next() {
    std::vector<std::size_t> batch;
    batch.reserve(batch_size_);
    while (batch.size() < batch_size_) {
        if (cursor_ == order_.size()) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            cursor_ = 0;
        }
        batch.push_back(order_[cursor_++]);
    }
    return batch;
}

void adapt_loop(ModelTriplet& triplet, const toydata::Dataset& target, const AdaptConfig& cfg,
                const AdaptHooks& hooks) {
    if (target.size() == 0) throw ContractViolation("adapt_loop: empty target dataset");
    Adapter adapter(triplet, cfg);
    BatchSampler sampler(target.size(), cfg.batch_size, cfg.seed);
    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < cfg.iters_per_epoch; ++i, ++t) {
            const std::vector<std::size_t> idx = sampler.next();
            const Tensor images = toydata::batch_images(target, idx);
            IterationLog log;
            log.iter = t;
            log.lr = adapter.learning_rates(t);
            if (cfg.variant.step_a) {
                const StepALosses a = adapter.step_a(images, t);
                log.l_ft = a.l_ft;
                if (cfg.variant.use_residual) log.l_res = a.l_res;
            }
            const StepBLosses b = adapter.step_b(images, t);
            log.l_con = b.l_con;
            log.l_cst = b.l_cst;
            log.l_im = b.l_im;
            if (hooks.on_iteration) hooks.on_iteration(log);
        }
        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, triplet);
    }
}

}  // namespace sfpa::adapt
