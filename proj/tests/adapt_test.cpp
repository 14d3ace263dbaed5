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

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "json.hpp"
#include "sfpa/adapt.hpp"
#include "sfpa/errors.hpp"
#include "sfpa/tensorgrad/ops.hpp"
#include "test_util.hpp"

using namespace sfpa;
using namespace sfpa::adapt;

namespace {

struct Hashes {
    std::uint64_t g_sr, f_sr, g_in, f_in, g_tg, f_tg;
};

Hashes hashes(const ModelTriplet& t) {
    return {t.source.group_hash(ParamGroup::kExtractor),       t.source.group_hash(ParamGroup::kRegressor),
            t.intermediate.group_hash(ParamGroup::kExtractor), t.intermediate.group_hash(ParamGroup::kRegressor),
            t.target.group_hash(ParamGroup::kExtractor),       t.target.group_hash(ParamGroup::kRegressor)};
}

const toydata::Dataset& target_data() {
    static const toydata::Dataset d = toydata::generate(toydata::default_skeleton(), toydata::DomainStyle::target(), 16, 3);
    return d;
}

Tensor batch(std::size_t start = 0, std::size_t n = 4) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = start + i;
    return toydata::batch_images(target_data(), idx);
}

// Triplet whose intermediate model differs from the source, so L_ft is non-zero.
ModelTriplet perturbed_triplet(std::uint64_t seed) {
    ModelTriplet t = ModelTriplet::from_source(build_posenet(ArchConfig{}, seed));
    ema_update(t.intermediate, build_posenet(ArchConfig{}, seed + 100), 0.9);
    t.target = t.intermediate.clone();
    return t;
}

std::vector<double> flat_grads(const std::vector<Tensor>& params) {
    std::vector<double> out;
    for (const auto& p : params) {
        if (!p.has_grad()) {
            out.insert(out.end(), p.numel(), 0.0);
            continue;
        }
        out.insert(out.end(), p.grad().begin(), p.grad().end());
    }
    return out;
}

std::vector<double> flat_values(const std::vector<Tensor>& params) {
    std::vector<double> out;
    for (const auto& p : params) out.insert(out.end(), p.data().begin(), p.data().end());
    return out;
}

}  // namespace

TEST(Schedule, PretrainDropAtEpochTwentyFive) {
    PretrainConfig cfg;
    cfg.lr = 1e-4;
    cfg.lr_after_drop = 1e-5;
    EXPECT_EQ(cfg.lr_at_epoch(0), 1e-4);
    EXPECT_EQ(cfg.lr_at_epoch(24), 1e-4);
    EXPECT_EQ(cfg.lr_at_epoch(25), 1e-5);
    EXPECT_EQ(cfg.lr_at_epoch(29), 1e-5);
}

TEST(Schedule, Anneal) {
    const AnnealSchedule s;
    EXPECT_EQ(s.lr(3e-4, 0), 3e-4);
    EXPECT_NEAR(s.factor(10000), std::pow(2.0, -0.75), 1e-15);
    EXPECT_NEAR(s.factor(10000), 0.5946, 1e-4);
    EXPECT_LT(s.factor(10001), s.factor(10000));
}

TEST(Schedule, IterationZeroUsesBaseRates) {
    ModelTriplet t = ModelTriplet::from_source(build_posenet(ArchConfig{}, 1));
    const Adapter a(t, AdaptConfig{});
    const LearningRates lr = a.learning_rates(0);
    const GroupRates base;
    EXPECT_EQ(lr.source_regressor, base.source_regressor);
    EXPECT_EQ(lr.intermediate_extractor, base.intermediate_extractor);
    EXPECT_EQ(lr.target_extractor, base.target_extractor);
    EXPECT_EQ(lr.target_regressor, base.target_regressor);
    EXPECT_EQ(base.source_regressor, 1e-4);
    EXPECT_EQ(base.intermediate_extractor, 1e-5);
    EXPECT_EQ(base.target_extractor, 1e-4);
    EXPECT_EQ(base.target_regressor, 1e-3);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
    Tensor x({3}, std::vector<double>{1.0, -2.0, 0.5});
    x.set_requires_grad(true);
    Adam opt({x});
    backward(sum(mul(x, Tensor({3}, std::vector<double>{3.0, -0.5, 0.0}))));
    opt.step(0.1);
    EXPECT_NEAR(x.at(0), 0.9, 1e-9);
    EXPECT_NEAR(x.at(1), -1.9, 1e-8);
    EXPECT_EQ(x.at(2), 0.5);
    EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, MinimisesQuadratic) {
    Tensor x({2}, std::vector<double>{3.0, -4.0});
    x.set_requires_grad(true);
    Adam opt({x});
    for (int i = 0; i < 2000; ++i) {
        opt.zero_grad();
        backward(sum(mul(x, x)));
        opt.step(0.05);
    }
    EXPECT_NEAR(x.at(0), 0.0, 1e-3);
    EXPECT_NEAR(x.at(1), 0.0, 1e-3);
}

TEST(StepA, FreezeContract) {
    ModelTriplet t = perturbed_triplet(2);
    Adapter a(t, AdaptConfig{});
    const Hashes h0 = hashes(t);
    const StepALosses l = a.step_a(batch(), 0);
    const Hashes h1 = hashes(t);
    EXPECT_GT(l.l_ft, 0.0);
    EXPECT_EQ(h1.g_sr, h0.g_sr);
    EXPECT_EQ(h1.f_in, h0.f_in);
    EXPECT_NE(h1.f_sr, h0.f_sr);
    EXPECT_NE(h1.g_in, h0.g_in);
    EXPECT_EQ(h1.g_tg, h0.g_tg);
    EXPECT_EQ(h1.f_tg, h0.f_tg);
}

TEST(StepA, ZeroAlphaMatchesFinetuneGradient) {
    ModelTriplet t = perturbed_triplet(3);
    const Tensor x = batch();
    t.intermediate.set_trainable(ParamGroup::kExtractor, true);
    t.intermediate.set_trainable(ParamGroup::kRegressor, false);
    t.source.set_trainable(false);
    const auto g_in = t.intermediate.group_tensors(ParamGroup::kExtractor);

    backward(losses::finetune_loss(t.source.forward(x), t.intermediate.forward(x)));
    const auto ft_only = flat_grads(g_in);
    t.intermediate.zero_grad();
    const Tensor s = t.source.forward(x), i = t.intermediate.forward(x);
    backward(add(losses::finetune_loss(s, i), scale(losses::residual_loss(s, i, 0.3), 0.0)));
    EXPECT_EQ(flat_grads(g_in), ft_only);
    t.intermediate.zero_grad();

    // Adam's first step moves each coordinate by lr * g / (|g| + eps).
    AdaptConfig cfg;
    cfg.variant.use_residual = false;
    const auto before = flat_values(g_in);
    Adapter a(t, cfg);
    a.step_a(x, 0);
    const auto after = flat_values(g_in);
    const double lr = cfg.rates.intermediate_extractor;
    for (std::size_t k = 0; k < before.size(); ++k) {
        const double g = ft_only[k];
        const double expected = before[k] - lr * g / (std::abs(g) + 1e-8);
        ASSERT_NEAR(after[k], expected, 1e-15 + 1e-12 * std::abs(expected)) << k;
    }
}

TEST(StepA, FinetuneLossNonIncreasing) {
    ModelTriplet t = perturbed_triplet(4);
    AdaptConfig cfg;
    cfg.variant.use_residual = false;
    cfg.rates.source_regressor = 1e-5;
    cfg.rates.intermediate_extractor = 1e-5;
    Adapter a(t, cfg);
    const Tensor x = batch();
    double prev = a.step_a(x, 0).l_ft;
    for (std::size_t i = 1; i < 50; ++i) {
        const double cur = a.step_a(x, i).l_ft;
        EXPECT_LE(cur, prev + 1e-12) << "step " << i;
        prev = cur;
    }
}

TEST(StepB, RoutingAndArithmetic) {
    ModelTriplet t = perturbed_triplet(5);
    Adapter a(t, AdaptConfig{});
    a.step_a(batch(), 0);
    const Hashes h0 = hashes(t);
    const StepBLosses l = a.step_b(batch(4), 0);
    const Hashes h1 = hashes(t);
    EXPECT_EQ(h1.g_sr, h0.g_sr);
    EXPECT_EQ(h1.f_sr, h0.f_sr);
    EXPECT_NE(h1.g_tg, h0.g_tg);
    EXPECT_NE(h1.f_tg, h0.f_tg);
    EXPECT_NE(h1.g_in, h0.g_in);
    EXPECT_NE(h1.f_in, h0.f_in);
    ASSERT_TRUE(l.l_cst && l.l_im);
    EXPECT_NEAR(l.l_tgt, l.l_con + 0.5 * *l.l_cst + 0.85 * *l.l_im, 1e-12);
}

TEST(StepB, UnitEtaLeavesIntermediate) {
    ModelTriplet t = perturbed_triplet(6);
    AdaptConfig cfg;
    cfg.ema.eta = 1.0;
    Adapter a(t, cfg);
    const Hashes h0 = hashes(t);
    a.step_b(batch(), 0);
    const Hashes h1 = hashes(t);
    EXPECT_EQ(h1.g_in, h0.g_in);
    EXPECT_EQ(h1.f_in, h0.f_in);
    EXPECT_NE(h1.f_tg, h0.f_tg);
}

TEST(StepB, EmaOfUpdatedTarget) {
    ModelTriplet t = perturbed_triplet(7);
    Adapter a(t, AdaptConfig{});
    const auto in_before = flat_values(t.intermediate.group_tensors(ParamGroup::kRegressor));
    a.step_b(batch(), 0);
    const auto in_after = flat_values(t.intermediate.group_tensors(ParamGroup::kRegressor));
    const auto tg = flat_values(t.target.group_tensors(ParamGroup::kRegressor));
    for (std::size_t k = 0; k < tg.size(); ++k) EXPECT_EQ(in_after[k], 0.999 * in_before[k] + (1.0 - 0.999) * tg[k]);
}

TEST(Config, Validation) {
    AdaptConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.total_iterations(), 1000u);
    c.ema.eta = 1.5;
    EXPECT_THROW(c.validate(), ContractViolation);
    AdaptConfig d;
    d.batch_size = 0;
    EXPECT_THROW(d.validate(), ContractViolation);
    AdaptConfig e;
    e.weights.alpha = 0.0;
    EXPECT_THROW(e.validate(), ContractViolation);
    PretrainConfig p;
    p.batch_size = 0;
    EXPECT_THROW(p.validate(), ContractViolation);
}

TEST(BatchSampler, CoversEachIndexPerPass) {
    BatchSampler s(10, 5, 1);
    std::multiset<std::size_t> seen;
    for (int i = 0; i < 4; ++i)
        for (auto k : s.next()) seen.insert(k);
    for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(seen.count(k), 2u);
    EXPECT_THROW(BatchSampler(0, 1, 0), ContractViolation);
}

TEST(Pretrain, ZeroEpochsIsNoOp) {
    const PoseNet net = build_posenet(ArchConfig{}, 8);
    PretrainConfig cfg;
    cfg.epochs = 0;
    const PoseNet out = pretrain(net.clone(), target_data(), cfg);
    for (auto g : {ParamGroup::kExtractor, ParamGroup::kRegressor}) EXPECT_EQ(out.group_hash(g), net.group_hash(g));
}

TEST(Pretrain, Contracts) {
    toydata::Dataset empty = target_data();
    empty.samples.clear();
    EXPECT_THROW(pretrain(build_posenet(ArchConfig{}, 0), empty, PretrainConfig{}), ContractViolation);
    ArchConfig three;
    three.num_keypoints = 3;
    EXPECT_THROW(pretrain(build_posenet(three, 0), target_data(), PretrainConfig{}), ContractViolation);
}

TEST(Pretrain, MseDropsTenfold) {
    const toydata::Dataset src = toydata::generate(toydata::default_skeleton(), toydata::DomainStyle::source(), 200, 11);
    const PretrainConfig cfg;
    std::vector<std::size_t> all(src.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const Tensor images = toydata::batch_images(src, all);
    const Tensor maps = toydata::batch_heatmaps(src, all, 16, cfg.heatmap_sigma);
    auto full_mse = [&](const PoseNet& n) {
        NoGradGuard g;
        return losses::mse_heatmap(n.forward(images), maps).item();
    };
    PoseNet net = build_posenet(ArchConfig{}, 11);
    const double initial = full_mse(net);
    std::vector<EpochLog> logs;
    net = pretrain(std::move(net), src, cfg, [&](const EpochLog& l) { logs.push_back(l); });
    ASSERT_EQ(logs.size(), 30u);
    EXPECT_EQ(logs[24].lr, cfg.lr);
    EXPECT_EQ(logs[25].lr, cfg.lr_after_drop);
    EXPECT_LT(full_mse(net), 0.1 * initial);
}

TEST(AdaptLoop, DeterministicWithHooks) {
    AdaptConfig cfg;
    cfg.epochs = 2;
    cfg.iters_per_epoch = 3;
    auto run = [&](std::vector<std::string>& lines, std::size_t& epochs) {
        ModelTriplet t = ModelTriplet::from_source(build_posenet(ArchConfig{}, 9));
        AdaptHooks hooks;
        hooks.on_iteration = [&](const IterationLog& l) { lines.push_back(to_json_line(l)); };
        hooks.on_epoch_end = [&](std::size_t, const ModelTriplet&) { ++epochs; };
        adapt_loop(t, target_data(), cfg, hooks);
        return hashes(t);
    };
    std::vector<std::string> l1, l2;
    std::size_t e1 = 0, e2 = 0;
    const Hashes a = run(l1, e1), b = run(l2, e2);
    EXPECT_EQ(l1, l2);
    EXPECT_EQ(l1.size(), 6u);
    EXPECT_EQ(e1, 2u);
    EXPECT_EQ(a.g_in, b.g_in);
    EXPECT_EQ(a.f_tg, b.f_tg);
    EXPECT_EQ(a.g_sr, run(l1, e1).g_sr);

    const auto j = nlohmann::ordered_json::parse(l2.back());
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    EXPECT_EQ(keys, (std::vector<std::string>{"iter", "lr_groups", "l_ft", "l_res", "l_con", "l_cst", "l_im"}));
    EXPECT_EQ(j["iter"], 5);
    EXPECT_TRUE(j["lr_groups"].contains("F_tg"));
}

TEST(AdaptLoop, DisabledTermsLogNull) {
    AdaptConfig cfg;
    cfg.epochs = 1;
    cfg.iters_per_epoch = 1;
    cfg.variant.step_a = false;
    cfg.variant.target.use_contrastive = false;
    cfg.variant.target.use_im = false;
    ModelTriplet t = ModelTriplet::from_source(build_posenet(ArchConfig{}, 10));
    std::string line;
    adapt_loop(t, target_data(), cfg, {[&](const IterationLog& l) { line = to_json_line(l); }, {}});
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j["l_ft"].is_null());
    EXPECT_TRUE(j["l_res"].is_null());
    EXPECT_TRUE(j["l_cst"].is_null());
    EXPECT_TRUE(j["l_im"].is_null());
    EXPECT_TRUE(j["l_con"].is_number());
}
