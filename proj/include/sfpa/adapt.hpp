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
#include <random>
#include <string>
#include <vector>

#include "sfpa/losses.hpp"
#include "sfpa/models.hpp"
#include "sfpa/toydata.hpp"

namespace sfpa::adapt {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam over a fixed parameter list. Parameters without a gradient buffer are
/// skipped by step() and keep their moments.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params, AdamOptions options = {});

    void step(double lr);
    void zero_grad();
    std::size_t steps() const { return t_; }
    const std::vector<Tensor>& params() const { return params_; }

private:
    std::vector<Tensor> params_;
    AdamOptions options_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

/// lr(t) = base * (1 + a t)^(-b).
struct AnnealSchedule {
    double a = 1e-4;
    double b = 0.75;

    double factor(std::size_t t) const;
    double lr(double base, std::size_t t) const { return base * factor(t); }
};

/// Base learning rate of every trained parameter group.
struct GroupRates {
    double source_regressor = 1e-4;
    double intermediate_extractor = 1e-5;
    double target_extractor = 1e-4;
    double target_regressor = 1e-3;
};

struct PretrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double lr_after_drop = 1e-4;
    std::size_t drop_epoch = 25;  // zero-based epoch index at which lr_after_drop takes over
    double heatmap_sigma = 1.0;
    std::uint64_t seed = 0;

    double lr_at_epoch(std::size_t epoch) const { return epoch < drop_epoch ? lr : lr_after_drop; }
    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;  // mean batch MSE over the epoch
};

/// Supervised heatmap regression on labelled source data. Zero epochs return
/// the network unchanged.
PoseNet pretrain(PoseNet net, const toydata::Dataset& source, const PretrainConfig& cfg,
                 const std::function<void(const EpochLog&)>& on_epoch = {});

/// Which parts of the two-step scheme run.
struct AdaptVariant {
    bool step_a = true;        // source-protect step; off gives a plain mean-teacher
    bool use_residual = true;  // residual term in the intermediate objective
    losses::TargetLossOptions target;
};

struct AdaptConfig {
    std::size_t epochs = 20;
    std::size_t iters_per_epoch = 50;
    std::size_t batch_size = 4;
    losses::LossWeights weights;
    EmaConfig ema;
    GroupRates rates;
    AnnealSchedule anneal;
    AdaptVariant variant;
    std::uint64_t seed = 0;

    std::size_t total_iterations() const { return epochs * iters_per_epoch; }
    void validate() const;
};

struct LearningRates {
    double source_regressor = 0.0;
    double intermediate_extractor = 0.0;
    double target_extractor = 0.0;
    double target_regressor = 0.0;
};

struct StepALosses {
    double l_ft = 0.0;
    double l_res = 0.0;
};

struct StepBLosses {
    double l_tgt = 0.0;
    double l_con = 0.0;
    std::optional<double> l_cst;
    std::optional<double> l_im;
};

/// Owns the optimisers of one adaptation run and applies the two update
/// steps to a triplet it does not own. Construction sets the trainable flags:
/// G^sr and F^in frozen, F^sr, G^in, G^tg, F^tg trainable.
class Adapter {
public:
    Adapter(ModelTriplet& triplet, AdaptConfig cfg);

    LearningRates learning_rates(std::size_t t) const;

    /// F^sr on L_ft, G^in on L_ft + alpha L_res, from one backward pass.
    StepALosses step_a(const Tensor& images, std::size_t t);
    /// G^tg, F^tg on the target objective against detached intermediate
    /// outputs, then the EMA of the intermediate model towards the target.
    StepBLosses step_b(const Tensor& images, std::size_t t);

    const AdaptConfig& config() const { return cfg_; }

private:
    ModelTriplet& models_;
    AdaptConfig cfg_;
    Adam source_regressor_;
    Adam intermediate_extractor_;
    Adam target_extractor_;
    Adam target_regressor_;
};

struct IterationLog {
    std::size_t iter = 0;
    LearningRates lr;
    std::optional<double> l_ft;
    std::optional<double> l_res;
    double l_con = 0.0;
    std::optional<double> l_cst;
    std::optional<double> l_im;
};

/// One JSON object on a single line; disabled terms are null.
std::string to_json_line(const IterationLog& log);

/// Cycles through shuffled permutations of [0, n), reshuffling when exhausted.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
    std::vector<std::size_t> next();

private:
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
    std::size_t cursor_;
    std::mt19937_64 rng_;
};

struct AdaptHooks {
    std::function<void(const IterationLog&)> on_iteration;
    std::function<void(std::size_t epoch, const ModelTriplet&)> on_epoch_end;
};

/// Step A then Step B on one target batch per iteration, for
/// epochs x iters_per_epoch iterations. Only images of `target` are read.
void adapt_loop(ModelTriplet& triplet, const toydata::Dataset& target, const AdaptConfig& cfg,
                const AdaptHooks& hooks = {});

}  // namespace sfpa::adapt
