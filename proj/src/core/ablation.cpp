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

#include "sfpa/ablation.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "sfpa/errors.hpp"

namespace sfpa::evalkit {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

adapt::AdaptConfig with_variant(const SuiteConfig& cfg, bool step_a, bool res, bool cst, bool im,
                                losses::SpatialMode cst_mode = losses::SpatialMode::kVector,
                                losses::SpatialMode im_mode = losses::SpatialMode::kVector) {
    adapt::AdaptConfig a = cfg.adapt;
    a.variant.step_a = step_a;
    a.variant.use_residual = res;
    a.variant.target.use_contrastive = cst;
    a.variant.target.use_im = im;
    a.variant.target.contrastive_mode = cst_mode;
    a.variant.target.im_mode = im_mode;
    return a;
}

}  // namespace

std::uint64_t split_seed(std::uint64_t seed, Split split) {
    std::uint64_t x = seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(split) + 0x632be59bd9b4e019ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string study_name(Study s) {
    switch (s) {
        case Study::kFramework: return "framework";
        case Study::kLosses: return "losses";
        case Study::kSparsity: return "sparsity";
        case Study::kParams: return "params";
    }
    return "unknown";
}

Study parse_study(const std::string& name) {
    for (auto s : {Study::kFramework, Study::kLosses, Study::kSparsity, Study::kParams})
        if (study_name(s) == name) return s;
    throw ContractViolation("unknown study '" + name + "' (expected framework, losses, sparsity or params)");
}

void SuiteConfig::validate() const {
    if (seeds.empty()) throw ContractViolation("SuiteConfig: no seeds");
    if (source_train == 0 || target_train == 0 || test_size == 0) throw ContractViolation("SuiteConfig: empty split");
    if (threads == 0) throw ContractViolation("SuiteConfig: threads must be positive");
    if (skeleton.num_joints() != arch.num_keypoints) {
        throw ContractViolation("SuiteConfig: skeleton has " + std::to_string(skeleton.num_joints()) +
                                " joints, architecture predicts " + std::to_string(arch.num_keypoints));
    }
    arch.validate();
    pretrain.validate();
    adapt.validate();
    pck.validate();
}

SeedContext prepare_seed(const SuiteConfig& cfg, std::uint64_t seed) {
    const toydata::GenerateOptions gen{ImageSize{cfg.arch.image_size, cfg.arch.image_size}, cfg.arch.in_channels};
    SeedContext ctx{seed,
                    toydata::generate(cfg.skeleton, cfg.source_style, cfg.source_train, split_seed(seed, Split::kSourceTrain), gen),
                    toydata::generate(cfg.skeleton, cfg.source_style, cfg.test_size, split_seed(seed, Split::kSourceTest), gen),
                    toydata::generate(cfg.skeleton, cfg.target_style, cfg.target_train, split_seed(seed, Split::kTargetTrain), gen),
                    toydata::generate(cfg.skeleton, cfg.target_style, cfg.test_size, split_seed(seed, Split::kTargetTest), gen),
                    std::nullopt,
                    build_posenet(cfg.arch, seed)};
    if (cfg.unseen_style) {
        ctx.unseen_test = toydata::generate(cfg.skeleton, *cfg.unseen_style, cfg.test_size, split_seed(seed, Split::kUnseenTest), gen);
    }
    adapt::PretrainConfig pc = cfg.pretrain;
    pc.seed = seed;
    ctx.source = adapt::pretrain(std::move(ctx.source), ctx.source_train, pc);
    return ctx;
}

std::vector<AblationEntry> study_entries(Study study, const SuiteConfig& cfg) {
    using losses::SpatialMode;
    std::vector<AblationEntry> out;
    const adapt::AdaptConfig full = with_variant(cfg, true, true, true, true);
    switch (study) {
        case Study::kFramework:
            out.push_back({"source-only", std::nullopt});
            out.push_back({"MT", with_variant(cfg, false, false, false, false)});
            out.push_back({"MT+TR", with_variant(cfg, false, false, true, true)});
            out.push_back({"SP+TR", full});
            break;
        case Study::kLosses:
            out.push_back({"baseline", with_variant(cfg, true, false, false, false)});
            out.push_back({"L_res", with_variant(cfg, true, true, false, false)});
            out.push_back({"L_cst", with_variant(cfg, true, false, true, false)});
            out.push_back({"L_im", with_variant(cfg, true, false, false, true)});
            out.push_back({"L_cst&L_im", with_variant(cfg, true, false, true, true)});
            out.push_back({"full", full});
            break;
        case Study::kSparsity:
            out.push_back({"MT", with_variant(cfg, false, false, false, false)});
            out.push_back({"MT+HBCL", with_variant(cfg, false, false, true, false, SpatialMode::kHeatmap)});
            out.push_back({"MT+VBCL", with_variant(cfg, false, false, true, false, SpatialMode::kVector)});
            out.push_back({"MT+HBIM", with_variant(cfg, false, false, false, true, SpatialMode::kVector,
                                                   SpatialMode::kHeatmap)});
            out.push_back({"MT+VBIM", with_variant(cfg, false, false, false, true)});
            break;
        case Study::kParams:
            for (double a : cfg.alpha_grid) {
                auto c = full;
                c.weights.alpha = a;
                out.push_back({"alpha=" + num(a), c});
            }
            for (double b : cfg.beta_grid) {
                auto c = full;
                c.weights.beta = b;
                out.push_back({"beta=" + num(b), c});
            }
            for (double g : cfg.gamma_grid) {
                auto c = full;
                c.weights.gamma = g;
                out.push_back({"gamma=" + num(g), c});
            }
            break;
    }
    return out;
}

std::string run_key(const adapt::AdaptConfig& c) {
    char buf[640];
    std::snprintf(buf, sizeof buf,
                  "e%zu i%zu b%zu a%.17g b%.17g g%.17g t%.17g eta%.17g r%.17g/%.17g/%.17g/%.17g an%.17g/%.17g "
                  "v%d%d%d%d%d%d s%llu",
                  c.epochs, c.iters_per_epoch, c.batch_size, c.weights.alpha, c.weights.beta, c.weights.gamma,
                  c.weights.tau, c.ema.eta, c.rates.source_regressor, c.rates.intermediate_extractor,
                  c.rates.target_extractor, c.rates.target_regressor, c.anneal.a, c.anneal.b, c.variant.step_a,
                  c.variant.use_residual, c.variant.target.use_contrastive, c.variant.target.use_im,
                  static_cast<int>(c.variant.target.contrastive_mode), static_cast<int>(c.variant.target.im_mode),
                  static_cast<unsigned long long>(c.seed));
    return buf;
}

RunOutcome run_entry(const SeedContext& ctx, const adapt::AdaptConfig& cfg, const PckConfig& pck) {
    adapt::AdaptConfig run = cfg;
    run.seed = ctx.seed;
    ModelTriplet triplet = ModelTriplet::from_source(ctx.source);
    adapt::adapt_loop(triplet, ctx.target_train, run);
    RunOutcome out{evaluate(triplet.intermediate, ctx.target_test, pck, "intermediate"),
                   evaluate(triplet.target, ctx.target_test, pck, "target"),
                   evaluate(triplet.source, ctx.target_test, pck, "source"), std::nullopt};
    if (ctx.unseen_test) out.unseen = evaluate(triplet.intermediate, *ctx.unseen_test, pck, "intermediate-unseen");
    return out;
}

std::vector<StudyTable> run_ablation(const SuiteConfig& cfg) {
    cfg.validate();
    std::vector<std::vector<AblationEntry>> entries;
    for (auto s : cfg.studies) entries.push_back(study_entries(s, cfg));

    // results[seed][study][entry]
    std::vector<std::vector<std::vector<EvalReport>>> results(cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
            try {
                const SeedContext ctx = prepare_seed(cfg, cfg.seeds[i]);
                std::map<std::string, EvalReport> cache;
                auto& per_study = results[i];
                per_study.resize(entries.size());
                for (std::size_t s = 0; s < entries.size(); ++s) {
                    for (const auto& e : entries[s]) {
                        EvalReport rep;
                        if (!e.adapt) {
                            rep = evaluate(ctx.source, ctx.target_test, cfg.pck, "source-only");
                        } else {
                            const std::string key = run_key(*e.adapt);
                            auto it = cache.find(key);
                            if (it == cache.end()) {
                                it = cache.emplace(key, run_entry(ctx, *e.adapt, cfg.pck).intermediate).first;
                            }
                            rep = it->second;
                        }
                        per_study[s].push_back(std::move(rep));
                    }
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = cfg.seeds.size();
            }
        }
    };
    const std::size_t n = std::min(cfg.threads, cfg.seeds.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    std::vector<StudyTable> tables;
    for (std::size_t s = 0; s < entries.size(); ++s) {
        StudyTable table{cfg.studies[s], {}};
        for (std::size_t e = 0; e < entries[s].size(); ++e)
            for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
                table.rows.push_back({entries[s][e].id, cfg.seeds[i], results[i][s][e]});
        tables.push_back(std::move(table));
    }
    return tables;
}

double mean_pck(const StudyTable& table, const std::string& config_id) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& r : table.rows) {
        if (r.config_id != config_id) continue;
        total += r.report.overall;
        ++n;
    }
    if (n == 0) throw ContractViolation("mean_pck: no rows for '" + config_id + "'");
    return total / static_cast<double>(n);
}

}  // namespace sfpa::evalkit
