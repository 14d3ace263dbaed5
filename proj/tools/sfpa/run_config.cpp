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

#include "run_config.hpp"

#include <fstream>
#include <sstream>

#include "cli_errors.hpp"
#include "sfpa/errors.hpp"

namespace sfpa::cli {

using nlohmann::json;

namespace {

json style_json(const toydata::DomainStyle& s) {
    return {{"name", s.name},
            {"line_width", s.line_width},
            {"noise_sigma", s.noise_sigma},
            {"texture_amplitude", s.texture_amplitude},
            {"gain", s.gain},
            {"occlusion_prob", s.occlusion_prob}};
}

toydata::DomainStyle style_from(const json& j) {
    return toydata::DomainStyle{j.at("name").get<std::string>(),      j.at("line_width").get<double>(),
                                j.at("noise_sigma").get<double>(),    j.at("texture_amplitude").get<double>(),
                                j.at("gain").get<double>(),           j.at("occlusion_prob").get<double>()};
}

const char* mode_name(losses::SpatialMode m) { return m == losses::SpatialMode::kVector ? "vector" : "heatmap"; }

losses::SpatialMode mode_from(const json& j, const std::string& key) {
    const auto s = j.get<std::string>();
    if (s == "vector") return losses::SpatialMode::kVector;
    if (s == "heatmap") return losses::SpatialMode::kHeatmap;
    throw ConfigError(key + ": expected \"vector\" or \"heatmap\", got \"" + s + "\"");
}

// Templates for keys whose default is null.
json nullable_template(const std::string& path) {
    if (path == "unseen_style") return style_json(toydata::DomainStyle::unseen());
    if (path == "pck.normalizer") return 64.0;
    return nullptr;
}

bool same_kind(const json& base, const json& user) {
    if (base.is_number_unsigned()) return user.is_number_unsigned();
    if (base.is_number()) return user.is_number();
    return base.type() == user.type();
}

std::string kind_name(const json& j) {
    if (j.is_number_unsigned()) return "non-negative integer";
    if (j.is_number()) return "number";
    return j.type_name();
}

void overlay(json& base, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
    for (const auto& [key, value] : user.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown key '" + here + "'");
        json& slot = base[key];
        if (slot.is_null()) {
            if (value.is_null()) continue;
            json tmpl = nullable_template(here);
            if (tmpl.is_null()) throw ConfigError("key '" + here + "' cannot be set");
            if (tmpl.is_object()) {
                overlay(tmpl, value, here);
            } else if (same_kind(tmpl, value)) {
                tmpl = value;
            } else {
                throw ConfigError("key '" + here + "': expected " + kind_name(tmpl) + ", got " + kind_name(value));
            }
            slot = tmpl;
            continue;
        }
        if (value.is_null() && !nullable_template(here).is_null()) {
            slot = nullptr;
            continue;
        }
        if (slot.is_object()) {
            overlay(slot, value, here);
            continue;
        }
        if (!same_kind(slot, value)) {
            throw ConfigError("key '" + here + "': expected " + kind_name(slot) + ", got " + kind_name(value));
        }
        if (slot.is_array() && !slot.empty()) {
            for (const auto& e : value) {
                if (!same_kind(slot.front(), e)) {
                    throw ConfigError("key '" + here + "': elements must be " + kind_name(slot.front()));
                }
            }
        }
        slot = value;
    }
}

void describe(const json& j, const std::string& path, std::ostringstream& out) {
    if (j.is_object()) {
        for (const auto& [key, value] : j.items()) describe(value, path.empty() ? key : path + "." + key, out);
        return;
    }
    if (j.is_null()) {
        out << "  " << path << " = null";
        const json tmpl = nullable_template(path);
        if (tmpl.is_object()) {
            out << "  (object with keys";
            for (const auto& [key, value] : tmpl.items()) out << ' ' << key;
            out << ')';
        } else if (tmpl.is_number()) {
            out << "  (number)";
        }
        out << '\n';
        return;
    }
    out << "  " << path << " = " << j.dump() << '\n';
}

}  // namespace

evalkit::SuiteConfig RunConfig::suite(std::size_t threads) const {
    evalkit::SuiteConfig s;
    s.seeds = ablate.seeds;
    s.source_train = data.source_train;
    s.target_train = data.target_train;
    s.test_size = data.test_size;
    s.arch = arch;
    s.pretrain = pretrain;
    s.adapt = adapt;
    s.pck = pck;
    s.skeleton = skeleton;
    s.source_style = source_style;
    s.target_style = target_style;
    s.unseen_style = unseen_style;
    s.studies.clear();
    for (const auto& name : ablate.studies) s.studies.push_back(evalkit::parse_study(name));
    s.alpha_grid = ablate.alpha_grid;
    s.beta_grid = ablate.beta_grid;
    s.gamma_grid = ablate.gamma_grid;
    s.threads = threads;
    return s;
}

json to_json(const RunConfig& c) {
    const auto& sk = c.skeleton;
    const auto& p = c.pretrain;
    const auto& a = c.adapt;
    return json{
        {"seed", c.seed},
        {"paths",
         {{"data_dir", c.paths.data_dir},
          {"checkpoint_dir", c.paths.checkpoint_dir},
          {"report_dir", c.paths.report_dir},
          {"log_dir", c.paths.log_dir}}},
        {"data",
         {{"source_train", c.data.source_train}, {"target_train", c.data.target_train}, {"test_size", c.data.test_size}}},
        {"skeleton",
         {{"joint_names", sk.joint_names},
          {"parents", sk.parents},
          {"bone_lengths", sk.bone_lengths},
          {"angle_min_deg", sk.angle_min_deg},
          {"angle_max_deg", sk.angle_max_deg},
          {"groups", sk.groups},
          {"root_margin", sk.root_margin},
          {"joint_margin", sk.joint_margin},
          {"root_radius", sk.root_radius}}},
        {"source_style", style_json(c.source_style)},
        {"target_style", style_json(c.target_style)},
        {"unseen_style", c.unseen_style ? style_json(*c.unseen_style) : json(nullptr)},
        {"arch",
         {{"in_channels", c.arch.in_channels},
          {"image_size", c.arch.image_size},
          {"extractor_channels", c.arch.extractor_channels},
          {"regressor_channels", c.arch.regressor_channels},
          {"num_keypoints", c.arch.num_keypoints},
          {"heatmap_size", c.arch.heatmap_size}}},
        {"pretrain",
         {{"epochs", p.epochs},
          {"batch_size", p.batch_size},
          {"lr", p.lr},
          {"lr_after_drop", p.lr_after_drop},
          {"drop_epoch", p.drop_epoch},
          {"heatmap_sigma", p.heatmap_sigma}}},
        {"adapt",
         {{"epochs", a.epochs},
          {"iters_per_epoch", a.iters_per_epoch},
          {"batch_size", a.batch_size},
          {"checkpoint_every", c.checkpoint_every},
          {"ema", {{"eta", a.ema.eta}}},
          {"rates",
           {{"source_regressor", a.rates.source_regressor},
            {"intermediate_extractor", a.rates.intermediate_extractor},
            {"target_extractor", a.rates.target_extractor},
            {"target_regressor", a.rates.target_regressor}}},
          {"anneal", {{"a", a.anneal.a}, {"b", a.anneal.b}}},
          {"variant",
           {{"step_a", a.variant.step_a},
            {"use_residual", a.variant.use_residual},
            {"use_contrastive", a.variant.target.use_contrastive},
            {"use_im", a.variant.target.use_im},
            {"contrastive_mode", mode_name(a.variant.target.contrastive_mode)},
            {"im_mode", mode_name(a.variant.target.im_mode)}}}}},
        {"weights",
         {{"alpha", a.weights.alpha}, {"beta", a.weights.beta}, {"gamma", a.weights.gamma}, {"tau", a.weights.tau}}},
        {"pck",
         {{"threshold", c.pck.threshold}, {"normalizer", c.pck.normalizer ? json(*c.pck.normalizer) : json(nullptr)}}},
        {"eval", {{"models", c.eval.models}, {"datasets", c.eval.datasets}, {"batch_size", c.eval.batch_size}}},
        {"ablate",
         {{"seeds", c.ablate.seeds},
          {"studies", c.ablate.studies},
          {"alpha_grid", c.ablate.alpha_grid},
          {"beta_grid", c.ablate.beta_grid},
          {"gamma_grid", c.ablate.gamma_grid}}},
    };
}

RunConfig parse_config(const json& user) {
    json merged = to_json(RunConfig{});
    overlay(merged, user.is_null() ? json::object() : user, "");
    RunConfig c;
    try {
        c.seed = merged["seed"].get<std::uint64_t>();
        const auto& paths = merged["paths"];
        c.paths = Paths{paths["data_dir"], paths["checkpoint_dir"], paths["report_dir"], paths["log_dir"]};
        const auto& data = merged["data"];
        c.data = DataSizes{data["source_train"], data["target_train"], data["test_size"]};
        const auto& sk = merged["skeleton"];
        c.skeleton.joint_names = sk["joint_names"].get<std::vector<std::string>>();
        c.skeleton.parents = sk["parents"].get<std::vector<int>>();
        c.skeleton.bone_lengths = sk["bone_lengths"].get<std::vector<double>>();
        c.skeleton.angle_min_deg = sk["angle_min_deg"].get<std::vector<double>>();
        c.skeleton.angle_max_deg = sk["angle_max_deg"].get<std::vector<double>>();
        c.skeleton.groups = sk["groups"].get<std::vector<std::string>>();
        c.skeleton.root_margin = sk["root_margin"];
        c.skeleton.joint_margin = sk["joint_margin"];
        c.skeleton.root_radius = sk["root_radius"];
        c.source_style = style_from(merged["source_style"]);
        c.target_style = style_from(merged["target_style"]);
        if (!merged["unseen_style"].is_null()) c.unseen_style = style_from(merged["unseen_style"]);
        const auto& arch = merged["arch"];
        c.arch.in_channels = arch["in_channels"];
        c.arch.image_size = arch["image_size"];
        c.arch.extractor_channels = arch["extractor_channels"].get<std::vector<std::size_t>>();
        c.arch.regressor_channels = arch["regressor_channels"].get<std::vector<std::size_t>>();
        c.arch.num_keypoints = arch["num_keypoints"];
        c.arch.heatmap_size = arch["heatmap_size"];
        const auto& p = merged["pretrain"];
        c.pretrain.epochs = p["epochs"];
        c.pretrain.batch_size = p["batch_size"];
        c.pretrain.lr = p["lr"];
        c.pretrain.lr_after_drop = p["lr_after_drop"];
        c.pretrain.drop_epoch = p["drop_epoch"];
        c.pretrain.heatmap_sigma = p["heatmap_sigma"];
        const auto& a = merged["adapt"];
        c.adapt.epochs = a["epochs"];
        c.adapt.iters_per_epoch = a["iters_per_epoch"];
        c.adapt.batch_size = a["batch_size"];
        c.checkpoint_every = a["checkpoint_every"];
        c.adapt.ema.eta = a["ema"]["eta"];
        c.adapt.rates.source_regressor = a["rates"]["source_regressor"];
        c.adapt.rates.intermediate_extractor = a["rates"]["intermediate_extractor"];
        c.adapt.rates.target_extractor = a["rates"]["target_extractor"];
        c.adapt.rates.target_regressor = a["rates"]["target_regressor"];
        c.adapt.anneal.a = a["anneal"]["a"];
        c.adapt.anneal.b = a["anneal"]["b"];
        const auto& v = a["variant"];
        c.adapt.variant.step_a = v["step_a"];
        c.adapt.variant.use_residual = v["use_residual"];
        c.adapt.variant.target.use_contrastive = v["use_contrastive"];
        c.adapt.variant.target.use_im = v["use_im"];
        c.adapt.variant.target.contrastive_mode = mode_from(v["contrastive_mode"], "adapt.variant.contrastive_mode");
        c.adapt.variant.target.im_mode = mode_from(v["im_mode"], "adapt.variant.im_mode");
        const auto& w = merged["weights"];
        c.adapt.weights = losses::LossWeights{w["alpha"], w["beta"], w["gamma"], w["tau"]};
        c.pck.threshold = merged["pck"]["threshold"];
        if (!merged["pck"]["normalizer"].is_null()) c.pck.normalizer = merged["pck"]["normalizer"].get<double>();
        const auto& e = merged["eval"];
        c.eval.models = e["models"].get<std::vector<std::string>>();
        c.eval.datasets = e["datasets"].get<std::vector<std::string>>();
        c.eval.batch_size = e["batch_size"];
        const auto& ab = merged["ablate"];
        c.ablate.seeds = ab["seeds"].get<std::vector<std::uint64_t>>();
        c.ablate.studies = ab["studies"].get<std::vector<std::string>>();
        c.ablate.alpha_grid = ab["alpha_grid"].get<std::vector<double>>();
        c.ablate.beta_grid = ab["beta_grid"].get<std::vector<double>>();
        c.ablate.gamma_grid = ab["gamma_grid"].get<std::vector<double>>();
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("config: ") + ex.what());
    }
    try {
        c.skeleton.validate();
        c.source_style.validate();
        c.target_style.validate();
        if (c.unseen_style) c.unseen_style->validate();
        c.arch.validate();
        c.pretrain.validate();
        c.adapt.validate();
        c.pck.validate();
        if (c.skeleton.num_joints() != c.arch.num_keypoints) {
            throw ContractViolation("skeleton has " + std::to_string(c.skeleton.num_joints()) +
                                    " joints but arch.num_keypoints is " + std::to_string(c.arch.num_keypoints));
        }
        if (c.data.source_train == 0 || c.data.target_train == 0 || c.data.test_size == 0) {
            throw ContractViolation("data sizes must be positive");
        }
        if (c.eval.batch_size == 0) throw ContractViolation("eval.batch_size must be positive");
        for (const auto& m : c.eval.models) {
            if (m != "source" && m != "adapted_source" && m != "intermediate" && m != "target") {
                throw ContractViolation("eval.models: unknown model '" + m + "'");
            }
        }
        for (const auto& d : c.eval.datasets) {
            if (d != "source_train" && d != "source_test" && d != "target_train" && d != "target_test" &&
                d != "unseen_test") {
                throw ContractViolation("eval.datasets: unknown dataset '" + d + "'");
            }
        }
        if (c.ablate.seeds.empty()) throw ContractViolation("ablate.seeds must not be empty");
        for (const auto& s : c.ablate.studies) evalkit::parse_study(s);
    } catch (const ContractViolation& ex) {
        throw ConfigError(ex.what());
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    if (path.empty()) return RunConfig{};
    std::ifstream in(path);
    if (!in) throw CliError(ExitCode::kMissingInput, "config file not found: " + path.string());
    json user;
    try {
        user = json::parse(in);
    } catch (const json::exception& ex) {
        throw ConfigError(path.string() + ": " + ex.what());
    }
    return parse_config(user);
}

std::string describe_keys() {
    std::ostringstream out;
    describe(to_json(RunConfig{}), "", out);
    return out.str();
}

}  // namespace sfpa::cli
