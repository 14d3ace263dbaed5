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

#include "commands.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "cli_errors.hpp"
#include "sfpa/errors.hpp"

namespace sfpa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const char* category(ExitCode code) {
    switch (code) {
        case ExitCode::kOk: return "ok";
        case ExitCode::kInternal: return "internal";
        case ExitCode::kUsage: return "usage";
        case ExitCode::kConfig: return "config";
        case ExitCode::kMissingInput: return "missing_input";
        case ExitCode::kMissingCheckpoint: return "missing_checkpoint";
        case ExitCode::kCheckpointMismatch: return "checkpoint_mismatch";
        case ExitCode::kInvalidDataset: return "invalid_dataset";
        case ExitCode::kGeneration: return "generation";
        case ExitCode::kIo: return "io";
    }
    return "internal";
}

namespace {

constexpr const char* kSplits[] = {"source_train", "source_test", "target_train", "target_test", "unseen_test"};

std::string to_hex(const unsigned char* digest, unsigned int len) {
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

class Digest {
public:
    Digest() : ctx_(EVP_MD_CTX_new()) {
        if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
            throw std::runtime_error("sha256: cannot initialise digest");
        }
    }
    ~Digest() { EVP_MD_CTX_free(ctx_); }
    Digest(const Digest&) = delete;
    Digest& operator=(const Digest&) = delete;

    void update(const char* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, out.data(), &len);
        return to_hex(out.data(), len);
    }

private:
    EVP_MD_CTX* ctx_;
};

// Files written by the running command, relative to the output root.
class Artifacts {
public:
    explicit Artifacts(fs::path root) : root_(std::move(root)) {}

    const fs::path& root() const { return root_; }

    fs::path path(const std::string& dir, const std::string& name) const { return root_ / dir / name; }
    fs::path ensure_dir(const std::string& dir) const {
        const fs::path p = root_ / dir;
        std::error_code ec;
        fs::create_directories(p, ec);
        if (ec) throw CliError(ExitCode::kIo, "cannot create directory " + p.string() + ": " + ec.message());
        return p;
    }
    void add(const fs::path& p) {
        if (fs::is_directory(p)) {
            std::vector<fs::path> files;
            for (const auto& e : fs::recursive_directory_iterator(p))
                if (e.is_regular_file()) files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) add(f);
            return;
        }
        checksums_[fs::relative(p, root_).generic_string()] = sha256_file(p);
    }
    void write_text(const fs::path& p, const std::string& text) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw CliError(ExitCode::kIo, "cannot write " + p.string());
        out << text;
        out.close();
        add(p);
    }
    const std::map<std::string, std::string>& checksums() const { return checksums_; }

private:
    fs::path root_;
    std::map<std::string, std::string> checksums_;
};

toydata::Dataset load_split(const RunConfig& cfg, const fs::path& root, const std::string& split) {
    const fs::path dir = root / cfg.paths.data_dir / split;
    if (!fs::exists(dir / "meta.json")) {
        throw CliError(ExitCode::kMissingInput, "missing dataset " + dir.string() + " (run generate first)");
    }
    toydata::Dataset d;
    try {
        d = toydata::load_dataset(dir);
    } catch (const LoadError& e) {
        throw CliError(ExitCode::kInvalidDataset, dir.string() + ": " + e.what());
    }
    if (d.channels != cfg.arch.in_channels || d.image.height != cfg.arch.image_size ||
        d.image.width != cfg.arch.image_size || d.skeleton.num_joints() != cfg.arch.num_keypoints) {
        throw CliError(ExitCode::kInvalidDataset, dir.string() + ": dataset geometry does not match arch");
    }
    return d;
}

PoseNet load_model(const RunConfig& cfg, const fs::path& path) {
    if (!fs::exists(path)) throw CliError(ExitCode::kMissingCheckpoint, "missing checkpoint " + path.string());
    try {
        return load_checkpoint(path, cfg.arch);
    } catch (const LoadError& e) {
        if (e.kind() == LoadError::Kind::kIo) throw CliError(ExitCode::kMissingCheckpoint, e.what());
        throw CliError(ExitCode::kCheckpointMismatch, path.string() + ": " + e.what());
    }
}

void save_model(const PoseNet& net, const fs::path& path, Artifacts& art) {
    try {
        save_checkpoint(net, path);
    } catch (const LoadError& e) {
        throw CliError(ExitCode::kIo, e.what());
    }
    art.add(path);
}

void cmd_generate(const RunConfig& cfg, Artifacts& art) {
    const toydata::GenerateOptions gen{ImageSize{cfg.arch.image_size, cfg.arch.image_size}, cfg.arch.in_channels};
    struct Job {
        const char* name;
        const toydata::DomainStyle* style;
        std::size_t n;
        evalkit::Split split;
    };
    std::vector<Job> jobs{{kSplits[0], &cfg.source_style, cfg.data.source_train, evalkit::Split::kSourceTrain},
                          {kSplits[1], &cfg.source_style, cfg.data.test_size, evalkit::Split::kSourceTest},
                          {kSplits[2], &cfg.target_style, cfg.data.target_train, evalkit::Split::kTargetTrain},
                          {kSplits[3], &cfg.target_style, cfg.data.test_size, evalkit::Split::kTargetTest}};
    if (cfg.unseen_style) jobs.push_back({kSplits[4], &*cfg.unseen_style, cfg.data.test_size, evalkit::Split::kUnseenTest});
    art.ensure_dir(cfg.paths.data_dir);
    for (const auto& job : jobs) {
        const auto data =
            toydata::generate(cfg.skeleton, *job.style, job.n, evalkit::split_seed(cfg.seed, job.split), gen);
        const fs::path dir = art.path(cfg.paths.data_dir, job.name);
        try {
            toydata::save_dataset(data, dir);
        } catch (const LoadError& e) {
            throw CliError(ExitCode::kIo, e.what());
        }
        art.add(dir);
    }
}

void cmd_pretrain(const RunConfig& cfg, Artifacts& art) {
    const auto source = load_split(cfg, art.root(), kSplits[0]);
    adapt::PretrainConfig pc = cfg.pretrain;
    pc.seed = cfg.seed;
    std::ostringstream log;
    const PoseNet net = adapt::pretrain(build_posenet(cfg.arch, cfg.seed), source, pc, [&](const adapt::EpochLog& e) {
        log << json{{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}}.dump() << '\n';
    });
    art.ensure_dir(cfg.paths.checkpoint_dir);
    art.ensure_dir(cfg.paths.log_dir);
    save_model(net, art.path(cfg.paths.checkpoint_dir, "source.sfpa"), art);
    art.write_text(art.path(cfg.paths.log_dir, "pretrain.jsonl"), log.str());
}

void cmd_adapt(const RunConfig& cfg, Artifacts& art) {
    const PoseNet source = load_model(cfg, art.path(cfg.paths.checkpoint_dir, "source.sfpa"));
    const auto target = load_split(cfg, art.root(), kSplits[2]);
    art.ensure_dir(cfg.paths.log_dir);
    adapt::AdaptConfig ac = cfg.adapt;
    ac.seed = cfg.seed;
    ModelTriplet triplet = ModelTriplet::from_source(source);
    std::ostringstream log;
    adapt::AdaptHooks hooks;
    hooks.on_iteration = [&](const adapt::IterationLog& it) { log << adapt::to_json_line(it) << '\n'; };
    hooks.on_epoch_end = [&](std::size_t epoch, const ModelTriplet& m) {
        if (cfg.checkpoint_every == 0 || (epoch + 1) % cfg.checkpoint_every != 0) return;
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04zu", epoch + 1);
        const std::string dir = cfg.paths.checkpoint_dir + "/" + name;
        art.ensure_dir(dir);
        save_model(m.source, art.path(dir, "adapted_source.sfpa"), art);
        save_model(m.intermediate, art.path(dir, "intermediate.sfpa"), art);
        save_model(m.target, art.path(dir, "target.sfpa"), art);
    };
    adapt::adapt_loop(triplet, target, ac, hooks);
    save_model(triplet.source, art.path(cfg.paths.checkpoint_dir, "adapted_source.sfpa"), art);
    save_model(triplet.intermediate, art.path(cfg.paths.checkpoint_dir, "intermediate.sfpa"), art);
    save_model(triplet.target, art.path(cfg.paths.checkpoint_dir, "target.sfpa"), art);
    art.write_text(art.path(cfg.paths.log_dir, "adapt.jsonl"), log.str());
}

void cmd_eval(const RunConfig& cfg, Artifacts& art) {
    const fs::path root = art.root();
    std::vector<std::pair<std::string, toydata::Dataset>> sets;
    for (const auto& name : cfg.eval.datasets) sets.emplace_back(name, load_split(cfg, root, name));
    std::vector<evalkit::ReportRow> rows;
    for (const auto& model : cfg.eval.models) {
        const PoseNet net = load_model(cfg, art.path(cfg.paths.checkpoint_dir, model + ".sfpa"));
        for (const auto& [name, data] : sets) {
            rows.push_back({model, cfg.seed, evalkit::evaluate(net, data, cfg.pck, name, cfg.eval.batch_size)});
        }
    }
    art.ensure_dir(cfg.paths.report_dir);
    art.write_text(art.path(cfg.paths.report_dir, "eval.csv"), evalkit::to_csv(rows));
    char title[64];
    std::snprintf(title, sizeof title, "PCK@%g", cfg.pck.threshold);
    std::string md;
    for (const auto& [name, data] : sets) {
        std::vector<evalkit::ReportRow> subset;
        for (const auto& r : rows)
            if (r.report.model_id == name) subset.push_back(r);
        md += evalkit::to_markdown(subset, std::string(title) + " on " + name) + "\n";
    }
    art.write_text(art.path(cfg.paths.report_dir, "eval.md"), md);
}

void cmd_ablate(const RunConfig& cfg, std::size_t threads, Artifacts& art) {
    const auto tables = evalkit::run_ablation(cfg.suite(threads));
    art.ensure_dir(cfg.paths.report_dir);
    std::string all;
    for (const auto& t : tables) {
        const std::string name = evalkit::study_name(t.study);
        art.write_text(art.path(cfg.paths.report_dir, "ablation_" + name + ".csv"), evalkit::to_csv(t.rows));
        const std::string md = evalkit::to_markdown(t.rows, "Ablation: " + name);
        art.write_text(art.path(cfg.paths.report_dir, "ablation_" + name + ".md"), md);
        all += md + "\n";
    }
    art.write_text(art.path(cfg.paths.report_dir, "ablation.md"), all);
}

void write_manifest(const fs::path& root, const std::string& command, const RunConfig& cfg,
                    const Artifacts& art) {
    const fs::path path = root / "manifest.json";
    json manifest = json::object();
    if (fs::exists(path)) {
        std::ifstream in(path);
        manifest = json::parse(in, nullptr, false);
        if (manifest.is_discarded() || !manifest.is_object()) manifest = json::object();
    }
    manifest["format"] = "sfpa-manifest";
    manifest["version"] = 1;
    json entry{{"config_sha256", sha256_hex(to_json(cfg).dump())}, {"seed", cfg.seed}, {"artifacts", art.checksums()}};
    manifest["commands"][command] = entry;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw CliError(ExitCode::kIo, "cannot write " + path.string());
    out << manifest.dump(2) << '\n';
}

}  // namespace

std::size_t threads_from_env() {
    const char* raw = std::getenv("SFPA_THREADS");
    if (raw == nullptr || *raw == '\0') return 1;
    char* end = nullptr;
    const long long v = std::strtoll(raw, &end, 10);
    if (*end != '\0' || v <= 0) throw ConfigError(std::string("SFPA_THREADS must be a positive integer, got '") + raw + "'");
    return static_cast<std::size_t>(v);
}

std::string sha256_hex(const std::string& bytes) {
    Digest d;
    d.update(bytes.data(), bytes.size());
    return d.hex();
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError(ExitCode::kIo, "cannot read " + path.string());
    Digest d;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return d.hex();
}

void run_command(const std::string& command, const RunConfig& cfg, const fs::path& root, std::size_t threads) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw CliError(ExitCode::kIo, "cannot create output directory " + root.string() + ": " + ec.message());
    Artifacts art(root);
    if (command == "generate") {
        cmd_generate(cfg, art);
    } else if (command == "pretrain") {
        cmd_pretrain(cfg, art);
    } else if (command == "adapt") {
        cmd_adapt(cfg, art);
    } else if (command == "eval") {
        cmd_eval(cfg, art);
    } else if (command == "ablate") {
        cmd_ablate(cfg, threads, art);
    } else {
        throw CliError(ExitCode::kUsage, "unknown command '" + command + "'");
    }
    write_manifest(root, command, cfg, art);
}

}  // namespace sfpa::cli
