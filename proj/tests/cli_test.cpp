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

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "cli_errors.hpp"
#include "commands.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "sfpa/errors.hpp"
#include "test_util.hpp"

using namespace sfpa;
using namespace sfpa::cli;
using sfpa::testing::TempDir;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

Result run(const std::string& args, const TempDir& dir, const std::string& env = "") {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = env + " " + std::string(SFPA_BIN) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

const char* kSmallConfig = R"({
  "data": {"source_train": 8, "target_train": 8, "test_size": 6},
  "pretrain": {"epochs": 1},
  "adapt": {"epochs": 1, "iters_per_epoch": 2, "checkpoint_every": 1},
  "unseen_style": {}
})";

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

}  // namespace

TEST(Config, DefaultsRoundTrip) {
    const RunConfig d = parse_config(nlohmann::json::object());
    EXPECT_EQ(d.pck.threshold, 0.05);
    EXPECT_EQ(d.adapt.ema.eta, 0.999);
    EXPECT_EQ(to_json(parse_config(to_json(d))), to_json(d));
}

TEST(Config, SchemaRejection) {
    EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"adapt": {"bogus": 1}})")), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"seed": "zero"})")), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"pck": {"threshold": 2.0}})")), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"eval": {"models": ["teacher"]}})")), ConfigError);
    const RunConfig c = parse_config(nlohmann::json::parse(R"({"weights": {"alpha": 0.9}})"));
    EXPECT_EQ(c.adapt.weights.alpha, 0.9);
    EXPECT_EQ(c.adapt.weights.beta, 0.5);
}

TEST(Config, MissingFile) {
    try {
        load_config("/nonexistent/sfpa.json");
        FAIL();
    } catch (const CliError& e) {
        EXPECT_EQ(e.code(), ExitCode::kMissingInput);
    }
}

TEST(Config, DescribeKeysCoversEveryLeaf) {
    const std::string keys = describe_keys();
    std::function<void(const nlohmann::json&, const std::string&)> walk = [&](const nlohmann::json& j,
                                                                              const std::string& prefix) {
        for (const auto& [k, v] : j.items()) {
            const std::string path = prefix.empty() ? k : prefix + "." + k;
            if (v.is_object() && !v.empty()) {
                walk(v, path);
            } else {
                EXPECT_NE(keys.find("  " + path + " = "), std::string::npos) << path;
            }
        }
    };
    walk(to_json(RunConfig{}), "");
}

TEST(Cli, HelpListsKeysAndEnvironment) {
    TempDir dir("cli_help");
    const Result r = run("--help", dir);
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("SFPA_THREADS"), std::string::npos);
    EXPECT_NE(r.out.find("adapt.ema.eta = 0.999"), std::string::npos);
    EXPECT_NE(r.out.find("pck.threshold = 0.05"), std::string::npos);
    for (const char* cmd : {"generate", "pretrain", "adapt", "eval", "ablate"}) EXPECT_NE(r.out.find(cmd), std::string::npos);
}

TEST(Cli, ExitCodes) {
    TempDir dir("cli_codes");
    EXPECT_EQ(run("", dir).code, static_cast<int>(ExitCode::kUsage));
    EXPECT_EQ(run("frobnicate", dir).code, static_cast<int>(ExitCode::kUsage));

    const Result missing_ckpt = run("adapt --out " + (dir / "run").string(), dir);
    EXPECT_EQ(missing_ckpt.code, static_cast<int>(ExitCode::kMissingCheckpoint));
    EXPECT_EQ(missing_ckpt.err.rfind("sfpa: error[missing_checkpoint]: ", 0), 0u) << missing_ckpt.err;
    EXPECT_EQ(std::count(missing_ckpt.err.begin(), missing_ckpt.err.end(), '\n'), 1);

    write(dir / "bad.json", R"({"adapt": {"bogus": 1}})");
    const Result bad = run("generate --config " + (dir / "bad.json").string() + " --out " + (dir / "run").string(), dir);
    EXPECT_EQ(bad.code, static_cast<int>(ExitCode::kConfig));
    EXPECT_NE(bad.err.find("error[config]"), std::string::npos);

    write(dir / "broken.json", "{not json");
    EXPECT_EQ(run("generate --config " + (dir / "broken.json").string(), dir).code, static_cast<int>(ExitCode::kConfig));
    EXPECT_EQ(run("generate --config " + (dir / "absent.json").string(), dir).code,
              static_cast<int>(ExitCode::kMissingInput));
    EXPECT_EQ(run("pretrain --out " + (dir / "empty").string(), dir).code, static_cast<int>(ExitCode::kMissingInput));
    EXPECT_EQ(run("generate --out " + (dir / "x").string(), dir, "SFPA_THREADS=zero").code,
              static_cast<int>(ExitCode::kConfig));
}

TEST(Cli, CheckpointAndDatasetErrors) {
    TempDir dir("cli_ckpt");
    write(dir / "small.json", kSmallConfig);
    const std::string base = "--config " + (dir / "small.json").string() + " --out " + (dir / "run").string();
    ASSERT_EQ(run("generate " + base, dir).code, 0);
    std::filesystem::create_directories(dir / "run" / "checkpoints");
    write(dir / "run" / "checkpoints" / "source.sfpa", "not a checkpoint");
    EXPECT_EQ(run("adapt " + base, dir).code, static_cast<int>(ExitCode::kCheckpointMismatch));
    std::filesystem::resize_file(dir / "run" / "data" / "target_train" / "images.bin", 16);
    EXPECT_EQ(run("pretrain " + base, dir).code, 0);
    const Result r = run("adapt " + base, dir);
    EXPECT_EQ(r.code, static_cast<int>(ExitCode::kInvalidDataset)) << r.err;
}

TEST(Cli, PipelineDeterministicManifest) {
    TempDir dir("cli_pipe");
    write(dir / "small.json", kSmallConfig);
    const auto pipeline = [&](const std::string& out) {
        const std::string base = "--config " + (dir / "small.json").string() + " --seed 3 --out " + (dir / out).string();
        for (const char* cmd : {"generate", "pretrain", "adapt", "eval"}) {
            const Result r = run(std::string(cmd) + " " + base, dir);
            EXPECT_EQ(r.code, 0) << cmd << ": " << r.err;
        }
        return slurp(dir / out / "manifest.json");
    };
    const std::string m1 = pipeline("a"), m2 = pipeline("b");
    EXPECT_EQ(m1, m2);
    const auto j = nlohmann::json::parse(m1);
    EXPECT_EQ(j["format"], "sfpa-manifest");
    const auto& arts = j["commands"]["adapt"]["artifacts"];
    EXPECT_TRUE(arts.contains("checkpoints/intermediate.sfpa"));
    EXPECT_TRUE(arts.contains("logs/adapt.jsonl"));
    EXPECT_EQ(j["commands"]["eval"]["seed"], 3);
    EXPECT_EQ(arts["checkpoints/target.sfpa"], sha256_file(dir / "a" / "checkpoints" / "target.sfpa"));
    EXPECT_EQ(slurp(dir / "a" / "reports" / "eval.csv"), slurp(dir / "b" / "reports" / "eval.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / "data" / "unseen_test" / "meta.json"));
}

TEST(Cli, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
