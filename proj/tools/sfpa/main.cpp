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

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "cli_errors.hpp"
#include "commands.hpp"
#include "run_config.hpp"
#include "sfpa/errors.hpp"

namespace {

using sfpa::cli::ExitCode;

int fail(ExitCode code, const std::string& message) {
    std::string line = message;
    for (auto& c : line)
        if (c == '\n') c = ' ';
    std::cerr << "sfpa: error[" << sfpa::cli::category(code) << "]: " << line << '\n';
    return static_cast<int>(code);
}

ExitCode load_error_code(const sfpa::LoadError& e) {
    using Kind = sfpa::LoadError::Kind;
    switch (e.kind()) {
        case Kind::kIo: return ExitCode::kIo;
        case Kind::kPayloadSizeMismatch:
        case Kind::kSchema: return ExitCode::kInvalidDataset;
        default: return ExitCode::kCheckpointMismatch;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Source-free domain-adaptive pose estimation on a synthetic two-domain benchmark."};
    app.require_subcommand(1);
    app.footer("Environment:\n  SFPA_THREADS  upper bound on worker threads (default 1)\n\n"
               "Configuration keys (JSON, dotted path = default):\n" +
               sfpa::cli::describe_keys());

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "run";
    const std::pair<const char*, const char*> commands[] = {
        {"generate", "Write source, target (and optional unseen) dataset splits"},
        {"pretrain", "Train the source model on the labelled source split"},
        {"adapt", "Adapt source/intermediate/target models on unlabelled target images"},
        {"eval", "Report PCK of saved checkpoints on dataset splits"},
        {"ablate", "Run the framework, loss, sparsity and parameter studies"},
    };
    for (const auto& [name, description] : commands) {
        CLI::App* sub = app.add_subcommand(name, description);
        sub->add_option("--config", config_path, "JSON run configuration (defaults when omitted)");
        sub->add_option("--seed", seed, "Override the configuration seed");
        sub->add_option("--out", out_dir, "Output root directory")->capture_default_str();
        sub->footer("See `sfpa --help` for every configuration key and its default.");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(ExitCode::kUsage, e.what());
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        sfpa::cli::RunConfig cfg = sfpa::cli::load_config(config_path);
        if (seed) {
            cfg.seed = *seed;
            cfg.ablate.seeds = {*seed};
        }
        sfpa::cli::run_command(command, cfg, out_dir, sfpa::cli::threads_from_env());
    } catch (const sfpa::cli::CliError& e) {
        return fail(e.code(), e.what());
    } catch (const sfpa::ConfigError& e) {
        return fail(ExitCode::kConfig, e.what());
    } catch (const sfpa::ContractViolation& e) {
        return fail(ExitCode::kConfig, e.what());
    } catch (const sfpa::GenerationError& e) {
        return fail(ExitCode::kGeneration, e.what());
    } catch (const sfpa::LoadError& e) {
        return fail(load_error_code(e), e.what());
    } catch (const std::exception& e) {
        return fail(ExitCode::kInternal, e.what());
    }
    return 0;
}
