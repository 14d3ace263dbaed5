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

#include <filesystem>
#include <string>

#include "run_config.hpp"

namespace sfpa::cli {

/// Worker-pool bound from SFPA_THREADS (default 1). Throws ConfigError on a
/// value that is not a positive integer.
std::size_t threads_from_env();

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

/// Runs one of generate, pretrain, adapt, eval, ablate with every output under
/// `root`, then records the command in `root`/manifest.json. Failures throw
/// CliError or one of the library error types.
void run_command(const std::string& command, const RunConfig& cfg, const std::filesystem::path& root,
                 std::size_t threads);

}  // namespace sfpa::cli
