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
#include <iosfwd>
#include <string>
#include <vector>

#include "sfpa/tensorgrad/tensor.hpp"

namespace sfpa {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// Binary tensor archive:
///   "SFPA1" | count u32 | count x { name_len u32 | name utf-8 | rank u32 | dims u32... | payload f64... }
/// All integers and doubles little-endian, payload row-major.
inline constexpr char kCheckpointMagic[] = "SFPA1";

void write_tensor_records(std::ostream& out, const std::vector<NamedTensor>& records);
/// Throws LoadError (kBadMagic, kTruncated) on malformed input.
std::vector<NamedTensor> read_tensor_records(std::istream& in);

void save_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> load_tensor_file(const std::filesystem::path& path);

}  // namespace sfpa
