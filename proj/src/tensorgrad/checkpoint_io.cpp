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

#include "sfpa/tensorgrad/checkpoint_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "sfpa/errors.hpp"

namespace sfpa {

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

template <typename UInt>
void put_le(std::ostream& out, UInt v) {
    std::array<char, sizeof(UInt)> bytes{};
    for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    out.write(bytes.data(), bytes.size());
}

template <typename UInt>
UInt get_le(std::istream& in, const char* what) {
    std::array<unsigned char, sizeof(UInt)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw LoadError(LoadError::Kind::kTruncated, std::string("truncated checkpoint while reading ") + what);
    }
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
    return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > UINT32_MAX) throw ContractViolation(std::string("checkpoint: ") + what + " exceeds u32");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

void write_tensor_records(std::ostream& out, const std::vector<NamedTensor>& records) {
    out.write(kCheckpointMagic, kMagicLen);
    put_le<std::uint32_t>(out, checked_u32(records.size(), "record count"));
    for (const auto& rec : records) {
        put_le<std::uint32_t>(out, checked_u32(rec.name.size(), "name length"));
        out.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
        put_le<std::uint32_t>(out, checked_u32(rec.tensor.rank(), "rank"));
        for (auto d : rec.tensor.shape()) put_le<std::uint32_t>(out, checked_u32(d, "dimension"));
        for (double v : rec.tensor.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
}

std::vector<NamedTensor> read_tensor_records(std::istream& in) {
    std::array<char, kMagicLen> magic{};
    in.read(magic.data(), magic.size());
    if (in.gcount() != static_cast<std::streamsize>(kMagicLen) ||
        std::memcmp(magic.data(), kCheckpointMagic, kMagicLen) != 0) {
        throw LoadError(LoadError::Kind::kBadMagic, "bad magic: not an SFPA1 checkpoint");
    }
    const auto count = get_le<std::uint32_t>(in, "record count");
    std::vector<NamedTensor> records;
    for (std::uint32_t r = 0; r < count; ++r) {
        const auto name_len = get_le<std::uint32_t>(in, "name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len)) {
            throw LoadError(LoadError::Kind::kTruncated, "truncated checkpoint while reading a parameter name");
        }
        const auto rank = get_le<std::uint32_t>(in, "rank");
        Shape shape(rank);
        for (auto& d : shape) {
            d = get_le<std::uint32_t>(in, "dimensions");
            if (d == 0) throw LoadError(LoadError::Kind::kShapeMismatch, "zero dimension for parameter " + name);
        }
        std::vector<double> data(shape_numel(shape));
        for (auto& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(in, "payload"));
        records.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    }
    return records;
}

void save_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError(LoadError::Kind::kIo, "cannot open " + path.string() + " for writing");
    write_tensor_records(out, records);
    if (!out) throw LoadError(LoadError::Kind::kIo, "write failed for " + path.string());
}

std::vector<NamedTensor> load_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(LoadError::Kind::kIo, "cannot open checkpoint " + path.string());
    return read_tensor_records(in);
}

}  // namespace sfpa
