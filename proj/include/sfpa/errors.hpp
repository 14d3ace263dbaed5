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

#include <stdexcept>
#include <string>

namespace sfpa {

// Violated precondition: wrong shapes, invalid configuration values, misuse.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Numeric domain error (log of a non-positive value, division by zero).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Checkpoint or dataset file that cannot be read back.
class LoadError : public std::runtime_error {
public:
    enum class Kind {
        kIo,
        kBadMagic,
        kTruncated,
        kMissingParameter,
        kUnexpectedParameter,
        kShapeMismatch,
        kPayloadSizeMismatch,
        kSchema,
    };

    LoadError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid JSON run configuration (unknown key, wrong type, out-of-range value).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sfpa
