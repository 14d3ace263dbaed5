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

#include <initializer_list>
#include <string>

#include "sfpa/errors.hpp"
#include "sfpa/tensorgrad/tensor.hpp"

namespace sfpa::detail {

using ImplPtr = std::shared_ptr<TensorImpl>;

inline bool wants_grad(std::initializer_list<const Tensor*> inputs) {
    if (!grad_enabled()) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

inline bool tracks(const ImplPtr& impl) { return impl && impl->requires_grad; }

/// Marks `out` as a tape node when `record` is set.
inline Tensor finish(Tensor out, bool record, Tape::BackwardRule rule) {
    if (record) {
        const auto& impl = out.impl();
        impl->requires_grad = true;
        impl->leaf = false;
        Tape::current().record(impl, std::move(rule));
    }
    return out;
}

[[noreturn]] inline void shape_error(const char* op, const std::string& detail) {
    throw ContractViolation(std::string(op) + ": " + detail);
}

inline void require_defined(const char* op, const Tensor& t) {
    if (!t.defined()) shape_error(op, "undefined tensor argument");
}

}  // namespace sfpa::detail
