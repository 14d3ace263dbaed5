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

#include <functional>

#include "sfpa/tensorgrad/tensor.hpp"

namespace sfpa {

/// Largest coordinate-wise relative error between the tape gradient of
/// `f` with respect to `param` and a central finite difference of step `eps`.
/// The relative error of one coordinate is
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
///
/// `param` is perturbed in place (and restored), so `f` may read it through
/// any captured model state. Leaves other than `param` may receive gradient.
double grad_check(const std::function<Tensor()>& f, Tensor param, double eps = 1e-5);

/// Convenience form for a function of a single input tensor.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

}  // namespace sfpa
