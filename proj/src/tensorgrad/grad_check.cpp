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

#include "sfpa/tensorgrad/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sfpa/errors.hpp"

namespace sfpa {

double grad_check(const std::function<Tensor()>& f, Tensor param, double eps) {
    const bool had_flag = param.requires_grad();
    param.set_requires_grad(true);
    param.zero_grad();
    Tape::current().clear();
    Tensor loss = f();
    backward(loss);
    std::vector<double> analytic(param.numel(), 0.0);
    if (param.has_grad()) std::copy(param.grad().begin(), param.grad().end(), analytic.begin());
    param.zero_grad();

    double worst = 0.0;
    {
        NoGradGuard no_grad;
        auto values = param.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + eps;
            const double up = f().item();
            values[i] = original - eps;
            const double down = f().item();
            values[i] = original;
            const double numeric = (up - down) / (2.0 * eps);
            const double err =
                std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    param.set_requires_grad(had_flag);
    return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
    Tensor probe = x.detach();
    return grad_check([&f, &probe] { return f(probe); }, probe, eps);
}

}  // namespace sfpa
