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

#include <cstddef>
#include <span>
#include <vector>

#include "sfpa/tensorgrad/tensor.hpp"

namespace sfpa {

// Elementwise binary ops. Shapes must match, or one operand's shape must be
// a trailing suffix of the other's (broadcast over leading dims); a rank-0
// or single-element operand broadcasts everywhere.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws DomainError when any divisor is exactly zero.
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

/// (..., m, k) x (..., k, n). Leading dims must match, or `b` is 2-D and shared.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two dimensions.
Tensor transpose(const Tensor& x);

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

struct ConvTranspose2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t output_padding = 0;
};

/// x (B, C, H, W), weight (O, C, kh, kw), bias (O) or undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options = {});
/// x (B, C, H, W), weight (C, O, kh, kw), bias (O) or undefined.
/// Output spatial size is (H - 1) * stride - 2 * padding + kh + output_padding.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        ConvTranspose2dOptions options = {});

Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
/// Throws DomainError on any non-positive element.
Tensor log(const Tensor& x);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, int axis);

struct MaxResult {
    Tensor values;
    std::vector<std::size_t> indices;  // position along the reduced axis; ties -> lowest
};
MaxResult max_with_argmax(const Tensor& x, int axis);

/// Euclidean norm along `axis`. The gradient at a zero vector is taken as zero.
Tensor norm(const Tensor& x, int axis);

/// 1-D tensor of the elements whose mask entry is set, in flat order.
Tensor masked_select(const Tensor& x, const std::vector<bool>& mask);

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
Tensor reshape(const Tensor& x, Shape shape);
/// Elements [begin, end) along `axis`.
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);

}  // namespace sfpa
