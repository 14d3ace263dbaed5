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

#include "sfpa/tensorgrad/tensor.hpp"

#include <numeric>
#include <sstream>

#include "sfpa/errors.hpp"

namespace sfpa {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << ')';
    return out.str();
}

namespace {

void check_shape(const Shape& shape) {
    for (auto d : shape) {
        if (d == 0) throw ContractViolation("tensor: zero-sized dimension in shape " + shape_str(shape));
    }
}

thread_local bool t_grad_enabled = true;

}  // namespace

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
    check_shape(shape);
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<detail::TensorImpl>()) {
    check_shape(shape);
    if (shape_numel(shape) != data.size()) {
        throw ContractViolation("tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
}

std::size_t Tensor::dim(int axis) const {
    const int r = static_cast<int>(rank());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw ContractViolation("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                                shape_str(shape()));
    }
    return impl_->shape[static_cast<std::size_t>(a)];
}

double Tensor::item() const {
    if (numel() != 1) throw ContractViolation("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool flag) {
    if (!impl_->leaf && !flag) {
        throw ContractViolation("set_requires_grad: cannot clear the flag on a non-leaf tensor; use detach()");
    }
    impl_->requires_grad = flag;
    return *this;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

Tensor Tensor::clone() const {
    Tensor copy(impl_->shape, impl_->data);
    copy.impl_->requires_grad = impl_->requires_grad;
    return copy;
}

Eigen::Map<const RowMatrix> Tensor::as_matrix() const {
    const auto cols = static_cast<Eigen::Index>(rank() == 0 ? 1 : impl_->shape.back());
    const auto rows = static_cast<Eigen::Index>(numel()) / cols;
    return {impl_->data.data(), rows, cols};
}

Eigen::Map<const Eigen::VectorXd> Tensor::as_vector() const {
    return {impl_->data.data(), static_cast<Eigen::Index>(numel())};
}

Tape& Tape::current() {
    thread_local Tape tape;
    return tape;
}

void Tape::record(std::shared_ptr<detail::TensorImpl> output, BackwardRule rule) {
    nodes_.push_back(Node{std::move(output), std::move(rule)});
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractViolation("backward: loss must be a scalar, got shape " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) {
        throw ContractViolation("backward: loss does not depend on any tensor that requires grad");
    }
    Tape& tape = Tape::current();
    auto& root = *loss.impl();
    if (root.leaf) {
        root.ensure_grad();
        root.grad[0] += 1.0;
        return;
    }
    if (tape.empty()) throw ContractViolation("backward: tape is empty");

    // The loss buffer is seeded fresh; earlier accumulations on a non-leaf are irrelevant.
    root.grad.assign(1, 1.0);
    for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
        auto& out = *it->output;
        if (out.grad.empty()) continue;
        it->rule(out.grad);
        // Intermediate gradients are not retained once propagated.
        std::vector<double>().swap(out.grad);
    }
    tape.clear();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

}  // namespace sfpa
