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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sfpa {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty while no gradient has been accumulated
    bool requires_grad = false;
    bool leaf = true;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
};

}  // namespace detail

/// Dense row-major tensor of doubles with an optional gradient buffer.
///
/// A Tensor is a shared handle; copies alias the same storage. Results of
/// differentiable ops are recorded on the calling thread's tape whenever one
/// of their inputs requires grad and grad mode is enabled.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

    bool defined() const noexcept { return impl_ != nullptr; }

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    /// Size of dimension `axis`; negative values count from the back.
    std::size_t dim(int axis) const;
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const double> data() const { return impl_->data; }
    /// In-place access for parameter updates and data loading. Must not be
    /// used on a tensor referenced by a pending tape.
    std::span<double> mutable_data() { return impl_->data; }
    double item() const;
    double at(std::size_t flat_index) const { return impl_->data.at(flat_index); }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool flag);
    bool is_leaf() const { return impl_->leaf; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const double> grad() const { return impl_->grad; }
    std::span<double> mutable_grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    void zero_grad() { impl_->grad.clear(); }

    /// Copy of the values, cut from any tape and without requires_grad.
    Tensor detach() const;
    /// Deep copy that keeps the requires_grad flag (used to clone parameters).
    Tensor clone() const;

    /// Views the tensor as a (numel / last_dim) x last_dim row-major matrix.
    Eigen::Map<const RowMatrix> as_matrix() const;
    Eigen::Map<const Eigen::VectorXd> as_vector() const;

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of differentiable ops executed on one thread.
class Tape {
public:
    using BackwardRule = std::function<void(const std::vector<double>& grad_output)>;

    /// The calling thread's tape.
    static Tape& current();

    void record(std::shared_ptr<detail::TensorImpl> output, BackwardRule rule);
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    void clear() { nodes_.clear(); }

private:
    friend void backward(const Tensor& loss);

    struct Node {
        std::shared_ptr<detail::TensorImpl> output;
        BackwardRule rule;
    };
    std::vector<Node> nodes_;
};

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// requires_grad leaf reachable from the loss; the tape is cleared afterwards.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace sfpa
