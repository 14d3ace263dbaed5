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

#include "sfpa/tensorgrad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "op_support.hpp"

namespace sfpa {

using detail::ImplPtr;
using detail::finish;
using detail::shape_error;
using detail::tracks;
using detail::wants_grad;

namespace {

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t n = 1;
    std::size_t inner = 1;
    std::size_t axis = 0;
};

AxisSplit split_axis(const Shape& shape, int axis, const char* op) {
    const int r = static_cast<int>(shape.size());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        shape_error(op, "axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
    }
    AxisSplit s;
    s.axis = static_cast<std::size_t>(a);
    for (std::size_t i = 0; i < s.axis; ++i) s.outer *= shape[i];
    s.n = shape[s.axis];
    for (std::size_t i = s.axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

Shape reduced_shape(const Shape& shape, std::size_t axis) {
    Shape out = shape;
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
    return out;
}

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Output shape of a broadcasting binary op.
Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return a.shape();
    if (b.numel() == 1 && b.rank() <= a.rank()) return a.shape();
    if (a.numel() == 1 && a.rank() <= b.rank()) return b.shape();
    if (is_suffix(b.shape(), a.shape())) return a.shape();
    if (is_suffix(a.shape(), b.shape())) return b.shape();
    shape_error(op, "cannot broadcast " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
}

template <typename Forward, typename GradA, typename GradB>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, Forward f, GradA ga, GradB gb) {
    detail::require_defined(op, a);
    detail::require_defined(op, b);
    Shape out_shape = broadcast_shape(a, b, op);
    const std::size_t n = shape_numel(out_shape);
    const std::size_t na = a.numel();
    const std::size_t nb = b.numel();
    const auto& ad = a.impl()->data;
    const auto& bd = b.impl()->data;
    std::vector<double> out(n);
    if (na == n && nb == n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(ad[i], bd[i]);
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(ad[i % na], bd[i % nb]);
    }
    const bool record = wants_grad({&a, &b});
    ImplPtr ai = a.impl();
    ImplPtr bi = b.impl();
    return finish(Tensor(std::move(out_shape), std::move(out)), record,
                  [ai, bi, n, na, nb, ga, gb](const std::vector<double>& g) {
                      if (tracks(ai)) {
                          ai->ensure_grad();
                          for (std::size_t i = 0; i < n; ++i)
                              ai->grad[i % na] += ga(ai->data[i % na], bi->data[i % nb], g[i]);
                      }
                      if (tracks(bi)) {
                          bi->ensure_grad();
                          for (std::size_t i = 0; i < n; ++i)
                              bi->grad[i % nb] += gb(ai->data[i % na], bi->data[i % nb], g[i]);
                      }
                  });
}

template <typename Forward, typename Deriv>
Tensor unary_op(const Tensor& x, Forward f, Deriv d) {
    const auto& xd = x.impl()->data;
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
    const bool record = wants_grad({&x});
    ImplPtr xi = x.impl();
    Tensor result(x.shape(), std::move(out));
    ImplPtr yi = result.impl();
    // The rule captures the output's data through a weak reference; the tape
    // node itself keeps the output alive.
    std::weak_ptr<detail::TensorImpl> yw = yi;
    return finish(std::move(result), record, [xi, yw, d](const std::vector<double>& g) {
        auto y = yw.lock();
        xi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) xi->grad[i] += g[i] * d(xi->data[i], y->data[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double g) { return g; },
        [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double g) { return g; },
        [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double g) { return g * y; },
        [](double x, double, double g) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    detail::require_defined("div", b);
    for (double v : b.data()) {
        if (v == 0.0) throw DomainError("div: division by zero");
    }
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double g) { return g / y; },
        [](double x, double y, double g) { return -g * x / (y * y); });
}

Tensor scale(const Tensor& x, double factor) {
    return unary_op(x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
    return unary_op(x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
    return unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; },
                    [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
    return unary_op(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    for (double v : x.data()) {
        if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
    }
    return unary_op(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        shape_error("matmul", "operands must have rank >= 2, got " + shape_str(a.shape()) + " and " +
                                  shape_str(b.shape()));
    }
    const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
    if (b.dim(-2) != k) {
        shape_error("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const Shape lead_a(a.shape().begin(), a.shape().end() - 2);
    const Shape lead_b(b.shape().begin(), b.shape().end() - 2);
    const bool shared_b = lead_b.empty();
    if (!shared_b && lead_a != lead_b) {
        shape_error("matmul", "batch dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t batch = shape_numel(lead_a);
    Shape out_shape = lead_a;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(batch * m * n);
    using CMap = Eigen::Map<const RowMatrix>;
    using MMap = Eigen::Map<RowMatrix>;
    const auto im = static_cast<Eigen::Index>(m), ik = static_cast<Eigen::Index>(k),
               in = static_cast<Eigen::Index>(n);
    for (std::size_t t = 0; t < batch; ++t) {
        CMap am(a.data().data() + t * m * k, im, ik);
        CMap bm(b.data().data() + (shared_b ? 0 : t * k * n), ik, in);
        MMap(out.data() + t * m * n, im, in).noalias() = am * bm;
    }
    const bool record = wants_grad({&a, &b});
    ImplPtr ai = a.impl(), bi = b.impl();
    return finish(Tensor(std::move(out_shape), std::move(out)), record,
                  [ai, bi, batch, im, ik, in, shared_b](const std::vector<double>& g) {
                      const auto m = static_cast<std::size_t>(im), k = static_cast<std::size_t>(ik),
                                 n = static_cast<std::size_t>(in);
                      if (tracks(ai)) ai->ensure_grad();
                      if (tracks(bi)) bi->ensure_grad();
                      for (std::size_t t = 0; t < batch; ++t) {
                          CMap gm(g.data() + t * m * n, im, in);
                          const std::size_t boff = shared_b ? 0 : t * k * n;
                          if (tracks(ai)) {
                              MMap(ai->grad.data() + t * m * k, im, ik).noalias() +=
                                  gm * CMap(bi->data.data() + boff, ik, in).transpose();
                          }
                          if (tracks(bi)) {
                              MMap(bi->grad.data() + boff, ik, in).noalias() +=
                                  CMap(ai->data.data() + t * m * k, im, ik).transpose() * gm;
                          }
                      }
                  });
}

Tensor transpose(const Tensor& x) {
    if (x.rank() < 2) shape_error("transpose", "rank must be >= 2, got " + shape_str(x.shape()));
    const std::size_t r = x.dim(-2), c = x.dim(-1);
    const std::size_t batch = x.numel() / (r * c);
    Shape out_shape = x.shape();
    std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
    const auto& xd = x.impl()->data;
    std::vector<double> out(xd.size());
    for (std::size_t t = 0; t < batch; ++t)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[t * r * c + j * r + i] = xd[t * r * c + i * c + j];
    const bool record = wants_grad({&x});
    ImplPtr xi = x.impl();
    return finish(Tensor(std::move(out_shape), std::move(out)), record, [xi, batch, r, c](const std::vector<double>& g) {
        xi->ensure_grad();
        for (std::size_t t = 0; t < batch; ++t)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) xi->grad[t * r * c + i * c + j] += g[t * r * c + j * r + i];
    });
}

Tensor softmax(const Tensor& x, int axis) {
    const AxisSplit s = split_axis(x.shape(), axis, "softmax");
    const auto& xd = x.impl()->data;
    std::vector<double> out(xd.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < s.n; ++i) mx = std::max(mx, xd[base + i * s.inner]);
            double total = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) {
                const double e = std::exp(xd[base + i * s.inner] - mx);
                out[base + i * s.inner] = e;
                total += e;
            }
            for (std::size_t i = 0; i < s.n; ++i) out[base + i * s.inner] /= total;
        }
    }
    const bool record = wants_grad({&x});
    ImplPtr xi = x.impl();
    Tensor result(x.shape(), std::move(out));
    std::weak_ptr<detail::TensorImpl> yw = result.impl();
    return finish(std::move(result), record, [xi, yw, s](const std::vector<double>& g) {
        auto y = yw.lock();
        xi->ensure_grad();
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.n * s.inner + in;
                double dot = 0.0;
                for (std::size_t i = 0; i < s.n; ++i) dot += g[base + i * s.inner] * y->data[base + i * s.inner];
                for (std::size_t i = 0; i < s.n; ++i) {
                    const std::size_t p = base + i * s.inner;
                    xi->grad[p] += y->data[p] * (g[p] - dot);
                }
            }
        }
    });
}

Tensor log_softmax(const Tensor& x, int axis) {
    const AxisSplit s = split_axis(x.shape(), axis, "log_softmax");
    const auto& xd = x.impl()->data;
    std::vector<double> out(xd.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < s.n; ++i) mx = std::max(mx, xd[base + i * s.inner]);
            double total = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) total += std::exp(xd[base + i * s.inner] - mx);
            const double lse = mx + std::log(total);
            for (std::size_t i = 0; i < s.n; ++i) out[base + i * s.inner] = xd[base + i * s.inner] - lse;
        }
    }
    const bool record = wants_grad({&x});
    ImplPtr xi = x.impl();
    Tensor result(x.shape(), std::move(out));
    std::weak_ptr<detail::TensorImpl> yw = result.impl();
    return finish(std::move(result), record, [xi, yw, s](const std::vector<double>& g) {
        auto y = yw.lock();
        xi->ensure_grad();
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.n * s.inner + in;
                double gsum = 0.0;
                for (std::size_t i = 0; i < s.n; ++i) gsum += g[base + i * s.inner];
                for (std::size_t i = 0; i < s.n; ++i) {
                    const std::size_t p = base + i * s.inner;
                    xi->grad[p] += g[p] - std::exp(y->data[p]) * gsum;
                }
            }
        }
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    const bool record = wants_grad({&x});
    ImplPtr xi = x.impl();
    return finish(Tensor::scalar(total), record, [xi](const std::vector<double>& g) {
        xi->ensure_grad();
        for (double& v : xi->grad) v += g[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum(const Tensor& x, int axis) {
    const AxisSplit s = split_axis(x.shape(), axis, "sum");
    const auto& xd = x.impl()->data;
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.n; ++i)
            for (std::size_t in = 0; in < s.inner; ++in)
                out[o * s.inner + in] += xd[(o * s.n + i) * s.inner + in];
    const bool record = wants_grad({&x});
    ImplPtr xi = x.impl();
    return finish(Tensor(reduced_shape(x.shape(), s.axis), std::move(out)), record,
                  [xi, s](const std::vector<double>& g) {
                      xi->ensure_grad();
                      for (std::size_t o = 0; o < s.outer; ++o)
                          for (std::size_t i = 0; i < s.n; ++i)
                              for (std::size_t in = 0; in < s.inner; ++in)
                                  xi->grad[(o * s.n + i) * s.inner + in] += g[o * s.inner + in];
                  });
}

Tensor mean(const Tensor& x, int axis) {
    const std::size_t n = x.dim(axis);
    return scale(sum(x, axis), 1.0 / static_cast<double>(n));
}

MaxResult max_with_argmax(const Tensor& x, int axis) {
    const AxisSplit s = split_axis(x.shape(), axis, "max_with_argmax");
    const auto& xd = x.impl()->data;
    std::vector<double> out(s.outer * s.inner);
    std::vector<std::size_t> idx(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            std::size_t best = 0;
            double best_v = xd[o * s.n * s.inner + in];
            for (std::size_t i = 1; i < s.n; ++i) {
                const double v = xd[(o * s.n + i) * s.inner + in];
                if (v > best_v) {
                    best_v = v;
                    best = i;
                }
            }
            out[o * s.inner + in] = best_v;
            idx[o * s.inner + in] = best;
        }
    }
    const bool record = wants_grad({&x});
    ImplPtr xi = x.impl();
    MaxResult result;
    result.values = finish(Tensor(reduced_shape(x.shape(), s.axis), std::move(out)), record,
                           [xi, s, idx](const std::vector<double>& g) {
                               xi->ensure_grad();
                               for (std::size_t o = 0; o < s.outer; ++o)
                                   for (std::size_t in = 0; in < s.inner; ++in)
                                       xi->grad[(o * s.n + idx[o * s.inner + in]) * s.inner + in] +=
                                           g[o * s.inner + in];
                           });
    result.indices = std::move(idx);
    return result;
}

Tensor norm(const Tensor& x, int axis) {
    const AxisSplit s = split_axis(x.shape(), axis, "norm");
    const auto& xd = x.impl()->data;
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.n; ++i)
            for (std::size_t in = 0; in < s.inner; ++in) {
                const double v = xd[(o * s.n + i) * s.inner + in];
                out[o * s.inner + in] += v * v;
            }
    for (double& v : out) v = std::sqrt(v);
    const bool record = wants_grad({&x});
    ImplPtr xi = x.impl();
    Tensor result(reduced_shape(x.shape(), s.axis), std::move(out));
    std::weak_ptr<detail::TensorImpl> yw = result.impl();
    return finish(std::move(result), record, [xi, yw, s](const std::vector<double>& g) {
        auto y = yw.lock();
        xi->ensure_grad();
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t in = 0; in < s.inner; ++in) {
                const double nv = y->data[o * s.inner + in];
                if (nv == 0.0) continue;
                const double factor = g[o * s.inner + in] / nv;
                for (std::size_t i = 0; i < s.n; ++i) {
                    const std::size_t p = (o * s.n + i) * s.inner + in;
                    xi->grad[p] += factor * xi->data[p];
                }
            }
    });
}

Tensor masked_select(const Tensor& x, const std::vector<bool>& mask) {
    if (mask.size() != x.numel()) {
        shape_error("masked_select", "mask of " + std::to_string(mask.size()) + " entries for tensor " +
                                         shape_str(x.shape()));
    }
    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) picked.push_back(i);
    if (picked.empty()) shape_error("masked_select", "mask selects no elements");
    std::vector<double> out(picked.size());
    for (std::size_t i = 0; i < picked.size(); ++i) out[i] = x.data()[picked[i]];
    const bool record = wants_grad({&x});
    ImplPtr xi = x.impl();
    return finish(Tensor(Shape{picked.size()}, std::move(out)), record, [xi, picked](const std::vector<double>& g) {
        xi->ensure_grad();
        for (std::size_t i = 0; i < picked.size(); ++i) xi->grad[picked[i]] += g[i];
    });
}

Tensor stack(std::span<const Tensor> parts) {
    if (parts.empty()) shape_error("stack", "no tensors given");
    const Shape& part_shape = parts.front().shape();
    for (const auto& p : parts) {
        if (p.shape() != part_shape) {
            shape_error("stack", "shape " + shape_str(p.shape()) + " differs from " + shape_str(part_shape));
        }
    }
    const std::size_t n = parts.front().numel();
    Shape out_shape{parts.size()};
    out_shape.insert(out_shape.end(), part_shape.begin(), part_shape.end());
    std::vector<double> out;
    out.reserve(parts.size() * n);
    std::vector<ImplPtr> impls;
    bool record = false;
    for (const auto& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
        impls.push_back(p.impl());
        record = record || wants_grad({&p});
    }
    return finish(Tensor(std::move(out_shape), std::move(out)), record, [impls, n](const std::vector<double>& g) {
        for (std::size_t t = 0; t < impls.size(); ++t) {
            if (!tracks(impls[t])) continue;
            impls[t]->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) impls[t]->grad[i] += g[t * n + i];
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        shape_error("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    const bool record = wants_grad({&x});
    ImplPtr xi = x.impl();
    return finish(Tensor(std::move(shape), x.impl()->data), record, [xi](const std::vector<double>& g) {
        xi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) xi->grad[i] += g[i];
    });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
    const AxisSplit s = split_axis(x.shape(), axis, "slice");
    if (begin >= end || end > s.n) {
        shape_error("slice", "range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                 ") invalid for axis of size " + std::to_string(s.n));
    }
    const std::size_t len = end - begin;
    Shape out_shape = x.shape();
    out_shape[s.axis] = len;
    const auto& xd = x.impl()->data;
    std::vector<double> out(s.outer * len * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>((o * s.n + begin) * s.inner), len * s.inner,
                    out.begin() + static_cast<std::ptrdiff_t>(o * len * s.inner));
    const bool record = wants_grad({&x});
    ImplPtr xi = x.impl();
    return finish(Tensor(std::move(out_shape), std::move(out)), record,
                  [xi, s, begin, len](const std::vector<double>& g) {
                      xi->ensure_grad();
                      for (std::size_t o = 0; o < s.outer; ++o)
                          for (std::size_t i = 0; i < len * s.inner; ++i)
                              xi->grad[(o * s.n + begin) * s.inner + i] += g[o * len * s.inner + i];
                  });
}

}  // namespace sfpa
