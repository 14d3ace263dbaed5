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

#include <memory>

#include "op_support.hpp"
#include "sfpa/tensorgrad/ops.hpp"

namespace sfpa {

using detail::ImplPtr;
using detail::finish;
using detail::shape_error;
using detail::tracks;
using detail::wants_grad;

namespace {

// Geometry shared by the forward conv and the transposed conv: a kernel
// placed on a (grid_h x grid_w) lattice of positions reads image pixel
// (g * stride - pad + k).
struct Patch {
    std::size_t channels, height, width;  // image
    std::size_t kh, kw, stride, pad;
    std::size_t grid_h, grid_w;

    std::size_t rows() const { return channels * kh * kw; }
    std::size_t positions() const { return grid_h * grid_w; }
};

// Writes the patches of one image into columns [offset, offset + positions)
// of a row-major matrix with `ld` columns.
void im2col(const Patch& p, const double* img, double* col, std::size_t ld, std::size_t offset) {
    for (std::size_t c = 0; c < p.channels; ++c) {
        for (std::size_t ki = 0; ki < p.kh; ++ki) {
            for (std::size_t kj = 0; kj < p.kw; ++kj) {
                double* row = col + ((c * p.kh + ki) * p.kw + kj) * ld + offset;
                for (std::size_t gi = 0; gi < p.grid_h; ++gi) {
                    const auto y = static_cast<std::ptrdiff_t>(gi * p.stride + ki) - static_cast<std::ptrdiff_t>(p.pad);
                    double* dst = row + gi * p.grid_w;
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(p.height)) {
                        std::fill_n(dst, p.grid_w, 0.0);
                        continue;
                    }
                    const double* src = img + (c * p.height + static_cast<std::size_t>(y)) * p.width;
                    for (std::size_t gj = 0; gj < p.grid_w; ++gj) {
                        const auto x =
                            static_cast<std::ptrdiff_t>(gj * p.stride + kj) - static_cast<std::ptrdiff_t>(p.pad);
                        dst[gj] = (x < 0 || x >= static_cast<std::ptrdiff_t>(p.width)) ? 0.0 : src[x];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: accumulates columns back into the image.
void col2im(const Patch& p, const double* col, std::size_t ld, std::size_t offset, double* img) {
    for (std::size_t c = 0; c < p.channels; ++c) {
        for (std::size_t ki = 0; ki < p.kh; ++ki) {
            for (std::size_t kj = 0; kj < p.kw; ++kj) {
                const double* row = col + ((c * p.kh + ki) * p.kw + kj) * ld + offset;
                for (std::size_t gi = 0; gi < p.grid_h; ++gi) {
                    const auto y = static_cast<std::ptrdiff_t>(gi * p.stride + ki) - static_cast<std::ptrdiff_t>(p.pad);
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(p.height)) continue;
                    double* dst = img + (c * p.height + static_cast<std::size_t>(y)) * p.width;
                    const double* src = row + gi * p.grid_w;
                    for (std::size_t gj = 0; gj < p.grid_w; ++gj) {
                        const auto x =
                            static_cast<std::ptrdiff_t>(gj * p.stride + kj) - static_cast<std::ptrdiff_t>(p.pad);
                        if (x >= 0 && x < static_cast<std::ptrdiff_t>(p.width)) dst[x] += src[gj];
                    }
                }
            }
        }
    }
}

// (B, C, S) <-> (C, B*S) channel-major layout used by the GEMMs.
void to_channel_major(const double* src, std::size_t batch, std::size_t channels, std::size_t spatial, double* dst) {
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c)
            std::copy_n(src + (b * channels + c) * spatial, spatial, dst + c * batch * spatial + b * spatial);
}

void add_from_channel_major(const double* src, std::size_t batch, std::size_t channels, std::size_t spatial,
                            double* dst) {
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c) {
            const double* s = src + c * batch * spatial + b * spatial;
            double* d = dst + (b * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) d[i] += s[i];
        }
}

void check_conv_args(const char* op, const Tensor& x, const Tensor& weight, const Tensor& bias,
                     std::size_t weight_in_axis, std::size_t weight_out_axis) {
    detail::require_defined(op, x);
    detail::require_defined(op, weight);
    if (x.rank() != 4 || weight.rank() != 4) {
        shape_error(op, "expected 4-D input and weight, got " + shape_str(x.shape()) + " and " +
                            shape_str(weight.shape()));
    }
    if (weight.shape()[weight_in_axis] != x.shape()[1]) {
        shape_error(op, "input " + shape_str(x.shape()) + " has " + std::to_string(x.shape()[1]) +
                            " channels but weight " + shape_str(weight.shape()) + " expects " +
                            std::to_string(weight.shape()[weight_in_axis]));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.numel() != weight.shape()[weight_out_axis])) {
        shape_error(op, "bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(weight.shape()));
    }
}

using CMap = Eigen::Map<const RowMatrix>;
using MMap = Eigen::Map<RowMatrix>;

Eigen::Index ei(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options) {
    check_conv_args("conv2d", x, weight, bias, 1, 0);
    if (options.stride == 0) shape_error("conv2d", "stride must be positive");
    const std::size_t batch = x.shape()[0], channels = x.shape()[1], height = x.shape()[2], width = x.shape()[3];
    const std::size_t out_ch = weight.shape()[0], kh = weight.shape()[2], kw = weight.shape()[3];
    if (height + 2 * options.padding < kh || width + 2 * options.padding < kw) {
        shape_error("conv2d", "kernel " + shape_str(weight.shape()) + " larger than padded input " +
                                  shape_str(x.shape()));
    }
    const Patch p{channels,
                  height,
                  width,
                  kh,
                  kw,
                  options.stride,
                  options.padding,
                  (height + 2 * options.padding - kh) / options.stride + 1,
                  (width + 2 * options.padding - kw) / options.stride + 1};
    const std::size_t positions = p.positions();
    const std::size_t ld = batch * positions;

    auto col = std::make_shared<RowMatrix>(ei(p.rows()), ei(ld));
    for (std::size_t b = 0; b < batch; ++b)
        im2col(p, x.data().data() + b * channels * height * width, col->data(), ld, b * positions);

    CMap wmat(weight.data().data(), ei(out_ch), ei(p.rows()));
    RowMatrix prod = wmat * (*col);
    std::vector<double> out(batch * out_ch * positions, 0.0);
    add_from_channel_major(prod.data(), batch, out_ch, positions, out.data());
    if (bias.defined()) {
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t o = 0; o < out_ch; ++o) {
                double* d = out.data() + (b * out_ch + o) * positions;
                for (std::size_t i = 0; i < positions; ++i) d[i] += bias.data()[o];
            }
    }

    const bool record = wants_grad({&x, &weight, &bias});
    ImplPtr xi = x.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr;
    return finish(
        Tensor(Shape{batch, out_ch, p.grid_h, p.grid_w}, std::move(out)), record,
        [xi, wi, bi, col, p, batch, out_ch](const std::vector<double>& g) {
            const std::size_t positions = p.positions();
            const std::size_t ld = batch * positions;
            RowMatrix gmat = RowMatrix::Zero(ei(out_ch), ei(ld));
            to_channel_major(g.data(), batch, out_ch, positions, gmat.data());
            if (tracks(wi)) {
                wi->ensure_grad();
                MMap(wi->grad.data(), ei(out_ch), ei(p.rows())).noalias() += gmat * col->transpose();
            }
            if (tracks(bi)) {
                bi->ensure_grad();
                for (std::size_t o = 0; o < out_ch; ++o) bi->grad[o] += gmat.row(ei(o)).sum();
            }
            if (tracks(xi)) {
                xi->ensure_grad();
                RowMatrix dcol = CMap(wi->data.data(), ei(out_ch), ei(p.rows())).transpose() * gmat;
                for (std::size_t b = 0; b < batch; ++b)
                    col2im(p, dcol.data(), ld, b * positions, xi->grad.data() + b * p.channels * p.height * p.width);
            }
        });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvTranspose2dOptions options) {
    check_conv_args("conv_transpose2d", x, weight, bias, 0, 1);
    if (options.stride == 0) shape_error("conv_transpose2d", "stride must be positive");
    if (options.output_padding >= options.stride) {
        shape_error("conv_transpose2d", "output_padding must be smaller than stride");
    }
    const std::size_t batch = x.shape()[0], channels = x.shape()[1], height = x.shape()[2], width = x.shape()[3];
    const std::size_t out_ch = weight.shape()[1], kh = weight.shape()[2], kw = weight.shape()[3];
    const std::size_t span_h = (height - 1) * options.stride + kh + options.output_padding;
    const std::size_t span_w = (width - 1) * options.stride + kw + options.output_padding;
    if (span_h <= 2 * options.padding || span_w <= 2 * options.padding) {
        shape_error("conv_transpose2d", "padding too large for input " + shape_str(x.shape()));
    }
    const std::size_t out_h = span_h - 2 * options.padding, out_w = span_w - 2 * options.padding;
    const Patch p{out_ch, out_h, out_w, kh, kw, options.stride, options.padding, height, width};
    const std::size_t in_spatial = height * width;
    const std::size_t ld = batch * in_spatial;

    auto xmat = std::make_shared<RowMatrix>(ei(channels), ei(ld));
    to_channel_major(x.data().data(), batch, channels, in_spatial, xmat->data());
    CMap wmat(weight.data().data(), ei(channels), ei(p.rows()));
    RowMatrix col = wmat.transpose() * (*xmat);

    const std::size_t out_spatial = out_h * out_w;
    std::vector<double> out(batch * out_ch * out_spatial, 0.0);
    for (std::size_t b = 0; b < batch; ++b) col2im(p, col.data(), ld, b * in_spatial, out.data() + b * out_ch * out_spatial);
    if (bias.defined()) {
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t o = 0; o < out_ch; ++o) {
                double* d = out.data() + (b * out_ch + o) * out_spatial;
                for (std::size_t i = 0; i < out_spatial; ++i) d[i] += bias.data()[o];
            }
    }

    const bool record = wants_grad({&x, &weight, &bias});
    ImplPtr xi = x.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr;
    return finish(
        Tensor(Shape{batch, out_ch, out_h, out_w}, std::move(out)), record,
        [xi, wi, bi, xmat, p, batch, channels](const std::vector<double>& g) {
            const std::size_t in_spatial = p.positions();
            const std::size_t ld = batch * in_spatial;
            const std::size_t out_spatial = p.height * p.width;
            if (tracks(bi)) {
                bi->ensure_grad();
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t o = 0; o < p.channels; ++o) {
                        const double* s = g.data() + (b * p.channels + o) * out_spatial;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < out_spatial; ++i) acc += s[i];
                        bi->grad[o] += acc;
                    }
            }
            if (!tracks(wi) && !tracks(xi)) return;
            RowMatrix dcol(ei(p.rows()), ei(ld));
            for (std::size_t b = 0; b < batch; ++b)
                im2col(p, g.data() + b * p.channels * out_spatial, dcol.data(), ld, b * in_spatial);
            if (tracks(wi)) {
                wi->ensure_grad();
                MMap(wi->grad.data(), ei(channels), ei(p.rows())).noalias() += (*xmat) * dcol.transpose();
            }
            if (tracks(xi)) {
                xi->ensure_grad();
                RowMatrix dx = CMap(wi->data.data(), ei(channels), ei(p.rows())) * dcol;
                add_from_channel_major(dx.data(), batch, channels, in_spatial, xi->grad.data());
            }
        });
}

}  // namespace sfpa
