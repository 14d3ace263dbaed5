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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sfpa/errors.hpp"
#include "sfpa/tensorgrad/checkpoint_io.hpp"
#include "sfpa/tensorgrad/grad_check.hpp"
#include "sfpa/tensorgrad/ops.hpp"
#include "test_util.hpp"

using namespace sfpa;
using sfpa::testing::off_kink_tensor;
using sfpa::testing::random_tensor;
using sfpa::testing::to_vector;

namespace {

constexpr double kGradTol = 1e-4;

// Contracts an arbitrary-shaped output with fixed random weights so every
// output coordinate contributes to the scalar being differentiated.
Tensor contract(const Tensor& y, std::uint64_t seed = 99) { return sum(mul(y, random_tensor(y.shape(), seed))); }

// Direct-loop convolution used as the reference for the im2col path.
std::vector<double> naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                                 std::size_t pad) {
    const auto B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const auto O = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    const auto Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
    std::vector<double> out(B * O * Ho * Wo, 0.0);
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t i = 0; i < Ho; ++i)
                for (std::size_t j = 0; j < Wo; ++j) {
                    double acc = b.defined() ? b.at(o) : 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ki = 0; ki < kh; ++ki)
                            for (std::size_t kj = 0; kj < kw; ++kj) {
                                const long y = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                                const long xx = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                                if (y < 0 || xx < 0 || y >= static_cast<long>(H) || xx >= static_cast<long>(W))
                                    continue;
                                acc += x.at(((n * C + c) * H + y) * W + xx) * w.at(((o * C + c) * kh + ki) * kw + kj);
                            }
                    out[((n * O + o) * Ho + i) * Wo + j] = acc;
                }
    return out;
}

// Scatter definition of the transposed convolution.
std::vector<double> naive_conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                                           std::size_t pad, std::size_t out_pad) {
    const auto B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const auto O = w.shape()[1], kh = w.shape()[2], kw = w.shape()[3];
    const auto Ho = (H - 1) * stride - 2 * pad + kh + out_pad, Wo = (W - 1) * stride - 2 * pad + kw + out_pad;
    std::vector<double> out(B * O * Ho * Wo, 0.0);
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t i = 0; i < Ho * Wo; ++i) out[(n * O + o) * Ho * Wo + i] = b.defined() ? b.at(o) : 0.0;
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j)
                    for (std::size_t o = 0; o < O; ++o)
                        for (std::size_t ki = 0; ki < kh; ++ki)
                            for (std::size_t kj = 0; kj < kw; ++kj) {
                                const long y = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                                const long xx = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                                if (y < 0 || xx < 0 || y >= static_cast<long>(Ho) || xx >= static_cast<long>(Wo))
                                    continue;
                                out[((n * O + o) * Ho + y) * Wo + xx] +=
                                    x.at(((n * C + c) * H + i) * W + j) * w.at(((c * O + o) * kh + ki) * kw + kj);
                            }
    return out;
}

}  // namespace

TEST(Tensor, ShapeInvariants) {
    Tensor t(Shape{2, 3}, 1.5);
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(t.dim(-1), 3u);
    EXPECT_FALSE(t.has_grad());
    EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1.0}), ContractViolation);
    EXPECT_THROW(Tensor(Shape{0, 2}), ContractViolation);
}

TEST(ForwardPrimitives, ReluDefinition) {
    Tensor y = relu(Tensor(Shape{3}, {-1.0, 0.0, 2.0}));
    EXPECT_EQ(to_vector(y), (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(ForwardPrimitives, SoftmaxUniform) {
    Tensor y = softmax(Tensor(Shape{4}, 0.0), 0);
    for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(ForwardPrimitives, SoftmaxNormalizedAndPositive) {
    Tensor x = random_tensor({3, 5, 4}, 7, -20.0, 20.0);
    for (int axis : {0, 1, 2}) {
        Tensor y = softmax(x, axis);
        Tensor totals = sum(y, axis);
        for (double v : totals.data()) EXPECT_NEAR(v, 1.0, 1e-12);
        for (double v : y.data()) EXPECT_GT(v, 0.0);
        Tensor ly = log_softmax(x, axis);
        for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(std::exp(ly.at(i)), y.at(i), 1e-12);
    }
}

TEST(ForwardPrimitives, IdentityKernelConvIsIdentity) {
    Tensor img = random_tensor({2, 3, 5, 6}, 3);
    std::vector<double> w(9, 0.0);
    for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
    Tensor y = conv2d(img, Tensor(Shape{3, 3, 1, 1}, w), Tensor());
    EXPECT_EQ(y.shape(), img.shape());
    EXPECT_EQ(to_vector(y), to_vector(img));
}

TEST(ForwardPrimitives, Conv2dMatchesDirectLoops) {
    for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
        Tensor x = random_tensor({2, 3, 7, 6}, 11);
        Tensor w = random_tensor({4, 3, 3, 3}, 12);
        Tensor b = random_tensor({4}, 13);
        Tensor y = conv2d(x, w, b, {stride, pad});
        auto ref = naive_conv2d(x, w, b, stride, pad);
        ASSERT_EQ(y.numel(), ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.at(i), ref[i], 1e-12);
    }
}

TEST(ForwardPrimitives, ConvTransposeMatchesScatterDefinition) {
    struct Case {
        std::size_t k, stride, pad, out_pad;
    };
    for (auto c : {Case{4, 2, 1, 0}, Case{3, 1, 1, 0}, Case{3, 2, 1, 1}, Case{2, 2, 0, 0}}) {
        Tensor x = random_tensor({2, 3, 4, 5}, 21);
        Tensor w = random_tensor({3, 2, c.k, c.k}, 22);
        Tensor b = random_tensor({2}, 23);
        Tensor y = conv_transpose2d(x, w, b, {c.stride, c.pad, c.out_pad});
        auto ref = naive_conv_transpose2d(x, w, b, c.stride, c.pad, c.out_pad);
        ASSERT_EQ(y.numel(), ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.at(i), ref[i], 1e-12);
    }
}

TEST(ForwardPrimitives, MaxTiesPickLowestIndex) {
    Tensor x(Shape{10}, {0, 0, 0, 0, 0, 3, 0, 0, 0, 3});
    auto r = max_with_argmax(x, 0);
    EXPECT_EQ(r.indices.at(0), 5u);
    EXPECT_DOUBLE_EQ(r.values.item(), 3.0);
}

TEST(ForwardPrimitives, ShapeErrorsNameThePrimitive) {
    try {
        add(Tensor(Shape{2, 3}), Tensor(Shape{2}));
        FAIL() << "expected ContractViolation";
    } catch (const ContractViolation& e) {
        EXPECT_NE(std::string(e.what()).find("add"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("(2, 3)"), std::string::npos);
    }
    EXPECT_THROW(matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), ContractViolation);
    EXPECT_THROW(conv2d(Tensor(Shape{1, 2, 4, 4}), Tensor(Shape{1, 3, 3, 3}), Tensor()), ContractViolation);
    EXPECT_THROW(reshape(Tensor(Shape{2, 3}), Shape{4}), ContractViolation);
    EXPECT_THROW(slice(Tensor(Shape{4}), 0, 2, 6), ContractViolation);
}

TEST(ForwardPrimitives, DomainGuards) {
    EXPECT_THROW(log(Tensor(Shape{2}, {1.0, 0.0})), DomainError);
    EXPECT_THROW(log(Tensor(Shape{1}, {-2.0})), DomainError);
    EXPECT_THROW(div(Tensor(Shape{2}, 1.0), Tensor(Shape{2}, {1.0, 0.0})), DomainError);
}

TEST(ForwardPrimitives, SuffixBroadcast) {
    Tensor a(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b(Shape{3}, {10, 20, 30});
    EXPECT_EQ(to_vector(add(a, b)), (std::vector<double>{11, 22, 33, 14, 25, 36}));
    EXPECT_EQ(to_vector(mul(a, Tensor::scalar(2.0))), (std::vector<double>{2, 4, 6, 8, 10, 12}));
}

TEST(Backward, LinearSum) {
    Tensor x(Shape{3}, {0.3, -1.0, 2.0});
    x.set_requires_grad(true);
    backward(sum(x));
    EXPECT_EQ(to_vector(Tensor(Shape{3}, {x.grad().begin(), x.grad().end()})), (std::vector<double>{1, 1, 1}));
}

TEST(Backward, QuadraticAndDoubleUse) {
    Tensor x(Shape{2}, {2.0, -3.0});
    x.set_requires_grad(true);
    backward(sum(mul(x, x)));
    EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], -6.0);
    EXPECT_TRUE(Tape::current().empty());

    // Two separate references to the same leaf accumulate.
    x.zero_grad();
    Tensor y = add(sum(x), sum(scale(x, 1.0)));
    backward(y);
    EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
}

TEST(Backward, RejectsNonScalarAndUntrackedLoss) {
    Tensor x(Shape{3}, 1.0);
    x.set_requires_grad(true);
    Tensor y = mul(x, x);
    EXPECT_THROW(backward(y), ContractViolation);
    Tape::current().clear();
    EXPECT_THROW(backward(sum(Tensor(Shape{3}, 1.0))), ContractViolation);
}

TEST(Backward, NoGradGuardSkipsTape) {
    Tensor x(Shape{3}, 1.0);
    x.set_requires_grad(true);
    {
        NoGradGuard guard;
        Tensor y = sum(mul(x, x));
        EXPECT_FALSE(y.requires_grad());
    }
    EXPECT_TRUE(Tape::current().empty());
}

TEST(GradCheck, ExpSum) {
    Tensor x = random_tensor({8}, 5);
    EXPECT_LT(grad_check([](const Tensor& t) { return sum(exp(t)); }, x), 1e-6);
}

// Every primitive against central finite differences at eps = 1e-5.
TEST(GradCheck, EveryPrimitive) {
    const Tensor a = off_kink_tensor({2, 3, 4}, 1);
    const Tensor b = off_kink_tensor({2, 3, 4}, 2);
    const Tensor suffix = off_kink_tensor({3, 4}, 3);
    const Tensor positive = random_tensor({2, 3, 4}, 4, 0.5, 2.0);

    auto check = [](const char* name, const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
        const double err = grad_check(f, x);
        EXPECT_LT(err, kGradTol) << name;
    };
    check("add", [&](const Tensor& t) { return contract(add(t, b)); }, a);
    check("add-broadcast", [&](const Tensor& t) { return contract(add(a, t)); }, suffix);
    check("sub", [&](const Tensor& t) { return contract(sub(b, t)); }, a);
    check("mul", [&](const Tensor& t) { return contract(mul(t, b)); }, a);
    check("mul-broadcast", [&](const Tensor& t) { return contract(mul(a, t)); }, suffix);
    check("div-num", [&](const Tensor& t) { return contract(div(t, positive)); }, a);
    check("div-den", [&](const Tensor& t) { return contract(div(a, t)); }, positive);
    check("scale", [&](const Tensor& t) { return contract(add_scalar(scale(t, -2.5), 0.7)); }, a);
    check("relu", [&](const Tensor& t) { return contract(relu(t)); }, a);
    check("exp", [&](const Tensor& t) { return contract(exp(t)); }, a);
    check("log", [&](const Tensor& t) { return contract(log(t)); }, positive);
    for (int axis : {0, 1, -1}) {
        check("softmax", [&](const Tensor& t) { return contract(softmax(t, axis)); }, a);
        check("log_softmax", [&](const Tensor& t) { return contract(log_softmax(t, axis)); }, a);
        check("sum-axis", [&](const Tensor& t) { return contract(sum(t, axis)); }, a);
        check("mean-axis", [&](const Tensor& t) { return contract(mean(t, axis)); }, a);
        check("max", [&](const Tensor& t) { return contract(max_with_argmax(t, axis).values); }, a);
        check("norm", [&](const Tensor& t) { return contract(norm(t, axis)); }, a);
    }
    check("mean", [&](const Tensor& t) { return mul(mean(t), mean(t)); }, a);
    check("matmul-a", [&](const Tensor& t) { return contract(matmul(t, transpose(b))); }, a);
    check("matmul-b", [&](const Tensor& t) { return contract(matmul(a, transpose(t))); }, b);
    check("matmul-shared", [&](const Tensor& t) { return contract(matmul(a, t)); }, off_kink_tensor({4, 5}, 6));
    std::vector<bool> mask(a.numel());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i % 3) != 1;
    check("masked_select", [&](const Tensor& t) { return contract(masked_select(t, mask)); }, a);
    check("stack", [&](const Tensor& t) {
        std::vector<Tensor> parts{t, b, t};
        return contract(stack(parts));
    }, a);
    check("reshape", [&](const Tensor& t) { return contract(reshape(t, {6, 4})); }, a);
    check("slice", [&](const Tensor& t) { return contract(slice(t, 1, 1, 3)); }, a);

    const Tensor img = off_kink_tensor({2, 3, 6, 6}, 7);
    const Tensor w = off_kink_tensor({4, 3, 3, 3}, 8);
    const Tensor bias = off_kink_tensor({4}, 9);
    check("conv2d-x", [&](const Tensor& t) { return contract(conv2d(t, w, bias, {2, 1})); }, img);
    check("conv2d-w", [&](const Tensor& t) { return contract(conv2d(img, t, bias, {2, 1})); }, w);
    check("conv2d-b", [&](const Tensor& t) { return contract(conv2d(img, w, t, {1, 1})); }, bias);
    const Tensor tw = off_kink_tensor({3, 2, 4, 4}, 10);
    const Tensor tb = off_kink_tensor({2}, 11);
    check("deconv-x", [&](const Tensor& t) { return contract(conv_transpose2d(t, tw, tb, {2, 1, 0})); }, img);
    check("deconv-w", [&](const Tensor& t) { return contract(conv_transpose2d(img, t, tb, {2, 1, 0})); }, tw);
    check("deconv-b", [&](const Tensor& t) { return contract(conv_transpose2d(img, tw, t, {2, 1, 0})); }, tb);
}

TEST(Backward, DeterministicReplay) {
    auto run = [] {
        Tensor x = random_tensor({2, 3, 8, 8}, 42);
        Tensor w = random_tensor({4, 3, 3, 3}, 43);
        w.set_requires_grad(true);
        Tensor y = relu(conv2d(x, w, Tensor(), {2, 1}));
        backward(sum(mul(softmax(reshape(y, {2, 64}), 1), reshape(y, {2, 64}))));
        return to_vector(Tensor(w.shape(), {w.grad().begin(), w.grad().end()}));
    };
    EXPECT_EQ(run(), run());
}

TEST(CheckpointIo, RoundTripIsBitIdentical) {
    std::vector<NamedTensor> recs{{"G.conv1.weight", random_tensor({4, 1, 3, 3}, 1)},
                                  {"F.head.bias", random_tensor({5}, 2)}};
    std::stringstream buf;
    write_tensor_records(buf, recs);
    auto back = read_tensor_records(buf);
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].name, recs[i].name);
        EXPECT_EQ(back[i].tensor.shape(), recs[i].tensor.shape());
        EXPECT_EQ(to_vector(back[i].tensor), to_vector(recs[i].tensor));
    }
}

TEST(CheckpointIo, LayoutAndErrors) {
    std::stringstream buf;
    write_tensor_records(buf, {{"ab", Tensor(Shape{1}, {1.0})}});
    const std::string bytes = buf.str();
    // magic(5) + count(4) + len(4) + "ab"(2) + rank(4) + dim(4) + f64(8)
    ASSERT_EQ(bytes.size(), 31u);
    EXPECT_EQ(bytes.substr(0, 5), "SFPA1");
    EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 1u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[30]), 0x3Fu);  // 1.0 = 0x3FF0000000000000 LE

    std::stringstream bad("SFPB1....");
    try {
        read_tensor_records(bad);
        FAIL();
    } catch (const LoadError& e) {
        EXPECT_EQ(e.kind(), LoadError::Kind::kBadMagic);
    }
    std::stringstream truncated(bytes.substr(0, 27));
    try {
        read_tensor_records(truncated);
        FAIL();
    } catch (const LoadError& e) {
        EXPECT_EQ(e.kind(), LoadError::Kind::kTruncated);
    }
}
