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

#include <algorithm>
#include <fstream>

#include "sfpa/errors.hpp"
#include "sfpa/toydata.hpp"
#include "test_util.hpp"

using namespace sfpa;
using namespace sfpa::toydata;
using sfpa::testing::TempDir;

namespace {

void expect_identical(const Dataset& a, const Dataset& b) {
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(a.skeleton, b.skeleton);
    EXPECT_EQ(a.style, b.style);
    EXPECT_EQ(a.seed, b.seed);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.samples[i].image, b.samples[i].image);
        EXPECT_EQ(a.samples[i].keypoints.coords, b.samples[i].keypoints.coords);
        EXPECT_EQ(a.samples[i].keypoints.visible, b.samples[i].keypoints.visible);
    }
}

LoadError::Kind load_kind(const std::filesystem::path& dir, std::string* message = nullptr) {
    try {
        load_dataset(dir);
    } catch (const LoadError& e) {
        if (message) *message = e.what();
        return e.kind();
    }
    ADD_FAILURE() << "load succeeded";
    return LoadError::Kind::kIo;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST(Skeleton, DefaultLayout) {
    const SkeletonSpec s = default_skeleton();
    EXPECT_EQ(s.num_joints(), 5u);
    EXPECT_EQ(s.parents, (std::vector<int>{-1, 0, 1, 0, 3}));
    EXPECT_EQ(s.group_order(), (std::vector<std::string>{"proximal", "mid", "tip"}));
    EXPECT_NO_THROW(s.validate());
}

TEST(Skeleton, ValidateRejectsBadTrees) {
    SkeletonSpec cyc = default_skeleton();
    cyc.parents = {-1, 2, 1, 0, 3};
    EXPECT_THROW(cyc.validate(), ContractViolation);
    SkeletonSpec bone = default_skeleton();
    bone.bone_lengths[2] = 0.0;
    EXPECT_THROW(bone.validate(), ContractViolation);
    SkeletonSpec sizes = default_skeleton();
    sizes.groups.pop_back();
    EXPECT_THROW(sizes.validate(), ContractViolation);
}

TEST(Generate, SameSeedBitIdentical) {
    const Dataset a = generate(default_skeleton(), DomainStyle::target(), 12, 5);
    const Dataset b = generate(default_skeleton(), DomainStyle::target(), 12, 5);
    expect_identical(a, b);
    const Dataset c = generate(default_skeleton(), DomainStyle::target(), 12, 6);
    EXPECT_NE(a.samples[0].image, c.samples[0].image);
}

TEST(Generate, PrefixStable) {
    const Dataset a = generate(default_skeleton(), DomainStyle::source(), 4, 9);
    const Dataset b = generate(default_skeleton(), DomainStyle::source(), 10, 9);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.samples[i].image, b.samples[i].image);
}

TEST(Generate, CleanRenderMatchesRenderer) {
    const SkeletonSpec s = default_skeleton();
    const Dataset d = generate(s, DomainStyle::source(), 8, 1);
    for (const auto& smp : d.samples) {
        const auto ref = render_pose(s, smp.keypoints, d.image, 1.0);
        EXPECT_EQ(smp.image, ref);
        EXPECT_EQ(*std::max_element(smp.image.begin(), smp.image.end()), 1.0);
        EXPECT_GE(*std::min_element(smp.image.begin(), smp.image.end()), 0.0);
    }
}

TEST(Generate, JointsInsideFrameAndBonesHaveLength) {
    const SkeletonSpec s = default_skeleton();
    const Dataset d = generate(s, DomainStyle::unseen(), 50, 2);
    for (const auto& smp : d.samples) {
        for (std::size_t j = 0; j < s.num_joints(); ++j) {
            const auto p = smp.keypoints.point(j);
            EXPECT_GE(p.x(), s.joint_margin);
            EXPECT_LE(p.x(), 64.0 - s.joint_margin);
            EXPECT_GE(p.y(), s.joint_margin);
            EXPECT_LE(p.y(), 64.0 - s.joint_margin);
            if (s.parents[j] >= 0) {
                const double len = (p - smp.keypoints.point(static_cast<std::size_t>(s.parents[j]))).norm();
                EXPECT_NEAR(len, s.bone_lengths[j], 1e-9);
            }
        }
        for (double v : smp.image) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Generate, HeatmapRoundTripWithinHalfCell) {
    const Dataset d = generate(default_skeleton(), DomainStyle::source(), 20, 3);
    std::vector<std::size_t> idx(d.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const Tensor maps = batch_heatmaps(d, idx, 16, 1.0);
    ASSERT_EQ(maps.shape(), (Shape{20, 5, 16, 16}));
    const auto decoded = decode_batch(maps, d.image);
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            EXPECT_LE(std::abs(decoded[i].coords(j, 0) - d.samples[i].keypoints.coords(j, 0)), 2.0);
            EXPECT_LE(std::abs(decoded[i].coords(j, 1) - d.samples[i].keypoints.coords(j, 1)), 2.0);
        }
    EXPECT_EQ(batch_images(d, idx).shape(), (Shape{20, 1, 64, 64}));
}

TEST(Generate, ImpossibleSkeletonFails) {
    SkeletonSpec s = default_skeleton();
    s.bone_lengths = {0, 200, 12, 15, 12};
    EXPECT_THROW(generate(s, DomainStyle::source(), 1, 0), GenerationError);
}

TEST(Generate, MultiChannelReplicates) {
    GenerateOptions opt;
    opt.channels = 3;
    const Dataset d = generate(default_skeleton(), DomainStyle::target(), 2, 4, opt);
    const auto& img = d.samples[0].image;
    ASSERT_EQ(img.size(), 3u * 64 * 64);
    EXPECT_TRUE(std::equal(img.begin(), img.begin() + 4096, img.begin() + 4096));
}

TEST(DatasetIo, RoundTripBitIdentical) {
    TempDir dir("ds");
    const Dataset d = generate(default_skeleton(), DomainStyle::target(), 6, 8);
    save_dataset(d, dir.path());
    expect_identical(d, load_dataset(dir.path()));
    EXPECT_EQ(std::filesystem::file_size(dir / "images.bin"), 6u * 4096 * 8);
}

TEST(DatasetIo, TruncatedPayload) {
    TempDir dir("ds_trunc");
    save_dataset(generate(default_skeleton(), DomainStyle::source(), 3, 1), dir.path());
    std::filesystem::resize_file(dir / "images.bin", 3 * 4096 * 8 - 8);
    std::string msg;
    EXPECT_EQ(load_kind(dir.path(), &msg), LoadError::Kind::kPayloadSizeMismatch);
    EXPECT_NE(msg.find("payload size mismatch"), std::string::npos);
}

TEST(DatasetIo, KeypointCountInconsistent) {
    TempDir dir("ds_schema");
    save_dataset(generate(default_skeleton(), DomainStyle::source(), 2, 1), dir.path());
    std::string ann = slurp(dir / "annotations.json");
    // Drop the last keypoint of the first sample.
    const auto pos = ann.find("]]");
    ASSERT_NE(pos, std::string::npos);
    const auto start = ann.rfind(",[", pos);
    ann.erase(start, pos + 1 - start);
    std::ofstream(dir / "annotations.json", std::ios::binary) << ann;
    std::string msg;
    EXPECT_EQ(load_kind(dir.path(), &msg), LoadError::Kind::kSchema);
    EXPECT_NE(msg.find("schema error"), std::string::npos);
}

TEST(DatasetIo, MissingDirectoryAndBadMeta) {
    TempDir dir("ds_missing");
    EXPECT_EQ(load_kind(dir / "nope"), LoadError::Kind::kIo);
    save_dataset(generate(default_skeleton(), DomainStyle::source(), 1, 1), dir.path());
    std::ofstream(dir / "meta.json") << "{\"format\": \"other\"}";
    EXPECT_EQ(load_kind(dir.path()), LoadError::Kind::kSchema);
}
