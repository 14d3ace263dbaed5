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

#include "sfpa/toydata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"
#include "sfpa/errors.hpp"

namespace sfpa::toydata {

using nlohmann::json;

namespace {

constexpr int kMaxAttempts = 100;
constexpr std::size_t kOcclusionSide = 10;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double qx = ax + t * dx - px, qy = ay + t * dy - py;
    return std::sqrt(qx * qx + qy * qy);
}

// Forward kinematics of one random pose; false if any joint leaves the frame.
bool sample_pose(const SkeletonSpec& spec, ImageSize image, std::mt19937_64& rng, Keypoints& out) {
    const std::size_t k = spec.num_joints();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> direction(k, 0.0);
    out = Keypoints(k);
    const double w = static_cast<double>(image.width), h = static_cast<double>(image.height);
    out.coords(0, 0) = spec.root_margin + unit(rng) * (w - 2.0 * spec.root_margin);
    out.coords(0, 1) = spec.root_margin + unit(rng) * (h - 2.0 * spec.root_margin);
    bool inside = true;
    for (std::size_t j = 1; j < k; ++j) {
        const auto p = static_cast<std::size_t>(spec.parents[j]);
        const double angle =
            deg2rad(spec.angle_min_deg[j] + unit(rng) * (spec.angle_max_deg[j] - spec.angle_min_deg[j]));
        direction[j] = (p == 0 ? 0.0 : direction[p]) + angle;
        const auto jj = static_cast<Eigen::Index>(j), pp = static_cast<Eigen::Index>(p);
        out.coords(jj, 0) = out.coords(pp, 0) + spec.bone_lengths[j] * std::cos(direction[j]);
        out.coords(jj, 1) = out.coords(pp, 1) + spec.bone_lengths[j] * std::sin(direction[j]);
        const double x = out.coords(jj, 0), y = out.coords(jj, 1);
        if (x < spec.joint_margin || y < spec.joint_margin || x >= w - spec.joint_margin ||
            y >= h - spec.joint_margin) {
            inside = false;
        }
    }
    return inside;
}

json skeleton_to_json(const SkeletonSpec& s) {
    return json{{"joint_names", s.joint_names},     {"parents", s.parents},
                {"bone_lengths", s.bone_lengths},   {"angle_min_deg", s.angle_min_deg},
                {"angle_max_deg", s.angle_max_deg}, {"groups", s.groups},
                {"root_margin", s.root_margin},     {"joint_margin", s.joint_margin},
                {"root_radius", s.root_radius}};
}

json style_to_json(const DomainStyle& s) {
    return json{{"name", s.name},
                {"line_width", s.line_width},
                {"noise_sigma", s.noise_sigma},
                {"texture_amplitude", s.texture_amplitude},
                {"gain", s.gain},
                {"occlusion_prob", s.occlusion_prob}};
}

[[noreturn]] void schema_error(const std::string& what) {
    throw LoadError(LoadError::Kind::kSchema, "schema error: " + what);
}

template <typename T>
T field(const json& j, const char* key) {
    if (!j.contains(key)) schema_error(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        schema_error(std::string("field '") + key + "': " + e.what());
    }
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError(LoadError::Kind::kIo, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        schema_error(path.filename().string() + ": " + e.what());
    }
}

}  // namespace

std::vector<std::string> SkeletonSpec::group_order() const {
    std::vector<std::string> order;
    for (const auto& g : groups)
        if (std::find(order.begin(), order.end(), g) == order.end()) order.push_back(g);
    return order;
}

void SkeletonSpec::validate() const {
    const std::size_t k = num_joints();
    if (k == 0) throw ContractViolation("SkeletonSpec: no joints");
    if (parents.size() != k || bone_lengths.size() != k || angle_min_deg.size() != k || angle_max_deg.size() != k ||
        groups.size() != k) {
        throw ContractViolation("SkeletonSpec: per-joint arrays must all have " + std::to_string(k) + " entries");
    }
    if (parents[0] != -1) throw ContractViolation("SkeletonSpec: joint 0 must be the root");
    for (std::size_t j = 1; j < k; ++j) {
        // Parents precede children, which also rules out cycles.
        if (parents[j] < 0 || static_cast<std::size_t>(parents[j]) >= j) {
            throw ContractViolation("SkeletonSpec: parent of joint " + std::to_string(j) + " must be an earlier joint");
        }
        if (!(bone_lengths[j] > 0.0)) throw ContractViolation("SkeletonSpec: bone lengths must be positive");
        if (angle_min_deg[j] > angle_max_deg[j]) throw ContractViolation("SkeletonSpec: empty angle range");
    }
    if (!(root_margin >= 0.0) || !(joint_margin >= 0.0) || !(root_radius >= 0.0)) {
        throw ContractViolation("SkeletonSpec: margins must be non-negative");
    }
}

SkeletonSpec default_skeleton() {
    SkeletonSpec s;
    s.joint_names = {"root", "elbow_left", "tip_left", "elbow_right", "tip_right"};
    s.parents = {-1, 0, 1, 0, 3};
    s.bone_lengths = {0.0, 15.0, 12.0, 15.0, 12.0};
    s.angle_min_deg = {0.0, 135.0, -75.0, -45.0, -75.0};
    s.angle_max_deg = {0.0, 225.0, 75.0, 45.0, 75.0};
    s.groups = {"proximal", "mid", "tip", "mid", "tip"};
    return s;
}

void DomainStyle::validate() const {
    if (!(line_width > 0.0) || !(noise_sigma >= 0.0) || !(texture_amplitude >= 0.0) || !(gain > 0.0 && gain <= 1.0) ||
        !(occlusion_prob >= 0.0 && occlusion_prob <= 1.0)) {
        throw ContractViolation("DomainStyle '" + name + "': parameter out of range");
    }
}

DomainStyle DomainStyle::source() { return DomainStyle{"source", 1.0, 0.0, 0.0, 1.0, 0.0}; }
DomainStyle DomainStyle::target() { return DomainStyle{"target", 2.0, 0.1, 0.2, 0.8, 0.0}; }
DomainStyle DomainStyle::unseen() { return DomainStyle{"unseen", 3.0, 0.05, 0.3, 0.7, 0.2}; }

std::vector<double> render_pose(const SkeletonSpec& spec, const Keypoints& kps, ImageSize image, double line_width) {
    std::vector<double> img(image.height * image.width, 0.0);
    const double half = line_width / 2.0 + 0.5;
    for (std::size_t r = 0; r < image.height; ++r) {
        const double py = static_cast<double>(r) + 0.5;
        for (std::size_t c = 0; c < image.width; ++c) {
            const double px = static_cast<double>(c) + 0.5;
            double v = 0.0;
            for (std::size_t j = 1; j < spec.num_joints(); ++j) {
                const auto p = static_cast<std::size_t>(spec.parents[j]);
                const double d = segment_distance(px, py, kps.coords(static_cast<Eigen::Index>(p), 0),
                                                  kps.coords(static_cast<Eigen::Index>(p), 1),
                                                  kps.coords(static_cast<Eigen::Index>(j), 0),
                                                  kps.coords(static_cast<Eigen::Index>(j), 1));
                v = std::max(v, half - d);
            }
            if (spec.root_radius > 0.0) {
                const double dx = px - kps.coords(0, 0), dy = py - kps.coords(0, 1);
                v = std::max(v, spec.root_radius + 0.5 - std::sqrt(dx * dx + dy * dy));
            }
            img[r * image.width + c] = std::clamp(v, 0.0, 1.0);
        }
    }
    return img;
}

Dataset generate(const SkeletonSpec& spec, const DomainStyle& style, std::size_t n, std::uint64_t seed,
                 const GenerateOptions& options) {
    if (n == 0) throw ContractViolation("generate: n must be positive");
    spec.validate();
    style.validate();
    Dataset data;
    data.skeleton = spec;
    data.style = style;
    data.seed = seed;
    data.image = options.image;
    data.channels = options.channels;
    data.samples.reserve(n);
    const std::size_t hw = options.image.height * options.image.width;
    for (std::size_t i = 0; i < n; ++i) {
        std::mt19937_64 rng(splitmix64(seed ^ splitmix64(i)));
        PoseSample sample;
        bool ok = false;
        for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) ok = sample_pose(spec, options.image, rng, sample.keypoints);
        if (!ok) {
            throw GenerationError("generate: sample " + std::to_string(i) + " has joints outside the image after " +
                                  std::to_string(kMaxAttempts) + " attempts");
        }
        const std::vector<double> line = render_pose(spec, sample.keypoints, options.image, style.line_width);

        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> noise(0.0, 1.0);
        const double fx = 0.1 + 0.4 * unit(rng), fy = 0.1 + 0.4 * unit(rng);
        const double phx = 2.0 * std::numbers::pi * unit(rng), phy = 2.0 * std::numbers::pi * unit(rng);
        const bool occlude = unit(rng) < style.occlusion_prob;
        const auto max_r = static_cast<double>(options.image.height - kOcclusionSide);
        const auto max_c = static_cast<double>(options.image.width - kOcclusionSide);
        const auto occ_r = static_cast<std::size_t>(unit(rng) * max_r);
        const auto occ_c = static_cast<std::size_t>(unit(rng) * max_c);

        std::vector<double> plane(hw);
        for (std::size_t r = 0; r < options.image.height; ++r) {
            for (std::size_t c = 0; c < options.image.width; ++c) {
                double v = style.gain * line[r * options.image.width + c];
                if (style.texture_amplitude > 0.0) {
                    const double tex = 0.5 + 0.25 * (std::sin(fx * static_cast<double>(c) + phx) +
                                                     std::sin(fy * static_cast<double>(r) + phy));
                    v += style.texture_amplitude * tex;
                }
                if (occlude && r >= occ_r && r < occ_r + kOcclusionSide && c >= occ_c && c < occ_c + kOcclusionSide) {
                    v = 0.0;
                }
                if (style.noise_sigma > 0.0) v += style.noise_sigma * noise(rng);
                plane[r * options.image.width + c] = std::clamp(v, 0.0, 1.0);
            }
        }
        sample.image.reserve(options.channels * hw);
        for (std::size_t ch = 0; ch < options.channels; ++ch) sample.image.insert(sample.image.end(), plane.begin(), plane.end());
        data.samples.push_back(std::move(sample));
    }
    return data;
}

Tensor batch_images(const Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ContractViolation("batch_images: empty index list");
    const std::size_t per = data.image_numel();
    std::vector<double> values;
    values.reserve(indices.size() * per);
    for (auto i : indices) {
        const auto& img = data.samples.at(i).image;
        values.insert(values.end(), img.begin(), img.end());
    }
    return Tensor(Shape{indices.size(), data.channels, data.image.height, data.image.width}, std::move(values));
}

Tensor batch_heatmaps(const Dataset& data, std::span<const std::size_t> indices, std::size_t heatmap_size,
                      double sigma) {
    if (indices.empty()) throw ContractViolation("batch_heatmaps: empty index list");
    const std::size_t k = data.skeleton.num_joints();
    std::vector<double> values;
    values.reserve(indices.size() * k * heatmap_size * heatmap_size);
    for (auto i : indices) {
        const HeatmapSet hm = encode(data.samples.at(i).keypoints, data.image, heatmap_size, heatmap_size, sigma);
        values.insert(values.end(), hm.maps.data().begin(), hm.maps.data().end());
    }
    return Tensor(Shape{indices.size(), k, heatmap_size, heatmap_size}, std::move(values));
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json meta{{"format", "sfpa-dataset"},
              {"version", 1},
              {"count", data.size()},
              {"seed", data.seed},
              {"image", {{"channels", data.channels}, {"height", data.image.height}, {"width", data.image.width}}},
              {"skeleton", skeleton_to_json(data.skeleton)},
              {"style", style_to_json(data.style)}};
    {
        std::ofstream out(dir / "meta.json");
        if (!out) throw LoadError(LoadError::Kind::kIo, "cannot write " + (dir / "meta.json").string());
        out << meta.dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "images.bin", std::ios::binary | std::ios::trunc);
        if (!out) throw LoadError(LoadError::Kind::kIo, "cannot write " + (dir / "images.bin").string());
        std::vector<char> buf(sizeof(double));
        for (const auto& s : data.samples) {
            for (double v : s.image) {
                const auto bits = std::bit_cast<std::uint64_t>(v);
                for (std::size_t b = 0; b < sizeof(double); ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
                out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            }
        }
    }
    json samples = json::array();
    for (const auto& s : data.samples) {
        json kps = json::array();
        json vis = json::array();
        for (std::size_t j = 0; j < s.keypoints.size(); ++j) {
            kps.push_back({s.keypoints.coords(static_cast<Eigen::Index>(j), 0),
                           s.keypoints.coords(static_cast<Eigen::Index>(j), 1)});
            vis.push_back(static_cast<bool>(s.keypoints.visible[j]));
        }
        samples.push_back({{"keypoints", kps}, {"visible", vis}});
    }
    std::ofstream out(dir / "annotations.json");
    if (!out) throw LoadError(LoadError::Kind::kIo, "cannot write " + (dir / "annotations.json").string());
    out << json{{"samples", samples}}.dump() << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const json meta = read_json(dir / "meta.json");
    Dataset data;
    const auto count = field<std::size_t>(meta, "count");
    data.seed = field<std::uint64_t>(meta, "seed");
    const json image = field<json>(meta, "image");
    data.channels = field<std::size_t>(image, "channels");
    data.image.height = field<std::size_t>(image, "height");
    data.image.width = field<std::size_t>(image, "width");
    const json sk = field<json>(meta, "skeleton");
    data.skeleton.joint_names = field<std::vector<std::string>>(sk, "joint_names");
    data.skeleton.parents = field<std::vector<int>>(sk, "parents");
    data.skeleton.bone_lengths = field<std::vector<double>>(sk, "bone_lengths");
    data.skeleton.angle_min_deg = field<std::vector<double>>(sk, "angle_min_deg");
    data.skeleton.angle_max_deg = field<std::vector<double>>(sk, "angle_max_deg");
    data.skeleton.groups = field<std::vector<std::string>>(sk, "groups");
    data.skeleton.root_margin = field<double>(sk, "root_margin");
    data.skeleton.joint_margin = field<double>(sk, "joint_margin");
    data.skeleton.root_radius = field<double>(sk, "root_radius");
    try {
        data.skeleton.validate();
    } catch (const ContractViolation& e) {
        schema_error(e.what());
    }
    const json st = field<json>(meta, "style");
    data.style.name = field<std::string>(st, "name");
    data.style.line_width = field<double>(st, "line_width");
    data.style.noise_sigma = field<double>(st, "noise_sigma");
    data.style.texture_amplitude = field<double>(st, "texture_amplitude");
    data.style.gain = field<double>(st, "gain");
    data.style.occlusion_prob = field<double>(st, "occlusion_prob");

    const std::size_t per = data.image_numel();
    const auto bin_path = dir / "images.bin";
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(bin_path, ec);
    if (ec) throw LoadError(LoadError::Kind::kIo, "cannot stat " + bin_path.string());
    if (bytes != count * per * sizeof(double)) {
        throw LoadError(LoadError::Kind::kPayloadSizeMismatch,
                        "payload size mismatch: images.bin has " + std::to_string(bytes) + " bytes, meta.json implies " +
                            std::to_string(count * per * sizeof(double)));
    }

    const json ann = read_json(dir / "annotations.json");
    const json samples = field<json>(ann, "samples");
    if (!samples.is_array() || samples.size() != count) {
        schema_error("annotations.json lists " + std::to_string(samples.is_array() ? samples.size() : 0) +
                     " samples, meta.json count is " + std::to_string(count));
    }
    const std::size_t k = data.skeleton.num_joints();
    std::ifstream bin(bin_path, std::ios::binary);
    std::vector<unsigned char> buf(per * sizeof(double));
    data.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto& s = data.samples[i];
        const auto coords = field<std::vector<std::vector<double>>>(samples[i], "keypoints");
        const auto vis = field<std::vector<bool>>(samples[i], "visible");
        if (coords.size() != k || vis.size() != k) {
            schema_error("sample " + std::to_string(i) + " has " + std::to_string(coords.size()) +
                         " keypoints, skeleton has " + std::to_string(k));
        }
        s.keypoints = Keypoints(k);
        for (std::size_t j = 0; j < k; ++j) {
            if (coords[j].size() != 2) schema_error("keypoint entries must be [x, y] pairs");
            s.keypoints.coords(static_cast<Eigen::Index>(j), 0) = coords[j][0];
            s.keypoints.coords(static_cast<Eigen::Index>(j), 1) = coords[j][1];
            s.keypoints.visible[j] = vis[j];
        }
        bin.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        s.image.resize(per);
        for (std::size_t p = 0; p < per; ++p) {
            std::uint64_t bits = 0;
            for (std::size_t b = 0; b < sizeof(double); ++b) bits |= static_cast<std::uint64_t>(buf[p * 8 + b]) << (8 * b);
            s.image[p] = std::bit_cast<double>(bits);
        }
    }
    return data;
}

}  // namespace sfpa::toydata
