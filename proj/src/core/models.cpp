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

#include "sfpa/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <random>

#include "sfpa/errors.hpp"
#include "sfpa/tensorgrad/ops.hpp"

namespace sfpa {

namespace {

Tensor he_normal(Shape shape, double fan_in, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = dist(rng);
    Tensor t(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    return t;
}

Tensor zero_bias(std::size_t n) {
    Tensor t(Shape{n}, 0.0);
    t.set_requires_grad(true);
    return t;
}

}  // namespace

std::size_t ArchConfig::upsampling_blocks() const {
    std::size_t res = image_size >> extractor_channels.size();
    std::size_t n = 0;
    while (res < heatmap_size) {
        res *= 2;
        ++n;
    }
    return n;
}

void ArchConfig::validate() const {
    if (in_channels == 0 || image_size == 0 || num_keypoints == 0 || heatmap_size == 0) {
        throw ContractViolation("ArchConfig: sizes must be positive");
    }
    if (extractor_channels.empty() || regressor_channels.empty()) {
        throw ContractViolation("ArchConfig: extractor and regressor need at least one block each");
    }
    for (auto c : extractor_channels)
        if (c == 0) throw ContractViolation("ArchConfig: zero extractor channels");
    for (auto c : regressor_channels)
        if (c == 0) throw ContractViolation("ArchConfig: zero regressor channels");
    const std::size_t down = std::size_t{1} << extractor_channels.size();
    if (image_size % down != 0) {
        throw ContractViolation("ArchConfig: image_size " + std::to_string(image_size) + " not divisible by " +
                                std::to_string(down));
    }
    std::size_t res = image_size / down;
    const std::size_t ups = upsampling_blocks();
    if ((res << ups) != heatmap_size || ups > regressor_channels.size()) {
        throw ContractViolation("ArchConfig: heatmap_size " + std::to_string(heatmap_size) +
                                " is not reachable from feature resolution " + std::to_string(res));
    }
}

PoseNet::PoseNet(ArchConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    std::size_t in = config_.in_channels;
    for (std::size_t i = 0; i < config_.extractor_channels.size(); ++i) {
        const std::size_t out = config_.extractor_channels[i];
        const std::string base = "G.conv" + std::to_string(i + 1);
        extractor_.push_back({base + ".weight", he_normal({out, in, 3, 3}, static_cast<double>(in * 9), rng)});
        extractor_.push_back({base + ".bias", zero_bias(out)});
        in = out;
    }
    const std::size_t ups = config_.upsampling_blocks();
    for (std::size_t i = 0; i < config_.regressor_channels.size(); ++i) {
        const std::size_t out = config_.regressor_channels[i];
        const std::string base = "F.deconv" + std::to_string(i + 1);
        // Stride-2 blocks (4x4 kernels) see about a quarter of the kernel per output pixel.
        const bool up = i < ups;
        const double fan_in = up ? static_cast<double>(in * 4) : static_cast<double>(in * 9);
        const std::size_t k = up ? 4 : 3;
        regressor_.push_back({base + ".weight", he_normal({in, out, k, k}, fan_in, rng)});
        regressor_.push_back({base + ".bias", zero_bias(out)});
        in = out;
    }
    regressor_.push_back(
        {"F.head.weight", he_normal({config_.num_keypoints, in, 1, 1}, static_cast<double>(in), rng)});
    regressor_.push_back({"F.head.bias", zero_bias(config_.num_keypoints)});
}

Tensor PoseNet::extract(const Tensor& images) const {
    if (images.rank() != 4 || images.dim(1) != config_.in_channels || images.dim(2) != config_.image_size ||
        images.dim(3) != config_.image_size) {
        throw ContractViolation("PoseNet: expected input (B, " + std::to_string(config_.in_channels) + ", " +
                                std::to_string(config_.image_size) + ", " + std::to_string(config_.image_size) +
                                "), got " + shape_str(images.shape()));
    }
    Tensor h = images;
    for (std::size_t i = 0; i < extractor_.size(); i += 2) {
        h = relu(conv2d(h, extractor_[i].tensor, extractor_[i + 1].tensor, {2, 1}));
    }
    return h;
}

Tensor PoseNet::regress(const Tensor& features) const {
    Tensor h = features;
    const std::size_t ups = config_.upsampling_blocks();
    const std::size_t blocks = config_.regressor_channels.size();
    for (std::size_t i = 0; i < blocks; ++i) {
        const ConvTranspose2dOptions opts = i < ups ? ConvTranspose2dOptions{2, 1, 0} : ConvTranspose2dOptions{1, 1, 0};
        h = relu(conv_transpose2d(h, regressor_[2 * i].tensor, regressor_[2 * i + 1].tensor, opts));
    }
    return conv2d(h, regressor_[2 * blocks].tensor, regressor_[2 * blocks + 1].tensor);
}

std::vector<Tensor> PoseNet::group_tensors(ParamGroup g) const {
    std::vector<Tensor> out;
    for (const auto& p : group(g)) out.push_back(p.tensor);
    return out;
}

std::vector<NamedTensor> PoseNet::parameters() const {
    std::vector<NamedTensor> all = extractor_;
    all.insert(all.end(), regressor_.begin(), regressor_.end());
    return all;
}

void PoseNet::set_trainable(ParamGroup g, bool trainable) {
    for (auto& p : group(g)) {
        p.tensor.set_requires_grad(trainable);
        if (!trainable) p.tensor.zero_grad();
    }
}

void PoseNet::set_trainable(bool trainable) {
    set_trainable(ParamGroup::kExtractor, trainable);
    set_trainable(ParamGroup::kRegressor, trainable);
}

void PoseNet::zero_grad() {
    for (auto& p : extractor_) p.tensor.zero_grad();
    for (auto& p : regressor_) p.tensor.zero_grad();
}

PoseNet PoseNet::clone() const {
    PoseNet copy = *this;
    for (auto& p : copy.extractor_) p.tensor = p.tensor.clone();
    for (auto& p : copy.regressor_) p.tensor = p.tensor.clone();
    return copy;
}

std::uint64_t PoseNet::group_hash(ParamGroup g) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : group(g)) {
        for (char c : p.name) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
        for (double v : p.tensor.data()) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            for (unsigned char b : bytes) h = (h ^ b) * 0x100000001b3ULL;
        }
    }
    return h;
}

PoseNet build_posenet(const ArchConfig& config, std::uint64_t seed) { return PoseNet(config, seed); }

ModelTriplet ModelTriplet::from_source(const PoseNet& source) {
    return ModelTriplet{source.clone(), source.clone(), source.clone()};
}

void ema_update(PoseNet& intermediate, const PoseNet& target, double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw ContractViolation("ema_update: eta must lie in [0, 1]");
    if (intermediate.config() != target.config()) throw ContractViolation("ema_update: architectures differ");
    for (auto g : {ParamGroup::kExtractor, ParamGroup::kRegressor}) {
        auto& dst = intermediate.group(g);
        const auto& src = target.group(g);
        if (dst.size() != src.size()) throw ContractViolation("ema_update: parameter sets differ");
        for (std::size_t i = 0; i < dst.size(); ++i) {
            if (dst[i].name != src[i].name || dst[i].tensor.shape() != src[i].tensor.shape()) {
                throw ContractViolation("ema_update: parameter " + dst[i].name + " does not match " + src[i].name);
            }
            auto d = dst[i].tensor.mutable_data();
            const auto s = src[i].tensor.data();
            for (std::size_t k = 0; k < d.size(); ++k) {
                // Clamp absorbs the last-ulp rounding of the blend.
                const double v = eta * d[k] + (1.0 - eta) * s[k];
                d[k] = std::clamp(v, std::min(d[k], s[k]), std::max(d[k], s[k]));
            }
        }
    }
}

void save_checkpoint(const PoseNet& net, const std::filesystem::path& path) {
    save_tensor_file(path, net.parameters());
}

PoseNet load_checkpoint(const std::filesystem::path& path, const ArchConfig& config) {
    auto records = load_tensor_file(path);
    std::map<std::string, Tensor> by_name;
    for (auto& r : records) by_name.emplace(r.name, r.tensor);
    PoseNet net(config, 0);
    for (auto g : {ParamGroup::kExtractor, ParamGroup::kRegressor}) {
        for (auto& p : net.group(g)) {
            auto it = by_name.find(p.name);
            if (it == by_name.end()) {
                throw LoadError(LoadError::Kind::kMissingParameter, "missing parameter " + p.name);
            }
            if (it->second.shape() != p.tensor.shape()) {
                throw LoadError(LoadError::Kind::kShapeMismatch, "shape mismatch for parameter " + p.name + ": file " +
                                                                     shape_str(it->second.shape()) + ", expected " +
                                                                     shape_str(p.tensor.shape()));
            }
            auto dst = p.tensor.mutable_data();
            std::copy(it->second.data().begin(), it->second.data().end(), dst.begin());
            by_name.erase(it);
        }
    }
    if (!by_name.empty()) {
        throw LoadError(LoadError::Kind::kUnexpectedParameter, "unexpected parameter " + by_name.begin()->first);
    }
    return net;
}

}  // namespace sfpa
