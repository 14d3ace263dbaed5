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

#include "sfpa/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "sfpa/errors.hpp"

namespace sfpa::evalkit {

namespace {

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

double percent(std::size_t correct, std::size_t total) {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<std::string> group_columns(std::span<const ReportRow> rows) {
    std::vector<std::string> names;
    for (const auto& r : rows)
        for (const auto& g : r.report.groups)
            if (std::find(names.begin(), names.end(), g.name) == names.end()) names.push_back(g.name);
    return names;
}

std::string group_value(const EvalReport& rep, const std::string& name) {
    for (const auto& g : rep.groups)
        if (g.name == name) return fixed4(g.pck);
    return "";
}

}  // namespace

double PckConfig::normalizer_for(ImageSize image) const {
    return normalizer ? *normalizer : static_cast<double>(std::max(image.height, image.width));
}

void PckConfig::validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ContractViolation("PckConfig: threshold must lie in (0, 1)");
    if (normalizer && !(*normalizer > 0.0)) throw ContractViolation("PckConfig: normalizer must be positive");
}

std::vector<std::optional<bool>> pck(const Keypoints& pred, const Keypoints& gt, const PckConfig& cfg,
                                     ImageSize image) {
    cfg.validate();
    if (pred.size() != gt.size()) {
        throw ContractViolation("pck: keypoint count mismatch " + std::to_string(pred.size()) + " vs " +
                                std::to_string(gt.size()));
    }
    const double limit = cfg.threshold * cfg.normalizer_for(image);
    std::vector<std::optional<bool>> out(gt.size());
    for (std::size_t j = 0; j < gt.size(); ++j) {
        if (!gt.visible[j]) continue;
        const auto row = static_cast<Eigen::Index>(j);
        const double dist = (pred.coords.row(row) - gt.coords.row(row)).norm();
        out[j] = dist <= limit;
    }
    return out;
}

EvalReport evaluate(const Predictor& predict, const toydata::Dataset& data, const PckConfig& cfg,
                    const std::string& model_id, std::size_t batch_size) {
    if (data.size() == 0) throw ContractViolation("evaluate: empty dataset");
    if (batch_size == 0) throw ContractViolation("evaluate: batch_size must be positive");
    cfg.validate();
    const auto order = data.skeleton.group_order();
    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < order.size(); ++i) slot[order[i]] = i;

    EvalReport rep;
    rep.model_id = model_id;
    rep.samples = data.size();
    rep.groups.resize(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) rep.groups[i].name = order[i];

    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        idx.resize(std::min(batch_size, data.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const Tensor maps = predict(toydata::batch_images(data, idx));
        const std::vector<Keypoints> preds = decode_batch(maps, data.image);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const auto hits = pck(preds[b], data.samples[idx[b]].keypoints, cfg, data.image);
            for (std::size_t j = 0; j < hits.size(); ++j) {
                if (!hits[j]) continue;
                auto& g = rep.groups[slot.at(data.skeleton.groups[j])];
                ++g.total;
                g.correct += *hits[j] ? 1 : 0;
            }
        }
    }
    for (auto& g : rep.groups) {
        g.pck = percent(g.correct, g.total);
        rep.correct += g.correct;
        rep.total += g.total;
    }
    rep.overall = percent(rep.correct, rep.total);
    return rep;
}

EvalReport evaluate(const PoseNet& net, const toydata::Dataset& data, const PckConfig& cfg,
                    const std::string& model_id, std::size_t batch_size) {
    return evaluate(
        [&net](const Tensor& images) {
            NoGradGuard guard;
            return net.forward(images);
        },
        data, cfg, model_id, batch_size);
}

std::string to_csv(std::span<const ReportRow> rows) {
    const auto groups = group_columns(rows);
    std::ostringstream out;
    out << "config_id,seed,model_id,samples,overall";
    for (const auto& g : groups) out << ',' << g;
    out << '\n';
    for (const auto& r : rows) {
        out << r.config_id << ',' << r.seed << ',' << r.report.model_id << ',' << r.report.samples << ','
            << fixed4(r.report.overall);
        for (const auto& g : groups) out << ',' << group_value(r.report, g);
        out << '\n';
    }
    return out.str();
}

std::string to_markdown(std::span<const ReportRow> rows, const std::string& title) {
    const auto groups = group_columns(rows);
    std::ostringstream out;
    if (!title.empty()) out << "### " << title << "\n\n";
    out << "| Config | Seed |";
    for (const auto& g : groups) out << ' ' << g << " |";
    out << " All |\n|---|---|";
    for (std::size_t i = 0; i < groups.size(); ++i) out << "---|";
    out << "---|\n";
    for (const auto& r : rows) {
        out << "| " << r.config_id << " | " << r.seed << " |";
        for (const auto& g : groups) out << ' ' << group_value(r.report, g) << " |";
        out << ' ' << fixed4(r.report.overall) << " |\n";
    }
    return out.str();
}

}  // namespace sfpa::evalkit
