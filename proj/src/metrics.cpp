// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "elbocal/metrics.hpp"

#include <string>

#include "elbocal/errors.hpp"

namespace elbocal {

double iou(const ClassCounts& c) {
    const auto denom = c.tp + c.fp + c.fn;
    return denom > 0 ? static_cast<double>(c.tp) / static_cast<double>(denom) : 0.0;
}

double f1_score(const ClassCounts& c) {
    const auto denom = 2 * c.tp + c.fp + c.fn;
    return denom > 0 ? 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom) : 0.0;
}

void recompute_metrics(EvalReport& report) {
    report.per_class_iou.clear();
    double iou_sum = 0.0;
    std::size_t iou_count = 0;
    ClassCounts foreground;
    for (const auto& [name, c] : report.counts) {
        const bool background = name == kBackgroundName;
        if (!background) {
            foreground.tp += c.tp;
            foreground.fp += c.fp;
            foreground.fn += c.fn;
        }
        if (background && !report.options.include_background) continue;
        if (c.present()) {
            report.per_class_iou[name] = iou(c);
        } else if (report.options.absent_as_one) {
            report.per_class_iou[name] = 1.0;
        } else {
            continue;
        }
        iou_sum += report.per_class_iou[name];
        ++iou_count;
    }
    report.miou = iou_count > 0 ? iou_sum / static_cast<double>(iou_count) : 1.0;

    // An empty prediction is perfectly precise only when nothing was missed; likewise for recall.
    const auto tp = static_cast<double>(foreground.tp);
    const auto predicted = static_cast<double>(foreground.tp + foreground.fp);
    const auto actual = static_cast<double>(foreground.tp + foreground.fn);
    report.precision = predicted > 0 ? tp / predicted : (foreground.fn == 0 ? 1.0 : 0.0);
    report.recall = actual > 0 ? tp / actual : (foreground.fp == 0 ? 1.0 : 0.0);
    const double pr = report.precision + report.recall;
    report.f1 = pr > 0.0 ? 2.0 * report.precision * report.recall / pr : 0.0;
}

EvalReport evaluate(const LabelMask& pred, const LabelMask& gt, std::span<const std::string> class_names,
                    EvalOptions options) {
    if (pred.height != gt.height || pred.width != gt.width || pred.size() != gt.size()) {
        throw ShapeError("prediction is " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                         ", ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
    }
    const int n = static_cast<int>(class_names.size());
    std::vector<ClassCounts> counts(class_names.size() + 1);
    for (std::size_t p = 0; p < pred.size(); ++p) {
        const int a = pred.labels[p];
        const int b = gt.labels[p];
        if (a < 0 || a > n || b < 0 || b > n) {
            throw ConfigError("label outside 0.." + std::to_string(n) + " at pixel " + std::to_string(p));
        }
        if (a == b) {
            ++counts[static_cast<std::size_t>(a)].tp;
        } else {
            ++counts[static_cast<std::size_t>(a)].fp;
            ++counts[static_cast<std::size_t>(b)].fn;
        }
    }
    EvalReport report;
    report.options = options;
    report.counts[kBackgroundName] = counts[0];
    for (std::size_t i = 0; i < class_names.size(); ++i) {
        ClassCounts& slot = report.counts[class_names[i]];
        slot.tp += counts[i + 1].tp;
        slot.fp += counts[i + 1].fp;
        slot.fn += counts[i + 1].fn;
    }
    recompute_metrics(report);
    return report;
}

EvalReport aggregate(std::span<const EvalReport> reports) {
    if (reports.empty()) throw ConfigError("aggregate needs at least one report");
    EvalReport total;
    total.options = reports.front().options;
    for (const EvalReport& r : reports) {
        for (const auto& [name, c] : r.counts) {
            ClassCounts& slot = total.counts[name];
            slot.tp += c.tp;
            slot.fp += c.fp;
            slot.fn += c.fn;
        }
    }
    recompute_metrics(total);
    return total;
}

}  // namespace elbocal
