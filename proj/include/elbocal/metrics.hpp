// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "elbocal/tensor.hpp"

namespace elbocal {

inline constexpr const char* kBackgroundName = "background";

struct ClassCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    [[nodiscard]] bool present() const { return tp + fp + fn > 0; }
    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

/// TP / (TP + FP + FN); 0 for an absent class.
double iou(const ClassCounts& c);
/// 2 TP / (2 TP + FP + FN); 0 for an absent class.
double f1_score(const ClassCounts& c);

struct EvalOptions {
    bool include_background = true;  ///< background counts as a class in mIoU
    bool absent_as_one = false;      ///< classes absent from prediction and ground truth score 1.0
};

/// Segmentation scores. Precision and F1 are micro-averaged over foreground classes;
/// mIoU averages the per-class IoU of classes present in prediction or ground truth.
struct EvalReport {
    std::map<std::string, ClassCounts> counts;  ///< includes "background"
    std::map<std::string, double> per_class_iou;
    double miou = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    EvalOptions options;
};

/// Compares label maps whose labels index `class_names` (0 = background, i = class_names[i-1]).
/// Throws ShapeError on size mismatch and ConfigError for labels outside 0..N.
EvalReport evaluate(const LabelMask& pred, const LabelMask& gt, std::span<const std::string> class_names,
                    EvalOptions options = {});

/// Recomputes every metric from counts summed by class name. Throws ConfigError for an
/// empty list.
EvalReport aggregate(std::span<const EvalReport> reports);

/// Derives per-class IoU, mIoU, precision, recall and F1 from the stored counts.
void recompute_metrics(EvalReport& report);

}  // namespace elbocal
