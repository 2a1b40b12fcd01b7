// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "elbocal/elbo.hpp"
#include "elbocal/objectives.hpp"
#include "elbocal/schedule.hpp"
#include "elbocal/tensor.hpp"
#include "elbocal/toyscene.hpp"

namespace elbocal {

/// How the calibration exponent is read: Root raises to 1/S (the S-th root),
/// Power raises to S.
enum class CalibrationReading { Root, Power };

std::string_view to_string(CalibrationReading reading);
CalibrationReading calibration_reading_from_string(std::string_view name);

struct AttentionSampling {
    int steps = 10;
    TimeRange range{0.0, 0.2};
    bool random = false;
};

struct SegmentConfig {
    Schedule schedule;
    ObjectiveKind objective = ObjectiveKind::Epsilon;
    SamplingStrategy elbo{SamplingKind::Even, 20, 0};
    double gamma = 1.0 / 3.0;
    AttentionSampling attention;
    bool calibration = true;
    CalibrationReading reading = CalibrationReading::Root;
    std::optional<double> fixed_s;
    std::optional<double> threshold;
    double softmax_temperature = 1.0;
    int enhance_iterations = 1;
    std::uint64_t noise_seed = 0;
    bool float32 = false;
    ToyModelParams model;
};

struct PosteriorField {
    std::size_t height = 0;
    std::size_t width = 0;
    Matrix probs;  ///< (height*width) x N, rows sum to 1
    LabelMask label_mask;
    double threshold = 0.5;

    friend bool operator==(const PosteriorField&, const PosteriorField&) = default;
};

/// Averages the attention columns listed in `tokens` into an h x w map.
/// Throws ConfigError for an empty or out-of-range span.
Grid extract_class_map(const Matrix& attention, std::size_t height, std::size_t width, std::span<const int> tokens);

/// (v - min) / (max - min); a constant map becomes all zeros.
Grid minmax_normalize(const Grid& map);

/// Elementwise v^(1/S) (Root) or v^S (Power). S = 1 returns the map unchanged.
/// Throws ConfigError unless S > 0.
Grid apply_calibration(const Grid& map, double score, CalibrationReading reading = CalibrationReading::Root);

/// h <- self_attn * vec(h) `iterations` times, then min-max normalized. Throws
/// ShapeError on dimension mismatch and ConfigError when a row of self_attn is not
/// stochastic within 1e-6.
Grid enhance_with_self_attention(const Grid& heatmap, const Matrix& self_attn, int iterations = 1);

/// Background threshold used when none is configured: 0.5 for one class, otherwise the
/// midpoint between the uniform posterior 1/N and the largest posterior a softmax over
/// [0,1]-valued heatmaps can reach.
double default_threshold(std::size_t num_classes, double temperature = 1.0);

/// Per-pixel softmax over the class heatmaps; label 0 where the top probability is
/// below `threshold`, else 1 + argmax. Throws ConfigError for an empty stack or
/// mismatched sizes.
PosteriorField build_posterior(std::span<const Grid> heatmaps, double threshold, double temperature = 1.0);

/// w_i = 1 + beta (1 - S_i).
std::vector<double> prompt_weights(const AlignmentScores& scores, double beta);

/// Seed of an independent stream derived from (noise seed, scene seed, stream tag).
std::uint64_t derive_seed(std::uint64_t noise_seed, std::uint64_t scene_seed, std::uint64_t stream);

/// ELBO estimate of every candidate class against one shared (t, eps) stream, turned
/// into alignment scores (or the fixed control score when configured).
AlignmentScores scene_alignment_scores(const Scene& scene, const SegmentConfig& config);

struct SegmentResult {
    std::vector<Grid> heatmaps;  ///< final enhanced heatmaps, one per class
    PosteriorField posterior;
    AlignmentScores scores;
};

/// Attention collection, per-class extraction and normalization, calibration,
/// upsampling, self-attention enhancement and the posterior softmax. With calibration
/// disabled no ELBO is computed and every score is 1.
SegmentResult segment(const Scene& scene, const SegmentConfig& config);

}  // namespace elbocal
