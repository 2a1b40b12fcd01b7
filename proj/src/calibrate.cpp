// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "elbocal/calibrate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

#include "elbocal/errors.hpp"

namespace elbocal {

namespace {

constexpr std::uint64_t kAttentionTimes = 1;
constexpr std::uint64_t kAttentionNoise = 2;
constexpr std::uint64_t kElboTimes = 3;
constexpr std::uint64_t kElboNoise = 4;

}  // namespace

std::string_view to_string(CalibrationReading reading) {
    return reading == CalibrationReading::Root ? "root" : "power";
}

CalibrationReading calibration_reading_from_string(std::string_view name) {
    if (name == "root") return CalibrationReading::Root;
    if (name == "power") return CalibrationReading::Power;
    throw ConfigError("unknown calibration reading '" + std::string(name) + "'");
}

Grid extract_class_map(const Matrix& attention, std::size_t height, std::size_t width, std::span<const int> tokens) {
    if (tokens.empty()) throw ConfigError("class has an empty token span");
    if (attention.rows != height * width) throw ShapeError("extract_class_map: attention rows do not match the grid");
    for (int idx : tokens) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= attention.cols) {
            throw ConfigError("token index " + std::to_string(idx) + " outside the caption");
        }
    }
    Grid out(height, width);
    const double n = static_cast<double>(tokens.size());
    for (std::size_t p = 0; p < out.size(); ++p) {
        double acc = 0.0;
        for (int idx : tokens) acc += attention.at(p, static_cast<std::size_t>(idx));
        out.values[p] = acc / n;
    }
    return out;
}

Grid minmax_normalize(const Grid& map) {
    Grid out = map;
    if (map.values.empty()) return out;
    const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
    const double span = *hi - *lo;
    for (double& v : out.values) v = span > 0.0 ? (v - *lo) / span : 0.0;
    return out;
}

Grid apply_calibration(const Grid& map, double score, CalibrationReading reading) {
    if (!(score > 0.0)) throw ConfigError("alignment score must be positive, got " + std::to_string(score));
    if (score == 1.0) return map;
    const double exponent = reading == CalibrationReading::Root ? 1.0 / score : score;
    Grid out = map;
    for (double& v : out.values) v = std::pow(v, exponent);
    return out;
}

Grid enhance_with_self_attention(const Grid& heatmap, const Matrix& self_attn, int iterations) {
    const std::size_t n = heatmap.size();
    if (self_attn.rows != n || self_attn.cols != n) throw ShapeError("self-attention does not match the heatmap");
    if (iterations < 0) throw ConfigError("negative enhancement iteration count");
    if (max_row_stochastic_error(self_attn) > 1e-6) throw ConfigError("self-attention rows are not stochastic");
    Grid current = heatmap;
    Grid next(heatmap.height, heatmap.width);
    for (int it = 0; it < iterations; ++it) {
        for (std::size_t p = 0; p < n; ++p) {
            double acc = 0.0;
            const auto row = self_attn.row(p);
            for (std::size_t q = 0; q < n; ++q) acc += row[q] * current.values[q];
            next.values[p] = acc;
        }
        std::swap(current, next);
    }
    return minmax_normalize(current);
}

double default_threshold(std::size_t num_classes, double temperature) {
    if (num_classes <= 1) return 0.5;
    const double n = static_cast<double>(num_classes);
    const double peak = std::exp(1.0 / temperature);
    return 0.5 * (1.0 / n + peak / (peak + n - 1.0));
}

PosteriorField build_posterior(std::span<const Grid> heatmaps, double threshold, double temperature) {
    if (heatmaps.empty()) throw ConfigError("build_posterior needs at least one heatmap");
    if (!(temperature > 0.0)) throw ConfigError("softmax temperature must be positive");
    const std::size_t h = heatmaps.front().height;
    const std::size_t w = heatmaps.front().width;
    for (const Grid& g : heatmaps) {
        if (g.height != h || g.width != w) throw ShapeError("heatmaps differ in size");
    }
    const std::size_t n = heatmaps.size();
    PosteriorField field;
    field.height = h;
    field.width = w;
    field.threshold = threshold;
    field.probs = Matrix(h * w, n);
    field.label_mask = LabelMask(h, w);
    for (std::size_t p = 0; p < h * w; ++p) {
        auto row = field.probs.row(p);
        double top = heatmaps[0].values[p];
        for (std::size_t i = 1; i < n; ++i) top = std::max(top, heatmaps[i].values[p]);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            row[i] = std::exp((heatmaps[i].values[p] - top) / temperature);
            total += row[i];
        }
        std::size_t best = 0;
        for (std::size_t i = 0; i < n; ++i) {
            row[i] /= total;
            if (row[i] > row[best]) best = i;
        }
        field.label_mask.labels[p] = row[best] < threshold ? 0 : static_cast<int>(best) + 1;
    }
    return field;
}

std::vector<double> prompt_weights(const AlignmentScores& scores, double beta) {
    if (!(beta >= 0.0)) throw ConfigError("prompt reweighting beta must be non-negative");
    std::vector<double> out;
    out.reserve(scores.scores.size());
    for (double s : scores.scores) out.push_back(1.0 + beta * (1.0 - s));
    return out;
}

std::uint64_t derive_seed(std::uint64_t noise_seed, std::uint64_t scene_seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(noise_seed), static_cast<std::uint32_t>(noise_seed >> 32),
                      static_cast<std::uint32_t>(scene_seed), static_cast<std::uint32_t>(scene_seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

AlignmentScores scene_alignment_scores(const Scene& scene, const SegmentConfig& config) {
    const ToyDenoiser denoiser(scene.vocabulary, config.schedule, config.objective, config.model);
    SamplingStrategy strategy = config.elbo;
    strategy.seed = derive_seed(config.noise_seed, scene.seed, kElboTimes);
    NoiseStream stream =
        make_noise_stream(strategy, scene.latent.shape, derive_seed(config.noise_seed, scene.seed, kElboNoise));
    Latent x0 = scene.latent;
    if (config.float32) {
        round_to_float(x0.values);
        for (Latent& eps : stream.noise) round_to_float(eps.values);
    }
    std::vector<ElboEstimate> estimates;
    estimates.reserve(scene.classes.size());
    for (std::size_t i = 0; i < scene.classes.size(); ++i) {
        const Condition condition{static_cast<int>(i), scene.class_prompt(i)};
        estimates.push_back(estimate_elbo(denoiser, x0, condition, stream, config.schedule, config.objective));
    }
    if (config.fixed_s) return fixed_alignment_scores(std::move(estimates), *config.fixed_s);
    return alignment_scores(std::move(estimates), config.gamma);
}

SegmentResult segment(const Scene& scene, const SegmentConfig& config) {
    const std::size_t n = scene.classes.size();
    if (n == 0) throw ConfigError("scene '" + scene.name + "' has no classes");
    if (config.enhance_iterations < 0) throw ConfigError("negative enhancement iteration count");

    const ToyDenoiser denoiser(scene.vocabulary, config.schedule, config.objective, config.model);
    const std::vector<double> times =
        sample_times(config.attention.range, config.attention.steps, config.attention.random,
                     derive_seed(config.noise_seed, scene.seed, kAttentionTimes));
    const CrossAttentionStack attention = collect_attention(
        denoiser, scene, times, derive_seed(config.noise_seed, scene.seed, kAttentionNoise), config.float32);
    const auto [att_h, att_w] = attention.layer_resolutions.front();

    SegmentResult result;
    if (config.calibration) {
        result.scores = scene_alignment_scores(scene, config);
    } else {
        result.scores.gamma = 1.0;
        result.scores.scores.assign(n, 1.0);
    }

    const std::size_t out_h = scene.height();
    const std::size_t out_w = scene.width();
    const Matrix self_attn = resize_self_attention(attention.self.front(), att_h, att_w, out_h, out_w);
    result.heatmaps.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Grid map = minmax_normalize(extract_class_map(attention.cross.front(), att_h, att_w, scene.spans[i]));
        if (config.calibration) map = apply_calibration(map, result.scores.scores[i], config.reading);
        map = bilinear_resize(map, out_h, out_w);
        result.heatmaps.push_back(enhance_with_self_attention(map, self_attn, config.enhance_iterations));
    }
    const double threshold = config.threshold.value_or(default_threshold(n, config.softmax_temperature));
    result.posterior = build_posterior(result.heatmaps, threshold, config.softmax_temperature);
    return result;
}

}  // namespace elbocal
