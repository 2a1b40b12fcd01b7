// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "elbocal/objectives.hpp"
#include "elbocal/schedule.hpp"
#include "elbocal/tensor.hpp"

namespace elbocal {

enum class SamplingKind { Even, Random, Small, Middle, Large };

std::string_view to_string(SamplingKind kind);
SamplingKind sampling_kind_from_string(std::string_view name);

struct TimeRange {
    double lo = 0.0;
    double hi = 1.0;
};

/// Nominal range of each strategy before clamping: even/random [0,1], small [0,0.2],
/// middle [0.4,0.6], large [0.7,0.9].
TimeRange nominal_range(SamplingKind kind);

struct SamplingStrategy {
    SamplingKind kind = SamplingKind::Even;
    int steps = 20;
    std::uint64_t seed = 0;
};

/// `steps` timesteps from `range` intersected with the clamp window. Even sampling
/// places an inclusive uniform grid (a single step lands on the midpoint); random
/// sampling draws i.i.d. uniforms from `seed`. Throws ConfigError if steps < 1 or
/// the clamped range is empty.
std::vector<double> sample_times(TimeRange range, int steps, bool random, std::uint64_t seed);

std::vector<double> sample_timesteps(const SamplingStrategy& strategy);

/// What the denoiser is conditioned on: a class index (analytic models) and/or a token phrase.
struct Condition {
    int class_id = -1;
    std::vector<std::string> tokens;
};

/// eps_theta(z_t, t, c), returning its estimate in the parameterization of objective().
class ConditionalDenoiser {
public:
    virtual ~ConditionalDenoiser() = default;
    [[nodiscard]] virtual ObjectiveKind objective() const = 0;
    [[nodiscard]] virtual Latent predict(const Latent& zt, double t, const Condition& condition) const = 0;
};

/// Wraps an epsilon-predicting denoiser and re-expresses its output in another
/// parameterization through the exact maps of prediction_from_epsilon.
class ReparameterizedDenoiser final : public ConditionalDenoiser {
public:
    ReparameterizedDenoiser(const ConditionalDenoiser& eps_denoiser, ObjectiveKind kind, Schedule schedule);

    [[nodiscard]] ObjectiveKind objective() const override { return kind_; }
    [[nodiscard]] Latent predict(const Latent& zt, double t, const Condition& condition) const override;

private:
    const ConditionalDenoiser& inner_;
    ObjectiveKind kind_;
    Schedule schedule_;
};

/// A reusable (t, eps) sample stream. Estimating every class condition against the
/// same stream (common random numbers) removes Monte-Carlo noise from the comparison.
struct NoiseStream {
    std::vector<double> times;
    std::vector<Latent> noise;
};

NoiseStream make_noise_stream(const SamplingStrategy& strategy, Shape3 shape, std::uint64_t noise_seed);

struct ElboSample {
    double t;
    double integrand;
};

struct ElboEstimate {
    int class_id = -1;
    double value = 0.0;
    std::vector<ElboSample> samples;
};

/// Monte-Carlo estimate of (1/2) E_{t,eps}[-lambda'(t) ||eps_hat - eps||^2].
/// The denoiser's objective must equal `kind`.
ElboEstimate estimate_elbo(const ConditionalDenoiser& denoiser, const Latent& x0, const Condition& condition,
                           const NoiseStream& stream, const Schedule& schedule, ObjectiveKind kind);

ElboEstimate estimate_elbo(const ConditionalDenoiser& denoiser, const Latent& x0, const Condition& condition,
                           const SamplingStrategy& strategy, const Schedule& schedule, ObjectiveKind kind,
                           std::uint64_t noise_seed);

struct AlignmentScores {
    double gamma = 1.0;
    std::vector<double> scores;
    std::vector<ElboEstimate> raw;
};

/// Min-max normalizes the estimates to [0,1] and returns S_i = gamma^normalized_i,
/// so the smallest estimate maps to 1 and the largest to gamma. All-equal estimates
/// (or a single one) give S_i = 1. Throws ConfigError unless gamma is in (0,1].
AlignmentScores alignment_scores(std::vector<ElboEstimate> estimates, double gamma);

/// Control variant: every class gets the same score `value`, whatever the estimates.
AlignmentScores fixed_alignment_scores(std::vector<ElboEstimate> estimates, double value);

}  // namespace elbocal
