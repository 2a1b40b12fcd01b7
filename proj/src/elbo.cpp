// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "elbocal/elbo.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "elbocal/errors.hpp"

namespace elbocal {

std::string_view to_string(SamplingKind kind) {
    switch (kind) {
        case SamplingKind::Even: return "even";
        case SamplingKind::Random: return "random";
        case SamplingKind::Small: return "small";
        case SamplingKind::Middle: return "middle";
        case SamplingKind::Large: return "large";
    }
    return "unknown";
}

SamplingKind sampling_kind_from_string(std::string_view name) {
    for (SamplingKind kind : {SamplingKind::Even, SamplingKind::Random, SamplingKind::Small, SamplingKind::Middle,
                              SamplingKind::Large}) {
        if (to_string(kind) == name) return kind;
    }
    throw ConfigError("unknown sampling strategy '" + std::string(name) + "'");
}

TimeRange nominal_range(SamplingKind kind) {
    switch (kind) {
        case SamplingKind::Even:
        case SamplingKind::Random: return {0.0, 1.0};
        case SamplingKind::Small: return {0.0, 0.2};
        case SamplingKind::Middle: return {0.4, 0.6};
        case SamplingKind::Large: return {0.7, 0.9};
    }
    return {0.0, 1.0};
}

std::vector<double> sample_times(TimeRange range, int steps, bool random, std::uint64_t seed) {
    if (steps < 1) throw ConfigError("sampling needs at least one step, got " + std::to_string(steps));
    const double lo = std::max(range.lo, kTimeMin);
    const double hi = std::min(range.hi, kTimeMax);
    if (!(lo <= hi)) {
        throw ConfigError("empty timestep range [" + std::to_string(range.lo) + ", " + std::to_string(range.hi) +
                          "] after clamping");
    }
    std::vector<double> times(static_cast<std::size_t>(steps));
    if (random) {
        std::mt19937_64 engine(seed);
        std::uniform_real_distribution<double> uniform(lo, hi);
        for (double& t : times) t = uniform(engine);
    } else if (steps == 1) {
        times[0] = 0.5 * (lo + hi);
    } else {
        for (int i = 0; i < steps; ++i) times[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (steps - 1);
    }
    return times;
}

std::vector<double> sample_timesteps(const SamplingStrategy& strategy) {
    return sample_times(nominal_range(strategy.kind), strategy.steps, strategy.kind == SamplingKind::Random,
                        strategy.seed);
}

ReparameterizedDenoiser::ReparameterizedDenoiser(const ConditionalDenoiser& eps_denoiser, ObjectiveKind kind,
                                                 Schedule schedule)
    : inner_(eps_denoiser), kind_(kind), schedule_(schedule) {
    if (inner_.objective() != ObjectiveKind::Epsilon) {
        throw ConfigError("ReparameterizedDenoiser wraps epsilon denoisers only");
    }
}

Latent ReparameterizedDenoiser::predict(const Latent& zt, double t, const Condition& condition) const {
    return prediction_from_epsilon(kind_, schedule_, inner_.predict(zt, t, condition), zt, t);
}

NoiseStream make_noise_stream(const SamplingStrategy& strategy, Shape3 shape, std::uint64_t noise_seed) {
    NoiseStream stream;
    stream.times = sample_timesteps(strategy);
    std::mt19937_64 engine(noise_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    stream.noise.reserve(stream.times.size());
    for (std::size_t i = 0; i < stream.times.size(); ++i) {
        Latent eps(shape);
        for (double& v : eps.values) v = normal(engine);
        stream.noise.push_back(std::move(eps));
    }
    return stream;
}

ElboEstimate estimate_elbo(const ConditionalDenoiser& denoiser, const Latent& x0, const Condition& condition,
                           const NoiseStream& stream, const Schedule& schedule, ObjectiveKind kind) {
    if (denoiser.objective() != kind) {
        throw ConfigError("denoiser predicts '" + std::string(to_string(denoiser.objective())) +
                          "' but the estimate expects '" + std::string(to_string(kind)) + "'");
    }
    if (stream.times.empty() || stream.times.size() != stream.noise.size()) {
        throw ConfigError("noise stream is empty or inconsistent");
    }
    ElboEstimate estimate;
    estimate.class_id = condition.class_id;
    estimate.samples.reserve(stream.times.size());
    double total = 0.0;
    for (std::size_t i = 0; i < stream.times.size(); ++i) {
        const double t = stream.times[i];
        const Latent& eps = stream.noise[i];
        const NoisedSample sample = add_noise(schedule, x0, t, eps);
        PredictionPair pair{denoiser.predict(sample.zt, t, condition), target_function(kind, schedule, x0, eps, t),
                            kind, t};
        const double integrand = 0.5 * -log_snr_derivative(schedule, t) * convert_to_eps_error(schedule, pair);
        if (!std::isfinite(integrand)) {
            throw NumericalError("non-finite ELBO integrand at t=" + std::to_string(t));
        }
        estimate.samples.push_back({t, integrand});
        total += integrand;
    }
    estimate.value = total / static_cast<double>(stream.times.size());
    return estimate;
}

ElboEstimate estimate_elbo(const ConditionalDenoiser& denoiser, const Latent& x0, const Condition& condition,
                           const SamplingStrategy& strategy, const Schedule& schedule, ObjectiveKind kind,
                           std::uint64_t noise_seed) {
    return estimate_elbo(denoiser, x0, condition, make_noise_stream(strategy, x0.shape, noise_seed), schedule, kind);
}

namespace {

void check_gamma(double gamma, const char* what) {
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw ConfigError(std::string(what) + " must lie in (0,1], got " + std::to_string(gamma));
    }
}

}  // namespace

AlignmentScores alignment_scores(std::vector<ElboEstimate> estimates, double gamma) {
    check_gamma(gamma, "gamma");
    if (estimates.empty()) throw ConfigError("alignment_scores needs at least one estimate");
    AlignmentScores out;
    out.gamma = gamma;
    const auto [lo_it, hi_it] = std::minmax_element(estimates.begin(), estimates.end(),
                                                    [](const auto& a, const auto& b) { return a.value < b.value; });
    const double lo = lo_it->value;
    const double span = hi_it->value - lo;
    out.scores.reserve(estimates.size());
    for (const ElboEstimate& e : estimates) {
        const double normalized = span > 0.0 ? (e.value - lo) / span : 0.0;
        out.scores.push_back(std::pow(gamma, normalized));
    }
    out.raw = std::move(estimates);
    return out;
}

AlignmentScores fixed_alignment_scores(std::vector<ElboEstimate> estimates, double value) {
    check_gamma(value, "fixed alignment score");
    AlignmentScores out;
    out.gamma = value;
    out.scores.assign(estimates.size(), value);
    out.raw = std::move(estimates);
    return out;
}

}  // namespace elbocal
