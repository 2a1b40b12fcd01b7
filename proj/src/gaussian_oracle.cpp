// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "elbocal/gaussian_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "elbocal/errors.hpp"

namespace elbocal {

GaussianClassModel::GaussianClassModel(std::vector<GaussianClass> classes) : classes_(std::move(classes)) {
    if (classes_.empty()) throw ConfigError("Gaussian model needs at least one class");
    const std::size_t d = classes_.front().mean.size();
    if (d == 0) throw ConfigError("Gaussian model needs a positive dimension");
    double prior_sum = 0.0;
    for (const GaussianClass& c : classes_) {
        if (c.mean.size() != d || c.variance.size() != d) throw ConfigError("Gaussian classes differ in dimension");
        for (double v : c.variance) {
            if (!(v > 0.0)) throw ConfigError("Gaussian variances must be positive");
        }
        if (!(c.prior >= 0.0)) throw ConfigError("class priors must be non-negative");
        prior_sum += c.prior;
    }
    if (std::abs(prior_sum - 1.0) > 1e-12) {
        throw ConfigError("class priors sum to " + std::to_string(prior_sum) + ", expected 1");
    }
}

const GaussianClass& GaussianClassModel::at(int class_id) const {
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= classes_.size()) {
        throw DomainError("class id " + std::to_string(class_id) + " not in model");
    }
    return classes_[static_cast<std::size_t>(class_id)];
}

void gaussian_optimal_eps(std::span<const double> mean, std::span<const double> variance, std::span<const double> zt,
                          double alpha, double sigma, std::span<double> out) {
    for (std::size_t k = 0; k < zt.size(); ++k) {
        out[k] = sigma * (zt[k] - alpha * mean[k]) / (alpha * alpha * variance[k] + sigma * sigma);
    }
}

namespace {

const GaussianClass& checked_class(const GaussianClassModel& model, int class_id, std::size_t size) {
    const GaussianClass& c = model.at(class_id);
    if (c.mean.size() != size) {
        throw ShapeError("input of size " + std::to_string(size) + " for a model of dimension " +
                         std::to_string(c.mean.size()));
    }
    return c;
}

double diagonal_log_density(std::span<const double> mean, std::span<const double> variance,
                            std::span<const double> x, double mean_scale, double var_scale, double var_offset) {
    constexpr double log_two_pi = 1.8378770664093454835606594728112;
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double v = var_scale * variance[k] + var_offset;
        const double d = x[k] - mean_scale * mean[k];
        acc += -0.5 * (log_two_pi + std::log(v) + d * d / v);
    }
    return acc;
}

}  // namespace

Latent optimal_eps(const GaussianClassModel& model, int class_id, const Latent& zt, double t,
                   const Schedule& schedule) {
    const GaussianClass& c = checked_class(model, class_id, zt.size());
    const auto [alpha, sigma] = alpha_sigma(schedule, t);
    Latent out(zt.shape);
    gaussian_optimal_eps(c.mean, c.variance, zt.values, alpha, sigma, out.values);
    return out;
}

double noised_log_density(const GaussianClassModel& model, int class_id, std::span<const double> zt, double t,
                          const Schedule& schedule) {
    const GaussianClass& c = checked_class(model, class_id, zt.size());
    const auto [alpha, sigma] = alpha_sigma(schedule, t);
    return diagonal_log_density(c.mean, c.variance, zt, alpha, alpha * alpha, sigma * sigma);
}

double log_likelihood(const GaussianClassModel& model, int class_id, std::span<const double> x) {
    const GaussianClass& c = checked_class(model, class_id, x.size());
    return diagonal_log_density(c.mean, c.variance, x, 1.0, 1.0, 0.0);
}

std::vector<double> bayes_posterior(const GaussianClassModel& model, std::span<const double> x) {
    const std::size_t n = model.num_classes();
    if (n == 0) throw ConfigError("bayes_posterior needs at least one class");
    std::vector<double> logits(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double prior = model.classes()[i].prior;
        logits[i] = prior > 0.0 ? std::log(prior) + log_likelihood(model, static_cast<int>(i), x)
                                : -std::numeric_limits<double>::infinity();
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    if (!std::isfinite(top)) throw NumericalError("all class densities underflow in bayes_posterior");
    double total = 0.0;
    for (double& l : logits) {
        l = std::exp(l - top);
        total += l;
    }
    for (double& l : logits) l /= total;
    return logits;
}

Latent sample_class(const GaussianClassModel& model, int class_id, Shape3 shape, std::uint64_t seed) {
    const GaussianClass& c = checked_class(model, class_id, shape.size());
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Latent x(shape);
    for (std::size_t k = 0; k < x.size(); ++k) x.values[k] = c.mean[k] + std::sqrt(c.variance[k]) * normal(engine);
    return x;
}

GaussianDenoiser::GaussianDenoiser(GaussianClassModel model, Schedule schedule)
    : model_(std::move(model)), schedule_(schedule) {}

Latent GaussianDenoiser::predict(const Latent& zt, double t, const Condition& condition) const {
    return optimal_eps(model_, condition.class_id, zt, t, schedule_);
}

std::string_view to_string(BiasCaseKind kind) {
    switch (kind) {
        case BiasCaseKind::Imbalance: return "imbalance";
        case BiasCaseKind::Confusion: return "confusion";
        case BiasCaseKind::Combined: return "combined";
    }
    return "unknown";
}

BiasCase make_bias_case(BiasCaseKind kind) {
    const Shape3 shape{1, 1, 1};
    switch (kind) {
        case BiasCaseKind::Imbalance: {
            // Unit variances, means 0 and d. The log-odds ln(p0/p1) - x d + d^2/2 vanish at
            // x* = d/2 - ln(p1/p0)/d; on (x*, d/2) the likelihood prefers c0 but the posterior c1.
            const double p0 = 0.02;
            const double d = 2.0;
            const double flip = d / 2.0 - std::log((1.0 - p0) / p0) / d;
            GaussianClassModel model({{{0.0}, {1.0}, p0}, {{d}, {1.0}, 1.0 - p0}});
            return {std::move(model), Latent(shape, {0.5 * (flip + d / 2.0)}), 0};
        }
        case BiasCaseKind::Confusion: {
            // Means 0.1 sigma apart; x between the means on c1's side.
            GaussianClassModel model({{{0.0}, {1.0}, 0.5}, {{0.1}, {1.0}, 0.5}});
            return {std::move(model), Latent(shape, {0.075}), 0};
        }
        case BiasCaseKind::Combined: {
            GaussianClassModel model({{{0.0}, {1.0}, 0.02}, {{0.1}, {1.0}, 0.98}});
            return {std::move(model), Latent(shape, {0.075}), 0};
        }
    }
    throw ConfigError("unknown bias case");
}

}  // namespace elbocal
