// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "elbocal/elbo.hpp"
#include "elbocal/schedule.hpp"
#include "elbocal/tensor.hpp"

namespace elbocal {

struct GaussianClass {
    std::vector<double> mean;
    std::vector<double> variance;
    double prior = 1.0;
};

/// Per-class diagonal Gaussians p(x|c) with class priors p(c).
class GaussianClassModel {
public:
    GaussianClassModel() = default;
    /// Throws ConfigError on non-positive variances, mismatched dimensions or
    /// priors that do not sum to 1 within 1e-12.
    explicit GaussianClassModel(std::vector<GaussianClass> classes);

    [[nodiscard]] std::size_t num_classes() const { return classes_.size(); }
    [[nodiscard]] std::size_t dim() const { return classes_.empty() ? 0 : classes_.front().mean.size(); }
    [[nodiscard]] const GaussianClass& at(int class_id) const;
    [[nodiscard]] const std::vector<GaussianClass>& classes() const { return classes_; }

private:
    std::vector<GaussianClass> classes_;
};

/// Optimal epsilon estimate for a single Gaussian N(mean, diag(variance)) under the
/// forward process: sigma_t (z - alpha_t mean) / (alpha_t^2 variance + sigma_t^2).
void gaussian_optimal_eps(std::span<const double> mean, std::span<const double> variance, std::span<const double> zt,
                          double alpha, double sigma, std::span<double> out);

Latent optimal_eps(const GaussianClassModel& model, int class_id, const Latent& zt, double t,
                   const Schedule& schedule);

/// ln q(z_t | c) of the noised marginal N(alpha mean, alpha^2 var + sigma^2).
double noised_log_density(const GaussianClassModel& model, int class_id, std::span<const double> zt, double t,
                          const Schedule& schedule);

double log_likelihood(const GaussianClassModel& model, int class_id, std::span<const double> x);

/// p(c_i | x) by Bayes' rule, evaluated in log space with max subtraction.
std::vector<double> bayes_posterior(const GaussianClassModel& model, std::span<const double> x);

/// Samples x ~ p(x | class_id).
Latent sample_class(const GaussianClassModel& model, int class_id, Shape3 shape, std::uint64_t seed);

/// Epsilon denoiser that answers with optimal_eps for Condition::class_id.
class GaussianDenoiser final : public ConditionalDenoiser {
public:
    GaussianDenoiser(GaussianClassModel model, Schedule schedule);

    [[nodiscard]] ObjectiveKind objective() const override { return ObjectiveKind::Epsilon; }
    [[nodiscard]] Latent predict(const Latent& zt, double t, const Condition& condition) const override;

private:
    GaussianClassModel model_;
    Schedule schedule_;
};

/// Misalignment taxonomy for two classes whose sample point x comes from class 0:
///   imbalance: p(c0) << p(c1) while p(x|c0) > p(x|c1)
///   confusion: p(c0) = p(c1) while p(x|c0) < p(x|c1)
///   combined:  p(c0) < p(c1) and p(x|c0) < p(x|c1)
enum class BiasCaseKind { Imbalance, Confusion, Combined };

std::string_view to_string(BiasCaseKind kind);

struct BiasCase {
    GaussianClassModel model;
    Latent x;
    int generating_class = 0;
};

/// 1-D construction whose Bayes label for `x` contradicts the generating class.
BiasCase make_bias_case(BiasCaseKind kind);

}  // namespace elbocal
