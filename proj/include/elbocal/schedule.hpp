// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

#include "elbocal/tensor.hpp"

namespace elbocal {

/// Interior window every schedule is evaluated on; lambda and lambda' diverge at 0 and 1.
inline constexpr double kTimeMin = 1e-4;
inline constexpr double kTimeMax = 1.0 - 1e-4;

enum class ScheduleKind { VpLinear, VpCosine, RectifiedFlow };

std::string_view to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(std::string_view name);

/// Continuous-time noise schedule z_t = alpha_t x0 + sigma_t eps on t in [0,1].
///
/// vp-linear integrates beta(t) = steps * (beta_start + t (beta_end - beta_start)),
/// the continuous limit of a `steps`-step DDPM table; vp-cosine uses
/// alpha_t = cos(theta(t)) / cos(theta(0)) with theta(t) = (t + s) / (1 + s) * pi / 2;
/// rectified-flow has alpha_t = 1 - t, sigma_t = t.
struct Schedule {
    ScheduleKind kind = ScheduleKind::VpLinear;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    double train_steps = 1000.0;
    double cosine_offset = 0.008;

    static Schedule vp_linear(double beta_start = 1e-4, double beta_end = 2e-2);
    static Schedule vp_cosine(double offset = 0.008);
    static Schedule rectified_flow();

    /// Throws ConfigError on non-positive or inverted parameters.
    void validate() const;
};

struct AlphaSigma {
    double alpha;
    double sigma;
};

/// Clamps t into [kTimeMin, kTimeMax]; throws DomainError outside [0,1] or on NaN.
double clamp_time(double t);

AlphaSigma alpha_sigma(const Schedule& schedule, double t);

/// Time derivatives (alpha'_t, sigma'_t) at the clamped t.
AlphaSigma alpha_sigma_derivative(const Schedule& schedule, double t);

/// lambda(t) = 2 ln(alpha_t / sigma_t).
double log_snr(const Schedule& schedule, double t);

/// Analytic d lambda / dt; always negative. Throws NumericalError if non-finite.
double log_snr_derivative(const Schedule& schedule, double t);

/// Central finite difference of log_snr, used to cross-check the analytic derivative.
double log_snr_derivative_fd(const Schedule& schedule, double t, double h = 1e-5);

struct NoisedSample {
    Latent x0;
    Latent eps;
    double t = 0.0;
    Latent zt;
};

/// Forward noising; throws ShapeError when x0 and eps differ in shape.
NoisedSample add_noise(const Schedule& schedule, const Latent& x0, double t, const Latent& eps);

}  // namespace elbocal
