// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "elbocal/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "elbocal/errors.hpp"

namespace elbocal {

namespace {

// Integrated beta for vp-linear: B(t) = int_0^t beta(s) ds, so alpha^2 = exp(-B).
double vp_linear_integral(const Schedule& s, double t) {
    return s.train_steps * (s.beta_start * t + 0.5 * (s.beta_end - s.beta_start) * t * t);
}

double vp_linear_beta(const Schedule& s, double t) {
    return s.train_steps * (s.beta_start + (s.beta_end - s.beta_start) * t);
}

double cosine_theta(const Schedule& s, double t) {
    return (t + s.cosine_offset) / (1.0 + s.cosine_offset) * std::numbers::pi / 2.0;
}

double cosine_theta_rate(const Schedule& s) { return std::numbers::pi / (2.0 * (1.0 + s.cosine_offset)); }

}  // namespace

std::string_view to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::VpLinear: return "vp-linear";
        case ScheduleKind::VpCosine: return "vp-cosine";
        case ScheduleKind::RectifiedFlow: return "rectified-flow";
    }
    return "unknown";
}

ScheduleKind schedule_kind_from_string(std::string_view name) {
    if (name == "vp-linear") return ScheduleKind::VpLinear;
    if (name == "vp-cosine") return ScheduleKind::VpCosine;
    if (name == "rectified-flow") return ScheduleKind::RectifiedFlow;
    throw ConfigError("unknown schedule kind '" + std::string(name) + "'");
}

Schedule Schedule::vp_linear(double beta_start, double beta_end) {
    Schedule s;
    s.kind = ScheduleKind::VpLinear;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.validate();
    return s;
}

Schedule Schedule::vp_cosine(double offset) {
    Schedule s;
    s.kind = ScheduleKind::VpCosine;
    s.cosine_offset = offset;
    s.validate();
    return s;
}

Schedule Schedule::rectified_flow() {
    Schedule s;
    s.kind = ScheduleKind::RectifiedFlow;
    return s;
}

void Schedule::validate() const {
    switch (kind) {
        case ScheduleKind::VpLinear:
            if (!(beta_start > 0.0) || !(beta_end >= beta_start) || !(train_steps > 0.0)) {
                throw ConfigError("vp-linear requires 0 < beta_start <= beta_end and train_steps > 0");
            }
            break;
        case ScheduleKind::VpCosine:
            if (!(cosine_offset > 0.0)) throw ConfigError("vp-cosine requires a positive offset");
            break;
        case ScheduleKind::RectifiedFlow: break;
    }
}

double clamp_time(double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw DomainError("timestep " + std::to_string(t) + " outside [0,1]");
    }
    return std::clamp(t, kTimeMin, kTimeMax);
}

AlphaSigma alpha_sigma(const Schedule& schedule, double t) {
    t = clamp_time(t);
    switch (schedule.kind) {
        case ScheduleKind::VpLinear: {
            const double b = vp_linear_integral(schedule, t);
            return {std::exp(-0.5 * b), std::sqrt(-std::expm1(-b))};
        }
        case ScheduleKind::VpCosine: {
            const double alpha = std::cos(cosine_theta(schedule, t)) / std::cos(cosine_theta(schedule, 0.0));
            // sigma^2 = 1 - alpha^2 = (1 - alpha)(1 + alpha) keeps precision near t = 0.
            return {alpha, std::sqrt((1.0 - alpha) * (1.0 + alpha))};
        }
        case ScheduleKind::RectifiedFlow: return {1.0 - t, t};
    }
    throw ConfigError("unknown schedule kind");
}

AlphaSigma alpha_sigma_derivative(const Schedule& schedule, double t) {
    t = clamp_time(t);
    switch (schedule.kind) {
        case ScheduleKind::VpLinear: {
            const auto [alpha, sigma] = alpha_sigma(schedule, t);
            const double dalpha = -0.5 * vp_linear_beta(schedule, t) * alpha;
            return {dalpha, -alpha * dalpha / sigma};
        }
        case ScheduleKind::VpCosine: {
            const auto [alpha, sigma] = alpha_sigma(schedule, t);
            const double dalpha = -std::sin(cosine_theta(schedule, t)) * cosine_theta_rate(schedule) /
                                  std::cos(cosine_theta(schedule, 0.0));
            return {dalpha, -alpha * dalpha / sigma};
        }
        case ScheduleKind::RectifiedFlow: return {-1.0, 1.0};
    }
    throw ConfigError("unknown schedule kind");
}

double log_snr(const Schedule& schedule, double t) {
    t = clamp_time(t);
    switch (schedule.kind) {
        case ScheduleKind::VpLinear: {
            const double b = vp_linear_integral(schedule, t);
            return -b - std::log(-std::expm1(-b));
        }
        case ScheduleKind::VpCosine:
        case ScheduleKind::RectifiedFlow: {
            const auto [alpha, sigma] = alpha_sigma(schedule, t);
            return 2.0 * std::log(alpha / sigma);
        }
    }
    throw ConfigError("unknown schedule kind");
}

double log_snr_derivative(const Schedule& schedule, double t) {
    t = clamp_time(t);
    double value = 0.0;
    switch (schedule.kind) {
        case ScheduleKind::VpLinear: {
            // d/dt [-B - ln(1 - e^{-B})] = -beta / sigma^2
            const double sigma2 = -std::expm1(-vp_linear_integral(schedule, t));
            value = -vp_linear_beta(schedule, t) / sigma2;
            break;
        }
        case ScheduleKind::VpCosine: {
            const auto [alpha, sigma] = alpha_sigma(schedule, t);
            const double dalpha = alpha_sigma_derivative(schedule, t).alpha;
            value = 2.0 * dalpha / (alpha * sigma * sigma);
            break;
        }
        case ScheduleKind::RectifiedFlow: value = -2.0 / (t * (1.0 - t)); break;
    }
    if (!std::isfinite(value)) {
        throw NumericalError("log_snr_derivative is not finite at t=" + std::to_string(t));
    }
    return value;
}

double log_snr_derivative_fd(const Schedule& schedule, double t, double h) {
    return (log_snr(schedule, t + h) - log_snr(schedule, t - h)) / (2.0 * h);
}

NoisedSample add_noise(const Schedule& schedule, const Latent& x0, double t, const Latent& eps) {
    if (x0.shape != eps.shape) throw ShapeError("add_noise: x0 and eps shapes differ");
    const auto [alpha, sigma] = alpha_sigma(schedule, t);
    NoisedSample out{x0, eps, t, linear_combination(alpha, x0, sigma, eps)};
    return out;
}

}  // namespace elbocal
