// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "elbocal/objectives.hpp"

#include <cmath>
#include <string>

#include "elbocal/errors.hpp"

namespace elbocal {

namespace {

constexpr double kMinFactor = 1e-300;

Latent scaled(const Latent& x, double a) {
    Latent out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = a * x.values[i];
    return out;
}

void check_same_shape(const Latent& a, const Latent& b, const char* what) {
    if (a.shape != b.shape) throw ShapeError(std::string(what) + ": shape mismatch");
}

}  // namespace

std::string_view to_string(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::Score: return "score";
        case ObjectiveKind::Flow: return "flow";
        case ObjectiveKind::X: return "x";
        case ObjectiveKind::Epsilon: return "epsilon";
        case ObjectiveKind::Velocity: return "velocity";
    }
    return "unknown";
}

ObjectiveKind objective_kind_from_string(std::string_view name) {
    for (ObjectiveKind kind : kAllObjectives) {
        if (to_string(kind) == name) return kind;
    }
    throw ConfigError("unknown objective '" + std::string(name) + "'");
}

Latent target_function(ObjectiveKind kind, const Schedule& schedule, const Latent& x0, const Latent& eps, double t) {
    check_same_shape(x0, eps, "target_function");
    const auto [alpha, sigma] = alpha_sigma(schedule, t);
    switch (kind) {
        case ObjectiveKind::Score: return scaled(eps, -1.0 / sigma);
        case ObjectiveKind::Flow: {
            const auto [dalpha, dsigma] = alpha_sigma_derivative(schedule, t);
            return linear_combination(dalpha, x0, dsigma, eps);
        }
        case ObjectiveKind::X: return x0;
        case ObjectiveKind::Epsilon: return eps;
        case ObjectiveKind::Velocity: return linear_combination(alpha, eps, -sigma, x0);
    }
    throw ConfigError("unknown objective kind");
}

Latent prediction_from_epsilon(ObjectiveKind kind, const Schedule& schedule, const Latent& eps_hat, const Latent& zt,
                               double t) {
    check_same_shape(eps_hat, zt, "prediction_from_epsilon");
    const auto [alpha, sigma] = alpha_sigma(schedule, t);
    // x_hat = (zt - sigma eps_hat) / alpha
    auto x_hat = [&] { return linear_combination(1.0 / alpha, zt, -sigma / alpha, eps_hat); };
    switch (kind) {
        case ObjectiveKind::Score: return scaled(eps_hat, -1.0 / sigma);
        case ObjectiveKind::Flow: {
            const auto [dalpha, dsigma] = alpha_sigma_derivative(schedule, t);
            return linear_combination(dalpha, x_hat(), dsigma, eps_hat);
        }
        case ObjectiveKind::X: return x_hat();
        case ObjectiveKind::Epsilon: return eps_hat;
        case ObjectiveKind::Velocity: return linear_combination(alpha, eps_hat, -sigma, x_hat());
    }
    throw ConfigError("unknown objective kind");
}

Latent epsilon_from_prediction(ObjectiveKind kind, const Schedule& schedule, const Latent& prediction,
                               const Latent& zt, double t) {
    check_same_shape(prediction, zt, "epsilon_from_prediction");
    const auto [alpha, sigma] = alpha_sigma(schedule, t);
    switch (kind) {
        case ObjectiveKind::Score: return scaled(prediction, -sigma);
        case ObjectiveKind::Flow: {
            // u = (alpha'/alpha) zt + (-lambda' sigma / 2) eps
            const double dalpha = alpha_sigma_derivative(schedule, t).alpha;
            const double gain = -0.5 * log_snr_derivative(schedule, t) * sigma;
            return linear_combination(1.0 / gain, prediction, -dalpha / (alpha * gain), zt);
        }
        case ObjectiveKind::X: return linear_combination(1.0 / sigma, zt, -alpha / sigma, prediction);
        case ObjectiveKind::Epsilon: return prediction;
        case ObjectiveKind::Velocity: {
            const double norm = alpha * alpha + sigma * sigma;
            return linear_combination(sigma / norm, zt, alpha / norm, prediction);
        }
    }
    throw ConfigError("unknown objective kind");
}

double eps_error_factor(ObjectiveKind kind, const Schedule& schedule, double t) {
    const auto [alpha, sigma] = alpha_sigma(schedule, t);
    switch (kind) {
        case ObjectiveKind::Score: return 1.0 / (sigma * sigma);
        case ObjectiveKind::Flow: {
            const double dl = log_snr_derivative(schedule, t);
            return dl * dl * sigma * sigma / 4.0;
        }
        case ObjectiveKind::X: return sigma * sigma / (alpha * alpha);
        case ObjectiveKind::Epsilon: return 1.0;
        case ObjectiveKind::Velocity: {
            const double norm = alpha * alpha + sigma * sigma;
            return norm * norm / (alpha * alpha);
        }
    }
    throw ConfigError("unknown objective kind");
}

double single_timestep_loss(const PredictionPair& pair) {
    return squared_distance(pair.predicted.values, pair.target.values);
}

double convert_to_eps_error(const Schedule& schedule, const PredictionPair& pair) {
    const double factor = eps_error_factor(pair.kind, schedule, pair.t);
    if (!std::isfinite(factor) || factor < kMinFactor) {
        throw NumericalError("conversion factor for objective '" + std::string(to_string(pair.kind)) +
                             "' vanishes at t=" + std::to_string(pair.t));
    }
    return single_timestep_loss(pair) / factor;
}

double omega(ObjectiveKind kind, const Schedule& schedule, double t) {
    const auto [alpha, sigma] = alpha_sigma(schedule, t);
    const double dl = log_snr_derivative(schedule, t);
    double w = 0.0;
    switch (kind) {
        case ObjectiveKind::Score: w = -1.0 / (sigma * sigma * dl); break;
        case ObjectiveKind::Flow: w = -(sigma * sigma * dl) / 4.0; break;
        case ObjectiveKind::X: w = -1.0 / (dl * std::exp(log_snr(schedule, t))); break;
        case ObjectiveKind::Epsilon: w = -1.0 / dl; break;
        case ObjectiveKind::Velocity: {
            const double norm = alpha * alpha + sigma * sigma;
            w = -(norm * norm) / (alpha * alpha * dl);
            break;
        }
    }
    if (!std::isfinite(w)) {
        throw NumericalError("omega is not finite at t=" + std::to_string(t));
    }
    return w;
}

}  // namespace elbocal
