// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string_view>

#include "elbocal/schedule.hpp"
#include "elbocal/tensor.hpp"

namespace elbocal {

/// The function a denoiser is trained to estimate.
enum class ObjectiveKind { Score, Flow, X, Epsilon, Velocity };

inline constexpr std::array<ObjectiveKind, 5> kAllObjectives = {
    ObjectiveKind::Score, ObjectiveKind::Flow, ObjectiveKind::X, ObjectiveKind::Epsilon, ObjectiveKind::Velocity};

std::string_view to_string(ObjectiveKind kind);
ObjectiveKind objective_kind_from_string(std::string_view name);

struct PredictionPair {
    Latent predicted;
    Latent target;
    ObjectiveKind kind = ObjectiveKind::Epsilon;
    double t = 0.5;
};

/// Ground-truth regression target of `kind` for the noised sample built from (x0, eps, t).
///   score    -> -eps / sigma_t
///   flow     -> alpha'_t x0 + sigma'_t eps
///   x        -> x0
///   epsilon  -> eps
///   velocity -> alpha_t eps - sigma_t x0
Latent target_function(ObjectiveKind kind, const Schedule& schedule, const Latent& x0, const Latent& eps, double t);

/// Maps an epsilon estimate at (zt, t) into the parameterization of `kind`.
Latent prediction_from_epsilon(ObjectiveKind kind, const Schedule& schedule, const Latent& eps_hat, const Latent& zt,
                               double t);

/// Inverse of prediction_from_epsilon: recovers the epsilon estimate a prediction encodes.
Latent epsilon_from_prediction(ObjectiveKind kind, const Schedule& schedule, const Latent& prediction,
                               const Latent& zt, double t);

/// ||predicted - target||^2 = factor * ||eps_hat - eps||^2 for this factor.
double eps_error_factor(ObjectiveKind kind, const Schedule& schedule, double t);

/// Unweighted squared error in the objective's own parameterization, summed over elements.
double single_timestep_loss(const PredictionPair& pair);

/// Equivalent squared epsilon-prediction error of a pair.
double convert_to_eps_error(const Schedule& schedule, const PredictionPair& pair);

/// Weighting omega(t) such that loss / omega(t) = -lambda'(t) ||eps_hat - eps||^2.
double omega(ObjectiveKind kind, const Schedule& schedule, double t);

}  // namespace elbocal
