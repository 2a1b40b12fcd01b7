// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"

#include "elbocal/errors.hpp"
#include "elbocal/objectives.hpp"

using namespace elbocal;

namespace {

Latent vec(std::vector<double> v) {
    const std::size_t n = v.size();
    return Latent({1, 1, n}, std::move(v));
}

Latent randn(Shape3 shape, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Latent out(shape);
    for (double& v : out.values) v = n(rng);
    return out;
}

// Schedule whose sigma is exactly 0.5 at t = 0.5.
const Schedule kRf = Schedule::rectified_flow();

}  // namespace

TEST_CASE("target functions") {
    const Latent x0 = vec({2.0});
    const Latent eps = vec({4.0});
    CHECK(target_function(ObjectiveKind::Epsilon, kRf, x0, eps, 0.3) == eps);
    CHECK(target_function(ObjectiveKind::X, kRf, x0, eps, 0.3) == x0);
    CHECK(target_function(ObjectiveKind::Velocity, kRf, x0, eps, 0.5).values[0] == doctest::Approx(1.0));
    // Rectified flow's conditional velocity is eps - x0.
    CHECK(target_function(ObjectiveKind::Flow, kRf, x0, eps, 0.7).values[0] == doctest::Approx(2.0));

    SUBCASE("score target is the Gaussian score of q(z_t | x0)") {
        const Latent x = vec({0.3, -1.1});
        const Latent e = vec({1.0, -2.0});
        const Latent score = target_function(ObjectiveKind::Score, kRf, x, e, 0.5);
        CHECK(score.values[0] == doctest::Approx(-2.0));
        CHECK(score.values[1] == doctest::Approx(4.0));
        // d/dz ln N(z; alpha x0, sigma^2) by central differences at z_t.
        const auto [alpha, sigma] = alpha_sigma(kRf, 0.5);
        for (std::size_t i = 0; i < 2; ++i) {
            const double z = alpha * x.values[i] + sigma * e.values[i];
            auto logp = [&](double v) { return -0.5 * (v - alpha * x.values[i]) * (v - alpha * x.values[i]) / (sigma * sigma); };
            const double h = 1e-5;
            CHECK(score.values[i] == doctest::Approx((logp(z + h) - logp(z - h)) / (2 * h)).epsilon(1e-7));
        }
    }
    CHECK_THROWS_AS(target_function(ObjectiveKind::X, kRf, x0, vec({1.0, 2.0}), 0.5), ShapeError);
}

TEST_CASE("single timestep loss and conversion") {
    PredictionPair pair{vec({3.0, 4.0}), vec({0.0, 0.0}), ObjectiveKind::Epsilon, 0.5};
    CHECK(single_timestep_loss(pair) == 25.0);
    pair.predicted = pair.target;
    CHECK(single_timestep_loss(pair) == 0.0);
    for (ObjectiveKind k : kAllObjectives) {
        pair.kind = k;
        CHECK(convert_to_eps_error(kRf, pair) == 0.0);
    }

    PredictionPair eps_pair{vec({std::sqrt(7.3)}), vec({0.0}), ObjectiveKind::Epsilon, 0.4};
    CHECK(convert_to_eps_error(kRf, eps_pair) == doctest::Approx(7.3));

    // Score kind at sigma = 0.5: |s_hat - s|^2 = 4 is |eps_hat - eps|^2 = 1.
    PredictionPair score{vec({2.0, 0.0}), vec({0.0, 0.0}), ObjectiveKind::Score, 0.5};
    CHECK(convert_to_eps_error(kRf, score) == doctest::Approx(1.0));
    const Latent eps = vec({0.2, -0.7});
    const Latent eps_hat = vec({0.9, 0.1});
    const Latent s = target_function(ObjectiveKind::Score, kRf, vec({0.0, 0.0}), eps, 0.5);
    const Latent s_hat = prediction_from_epsilon(ObjectiveKind::Score, kRf, eps_hat, vec({0.0, 0.0}), 0.5);
    CHECK(squared_distance(s_hat.values, s.values) * 0.25 ==
          doctest::Approx(squared_distance(eps_hat.values, eps.values)));
}

TEST_CASE("omega follows the weighting table") {
    // Rectified flow at t = 0.5: lambda' = -8, lambda = 0.
    CHECK(omega(ObjectiveKind::Epsilon, kRf, 0.5) == doctest::Approx(0.125));
    CHECK(omega(ObjectiveKind::X, kRf, 0.5) == doctest::Approx(0.125));
    CHECK(omega(ObjectiveKind::Score, kRf, 0.5) == doctest::Approx(0.5));
    CHECK(omega(ObjectiveKind::Flow, kRf, 0.5) == doctest::Approx(0.5));
    CHECK(omega(ObjectiveKind::Velocity, kRf, 0.5) == doctest::Approx(0.125));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const Schedule& s : {Schedule::vp_linear(), Schedule::vp_cosine(), kRf}) {
        for (int i = 0; i < 200; ++i) {
            const double t = u(rng);
            for (ObjectiveKind k : kAllObjectives) CHECK(omega(k, s, t) > 0.0);
        }
    }
}

TEST_CASE("loss / omega is the weighted epsilon error for every objective") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(kTimeMin, kTimeMax);
    const Shape3 shape{2, 3, 2};
    for (const Schedule& s : {Schedule::vp_linear(), Schedule::vp_cosine(), kRf}) {
        for (ObjectiveKind k : kAllObjectives) {
            for (int i = 0; i < 200; ++i) {
                const double t = u(rng);
                const Latent x0 = randn(shape, rng);
                const Latent eps = randn(shape, rng);
                const Latent eps_hat = randn(shape, rng);
                const Latent zt = add_noise(s, x0, t, eps).zt;
                const PredictionPair pair{prediction_from_epsilon(k, s, eps_hat, zt, t), target_function(k, s, x0, eps, t), k, t};
                const double e2 = squared_distance(eps_hat.values, eps.values);
                CHECK(single_timestep_loss(pair) / omega(k, s, t) ==
                      doctest::Approx(-log_snr_derivative(s, t) * e2).epsilon(1e-9));
                CHECK(convert_to_eps_error(s, pair) == doctest::Approx(e2).epsilon(1e-9));
                CHECK(single_timestep_loss(pair) >= 0.0);
            }
        }
    }
}

TEST_CASE("epsilon_from_prediction inverts prediction_from_epsilon") {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    const Shape3 shape{1, 2, 3};
    for (const Schedule& s : {Schedule::vp_linear(), Schedule::vp_cosine(), kRf}) {
        for (ObjectiveKind k : kAllObjectives) {
            const double t = u(rng);
            const Latent eps_hat = randn(shape, rng);
            const Latent zt = randn(shape, rng);
            const Latent back = epsilon_from_prediction(k, s, prediction_from_epsilon(k, s, eps_hat, zt, t), zt, t);
            for (std::size_t i = 0; i < back.size(); ++i) {
                CHECK(back.values[i] == doctest::Approx(eps_hat.values[i]).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("names round-trip") {
    for (ObjectiveKind k : kAllObjectives) CHECK(objective_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(objective_kind_from_string("v-pred"), ConfigError);
}
