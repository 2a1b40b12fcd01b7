// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"

#include "elbocal/elbo.hpp"
#include "elbocal/errors.hpp"
#include "elbocal/gaussian_oracle.hpp"

using namespace elbocal;

namespace {

/// Knows x0, so it can return the exact noise.
class PerfectDenoiser final : public ConditionalDenoiser {
public:
    PerfectDenoiser(Latent x0, Schedule s) : x0_(std::move(x0)), s_(s) {}
    [[nodiscard]] ObjectiveKind objective() const override { return ObjectiveKind::Epsilon; }
    [[nodiscard]] Latent predict(const Latent& zt, double t, const Condition&) const override {
        const auto [a, sg] = alpha_sigma(s_, t);
        return linear_combination(1.0 / sg, zt, -a / sg, x0_);
    }

private:
    Latent x0_;
    Schedule s_;
};

std::vector<ElboEstimate> estimates(std::vector<double> values) {
    std::vector<ElboEstimate> out;
    for (std::size_t i = 0; i < values.size(); ++i) out.push_back({static_cast<int>(i), values[i], {}});
    return out;
}

GaussianClassModel two_classes(std::size_t dim, double separation) {
    return GaussianClassModel({{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0), 0.5},
                               {std::vector<double>(dim, separation), std::vector<double>(dim, 1.0), 0.5}});
}

}  // namespace

TEST_CASE("timestep sampling") {
    CHECK(sample_times({0.0, 1.0}, 1, false, 0) == std::vector<double>{0.5});
    const auto grid = sample_times({0.0, 1.0}, 5, false, 0);
    REQUIRE(grid.size() == 5);
    CHECK(grid.front() == kTimeMin);
    CHECK(grid.back() == kTimeMax);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        CHECK(grid[i] - grid[i - 1] == doctest::Approx((kTimeMax - kTimeMin) / 4).epsilon(1e-12));
    }
    CHECK(sample_times({0.0, 1.0}, 7, true, 42) == sample_times({0.0, 1.0}, 7, true, 42));
    CHECK(sample_times({0.0, 1.0}, 7, true, 42) != sample_times({0.0, 1.0}, 7, true, 43));

    SUBCASE("strategies draw from their ranges") {
        for (SamplingKind k : {SamplingKind::Small, SamplingKind::Middle, SamplingKind::Large, SamplingKind::Random}) {
            const TimeRange r = nominal_range(k);
            for (double t : sample_timesteps({k, 10, 3})) {
                CHECK(t >= std::max(r.lo, kTimeMin));
                CHECK(t <= std::min(r.hi, kTimeMax));
            }
        }
        CHECK(sample_timesteps({SamplingKind::Middle, 3, 0}) == std::vector<double>{0.4, 0.5, 0.6});
    }
    CHECK_THROWS_AS(sample_times({0.0, 1.0}, 0, false, 0), ConfigError);
    CHECK_THROWS_AS(sample_times({0.99995, 1.0}, 3, false, 0), ConfigError);
    CHECK_THROWS_AS(sampling_kind_from_string("uniform"), ConfigError);
}

TEST_CASE("a perfect denoiser has zero ELBO loss") {
    const Schedule s = Schedule::vp_cosine();
    const Latent x0({2, 2, 3}, 0.7);
    const PerfectDenoiser d(x0, s);
    const ElboEstimate e = estimate_elbo(d, x0, {0, {}}, SamplingStrategy{}, s, ObjectiveKind::Epsilon, 5);
    CHECK(e.value == doctest::Approx(0.0).scale(1.0));
    CHECK(e.samples.size() == 20);
}

TEST_CASE("estimates are reproducible and share the noise stream") {
    const Schedule s = Schedule::vp_linear();
    const GaussianDenoiser d(two_classes(4, 3.0), s);
    const Latent x0({1, 1, 4}, std::vector<double>{0.1, -0.3, 0.5, 0.2});
    const SamplingStrategy st{SamplingKind::Random, 25, 9};
    const auto a = estimate_elbo(d, x0, {1, {}}, st, s, ObjectiveKind::Epsilon, 77);
    const auto b = estimate_elbo(d, x0, {1, {}}, st, s, ObjectiveKind::Epsilon, 77);
    CHECK(a.value == b.value);
    CHECK(a.value >= 0.0);
    const NoiseStream stream = make_noise_stream(st, x0.shape, 77);
    CHECK(estimate_elbo(d, x0, {1, {}}, stream, s, ObjectiveKind::Epsilon).value == a.value);
    // The integrand recorded per sample is half the weighted epsilon error.
    double mean = 0.0;
    for (const ElboSample& smp : a.samples) mean += smp.integrand;
    CHECK(mean / static_cast<double>(a.samples.size()) == doctest::Approx(a.value).epsilon(1e-14));
}

TEST_CASE("objective parameterizations give the same estimate") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (const Schedule& s : {Schedule::vp_linear(), Schedule::vp_cosine(), Schedule::rectified_flow()}) {
        const GaussianDenoiser eps_model(two_classes(3, 1.5), s);
        Latent x0({1, 1, 3});
        for (double& v : x0.values) v = n(rng);
        const NoiseStream stream = make_noise_stream({SamplingKind::Even, 20, 0}, x0.shape, rng());
        const double reference = estimate_elbo(eps_model, x0, {0, {}}, stream, s, ObjectiveKind::Epsilon).value;
        for (ObjectiveKind k : kAllObjectives) {
            const ReparameterizedDenoiser model(eps_model, k, s);
            CHECK(estimate_elbo(model, x0, {0, {}}, stream, s, k).value == doctest::Approx(reference).epsilon(1e-9));
        }
    }
}

TEST_CASE("objective mismatch and bad wrappers are rejected") {
    const Schedule s = Schedule::vp_linear();
    const GaussianDenoiser eps_model(two_classes(2, 1.0), s);
    const Latent x0({1, 1, 2}, 0.0);
    CHECK_THROWS_AS(estimate_elbo(eps_model, x0, {0, {}}, SamplingStrategy{}, s, ObjectiveKind::Score, 1), ConfigError);
    const ReparameterizedDenoiser score(eps_model, ObjectiveKind::Score, s);
    CHECK_THROWS_AS(ReparameterizedDenoiser(score, ObjectiveKind::X, s), ConfigError);
    CHECK_THROWS_AS(estimate_elbo(eps_model, x0, {0, {}}, NoiseStream{}, s, ObjectiveKind::Epsilon), ConfigError);
}

TEST_CASE("the generating class has the smaller ELBO loss") {
    const Schedule s = Schedule::vp_linear();
    const GaussianClassModel model = two_classes(8, 3.0);
    const GaussianDenoiser d(model, s);
    int wins = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        const Latent x = sample_class(model, 0, {1, 1, 8}, 1000 + trial);
        const NoiseStream stream = make_noise_stream({SamplingKind::Even, 50, 0}, x.shape, 2000 + trial);
        const double own = estimate_elbo(d, x, {0, {}}, stream, s, ObjectiveKind::Epsilon).value;
        const double other = estimate_elbo(d, x, {1, {}}, stream, s, ObjectiveKind::Epsilon).value;
        wins += own < other;
    }
    CHECK(wins == 100);
}

TEST_CASE("even-grid estimate converges when the class term dominates") {
    // Far from the conditioning mean, the bounded mismatch term dwarfs the
    // class-independent noise term that grows like 1/t near the clamp.
    const Schedule s = Schedule::vp_linear();
    const GaussianDenoiser d(two_classes(2, 0.0), s);
    const Latent x0({1, 1, 2}, std::vector<double>{200.0, -150.0});
    const double coarse = estimate_elbo(d, x0, {0, {}}, SamplingStrategy{SamplingKind::Even, 200, 0}, s,
                                        ObjectiveKind::Epsilon, 3).value;
    const double fine = estimate_elbo(d, x0, {0, {}}, SamplingStrategy{SamplingKind::Even, 2000, 0}, s,
                                      ObjectiveKind::Epsilon, 3).value;
    CHECK(std::abs(coarse - fine) / fine < 0.02);
}

TEST_CASE("alignment scores") {
    const auto s = alignment_scores(estimates({2.0, 5.0}), 1.0 / 3.0);
    CHECK(s.scores[0] == 1.0);
    CHECK(s.scores[1] == doctest::Approx(1.0 / 3.0));
    const auto three = alignment_scores(estimates({1.0, 2.0, 3.0}), 1.0 / 3.0);
    CHECK(three.scores[0] == 1.0);
    CHECK(three.scores[1] == doctest::Approx(std::pow(3.0, -0.5)).epsilon(1e-12));
    CHECK(three.scores[2] == doctest::Approx(1.0 / 3.0));
    CHECK(three.raw.size() == 3);

    for (double v : alignment_scores(estimates({4.0, 1.5, 9.0}), 1.0).scores) CHECK(v == 1.0);
    for (double v : alignment_scores(estimates({2.0, 2.0, 2.0}), 0.25).scores) CHECK(v == 1.0);
    CHECK(alignment_scores(estimates({7.0}), 0.5).scores == std::vector<double>{1.0});

    CHECK_THROWS_AS(alignment_scores(estimates({1.0, 2.0}), 0.0), ConfigError);
    CHECK_THROWS_AS(alignment_scores(estimates({1.0, 2.0}), 1.5), ConfigError);
    CHECK_THROWS_AS(alignment_scores({}, 0.5), ConfigError);

    const auto fixed = fixed_alignment_scores(estimates({1.0, 9.0, 3.0}), 0.5);
    CHECK(fixed.scores == std::vector<double>{0.5, 0.5, 0.5});
}

TEST_CASE("alignment score algebra on random vectors") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    std::uniform_real_distribution<double> g(0.05, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> v(2 + static_cast<std::size_t>(trial % 6));
        for (double& x : v) x = u(rng);
        const double gamma = g(rng);
        const auto s = alignment_scores(estimates(v), gamma);
        std::vector<double> moved;
        for (double x : v) moved.push_back(3.5 * x - 12.0);
        const auto s2 = alignment_scores(estimates(moved), gamma);
        for (std::size_t i = 0; i < v.size(); ++i) {
            CHECK(s.scores[i] >= gamma * (1 - 1e-15));
            CHECK(s.scores[i] <= 1.0);
            CHECK(s2.scores[i] == doctest::Approx(s.scores[i]).epsilon(1e-12));
            for (std::size_t j = 0; j < v.size(); ++j) {
                if (v[i] < v[j]) CHECK(s.scores[i] > s.scores[j]);
            }
        }
    }
}
