// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "elbocal/verify.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <limits>
#include <cmath>
#include <random>
#include <sstream>

#include "elbocal/calibrate.hpp"
#include "elbocal/elbo.hpp"
#include "elbocal/errors.hpp"
#include "elbocal/metrics.hpp"

namespace elbocal {

namespace {

constexpr std::size_t kMaxListedFailures = 10;
constexpr std::array<ScheduleKind, 3> kAllSchedules = {ScheduleKind::VpLinear, ScheduleKind::VpCosine,
                                                        ScheduleKind::RectifiedFlow};

Schedule default_schedule(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::VpLinear: return Schedule::vp_linear();
        case ScheduleKind::VpCosine: return Schedule::vp_cosine();
        case ScheduleKind::RectifiedFlow: return Schedule::rectified_flow();
    }
    return {};
}

std::vector<Schedule> selected_schedules(const VerifyOptions& o) {
    std::vector<Schedule> out;
    for (ScheduleKind k : kAllSchedules) {
        if (!o.schedule || *o.schedule == k) out.push_back(default_schedule(k));
    }
    return out;
}

std::vector<ObjectiveKind> selected_objectives(const VerifyOptions& o) {
    std::vector<ObjectiveKind> out;
    for (ObjectiveKind k : kAllObjectives) {
        if (!o.objective || *o.objective == k) out.push_back(k);
    }
    return out;
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

void record(SuiteResult& r, const std::string& message) {
    ++r.failure_count;
    if (r.failures.size() < kMaxListedFailures) r.failures.push_back(message);
}

Latent random_latent(Shape3 shape, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Latent out(shape);
    for (double& v : out.values) v = normal(rng);
    return out;
}

class Stopwatch {
public:
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

bool VerifyReport::passed() const {
    return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed(); });
}

GaussianClassModel make_ranking_model(std::size_t dim, double separation) {
    GaussianClass a{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0), 0.5};
    GaussianClass b{std::vector<double>(dim, separation), std::vector<double>(dim, 1.0), 0.5};
    return GaussianClassModel({a, b});
}

SuiteResult verify_objective_identity(const VerifyOptions& options) {
    const Stopwatch clock;
    SuiteResult r;
    r.name = "objective-identity";
    constexpr double kTolerance = 1e-9;
    const Shape3 shape{2, 2, 4};
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> time(kTimeMin, kTimeMax);
    for (const Schedule& schedule : selected_schedules(options)) {
        for (ObjectiveKind kind : selected_objectives(options)) {
            for (int i = 0; i < options.trials; ++i) {
                const double t = time(rng);
                const Latent x0 = random_latent(shape, rng);
                const Latent eps = random_latent(shape, rng);
                const Latent eps_hat = linear_combination(1.0, eps, 0.5, random_latent(shape, rng));
                const Latent zt = add_noise(schedule, x0, t, eps).zt;
                const PredictionPair pair{prediction_from_epsilon(kind, schedule, eps_hat, zt, t),
                                          target_function(kind, schedule, x0, eps, t), kind, t};
                const double lhs = single_timestep_loss(pair) / omega(kind, schedule, t);
                const double rhs = -log_snr_derivative(schedule, t) * squared_distance(eps_hat.values, eps.values);
                const double err = rel_error(lhs, rhs);
                r.worst = std::max(r.worst, err);
                ++r.cases;
                if (!(err <= kTolerance)) {
                    std::ostringstream msg;
                    msg.precision(17);
                    msg << "loss/omega != -lambda' |eps_hat - eps|^2 for " << to_string(kind) << " on "
                        << to_string(schedule.kind) << " at t=" << t << ": " << lhs << " vs " << rhs
                        << " (rel " << err << ")";
                    record(r, msg.str());
                }
            }
        }
    }
    r.seconds = clock.seconds();
    return r;
}

SuiteResult verify_estimator_equivalence(const VerifyOptions& options) {
    const Stopwatch clock;
    SuiteResult r;
    r.name = "estimator-equivalence";
    constexpr double kTolerance = 1e-9;
    std::mt19937_64 rng(options.seed + 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto schedules = selected_schedules(options);
    for (int c = 0; c < options.equivalence_cases; ++c) {
        const Schedule& schedule = schedules[static_cast<std::size_t>(c) % schedules.size()];
        const std::size_t dim = 2 + static_cast<std::size_t>(unit(rng) * 6);
        std::vector<GaussianClass> classes;
        for (int k = 0; k < 2; ++k) {
            GaussianClass g{std::vector<double>(dim), std::vector<double>(dim), 0.5};
            for (std::size_t d = 0; d < dim; ++d) {
                g.mean[d] = 4.0 * unit(rng) - 2.0;
                g.variance[d] = 0.1 + 2.0 * unit(rng);
            }
            classes.push_back(std::move(g));
        }
        const GaussianDenoiser eps_model(GaussianClassModel(classes), schedule);
        const Latent x0 = random_latent({1, 1, dim}, rng);
        const SamplingStrategy strategy{unit(rng) < 0.5 ? SamplingKind::Even : SamplingKind::Random, 20, rng()};
        const NoiseStream stream = make_noise_stream(strategy, x0.shape, rng());
        const Condition condition{static_cast<int>(c % 2), {}};
        std::vector<std::pair<ObjectiveKind, double>> values;
        for (ObjectiveKind kind : kAllObjectives) {
            const ReparameterizedDenoiser model(eps_model, kind, schedule);
            values.emplace_back(kind, estimate_elbo(model, x0, condition, stream, schedule, kind).value);
        }
        for (std::size_t a = 0; a < values.size(); ++a) {
            for (std::size_t b = a + 1; b < values.size(); ++b) {
                const double err = rel_error(values[a].second, values[b].second);
                r.worst = std::max(r.worst, err);
                ++r.cases;
                if (!(err <= kTolerance)) {
                    std::ostringstream msg;
                    msg.precision(17);
                    msg << "case " << c << " (" << to_string(schedule.kind) << ", dim " << dim << "): "
                        << to_string(values[a].first) << "=" << values[a].second << " vs "
                        << to_string(values[b].first) << "=" << values[b].second << " (rel " << err << ")";
                    record(r, msg.str());
                }
            }
        }
    }
    r.seconds = clock.seconds();
    return r;
}

RankingOutcome gaussian_ranking(const VerifyOptions& options, const Schedule& schedule) {
    const GaussianClassModel model = options.ranking_model.value_or(make_ranking_model());
    if (model.num_classes() != 2) throw ConfigError("the ranking suite needs a two-class model");
    const GaussianDenoiser denoiser(model, schedule);
    const Shape3 shape{1, 1, model.dim()};
    const SamplingStrategy strategy{SamplingKind::Even, options.ranking_steps, 0};
    RankingOutcome out;
    for (int i = 0; i < options.ranking_trials; ++i) {
        const auto trial = static_cast<std::uint64_t>(i);
        const Latent x = sample_class(model, 0, shape, derive_seed(options.seed, trial, 10));
        const NoiseStream stream = make_noise_stream(strategy, shape, derive_seed(options.seed, trial, 11));
        const double elb0 = estimate_elbo(denoiser, x, {0, {}}, stream, schedule, ObjectiveKind::Epsilon).value;
        const double elb1 = estimate_elbo(denoiser, x, {1, {}}, stream, schedule, ObjectiveKind::Epsilon).value;
        const double ll_gap = log_likelihood(model, 0, x.values) - log_likelihood(model, 1, x.values);
        ++out.trials;
        if (elb0 < elb1) ++out.ordered;
        if ((elb1 - elb0 > 0.0) == (ll_gap > 0.0)) ++out.agrees;
    }
    return out;
}

SuiteResult verify_gaussian_ranking(const VerifyOptions& options) {
    const Stopwatch clock;
    SuiteResult r;
    r.name = "gaussian-ranking";
    for (const Schedule& schedule : selected_schedules(options)) {
        const RankingOutcome o = gaussian_ranking(options, schedule);
        r.cases += o.trials;
        const int needed = (99 * o.trials + 99) / 100;
        if (o.ordered < needed || o.agrees < needed) {
            std::ostringstream msg;
            msg << to_string(schedule.kind) << ": true class ranked first in " << o.ordered << "/" << o.trials
                << ", sign agreement " << o.agrees << "/" << o.trials << " (need " << needed << ")";
            record(r, msg.str());
        }
    }
    r.seconds = clock.seconds();
    return r;
}

SuiteResult verify_schedules(const VerifyOptions& options) {
    const Stopwatch clock;
    SuiteResult r;
    r.name = "schedule";
    std::mt19937_64 rng(options.seed + 2);
    std::uniform_real_distribution<double> time(0.01, 0.99);
    for (const Schedule& s : selected_schedules(options)) {
        const std::string name(to_string(s.kind));
        std::vector<double> ts(static_cast<std::size_t>(options.trials));
        for (double& t : ts) t = time(rng);
        std::sort(ts.begin(), ts.end());
        double previous = std::numeric_limits<double>::infinity();
        for (double t : ts) {
            ++r.cases;
            const double analytic = log_snr_derivative(s, t);
            const double fd = log_snr_derivative_fd(s, t);
            const double err = std::abs(analytic - fd) / std::max(1.0, std::abs(analytic));
            r.worst = std::max(r.worst, err);
            if (err > 1e-5) {
                record(r, name + ": d lambda/dt analytic " + std::to_string(analytic) + " vs finite difference " +
                              std::to_string(fd) + " at t=" + std::to_string(t));
            }
            const auto [alpha, sigma] = alpha_sigma(s, t);
            const auto [da, ds] = alpha_sigma_derivative(s, t);
            constexpr double h = 1e-6;
            const auto up = alpha_sigma(s, t + h);
            const auto down = alpha_sigma(s, t - h);
            const double fd_a = (up.alpha - down.alpha) / (2 * h);
            const double fd_s = (up.sigma - down.sigma) / (2 * h);
            if (std::abs(da - fd_a) > 1e-5 * std::max(1.0, std::abs(da)) ||
                std::abs(ds - fd_s) > 1e-5 * std::max(1.0, std::abs(ds))) {
                record(r, name + ": alpha/sigma derivative disagrees with finite difference at t=" + std::to_string(t));
            }
            if (s.kind != ScheduleKind::RectifiedFlow && std::abs(alpha * alpha + sigma * sigma - 1.0) > 1e-12) {
                record(r, name + ": alpha^2 + sigma^2 != 1 at t=" + std::to_string(t));
            }
            const double lambda = log_snr(s, t);
            if (!(lambda < previous) && t > ts.front()) {
                record(r, name + ": log-SNR not strictly decreasing at t=" + std::to_string(t));
            }
            previous = lambda;
        }
    }
    r.seconds = clock.seconds();
    return r;
}

SuiteResult verify_metrics(const VerifyOptions& options) {
    const Stopwatch clock;
    SuiteResult r;
    r.name = "metrics";
    std::mt19937_64 rng(options.seed + 3);
    const int pairs = std::max(100, options.trials / 10);
    for (int i = 0; i < pairs; ++i) {
        const std::size_t h = 1 + rng() % 12;
        const std::size_t w = 1 + rng() % 12;
        const int n = 1 + static_cast<int>(rng() % 4);
        std::vector<std::string> names;
        for (int k = 0; k < n; ++k) names.push_back("class" + std::to_string(k));
        LabelMask pred(h, w);
        LabelMask gt(h, w);
        for (int& v : pred.labels) v = static_cast<int>(rng() % static_cast<unsigned>(n + 1));
        for (int& v : gt.labels) v = static_cast<int>(rng() % static_cast<unsigned>(n + 1));
        const EvalReport report = evaluate(pred, gt, names);
        // Per-class double loop over pixels.
        for (int k = 0; k <= n; ++k) {
            ClassCounts c;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    const bool p = pred.at(y, x) == k;
                    const bool g = gt.at(y, x) == k;
                    c.tp += p && g;
                    c.fp += p && !g;
                    c.fn += !p && g;
                }
            }
            const std::string name = k == 0 ? kBackgroundName : names[static_cast<std::size_t>(k - 1)];
            ++r.cases;
            if (!(report.counts.at(name) == c)) record(r, "pair " + std::to_string(i) + ": counts differ for " + name);
            if (c.present() && report.per_class_iou.at(name) != iou(c)) {
                record(r, "pair " + std::to_string(i) + ": IoU differs for " + name);
            }
        }
    }
    // 4x4, one class: prediction hits 8 of 12 ground-truth pixels plus 2 outside.
    LabelMask gt(4, 4);
    LabelMask pred(4, 4);
    for (std::size_t p = 0; p < 12; ++p) gt.labels[p] = 1;
    for (std::size_t p = 0; p < 8; ++p) pred.labels[p] = 1;
    pred.labels[12] = pred.labels[13] = 1;
    const std::vector<std::string> one{"object"};
    ++r.cases;
    if (evaluate(pred, gt, one).per_class_iou.at("object") != 4.0 / 7.0) record(r, "hand case IoU != 4/7");
    r.seconds = clock.seconds();
    return r;
}

VerifyReport run_verify(const VerifyOptions& options) {
    if (options.trials < 1) throw ConfigError("--trials must be positive");
    VerifyReport report;
    report.suites.push_back(verify_objective_identity(options));
    report.suites.push_back(verify_estimator_equivalence(options));
    report.suites.push_back(verify_gaussian_ranking(options));
    report.suites.push_back(verify_schedules(options));
    report.suites.push_back(verify_metrics(options));
    return report;
}

Json to_json(const VerifyReport& report) {
    Json suites = Json::array();
    for (const SuiteResult& s : report.suites) {
        suites.push_back({{"name", s.name},
                          {"passed", s.passed()},
                          {"cases", s.cases},
                          {"failure_count", s.failure_count},
                          {"worst_relative_error", s.worst},
                          {"seconds", s.seconds},
                          {"failures", s.failures}});
    }
    return {{"passed", report.passed()}, {"suites", suites}};
}

}  // namespace elbocal
