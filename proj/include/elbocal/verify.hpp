// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "elbocal/gaussian_oracle.hpp"
#include "elbocal/io.hpp"
#include "elbocal/objectives.hpp"
#include "elbocal/schedule.hpp"

namespace elbocal {

struct VerifyOptions {
    int trials = 1000;              ///< random cases per identity cell / schedule / metric suite
    int equivalence_cases = 50;
    int ranking_trials = 100;
    int ranking_steps = 50;
    std::optional<ObjectiveKind> objective;  ///< restrict identity suites to one objective
    std::optional<ScheduleKind> schedule;    ///< restrict to one schedule
    std::optional<GaussianClassModel> ranking_model;
    std::uint64_t seed = 20260501;
};

struct SuiteResult {
    std::string name;
    long cases = 0;
    std::vector<std::string> failures;  ///< first few violations, with inputs
    long failure_count = 0;
    double worst = 0.0;  ///< largest relative error seen (identity suites)
    double seconds = 0.0;

    [[nodiscard]] bool passed() const { return failure_count == 0; }
};

struct RankingOutcome {
    int trials = 0;
    int ordered = 0;  ///< ELB(true class) < ELB(other class)
    int agrees = 0;   ///< sign matches the analytic log-likelihood difference
};

struct VerifyReport {
    std::vector<SuiteResult> suites;
    [[nodiscard]] bool passed() const;
};

/// Two unit-variance classes in `dim` dimensions whose means differ by `separation`
/// in every coordinate; equal priors.
GaussianClassModel make_ranking_model(std::size_t dim = 8, double separation = 3.0);

SuiteResult verify_objective_identity(const VerifyOptions& options);
SuiteResult verify_estimator_equivalence(const VerifyOptions& options);
RankingOutcome gaussian_ranking(const VerifyOptions& options, const Schedule& schedule);
SuiteResult verify_gaussian_ranking(const VerifyOptions& options);
SuiteResult verify_schedules(const VerifyOptions& options);
SuiteResult verify_metrics(const VerifyOptions& options);

VerifyReport run_verify(const VerifyOptions& options);
Json to_json(const VerifyReport& report);

}  // namespace elbocal
