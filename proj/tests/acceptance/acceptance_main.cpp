// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Optional argument: directory for the emitted CSVs
// (default ./acceptance_out).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "elbocal/calibrate.hpp"
#include "elbocal/commands.hpp"
#include "elbocal/elbo.hpp"
#include "elbocal/errors.hpp"
#include "elbocal/metrics.hpp"
#include "elbocal/verify.hpp"

using namespace elbocal;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
};

fs::path g_out = "acceptance_out";

Manifest bias_manifest(int base_scenes, std::uint64_t seed) {
    SynthOptions o;
    o.scenes = base_scenes;
    o.bias_suite = true;
    o.seed = seed;
    return synthesize_manifest(o);
}

std::string describe(const SuiteResult& s) {
    std::string out = std::to_string(s.cases) + " cases, " + std::to_string(s.failure_count) + " failures";
    if (s.worst > 0.0) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), ", worst rel err %.2e", s.worst);
        out += buf;
    }
    if (!s.failures.empty()) out += "; first: " + s.failures.front();
    return out;
}

Outcome from_suite(const SuiteResult& s) { return {s.passed(), describe(s)}; }

Outcome objective_identity() {
    VerifyOptions o;
    o.trials = 1000;
    return from_suite(verify_objective_identity(o));
}

Outcome estimator_equivalence() {
    VerifyOptions o;
    o.equivalence_cases = 50;
    return from_suite(verify_estimator_equivalence(o));
}

Outcome gaussian_ranking_fidelity() {
    VerifyOptions o;
    o.ranking_trials = 100;
    o.ranking_steps = 50;
    Outcome out;
    for (const Schedule& s : {Schedule::vp_linear(), Schedule::vp_cosine(), Schedule::rectified_flow()}) {
        const RankingOutcome r = gaussian_ranking(o, s);
        out.ok = out.ok && r.ordered >= 99 && r.agrees >= 99;
        out.detail += std::string(to_string(s.kind)) + " ordered " + std::to_string(r.ordered) + "/" +
                      std::to_string(r.trials) + " agree " + std::to_string(r.agrees) + "; ";
    }
    return out;
}

Outcome calibration_identity() {
    const Manifest m = bias_manifest(10, 41);
    RunConfig one;
    one.segment.gamma = 1.0;
    RunConfig off;
    off.segment.calibration = false;
    const auto a = segment_manifest(m, one);
    const auto b = segment_manifest(m, off);
    int identical = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        identical += a[i].result.heatmaps == b[i].result.heatmaps && a[i].result.posterior == b[i].result.posterior;
    }
    return {identical == static_cast<int>(a.size()) && a.size() == 50,
            std::to_string(identical) + "/" + std::to_string(a.size()) + " scenes bitwise identical"};
}

Outcome fixed_s_control() {
    const Manifest m = bias_manifest(6, 42);
    Outcome out;
    int checked = 0;
    for (double s : {0.5, 1.0 / 3.0, 0.25}) {
        for (std::size_t i = 0; i < m.scenes.size(); i += 5) {
            const Scene scene = generate_scene(m.scenes[i], m.vocabulary);
            SegmentConfig a;
            a.fixed_s = s;
            SegmentConfig b = a;
            b.noise_seed = 1234;
            const AlignmentScores sa = scene_alignment_scores(scene, a);
            const AlignmentScores sb = scene_alignment_scores(scene, b);
            const bool constant = std::all_of(sa.scores.begin(), sa.scores.end(), [&](double v) { return v == s; });
            bool raw_differs = false;
            for (std::size_t c = 0; c < sa.raw.size(); ++c) raw_differs = raw_differs || sa.raw[c].value != sb.raw[c].value;
            out.ok = out.ok && constant && sa.scores == sb.scores && raw_differs;
            ++checked;
        }
    }
    const auto rows = run_sweep(m, RunConfig{}, SweepParameter::FixedS, {"1/2", "1/3", "1/4"});
    write_text(g_out / "sweep_fixed_s.csv", sweep_csv(rows));
    out.ok = out.ok && rows.size() == 4;
    out.detail = std::to_string(checked) + " scene checks, " + std::to_string(rows.size()) + " sweep rows on " +
                 std::to_string(m.scenes.size()) + " scenes -> sweep_fixed_s.csv";
    return out;
}

std::vector<std::size_t> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<std::size_t> r(v.size());
    for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = k;
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    double d2 = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double d = static_cast<double>(ra[i]) - static_cast<double>(rb[i]);
        d2 += d * d;
    }
    const double n = static_cast<double>(a.size());
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

Outcome rank_preservation() {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int exact = 0;
    int maps = 0;
    for (int m = 0; m < 1000; ++m) {
        Grid g(12, 12);
        for (double& v : g.values) v = u(rng);
        g = minmax_normalize(g);
        std::vector<double> sorted = g.values;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) continue;
        ++maps;
        bool all = true;
        for (double s : {1.0, 0.5, 1.0 / 3.0, 0.125}) {
            const Grid c = apply_calibration(g, s);
            std::vector<double> cs = c.values;
            std::sort(cs.begin(), cs.end());
            const bool distinct = std::adjacent_find(cs.begin(), cs.end()) == cs.end();
            all = all && distinct && spearman(g.values, c.values) == 1.0;
        }
        exact += all;
    }
    return {exact == maps && maps == 1000, std::to_string(exact) + "/" + std::to_string(maps) + " maps with Spearman 1"};
}

Outcome score_algebra() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng() % 6;
        const double gamma = 0.05 + 0.95 * u(rng);
        std::vector<ElboEstimate> e(n);
        std::vector<ElboEstimate> moved(n);
        const double scale = 0.01 + 100.0 * u(rng);
        const double shift = -50.0 + 100.0 * u(rng);
        for (std::size_t i = 0; i < n; ++i) {
            e[i].class_id = static_cast<int>(i);
            e[i].value = -10.0 + 20.0 * u(rng);
            moved[i] = e[i];
            moved[i].value = scale * e[i].value + shift;
        }
        const AlignmentScores s = alignment_scores(e, gamma);
        const AlignmentScores t = alignment_scores(moved, gamma);
        bool ok = true;
        for (std::size_t i = 0; i < n; ++i) {
            ok = ok && s.scores[i] >= gamma - 1e-15 && s.scores[i] <= 1.0;
            ok = ok && std::abs(s.scores[i] - t.scores[i]) <= 1e-9;
            for (std::size_t j = 0; j < n; ++j) {
                if (e[i].value < e[j].value) ok = ok && s.scores[i] > s.scores[j];
            }
        }
        const auto [lo, hi] = std::minmax_element(s.scores.begin(), s.scores.end());
        ok = ok && *hi == 1.0 && std::abs(*lo - gamma) <= 1e-15;
        failures += !ok;
    }
    return {failures == 0, std::to_string(1000 - failures) + "/1000 vectors satisfy range, reversal and invariance"};
}

Outcome metric_oracle() {
    VerifyOptions o;
    o.trials = 1000;
    const SuiteResult s = verify_metrics(o);
    LabelMask gt(4, 4);
    LabelMask pred(4, 4);
    std::fill(gt.labels.begin(), gt.labels.begin() + 12, 1);
    std::fill(pred.labels.begin(), pred.labels.begin() + 8, 1);
    pred.labels[12] = pred.labels[13] = 1;
    const std::vector<std::string> one{"object"};
    const double hand = evaluate(pred, gt, one).per_class_iou.at("object");
    return {s.passed() && hand == 4.0 / 7.0, describe(s) + ", hand case IoU " + format_double(hand)};
}

Outcome bias_suite_behavior() {
    const Manifest m = bias_manifest(40, 43);
    RunConfig calibrated;
    RunConfig baseline;
    baseline.segment.calibration = false;
    const auto runs = segment_manifest(m, calibrated);
    int rare = 0;
    int rare_ok = 0;
    for (const SceneRun& r : runs) {
        if (r.scene.bias.mode != BiasMode::RareClass) continue;
        ++rare;
        const auto& s = r.result.scores.scores;
        const auto target = static_cast<std::size_t>(r.scene.target);
        bool ok = s.size() == 2 && s[target] == calibrated.segment.gamma;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != target) ok = ok && s[i] == 1.0;
        }
        rare_ok += ok;
    }
    const auto rows = compare_by_bias_mode(evaluate_runs(runs), evaluate_runs(segment_manifest(m, baseline)));
    write_text(g_out / "bias_comparison.csv", comparison_csv(rows));
    std::printf("  bias    scenes  miou(cal)  miou(base)  delta\n");
    bool all_modes = true;
    for (BiasMode mode : kAllBiasModes) {
        const auto it = std::find_if(rows.begin(), rows.end(), [&](const BiasComparison& r) { return r.mode == to_string(mode); });
        all_modes = all_modes && it != rows.end();
    }
    double rare_delta = 0.0;
    for (const BiasComparison& r : rows) {
        std::printf("  %-14s %3d  %.4f     %.4f     %+.4f\n", r.mode.c_str(), r.scenes, r.miou, r.baseline_miou,
                    r.miou - r.baseline_miou);
        if (r.mode == "rare-class") rare_delta = r.miou - r.baseline_miou;
    }
    return {rare > 0 && rare_ok == rare && all_modes,
            std::to_string(rare_ok) + "/" + std::to_string(rare) + " rare scenes with S = gamma on the rare class; " +
                "rare-class delta mIoU " + format_double(rare_delta) + " (expected positive, reported)"};
}

Outcome sweeps() {
    const Manifest m = bias_manifest(6, 44);
    struct Plan {
        SweepParameter parameter;
        std::vector<std::string> values;
    };
    const std::vector<Plan> plans{
        {SweepParameter::Gamma, {"1", "1/2", "1/3", "1/4", "1/5", "1/6", "1/7", "1/8"}},
        {SweepParameter::ElboSteps, {"1", "5", "20"}},
        {SweepParameter::ElboStrategy, {"small", "middle", "large", "random", "even"}},
        {SweepParameter::AttentionRange, {"small", "middle", "large", "random"}},
    };
    Outcome out;
    for (const Plan& p : plans) {
        const auto rows = run_sweep(m, RunConfig{}, p.parameter, p.values);
        const std::string csv = sweep_csv(rows);
        const bool deterministic = sweep_csv(run_sweep(m, RunConfig{}, p.parameter, p.values)) == csv;
        const std::string name = "sweep_" + std::string(to_string(p.parameter)) + ".csv";
        write_text(g_out / name, csv);
        bool ok = deterministic && rows.size() == p.values.size() + 1;
        if (p.parameter == SweepParameter::Gamma) {
            ok = ok && rows[1].miou == rows[0].miou && rows[1].precision == rows[0].precision && rows[1].f1 == rows[0].f1;
        }
        out.ok = out.ok && ok;
        out.detail += name + (ok ? " ok" : " FAILED") + "; ";
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_out = argv[1];
    fs::create_directories(g_out);
    struct Criterion {
        int id;
        const char* name;
        double limit_seconds;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "cross-objective ELBO identity", 10, objective_identity},
        {2, "estimator equivalence across parameterizations", 10, estimator_equivalence},
        {3, "Gaussian ranking fidelity", 30, gaussian_ranking_fidelity},
        {4, "calibration identity at gamma = 1", 120, calibration_identity},
        {5, "fixed-S control", 300, fixed_s_control},
        {6, "rank preservation", 5, rank_preservation},
        {7, "alignment-score algebra", 5, score_algebra},
        {8, "metric oracle", 5, metric_oracle},
        {9, "bias-suite behavior", 300, bias_suite_behavior},
        {10, "sweep reproductions", 900, sweeps},
    };
    int failed = 0;
    for (const Criterion& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs <= c.limit_seconds;
        const bool pass = o.ok && in_time;
        failed += !pass;
        std::printf("%s criterion %d: %s (%.2fs, limit %.0fs%s): %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs,
                    c.limit_seconds, in_time ? "" : ", over time", o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
