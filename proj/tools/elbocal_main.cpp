// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "elbocal/commands.hpp"
#include "elbocal/config.hpp"
#include "elbocal/errors.hpp"
#include "elbocal/verify.hpp"

namespace fs = std::filesystem;
using namespace elbocal;

namespace {

// Exit codes: 0 success, 1 verification failure, 2 bad configuration, 3 I/O or parse error.
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

/// Flags shared by segment and sweep; unset flags leave the config file's value.
struct RunFlags {
    std::string config_path;
    std::optional<std::string> schedule;
    std::optional<std::string> objective;
    std::optional<std::string> gamma;
    std::optional<int> elbo_steps;
    std::optional<std::string> elbo_strategy;
    std::optional<int> attention_steps;
    std::optional<std::string> attention_range;
    std::optional<std::string> fixed_s;
    std::optional<double> threshold;
    std::optional<std::string> reading;
    std::optional<std::uint64_t> noise_seed;
    std::optional<int> threads;
    bool no_calibration = false;
    bool float32 = false;

    void attach(CLI::App& app) {
        app.add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
        app.add_option("--schedule", schedule, "vp-linear | vp-cosine | rectified-flow");
        app.add_option("--objective", objective, "score | flow | x | epsilon | velocity");
        app.add_option("--gamma", gamma, "alignment base in (0,1], e.g. 0.333 or 1/3");
        app.add_option("--elbo-steps", elbo_steps, "timesteps per ELBO estimate");
        app.add_option("--elbo-strategy", elbo_strategy, "even | random | small | middle | large");
        app.add_option("--attention-steps", attention_steps, "timesteps for attention collection");
        app.add_option("--attention-range", attention_range, "small | middle | large | random | lo:hi");
        app.add_option("--fixed-s", fixed_s, "use this constant alignment score for every class");
        app.add_option("--threshold", threshold, "background threshold on the posterior");
        app.add_option("--reading", reading, "calibration exponent reading: root | power");
        app.add_option("--noise-seed", noise_seed, "seed for timesteps and noise");
        app.add_option("--threads", threads, "scene-level worker threads");
        app.add_flag("--no-calibration", no_calibration, "skip ELBO estimation and calibration");
        app.add_flag("--float32", float32, "round latents, noise and attention to single precision");
    }

    [[nodiscard]] RunConfig resolve() const {
        RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        SegmentConfig& s = c.segment;
        if (schedule) s.schedule = schedule_from_json(Json{{"kind", *schedule}});
        if (objective) s.objective = objective_kind_from_string(*objective);
        if (gamma) s.gamma = parse_number(*gamma);
        if (elbo_steps) s.elbo.steps = *elbo_steps;
        if (elbo_strategy) s.elbo.kind = sampling_kind_from_string(*elbo_strategy);
        if (attention_steps) s.attention.steps = *attention_steps;
        if (attention_range) apply_sweep_value(c, SweepParameter::AttentionRange, *attention_range);
        if (fixed_s) s.fixed_s = parse_number(*fixed_s);
        if (threshold) s.threshold = *threshold;
        if (reading) s.reading = calibration_reading_from_string(*reading);
        if (noise_seed) s.noise_seed = *noise_seed;
        if (threads) c.threads = *threads;
        if (no_calibration) s.calibration = false;
        if (float32) s.float32 = true;
        validate(c);
        return c;
    }
};

std::vector<std::string> split_values(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    for (char ch : text) {
        if (ch == ',') {
            if (!current.empty()) out.push_back(current);
            current.clear();
        } else if (ch != ' ') {
            current.push_back(ch);
        }
    }
    if (!current.empty()) out.push_back(current);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ELBO-based calibration of pixel-text alignment on synthetic scenes"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    SynthOptions synth;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scene dataset");
    synth_cmd->add_option("--out", synth_out, "output dataset directory")->required();
    synth_cmd->add_option("--scenes", synth.scenes, "number of base scenes")->capture_default_str();
    synth_cmd->add_flag("--bias-suite", synth.bias_suite, "emit none + four bias variants per base scene");
    synth_cmd->add_option("--seed", synth.seed, "data seed")->capture_default_str();
    synth_cmd->add_option("--height", synth.height, "scene height")->capture_default_str();
    synth_cmd->add_option("--width", synth.width, "scene width")->capture_default_str();

    RunFlags segment_flags;
    std::string segment_dataset;
    std::string segment_out;
    auto* segment_cmd = app.add_subcommand("segment", "segment every scene of a dataset");
    segment_cmd->add_option("--dataset", segment_dataset, "dataset directory")->required();
    segment_cmd->add_option("--out", segment_out, "output directory")->required();
    segment_flags.attach(*segment_cmd);

    std::string eval_pred;
    std::string eval_gt;
    std::string eval_report;
    std::string eval_csv;
    std::string eval_compare;
    std::string eval_compare_out;
    bool eval_absent_as_one = false;
    bool eval_no_background = false;
    auto* eval_cmd = app.add_subcommand("eval", "score predicted label maps against ground truth");
    eval_cmd->add_option("--pred", eval_pred, "segment output directory")->required();
    eval_cmd->add_option("--gt", eval_gt, "dataset directory")->required();
    eval_cmd->add_option("--out", eval_report, "report path (default <pred>/report.json)");
    eval_cmd->add_option("--csv", eval_csv, "write one row per scene to this CSV");
    eval_cmd->add_option("--compare", eval_compare, "baseline segment output to compare against, per bias mode");
    eval_cmd->add_option("--compare-out", eval_compare_out, "comparison CSV path (default <pred>/compare.csv)");
    eval_cmd->add_flag("--absent-as-one", eval_absent_as_one, "score classes absent from both masks as IoU 1");
    eval_cmd->add_flag("--no-background", eval_no_background, "leave background out of mIoU");

    VerifyOptions verify;
    std::string verify_config;
    std::optional<std::string> verify_objective;
    std::optional<std::string> verify_schedule;
    std::string verify_json;
    auto* verify_cmd = app.add_subcommand("verify", "run the oracle suites");
    verify_cmd->add_option("--trials", verify.trials, "random cases per suite cell")->capture_default_str();
    verify_cmd->add_option("--objective", verify_objective, "restrict to one objective");
    verify_cmd->add_option("--schedule", verify_schedule, "restrict to one schedule");
    verify_cmd->add_option("--seed", verify.seed, "seed for random cases")->capture_default_str();
    verify_cmd->add_option("--config", verify_config, "JSON config (gaussian_model is used for ranking)")
        ->check(CLI::ExistingFile);
    verify_cmd->add_option("--json", verify_json, "also write the report as JSON");

    RunFlags sweep_flags;
    std::string sweep_param;
    std::string sweep_values;
    std::string sweep_dataset;
    std::string sweep_out;
    auto* sweep_cmd = app.add_subcommand("sweep", "segment + evaluate once per parameter value");
    sweep_cmd->add_option("--param", sweep_param, "gamma | elbo-steps | elbo-strategy | attention-range | fixed-s")
        ->required();
    sweep_cmd->add_option("--values", sweep_values, "comma-separated values, e.g. 1,1/2,1/3")->required();
    sweep_cmd->add_option("--dataset", sweep_dataset, "dataset directory")->required();
    sweep_cmd->add_option("--out", sweep_out, "CSV path (default: stdout)");
    sweep_flags.attach(*sweep_cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) {
            const Manifest manifest = synthesize_manifest(synth);
            write_dataset(manifest, synth_out);
            std::cout << "wrote " << manifest.scenes.size() << " scenes to " << synth_out << "\n";
        } else if (*segment_cmd) {
            const RunConfig config = segment_flags.resolve();
            const Manifest manifest = read_manifest(segment_dataset);
            const auto runs = segment_manifest(manifest, config);
            write_segmentation(runs, config, segment_dataset, segment_out);
            std::cout << "segmented " << runs.size() << " scenes into " << segment_out << "\n";
        } else if (*eval_cmd) {
            EvalOptions options;
            options.absent_as_one = eval_absent_as_one;
            options.include_background = !eval_no_background;
            const EvalSummary summary = evaluate_directory(eval_pred, eval_gt, options);
            const fs::path report = eval_report.empty() ? fs::path(eval_pred) / "report.json" : fs::path(eval_report);
            write_text(report, to_json(summary).dump(2) + "\n");
            if (!eval_csv.empty()) write_text(eval_csv, per_scene_csv(summary));
            std::cout << "miou " << format_double(summary.total.miou) << "  precision "
                      << format_double(summary.total.precision) << "  f1 " << format_double(summary.total.f1)
                      << "\n";
            if (!eval_compare.empty()) {
                const EvalSummary baseline = evaluate_directory(eval_compare, eval_gt, options);
                const std::string table = comparison_csv(compare_by_bias_mode(summary, baseline));
                const fs::path out =
                    eval_compare_out.empty() ? fs::path(eval_pred) / "compare.csv" : fs::path(eval_compare_out);
                write_text(out, table);
                std::cout << table;
            }
        } else if (*verify_cmd) {
            if (!verify_config.empty()) verify.ranking_model = load_run_config(verify_config).gaussian_model;
            if (verify_objective) verify.objective = objective_kind_from_string(*verify_objective);
            if (verify_schedule) verify.schedule = schedule_kind_from_string(*verify_schedule);
            const VerifyReport report = run_verify(verify);
            for (const SuiteResult& s : report.suites) {
                std::cout << (s.passed() ? "PASS " : "FAIL ") << s.name << "  cases=" << s.cases
                          << "  worst_rel=" << s.worst << "  " << s.seconds << "s\n";
                for (const std::string& f : s.failures) std::cout << "    " << f << "\n";
                if (s.failure_count > static_cast<long>(s.failures.size())) {
                    std::cout << "    ... " << s.failure_count - static_cast<long>(s.failures.size()) << " more\n";
                }
            }
            if (!verify_json.empty()) write_text(verify_json, to_json(report).dump(2) + "\n");
            return report.passed() ? 0 : kExitFailure;
        } else if (*sweep_cmd) {
            const RunConfig config = sweep_flags.resolve();
            const Manifest manifest = read_manifest(sweep_dataset);
            const auto rows =
                run_sweep(manifest, config, sweep_parameter_from_string(sweep_param), split_values(sweep_values));
            const std::string csv = sweep_csv(rows);
            if (sweep_out.empty()) {
                std::cout << csv;
            } else {
                write_text(sweep_out, csv);
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const VocabularyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return 0;
}
