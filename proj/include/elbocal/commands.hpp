// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "elbocal/calibrate.hpp"
#include "elbocal/config.hpp"
#include "elbocal/io.hpp"
#include "elbocal/metrics.hpp"
#include "elbocal/toyscene.hpp"

namespace elbocal {

inline constexpr const char* kToolVersion = "0.3.0";

/// Writes into a sibling temporary directory and renames it over the target on
/// commit(); an uncommitted directory is removed on destruction.
class StagedDirectory {
public:
    explicit StagedDirectory(std::filesystem::path target);
    ~StagedDirectory();
    StagedDirectory(const StagedDirectory&) = delete;
    StagedDirectory& operator=(const StagedDirectory&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return staging_; }
    /// Replaces the target. Refuses to replace a non-empty directory that holds
    /// neither manifest.json nor provenance.json.
    void commit();

private:
    std::filesystem::path target_;
    std::filesystem::path staging_;
    bool committed_ = false;
};

// synth ----------------------------------------------------------------------

struct SynthOptions {
    int scenes = 10;
    bool bias_suite = false;
    std::uint64_t seed = 0;
    int height = 16;
    int width = 16;
};

/// Throws ConfigError when no scenes are requested.
Manifest synthesize_manifest(const SynthOptions& options);
/// manifest.json, <scene>_gt.pgm (label map) and <scene>_<class>.pgm (binary masks).
void write_dataset(const Manifest& manifest, const std::filesystem::path& out);

// segment --------------------------------------------------------------------

struct SceneRun {
    Scene scene;
    SegmentResult result;
};

/// Segments every scene of the manifest on `config.threads` workers. Output order
/// follows the manifest and does not depend on the worker count.
std::vector<SceneRun> segment_manifest(const Manifest& manifest, const RunConfig& config);

/// <scene>_<class>.csv heatmaps, <scene>_labels.pgm, <scene>.json, and a
/// provenance.json with the full config and raw ELBO estimates.
void write_segmentation(const std::vector<SceneRun>& runs, const RunConfig& config,
                        const std::filesystem::path& dataset, const std::filesystem::path& out);

// eval -----------------------------------------------------------------------

struct SceneEval {
    std::string scene;
    BiasMode mode = BiasMode::None;
    EvalReport report;
};

struct EvalSummary {
    EvalReport total;
    std::vector<SceneEval> scenes;
};

EvalSummary evaluate_runs(const std::vector<SceneRun>& runs, EvalOptions options = {});
/// Reads <scene>_labels.pgm from `pred_dir` and <scene>_gt.pgm from the dataset.
/// Throws IoError listing every scene without a prediction.
EvalSummary evaluate_directory(const std::filesystem::path& pred_dir, const std::filesystem::path& dataset,
                               EvalOptions options = {});

Json to_json(const EvalSummary& summary);
std::string per_scene_csv(const EvalSummary& summary);

struct BiasComparison {
    std::string mode;
    int scenes = 0;
    double miou = 0.0;
    double baseline_miou = 0.0;
    double f1 = 0.0;
    double baseline_f1 = 0.0;
};

/// Per bias mode (plus "all"), pooled metrics of `calibrated` next to `baseline`.
/// Throws ConfigError when the two summaries cover different scenes.
std::vector<BiasComparison> compare_by_bias_mode(const EvalSummary& calibrated, const EvalSummary& baseline);
std::string comparison_csv(const std::vector<BiasComparison>& rows);

// sweep ----------------------------------------------------------------------

enum class SweepParameter { Gamma, ElboSteps, ElboStrategy, AttentionRange, FixedS };

std::string_view to_string(SweepParameter p);
SweepParameter sweep_parameter_from_string(std::string_view name);

/// Parses "0.25", "1/4" or "1e-2".
double parse_number(std::string_view text);

/// Sets the swept field. Attention ranges accept small | middle | large | random
/// or an explicit "lo:hi".
void apply_sweep_value(RunConfig& config, SweepParameter parameter, const std::string& value);

struct SweepRow {
    std::string value;
    double miou = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
};

/// One segmentation + evaluation per value, preceded by an uncalibrated "baseline" row.
/// Throws ConfigError on an empty value list.
std::vector<SweepRow> run_sweep(const Manifest& manifest, const RunConfig& config, SweepParameter parameter,
                                const std::vector<std::string>& values);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace elbocal
