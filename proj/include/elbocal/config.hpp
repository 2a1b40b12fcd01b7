// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "elbocal/calibrate.hpp"
#include "elbocal/gaussian_oracle.hpp"
#include "elbocal/io.hpp"

namespace elbocal {

/// Everything a command needs to reproduce a run. All randomness derives from
/// data_seed (scene synthesis) and segment.noise_seed (timesteps and noise).
struct RunConfig {
    SegmentConfig segment;
    std::uint64_t data_seed = 0;
    int threads = 1;
    /// Optional model for the Gaussian ranking suite of `verify`.
    std::optional<GaussianClassModel> gaussian_model;
};

/// Overlays the keys present in `j` onto `config`. Unknown keys raise ConfigError
/// so typos do not silently fall back to defaults.
void apply_json(RunConfig& config, const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);
Json to_json(const RunConfig& config);

/// Throws ConfigError on out-of-range values (gamma, steps, ranges, threads, ...).
void validate(const RunConfig& config);

}  // namespace elbocal
