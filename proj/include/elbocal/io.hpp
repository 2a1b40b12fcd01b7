// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "elbocal/gaussian_oracle.hpp"
#include "elbocal/metrics.hpp"
#include "elbocal/schedule.hpp"
#include "elbocal/tensor.hpp"
#include "elbocal/toyscene.hpp"

namespace elbocal {

using Json = nlohmann::ordered_json;

// ASCII PGM (P2); gray levels are the label values.
std::string format_pgm(const LabelMask& mask, int maxval);
/// Throws ParseError on malformed input.
LabelMask parse_pgm(std::string_view text);
void write_pgm(const std::filesystem::path& path, const LabelMask& mask, int maxval);
LabelMask read_pgm(const std::filesystem::path& path);

/// Row-major CSV, one grid row per line, values printed round-trip exact.
std::string format_csv(const Grid& grid);
Grid parse_csv(std::string_view text);

void write_text(const std::filesystem::path& path, std::string_view content);
std::string read_text(const std::filesystem::path& path);

/// Parses JSON, turning syntax errors into ParseError with "<source>:<line>:<column>".
Json parse_json(std::string_view text, const std::string& source);
Json read_json(const std::filesystem::path& path);

/// Class name as used inside file names (spaces become underscores).
std::string file_token(std::string_view name);

Json to_json(const Schedule& schedule);
Schedule schedule_from_json(const Json& j);

Json to_json(const ClassVocabulary& vocab);
ClassVocabulary vocabulary_from_json(const Json& j);

Json to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const Json& j);

Json to_json(const GaussianClassModel& model);
GaussianClassModel gaussian_model_from_json(const Json& j);

Json to_json(const EvalReport& report);

struct Manifest {
    int version = 1;
    std::uint64_t data_seed = 0;
    ClassVocabulary vocabulary;
    std::vector<SceneSpec> scenes;
};

Json to_json(const Manifest& manifest);
Manifest manifest_from_json(const Json& j);
/// Throws ParseError (with line context) or IoError.
Manifest read_manifest(const std::filesystem::path& dataset_dir);

}  // namespace elbocal
