// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "elbocal/config.hpp"

#include <initializer_list>
#include <string>

#include "elbocal/errors.hpp"

namespace elbocal {

namespace {

void expect_keys(const Json& j, const char* where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* key : allowed) known = known || item.key() == key;
        if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
}

template <typename T>
void read_into(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

TimeRange range_from_json(const Json& j) {
    if (!j.is_array() || j.size() != 2) throw ConfigError("a time range must be [lo, hi]");
    return {j[0].get<double>(), j[1].get<double>()};
}

void apply_impl(RunConfig& config, const Json& j) {
    expect_keys(j, "config",
                {"schedule", "objective", "elbo", "attention", "calibration", "threshold", "softmax_temperature",
                 "enhance_iterations", "seeds", "threads", "float32", "model", "gaussian_model"});
    SegmentConfig& seg = config.segment;
    if (j.contains("schedule")) seg.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("objective")) seg.objective = objective_kind_from_string(j.at("objective").get<std::string>());
    if (j.contains("elbo")) {
        const Json& e = j.at("elbo");
        expect_keys(e, "elbo", {"strategy", "steps", "gamma"});
        if (e.contains("strategy")) seg.elbo.kind = sampling_kind_from_string(e.at("strategy").get<std::string>());
        read_into(e, "steps", seg.elbo.steps);
        read_into(e, "gamma", seg.gamma);
    }
    if (j.contains("attention")) {
        const Json& a = j.at("attention");
        expect_keys(a, "attention", {"steps", "range", "random"});
        read_into(a, "steps", seg.attention.steps);
        if (a.contains("range")) seg.attention.range = range_from_json(a.at("range"));
        read_into(a, "random", seg.attention.random);
    }
    if (j.contains("calibration")) {
        const Json& c = j.at("calibration");
        expect_keys(c, "calibration", {"enabled", "reading", "fixed_s"});
        read_into(c, "enabled", seg.calibration);
        if (c.contains("reading")) seg.reading = calibration_reading_from_string(c.at("reading").get<std::string>());
        if (c.contains("fixed_s")) {
            if (c.at("fixed_s").is_null()) {
                seg.fixed_s.reset();
            } else {
                seg.fixed_s = c.at("fixed_s").get<double>();
            }
        }
    }
    if (j.contains("threshold")) {
        if (j.at("threshold").is_null()) {
            seg.threshold.reset();
        } else {
            seg.threshold = j.at("threshold").get<double>();
        }
    }
    read_into(j, "softmax_temperature", seg.softmax_temperature);
    read_into(j, "enhance_iterations", seg.enhance_iterations);
    if (j.contains("seeds")) {
        const Json& s = j.at("seeds");
        expect_keys(s, "seeds", {"data", "noise"});
        read_into(s, "data", config.data_seed);
        read_into(s, "noise", seg.noise_seed);
    }
    read_into(j, "threads", config.threads);
    read_into(j, "float32", seg.float32);
    if (j.contains("model")) {
        const Json& m = j.at("model");
        expect_keys(m, "model", {"attention_gain", "filler_gain", "self_gain", "texture_std"});
        read_into(m, "attention_gain", seg.model.attention_gain);
        read_into(m, "filler_gain", seg.model.filler_gain);
        read_into(m, "self_gain", seg.model.self_gain);
        read_into(m, "texture_std", seg.model.texture_std);
    }
    if (j.contains("gaussian_model")) config.gaussian_model = gaussian_model_from_json(j.at("gaussian_model"));
}

}  // namespace

void apply_json(RunConfig& config, const Json& j) {
    try {
        apply_impl(config, j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    validate(config);
}

RunConfig load_run_config(const std::filesystem::path& path) {
    RunConfig config;
    apply_json(config, read_json(path));
    return config;
}

Json to_json(const RunConfig& config) {
    const SegmentConfig& seg = config.segment;
    Json j;
    j["schedule"] = to_json(seg.schedule);
    j["objective"] = std::string(to_string(seg.objective));
    j["elbo"] = {{"strategy", std::string(to_string(seg.elbo.kind))}, {"steps", seg.elbo.steps}, {"gamma", seg.gamma}};
    j["attention"] = {{"steps", seg.attention.steps},
                      {"range", {seg.attention.range.lo, seg.attention.range.hi}},
                      {"random", seg.attention.random}};
    j["calibration"] = {{"enabled", seg.calibration},
                        {"reading", std::string(to_string(seg.reading))},
                        {"fixed_s", seg.fixed_s ? Json(*seg.fixed_s) : Json(nullptr)}};
    j["threshold"] = seg.threshold ? Json(*seg.threshold) : Json(nullptr);
    j["softmax_temperature"] = seg.softmax_temperature;
    j["enhance_iterations"] = seg.enhance_iterations;
    j["seeds"] = {{"data", config.data_seed}, {"noise", seg.noise_seed}};
    j["threads"] = config.threads;
    j["float32"] = seg.float32;
    j["model"] = {{"attention_gain", seg.model.attention_gain},
                  {"filler_gain", seg.model.filler_gain},
                  {"self_gain", seg.model.self_gain},
                  {"texture_std", seg.model.texture_std}};
    if (config.gaussian_model) j["gaussian_model"] = to_json(*config.gaussian_model);
    return j;
}

void validate(const RunConfig& config) {
    const SegmentConfig& seg = config.segment;
    seg.schedule.validate();
    if (!(seg.gamma > 0.0 && seg.gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    if (seg.elbo.steps < 1) throw ConfigError("elbo.steps must be at least 1");
    if (seg.attention.steps < 1) throw ConfigError("attention.steps must be at least 1");
    const TimeRange r = seg.attention.range;
    if (!(r.lo >= 0.0 && r.hi <= 1.0 && r.lo <= r.hi)) throw ConfigError("attention.range must satisfy 0 <= lo <= hi <= 1");
    if (seg.fixed_s && !(*seg.fixed_s > 0.0 && *seg.fixed_s <= 1.0)) throw ConfigError("fixed_s must lie in (0, 1]");
    if (seg.threshold && !(*seg.threshold >= 0.0 && *seg.threshold <= 1.0)) {
        throw ConfigError("threshold must lie in [0, 1]");
    }
    if (!(seg.softmax_temperature > 0.0)) throw ConfigError("softmax_temperature must be positive");
    if (seg.enhance_iterations < 0) throw ConfigError("enhance_iterations must be non-negative");
    if (config.threads < 1) throw ConfigError("threads must be at least 1");
}

}  // namespace elbocal
