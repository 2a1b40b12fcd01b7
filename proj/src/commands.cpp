// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "elbocal/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <map>
#include <random>
#include <thread>

#include "elbocal/errors.hpp"

namespace elbocal {

namespace fs = std::filesystem;

namespace {

// Stream tag for per-scene base seeds drawn from the data seed.
constexpr std::uint64_t kSceneSeedStream = 5;

bool is_tool_output(const fs::path& dir) {
    if (!fs::exists(dir)) return true;
    if (!fs::is_directory(dir)) return false;
    if (fs::is_empty(dir)) return true;
    return fs::exists(dir / "manifest.json") || fs::exists(dir / "provenance.json");
}

}  // namespace

StagedDirectory::StagedDirectory(fs::path target) : target_(std::move(target)) {
    if (target_.filename().empty()) target_ = target_.parent_path();
    const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) throw IoError("cannot create '" + parent.string() + "': " + ec.message());
    std::random_device entropy;
    for (int attempt = 0; attempt < 16; ++attempt) {
        const fs::path candidate = parent / ("." + target_.filename().string() + ".tmp-" + std::to_string(entropy()));
        if (fs::create_directory(candidate, ec)) {
            staging_ = candidate;
            return;
        }
    }
    throw IoError("cannot create a staging directory next to '" + target_.string() + "'");
}

StagedDirectory::~StagedDirectory() {
    if (!committed_) {
        std::error_code ec;
        fs::remove_all(staging_, ec);
    }
}

void StagedDirectory::commit() {
    if (!is_tool_output(target_)) {
        throw IoError("refusing to replace '" + target_.string() + "': it exists and was not written by elbocal");
    }
    std::error_code ec;
    fs::remove_all(target_, ec);
    if (ec) throw IoError("cannot remove old '" + target_.string() + "': " + ec.message());
    fs::rename(staging_, target_, ec);
    if (ec) throw IoError("cannot move results into '" + target_.string() + "': " + ec.message());
    committed_ = true;
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// synth ----------------------------------------------------------------------

Manifest synthesize_manifest(const SynthOptions& options) {
    if (options.scenes <= 0) throw ConfigError("synth needs at least one scene");
    Manifest m;
    m.data_seed = options.seed;
    m.vocabulary = ClassVocabulary::make_default();
    for (int i = 0; i < options.scenes; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "scene%04d", i);
        const std::uint64_t seed = derive_seed(options.seed, static_cast<std::uint64_t>(i), kSceneSeedStream);
        SceneSpec base = random_scene_spec(name, m.vocabulary, seed, options.height, options.width);
        if (options.bias_suite) {
            for (SceneSpec& variant : bias_suite(base)) m.scenes.push_back(std::move(variant));
        } else {
            m.scenes.push_back(std::move(base));
        }
    }
    return m;
}

void write_dataset(const Manifest& manifest, const fs::path& out) {
    StagedDirectory staged(out);
    write_text(staged.path() / "manifest.json", to_json(manifest).dump(2) + "\n");
    for (const SceneSpec& spec : manifest.scenes) {
        const Scene scene = generate_scene(spec, manifest.vocabulary);
        const int classes = static_cast<int>(scene.classes.size());
        write_pgm(staged.path() / (scene.name + "_gt.pgm"), scene.label_map(), std::max(classes, 1));
        for (std::size_t i = 0; i < scene.classes.size(); ++i) {
            write_pgm(staged.path() / (scene.name + "_" + file_token(scene.classes[i]) + ".pgm"), scene.gt_masks[i],
                      1);
        }
    }
    staged.commit();
}

// segment --------------------------------------------------------------------

std::vector<SceneRun> segment_manifest(const Manifest& manifest, const RunConfig& config) {
    validate(config);
    const std::size_t n = manifest.scenes.size();
    std::vector<SceneRun> runs(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                runs[i].scene = generate_scene(manifest.scenes[i], manifest.vocabulary);
                runs[i].result = segment(runs[i].scene, config.segment);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.threads), std::max<std::size_t>(n, 1));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return runs;
}

void write_segmentation(const std::vector<SceneRun>& runs, const RunConfig& config, const fs::path& dataset,
                        const fs::path& out) {
    StagedDirectory staged(out);
    Json scenes = Json::array();
    for (const SceneRun& run : runs) {
        const Scene& scene = run.scene;
        const SegmentResult& r = run.result;
        for (std::size_t i = 0; i < scene.classes.size(); ++i) {
            write_text(staged.path() / (scene.name + "_" + file_token(scene.classes[i]) + ".csv"),
                       format_csv(r.heatmaps[i]));
        }
        write_pgm(staged.path() / (scene.name + "_labels.pgm"), r.posterior.label_mask,
                  std::max(static_cast<int>(scene.classes.size()), 1));
        const Json per_scene = {{"scene", scene.name},
                                {"classes", scene.classes},
                                {"alignment_scores", r.scores.scores},
                                {"threshold", r.posterior.threshold},
                                {"provenance",
                                 {{"scene_seed", scene.seed},
                                  {"data_seed", config.data_seed},
                                  {"noise_seed", config.segment.noise_seed},
                                  {"run", "provenance.json"}}}};
        write_text(staged.path() / (scene.name + ".json"), per_scene.dump(2) + "\n");

        Json elbo = Json::array();
        for (const ElboEstimate& e : r.scores.raw) elbo.push_back(e.value);
        scenes.push_back({{"scene", scene.name}, {"elbo", elbo}, {"alignment_scores", r.scores.scores}});
    }
    const Json provenance = {{"tool", "elbocal"},
                             {"version", kToolVersion},
                             {"command", "segment"},
                             {"dataset", dataset.string()},
                             {"config", to_json(config)},
                             {"scenes", scenes}};
    write_text(staged.path() / "provenance.json", provenance.dump(2) + "\n");
    staged.commit();
}

// eval -----------------------------------------------------------------------

EvalSummary evaluate_runs(const std::vector<SceneRun>& runs, EvalOptions options) {
    if (runs.empty()) throw ConfigError("nothing to evaluate");
    EvalSummary summary;
    std::vector<EvalReport> reports;
    for (const SceneRun& run : runs) {
        EvalReport report =
            evaluate(run.result.posterior.label_mask, run.scene.label_map(), run.scene.classes, options);
        reports.push_back(report);
        summary.scenes.push_back({run.scene.name, run.scene.bias.mode, std::move(report)});
    }
    summary.total = aggregate(reports);
    return summary;
}

EvalSummary evaluate_directory(const fs::path& pred_dir, const fs::path& dataset, EvalOptions options) {
    const Manifest manifest = read_manifest(dataset);
    if (!fs::is_directory(pred_dir)) throw IoError("prediction directory '" + pred_dir.string() + "' does not exist");
    std::vector<std::string> missing;
    for (const SceneSpec& spec : manifest.scenes) {
        if (!fs::exists(pred_dir / (spec.name + "_labels.pgm"))) missing.push_back(spec.name);
    }
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size(); ++i) list += (i ? ", " : "") + missing[i];
        const std::string prefix = missing.size() == manifest.scenes.size()
                                       ? "no predictions match the dataset; missing: "
                                       : std::to_string(missing.size()) + " scene(s) have no prediction: ";
        throw IoError(prefix + list);
    }
    EvalSummary summary;
    std::vector<EvalReport> reports;
    for (const SceneSpec& spec : manifest.scenes) {
        const Scene scene = generate_scene(spec, manifest.vocabulary);
        const LabelMask pred = read_pgm(pred_dir / (spec.name + "_labels.pgm"));
        const LabelMask gt = read_pgm(dataset / (spec.name + "_gt.pgm"));
        EvalReport report = evaluate(pred, gt, scene.classes, options);
        reports.push_back(report);
        summary.scenes.push_back({spec.name, spec.bias.mode, std::move(report)});
    }
    summary.total = aggregate(reports);
    return summary;
}

Json to_json(const EvalSummary& summary) {
    Json scenes = Json::array();
    for (const SceneEval& s : summary.scenes) {
        scenes.push_back({{"scene", s.scene},
                          {"bias", std::string(to_string(s.mode))},
                          {"miou", s.report.miou},
                          {"precision", s.report.precision},
                          {"f1", s.report.f1}});
    }
    Json j = to_json(summary.total);
    j["scenes"] = scenes;
    return j;
}

std::string per_scene_csv(const EvalSummary& summary) {
    std::string out = "scene,bias,miou,precision,recall,f1\n";
    for (const SceneEval& s : summary.scenes) {
        out += s.scene + "," + std::string(to_string(s.mode)) + "," + format_double(s.report.miou) + "," +
               format_double(s.report.precision) + "," + format_double(s.report.recall) + "," +
               format_double(s.report.f1) + "\n";
    }
    return out;
}

std::vector<BiasComparison> compare_by_bias_mode(const EvalSummary& calibrated, const EvalSummary& baseline) {
    if (calibrated.scenes.size() != baseline.scenes.size()) {
        throw ConfigError("comparison needs the same scenes on both sides");
    }
    std::map<std::string, std::pair<std::vector<EvalReport>, std::vector<EvalReport>>> groups;
    std::vector<std::string> order;
    for (std::size_t i = 0; i < calibrated.scenes.size(); ++i) {
        const SceneEval& a = calibrated.scenes[i];
        const SceneEval& b = baseline.scenes[i];
        if (a.scene != b.scene) throw ConfigError("comparison scenes differ: '" + a.scene + "' vs '" + b.scene + "'");
        const std::string mode(to_string(a.mode));
        if (!groups.contains(mode)) order.push_back(mode);
        groups[mode].first.push_back(a.report);
        groups[mode].second.push_back(b.report);
        groups["all"].first.push_back(a.report);
        groups["all"].second.push_back(b.report);
    }
    order.push_back("all");
    std::vector<BiasComparison> rows;
    for (const std::string& mode : order) {
        const auto& [mine, theirs] = groups.at(mode);
        const EvalReport a = aggregate(mine);
        const EvalReport b = aggregate(theirs);
        rows.push_back({mode, static_cast<int>(mine.size()), a.miou, b.miou, a.f1, b.f1});
    }
    return rows;
}

std::string comparison_csv(const std::vector<BiasComparison>& rows) {
    std::string out = "bias,scenes,miou,baseline_miou,delta_miou,f1,baseline_f1\n";
    for (const BiasComparison& r : rows) {
        out += r.mode + "," + std::to_string(r.scenes) + "," + format_double(r.miou) + "," +
               format_double(r.baseline_miou) + "," + format_double(r.miou - r.baseline_miou) + "," +
               format_double(r.f1) + "," + format_double(r.baseline_f1) + "\n";
    }
    return out;
}

// sweep ----------------------------------------------------------------------

std::string_view to_string(SweepParameter p) {
    switch (p) {
        case SweepParameter::Gamma: return "gamma";
        case SweepParameter::ElboSteps: return "elbo-steps";
        case SweepParameter::ElboStrategy: return "elbo-strategy";
        case SweepParameter::AttentionRange: return "attention-range";
        case SweepParameter::FixedS: return "fixed-s";
    }
    return "unknown";
}

SweepParameter sweep_parameter_from_string(std::string_view name) {
    for (SweepParameter p : {SweepParameter::Gamma, SweepParameter::ElboSteps, SweepParameter::ElboStrategy,
                             SweepParameter::AttentionRange, SweepParameter::FixedS}) {
        if (to_string(p) == name) return p;
    }
    throw ConfigError("unknown sweep parameter '" + std::string(name) + "'");
}

double parse_number(std::string_view text) {
    auto parse = [&](std::string_view s) {
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
            throw ConfigError("not a number: '" + std::string(text) + "'");
        }
        return v;
    };
    const auto slash = text.find('/');
    if (slash == std::string_view::npos) return parse(text);
    const double den = parse(text.substr(slash + 1));
    if (den == 0.0) throw ConfigError("zero denominator in '" + std::string(text) + "'");
    return parse(text.substr(0, slash)) / den;
}

void apply_sweep_value(RunConfig& config, SweepParameter parameter, const std::string& value) {
    SegmentConfig& seg = config.segment;
    switch (parameter) {
        case SweepParameter::Gamma: seg.gamma = parse_number(value); break;
        case SweepParameter::ElboSteps: {
            const double steps = parse_number(value);
            if (steps != static_cast<int>(steps)) throw ConfigError("elbo-steps must be an integer");
            seg.elbo.steps = static_cast<int>(steps);
            break;
        }
        case SweepParameter::ElboStrategy: seg.elbo.kind = sampling_kind_from_string(value); break;
        case SweepParameter::AttentionRange: {
            const auto colon = value.find(':');
            if (colon != std::string::npos) {
                seg.attention.range = {parse_number(std::string_view(value).substr(0, colon)),
                                       parse_number(std::string_view(value).substr(colon + 1))};
                seg.attention.random = false;
            } else {
                const SamplingKind kind = sampling_kind_from_string(value);
                if (kind == SamplingKind::Even) throw ConfigError("attention-range takes small, middle, large, random or lo:hi");
                seg.attention.range = nominal_range(kind);
                seg.attention.random = kind == SamplingKind::Random;
            }
            break;
        }
        case SweepParameter::FixedS: seg.fixed_s = parse_number(value); break;
    }
    validate(config);
}

std::vector<SweepRow> run_sweep(const Manifest& manifest, const RunConfig& config, SweepParameter parameter,
                                const std::vector<std::string>& values) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    std::vector<RunConfig> configs;
    for (const std::string& v : values) {
        RunConfig c = config;
        apply_sweep_value(c, parameter, v);
        configs.push_back(std::move(c));
    }
    RunConfig baseline = config;
    baseline.segment.calibration = false;

    std::vector<SweepRow> rows;
    auto run = [&](const RunConfig& c, const std::string& label) {
        const EvalSummary s = evaluate_runs(segment_manifest(manifest, c));
        rows.push_back({label, s.total.miou, s.total.precision, s.total.f1});
    };
    run(baseline, "baseline");
    for (std::size_t i = 0; i < values.size(); ++i) run(configs[i], values[i]);
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "value,miou,precision,f1\n";
    for (const SweepRow& r : rows) {
        out += r.value + "," + format_double(r.miou) + "," + format_double(r.precision) + "," + format_double(r.f1) +
               "\n";
    }
    return out;
}

}  // namespace elbocal
