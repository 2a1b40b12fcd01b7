// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "elbocal/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "elbocal/errors.hpp"

namespace elbocal {

namespace fs = std::filesystem;

std::string format_pgm(const LabelMask& mask, int maxval) {
    if (maxval < 1 || maxval > 65535) throw ConfigError("PGM maxval must be in 1..65535");
    std::ostringstream out;
    out << "P2\n" << mask.width << ' ' << mask.height << '\n' << maxval << '\n';
    for (std::size_t r = 0; r < mask.height; ++r) {
        for (std::size_t c = 0; c < mask.width; ++c) {
            const int v = mask.at(r, c);
            if (v < 0 || v > maxval) throw ConfigError("label " + std::to_string(v) + " exceeds PGM maxval");
            if (c > 0) out << ' ';
            out << v;
        }
        out << '\n';
    }
    return out.str();
}

LabelMask parse_pgm(std::string_view text) {
    // Strip comments, then read whitespace-separated fields.
    std::string cleaned;
    cleaned.reserve(text.size());
    bool comment = false;
    for (char ch : text) {
        if (ch == '#') comment = true;
        if (ch == '\n') comment = false;
        if (!comment) cleaned.push_back(ch);
    }
    std::istringstream in(cleaned);
    std::string magic;
    long width = 0;
    long height = 0;
    long maxval = 0;
    if (!(in >> magic) || magic != "P2") throw ParseError("PGM: expected magic 'P2'");
    if (!(in >> width >> height >> maxval) || width <= 0 || height <= 0 || maxval <= 0) {
        throw ParseError("PGM: malformed header");
    }
    LabelMask mask(static_cast<std::size_t>(height), static_cast<std::size_t>(width));
    for (int& v : mask.labels) {
        long value = 0;
        if (!(in >> value)) throw ParseError("PGM: truncated pixel data");
        if (value < 0 || value > maxval) throw ParseError("PGM: pixel value outside 0..maxval");
        v = static_cast<int>(value);
    }
    std::string extra;
    if (in >> extra) throw ParseError("PGM: trailing data after pixels");
    return mask;
}

void write_pgm(const fs::path& path, const LabelMask& mask, int maxval) { write_text(path, format_pgm(mask, maxval)); }

LabelMask read_pgm(const fs::path& path) {
    try {
        return parse_pgm(read_text(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string format_csv(const Grid& grid) {
    std::string out;
    char buf[32];
    for (std::size_t r = 0; r < grid.height; ++r) {
        for (std::size_t c = 0; c < grid.width; ++c) {
            if (c > 0) out.push_back(',');
            const auto res = std::to_chars(buf, buf + sizeof(buf), grid.at(r, c));
            out.append(buf, res.ptr);
        }
        out.push_back('\n');
    }
    return out;
}

Grid parse_csv(std::string_view text) {
    std::vector<std::vector<double>> rows;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            std::size_t comma = line.find(',', pos);
            if (comma == std::string_view::npos) comma = line.size();
            double v = 0.0;
            const auto field = line.substr(pos, comma - pos);
            const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
            if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
                throw ParseError("CSV: bad number '" + std::string(field) + "' on row " + std::to_string(rows.size() + 1));
            }
            row.push_back(v);
            pos = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size()) throw ParseError("CSV: ragged rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) return {};
    Grid g(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) g.at(r, c) = rows[r][c];
    }
    return g;
}

void write_text(const fs::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Json parse_json(std::string_view text, const std::string& source) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1;
        std::size_t column = 1;
        const std::size_t limit = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < limit; ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        std::string context;
        std::size_t line_start = text.rfind('\n', limit == 0 ? 0 : limit - 1);
        line_start = line_start == std::string_view::npos ? 0 : line_start + 1;
        std::size_t line_end = text.find('\n', limit);
        if (line_end == std::string_view::npos) line_end = text.size();
        if (line_start <= line_end) context = std::string(text.substr(line_start, line_end - line_start));
        throw ParseError(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + e.what() +
                         "\n  | " + context);
    }
}

Json read_json(const fs::path& path) { return parse_json(read_text(path), path.string()); }

std::string file_token(std::string_view name) {
    std::string out(name);
    for (char& ch : out) {
        if (ch == ' ' || ch == '/' || ch == '\\') ch = '_';
    }
    return out;
}

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

// nlohmann's type errors are re-raised as ParseError so callers see one error kind.
template <typename F>
auto decoding(const char* what, F&& f) {
    try {
        return f();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

Json to_json(const Schedule& s) {
    Json params = Json::object();
    switch (s.kind) {
        case ScheduleKind::VpLinear:
            params = {{"beta_start", s.beta_start}, {"beta_end", s.beta_end}, {"train_steps", s.train_steps}};
            break;
        case ScheduleKind::VpCosine: params = {{"offset", s.cosine_offset}}; break;
        case ScheduleKind::RectifiedFlow: break;
    }
    return {{"kind", std::string(to_string(s.kind))}, {"params", params}};
}

Schedule schedule_from_json(const Json& j) {
    return decoding("schedule", [&] {
        Schedule s;
        s.kind = schedule_kind_from_string(j.at("kind").get<std::string>());
        const Json params = j.contains("params") ? j.at("params") : Json::object();
        s.beta_start = get_or(params, "beta_start", s.beta_start);
        s.beta_end = get_or(params, "beta_end", s.beta_end);
        s.train_steps = get_or(params, "train_steps", s.train_steps);
        s.cosine_offset = get_or(params, "offset", s.cosine_offset);
        s.validate();
        return s;
    });
}

Json to_json(const ClassVocabulary& vocab) {
    Json entries = Json::array();
    for (const VocabularyEntry& e : vocab.entries()) {
        entries.push_back({{"name", e.name}, {"rarity", e.rarity}, {"embedding", e.embedding}});
    }
    return {{"background", vocab.background()}, {"occluder", vocab.occluder()}, {"entries", entries}};
}

ClassVocabulary vocabulary_from_json(const Json& j) {
    return decoding("vocabulary", [&] {
        std::vector<VocabularyEntry> entries;
        for (const Json& e : j.at("entries")) {
            entries.push_back({e.at("name").get<std::string>(), e.at("embedding").get<std::vector<double>>(),
                               get_or(e, "rarity", 1.0)});
        }
        return ClassVocabulary(j.at("background").get<std::vector<double>>(), std::move(entries),
                               get_or<std::string>(j, "occluder", ""));
    });
}

Json to_json(const SceneSpec& spec) {
    Json placements = Json::array();
    for (const Placement& p : spec.placements) {
        placements.push_back({{"class", p.class_name}, {"rect", {p.rect.x, p.rect.y, p.rect.w, p.rect.h}}});
    }
    return {{"name", spec.name},
            {"height", spec.height},
            {"width", spec.width},
            {"seed", spec.seed},
            {"texture_std", spec.texture_std},
            {"target", spec.target},
            {"bias", {{"mode", std::string(to_string(spec.bias.mode))}, {"magnitude", spec.bias.magnitude}}},
            {"placements", placements}};
}

SceneSpec scene_spec_from_json(const Json& j) {
    return decoding("scene spec", [&] {
        SceneSpec s;
        s.name = j.at("name").get<std::string>();
        s.height = j.at("height").get<int>();
        s.width = j.at("width").get<int>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.texture_std = get_or(j, "texture_std", s.texture_std);
        s.target = get_or(j, "target", 0);
        if (j.contains("bias")) {
            s.bias.mode = bias_mode_from_string(j.at("bias").at("mode").get<std::string>());
            s.bias.magnitude = j.at("bias").at("magnitude").get<double>();
        }
        for (const Json& p : j.at("placements")) {
            const auto r = p.at("rect").get<std::vector<int>>();
            if (r.size() != 4) throw ParseError("scene '" + s.name + "': rect needs [x, y, w, h]");
            s.placements.push_back({p.at("class").get<std::string>(), {r[0], r[1], r[2], r[3]}});
        }
        return s;
    });
}

Json to_json(const GaussianClassModel& model) {
    Json classes = Json::array();
    for (const GaussianClass& c : model.classes()) {
        classes.push_back({{"mean", c.mean}, {"variance", c.variance}, {"prior", c.prior}});
    }
    return {{"classes", classes}};
}

GaussianClassModel gaussian_model_from_json(const Json& j) {
    return decoding("gaussian model", [&] {
        std::vector<GaussianClass> classes;
        for (const Json& c : j.at("classes")) {
            classes.push_back({c.at("mean").get<std::vector<double>>(), c.at("variance").get<std::vector<double>>(),
                               c.at("prior").get<double>()});
        }
        return GaussianClassModel(std::move(classes));
    });
}

Json to_json(const EvalReport& report) {
    Json counts = Json::object();
    for (const auto& [name, c] : report.counts) counts[name] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
    Json ious = Json::object();
    for (const auto& [name, v] : report.per_class_iou) ious[name] = v;
    return {{"miou", report.miou},
            {"precision", report.precision},
            {"recall", report.recall},
            {"f1", report.f1},
            {"per_class_iou", ious},
            {"pixel_counts", counts},
            {"options",
             {{"include_background", report.options.include_background},
              {"absent_as_one", report.options.absent_as_one}}}};
}

Json to_json(const Manifest& m) {
    Json scenes = Json::array();
    for (const SceneSpec& s : m.scenes) scenes.push_back(to_json(s));
    return {{"version", m.version}, {"data_seed", m.data_seed}, {"vocabulary", to_json(m.vocabulary)}, {"scenes", scenes}};
}

Manifest manifest_from_json(const Json& j) {
    return decoding("manifest", [&] {
        Manifest m;
        m.version = get_or(j, "version", 1);
        m.data_seed = get_or<std::uint64_t>(j, "data_seed", 0);
        m.vocabulary = vocabulary_from_json(j.at("vocabulary"));
        for (const Json& s : j.at("scenes")) m.scenes.push_back(scene_spec_from_json(s));
        return m;
    });
}

Manifest read_manifest(const fs::path& dataset_dir) {
    const fs::path path = dataset_dir / "manifest.json";
    if (!fs::exists(path)) throw IoError("no manifest.json in '" + dataset_dir.string() + "'");
    try {
        return manifest_from_json(read_json(path));
    } catch (const ParseError& e) {
        const std::string what = e.what();
        if (what.rfind(path.string(), 0) == 0) throw;
        throw ParseError(path.string() + ": " + what);
    }
}

}  // namespace elbocal
