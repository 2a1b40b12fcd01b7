// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "elbocal/toyscene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "elbocal/errors.hpp"

namespace elbocal {

namespace {

const std::vector<std::string> kFillerTokens = {"a", "photo", "of", ","};
const std::vector<std::string> kPromptPrefix = {"a", "photo", "of"};

struct DefaultEntry {
    const char* name;
    double rarity;
};

// Common classes, then rare stand-ins, then the occluder.
constexpr DefaultEntry kDefaultEntries[] = {
    {"cat", 1.0},    {"dog", 1.0},    {"car", 1.0},     {"tree", 1.0},     {"fire hydrant", 1.0},
    {"traffic light", 1.0},           {"bird", 1.0},    {"boat", 1.0},     {"okapi", 0.3},
    {"quokka", 0.3}, {"axolotl", 0.3}, {"pangolin", 0.3}, {"box", 1.0},
};
constexpr const char* kDefaultOccluder = "box";

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

void softmax_inplace(std::span<double> logits) {
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& v : logits) {
        v = std::exp(v - top);
        total += v;
    }
    for (double& v : logits) v /= total;
}

Latent box_blur(const Latent& z) {
    const auto h = static_cast<long>(z.shape.height);
    const auto w = static_cast<long>(z.shape.width);
    const std::size_t d = z.shape.channels;
    Latent out(z.shape);
    for (long r = 0; r < h; ++r) {
        for (long c = 0; c < w; ++c) {
            auto dst = out.pixel(static_cast<std::size_t>(r * w + c));
            int count = 0;
            for (long dr = -1; dr <= 1; ++dr) {
                for (long dc = -1; dc <= 1; ++dc) {
                    const long rr = r + dr;
                    const long cc = c + dc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    const auto src = z.pixel(static_cast<std::size_t>(rr * w + cc));
                    for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
                    ++count;
                }
            }
            for (std::size_t k = 0; k < d; ++k) dst[k] /= count;
        }
    }
    return out;
}

Latent average_pool2(const Latent& z) {
    const std::size_t h = z.shape.height;
    const std::size_t w = z.shape.width;
    const std::size_t d = z.shape.channels;
    Latent out(Shape3{(h + 1) / 2, (w + 1) / 2, d});
    for (std::size_t r = 0; r < out.shape.height; ++r) {
        for (std::size_t c = 0; c < out.shape.width; ++c) {
            auto dst = out.pixel(r * out.shape.width + c);
            int count = 0;
            for (std::size_t rr = 2 * r; rr < std::min(2 * r + 2, h); ++rr) {
                for (std::size_t cc = 2 * c; cc < std::min(2 * c + 2, w); ++cc) {
                    const auto src = z.pixel(rr * w + cc);
                    for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
                    ++count;
                }
            }
            for (std::size_t k = 0; k < d; ++k) dst[k] /= count;
        }
    }
    return out;
}

struct TokenKey {
    std::span<const double> embedding;
    double gain;
};

Matrix cross_attention(const Latent& queries, const std::vector<TokenKey>& keys) {
    Matrix a(queries.pixels(), keys.size());
    for (std::size_t p = 0; p < queries.pixels(); ++p) {
        auto row = a.row(p);
        const auto q = queries.pixel(p);
        for (std::size_t j = 0; j < keys.size(); ++j) row[j] = keys[j].gain * dot(q, keys[j].embedding);
        softmax_inplace(row);
    }
    return a;
}

Matrix self_attention(const Latent& queries, double gain) {
    const std::size_t n = queries.pixels();
    Matrix s(n, n);
    for (std::size_t p = 0; p < n; ++p) {
        auto row = s.row(p);
        const auto q = queries.pixel(p);
        for (std::size_t l = 0; l < n; ++l) row[l] = gain * dot(q, queries.pixel(l));
        softmax_inplace(row);
    }
    return s;
}

Grid column_grid(const Matrix& m, std::size_t col, std::size_t h, std::size_t w) {
    Grid g(h, w);
    for (std::size_t p = 0; p < h * w; ++p) g.values[p] = m.at(p, col);
    return g;
}

int rounded(double v) { return static_cast<int>(std::lround(v)); }

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

bool is_filler_token(std::string_view token) {
    return std::find(kFillerTokens.begin(), kFillerTokens.end(), token) != kFillerTokens.end();
}

std::vector<std::string> split_phrase(std::string_view phrase) {
    std::istringstream in{std::string(phrase)};
    std::vector<std::string> out;
    for (std::string word; in >> word;) out.push_back(word);
    return out;
}

ClassVocabulary::ClassVocabulary(std::vector<double> background, std::vector<VocabularyEntry> entries,
                                 std::string occluder)
    : background_(std::move(background)), entries_(std::move(entries)), occluder_(std::move(occluder)) {
    auto check_unit = [&](std::span<const double> v, const std::string& what) {
        if (v.size() != background_.size()) throw ConfigError("embedding of '" + what + "' has the wrong dimension");
        if (std::abs(std::sqrt(dot(v, v)) - 1.0) > 1e-9) throw ConfigError("embedding of '" + what + "' is not unit");
    };
    if (background_.empty()) throw ConfigError("vocabulary needs a background embedding");
    check_unit(background_, "background");
    std::set<std::string> tokens;
    for (const VocabularyEntry& e : entries_) {
        check_unit(e.embedding, e.name);
        if (!(e.rarity > 0.0 && e.rarity <= 1.0)) throw ConfigError("rarity of '" + e.name + "' outside (0,1]");
        const auto words = split_phrase(e.name);
        if (words.empty()) throw ConfigError("vocabulary entry with an empty name");
        for (const std::string& word : words) {
            if (is_filler_token(word) || !tokens.insert(word).second) {
                throw ConfigError("token '" + word + "' of '" + e.name + "' is not unique");
            }
        }
    }
    if (!occluder_.empty() && !contains(occluder_)) throw ConfigError("occluder '" + occluder_ + "' not in vocabulary");
}

ClassVocabulary ClassVocabulary::make_default(std::size_t dim, std::uint64_t seed) {
    constexpr std::size_t count = std::size(kDefaultEntries) + 1;
    if (dim < count) {
        throw ConfigError("default vocabulary needs dimension >= " + std::to_string(count));
    }
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    // Gram-Schmidt on Gaussian draws: background first, then the entries.
    std::vector<std::vector<double>> basis;
    while (basis.size() < count) {
        std::vector<double> v(dim);
        for (double& x : v) x = normal(engine);
        for (const auto& b : basis) {
            const double proj = dot(v, b);
            for (std::size_t k = 0; k < dim; ++k) v[k] -= proj * b[k];
        }
        const double norm = std::sqrt(dot(v, v));
        if (norm < 1e-6) continue;
        for (double& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    std::vector<VocabularyEntry> entries;
    for (std::size_t i = 0; i < std::size(kDefaultEntries); ++i) {
        entries.push_back({kDefaultEntries[i].name, basis[i + 1], kDefaultEntries[i].rarity});
    }
    return ClassVocabulary(basis[0], std::move(entries), kDefaultOccluder);
}

bool ClassVocabulary::contains(std::string_view name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
}

const VocabularyEntry& ClassVocabulary::entry(std::string_view name) const {
    for (const VocabularyEntry& e : entries_) {
        if (e.name == name) return e;
    }
    throw VocabularyError("unknown class '" + std::string(name) + "'");
}

const VocabularyEntry* ClassVocabulary::token_owner(std::string_view token) const {
    if (is_filler_token(token)) return nullptr;
    for (const VocabularyEntry& e : entries_) {
        for (const std::string& word : split_phrase(e.name)) {
            if (word == token) return &e;
        }
    }
    throw VocabularyError("unknown token '" + std::string(token) + "'");
}

void ClassVocabulary::set_rarity(std::string_view name, double rarity) {
    if (!(rarity > 0.0 && rarity <= 1.0)) throw ConfigError("rarity outside (0,1]");
    for (VocabularyEntry& e : entries_) {
        if (e.name == name) {
            e.rarity = rarity;
            return;
        }
    }
    throw VocabularyError("unknown class '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Scenes

std::string_view to_string(BiasMode mode) {
    switch (mode) {
        case BiasMode::None: return "none";
        case BiasMode::SmallSize: return "small-size";
        case BiasMode::Occlusion: return "occlusion";
        case BiasMode::MultiObject: return "multi-object";
        case BiasMode::RareClass: return "rare-class";
    }
    return "unknown";
}

BiasMode bias_mode_from_string(std::string_view name) {
    for (BiasMode mode : kAllBiasModes) {
        if (to_string(mode) == name) return mode;
    }
    throw ConfigError("unknown bias mode '" + std::string(name) + "'");
}

bool Rect::overlaps(const Rect& o, int gap) const {
    return x < o.x + o.w + gap && o.x < x + w + gap && y < o.y + o.h + gap && o.y < y + h + gap;
}

LabelMask Scene::label_map() const {
    LabelMask out(height(), width());
    for (std::size_t i = 0; i < gt_masks.size(); ++i) {
        for (std::size_t p = 0; p < out.size(); ++p) {
            if (gt_masks[i].labels[p] != 0) out.labels[p] = static_cast<int>(i) + 1;
        }
    }
    return out;
}

std::vector<std::string> Scene::class_prompt(std::size_t class_index) const {
    std::vector<std::string> tokens = kPromptPrefix;
    for (int idx : spans.at(class_index)) tokens.push_back(caption[static_cast<std::size_t>(idx)]);
    return tokens;
}

namespace {

std::vector<std::string> unique_classes(const std::vector<Placement>& placements) {
    std::vector<std::string> out;
    for (const Placement& p : placements) {
        if (std::find(out.begin(), out.end(), p.class_name) == out.end()) out.push_back(p.class_name);
    }
    return out;
}

void apply_bias(std::vector<Placement>& placements, const std::string& target, const SceneSpec& spec,
                ClassVocabulary& vocab) {
    const double m = spec.bias.magnitude;
    if (spec.bias.mode == BiasMode::None || m == 0.0) return;
    switch (spec.bias.mode) {
        case BiasMode::None: break;
        case BiasMode::SmallSize: {
            const double scale = 1.0 - 0.75 * m;
            for (Placement& p : placements) {
                if (p.class_name != target) continue;
                const int w = rounded(p.rect.w * scale);
                const int h = rounded(p.rect.h * scale);
                if (w <= 0 || h <= 0) {
                    throw ConfigError("scene '" + spec.name + "': small-size bias leaves a zero-area rectangle");
                }
                p.rect = {p.rect.x + (p.rect.w - w) / 2, p.rect.y + (p.rect.h - h) / 2, w, h};
            }
            break;
        }
        case BiasMode::Occlusion: {
            std::vector<Placement> occluders;
            for (const Placement& p : placements) {
                if (p.class_name != target) continue;
                const int cover = rounded(p.rect.w * m);
                if (cover > 0) {
                    occluders.push_back({vocab.occluder(), {p.rect.x + p.rect.w - cover, p.rect.y, cover, p.rect.h}});
                }
            }
            placements.insert(placements.end(), occluders.begin(), occluders.end());
            break;
        }
        case BiasMode::MultiObject: {
            const auto classes = unique_classes(placements);
            std::string distractor;
            Rect shape{0, 0, 3, 3};
            for (const Placement& p : placements) {
                if (p.class_name != target) {
                    distractor = p.class_name;
                    shape = p.rect;
                    break;
                }
            }
            if (distractor.empty()) {
                for (const VocabularyEntry& e : vocab.entries()) {
                    if (e.rarity == 1.0 && e.name != vocab.occluder() &&
                        std::find(classes.begin(), classes.end(), e.name) == classes.end()) {
                        distractor = e.name;
                        break;
                    }
                }
            }
            std::mt19937_64 engine(spec.seed ^ 0x9e3779b97f4a7c15ULL);
            const int copies = rounded(4.0 * m);
            for (int c = 0; c < copies; ++c) {
                std::uniform_int_distribution<int> xs(0, spec.width - shape.w);
                std::uniform_int_distribution<int> ys(0, spec.height - shape.h);
                for (int attempt = 0; attempt < 200; ++attempt) {
                    const Rect r{xs(engine), ys(engine), shape.w, shape.h};
                    const bool clear = std::none_of(placements.begin(), placements.end(),
                                                    [&](const Placement& p) { return p.rect.overlaps(r, 1); });
                    if (clear) {
                        placements.push_back({distractor, r});
                        break;
                    }
                }
            }
            break;
        }
        case BiasMode::RareClass: {
            const auto classes = unique_classes(placements);
            const VocabularyEntry* rare = nullptr;
            for (const VocabularyEntry& e : vocab.entries()) {
                if (e.rarity < 1.0 && std::find(classes.begin(), classes.end(), e.name) == classes.end()) {
                    rare = &e;
                    break;
                }
            }
            if (rare == nullptr) throw ConfigError("vocabulary has no rare class to swap in");
            const std::string rare_name = rare->name;
            vocab.set_rarity(rare_name, 1.0 - m * (1.0 - rare->rarity));
            for (Placement& p : placements) {
                if (p.class_name == target) p.class_name = rare_name;
            }
            break;
        }
    }
}

}  // namespace

Scene generate_scene(const SceneSpec& spec, const ClassVocabulary& vocab) {
    if (spec.height <= 0 || spec.width <= 0) throw ConfigError("scene '" + spec.name + "': empty grid");
    if (spec.placements.empty()) throw ConfigError("scene '" + spec.name + "' has no placements");
    if (!(spec.bias.magnitude >= 0.0 && spec.bias.magnitude <= 1.0)) {
        throw ConfigError("scene '" + spec.name + "': bias magnitude outside [0,1]");
    }
    if (!(spec.texture_std >= 0.0)) throw ConfigError("scene '" + spec.name + "': negative texture std");
    for (const Placement& p : spec.placements) {
        const Rect& r = p.rect;
        if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > spec.width || r.y + r.h > spec.height) {
            throw ConfigError("scene '" + spec.name + "': rectangle of '" + p.class_name + "' leaves the grid");
        }
        (void)vocab.entry(p.class_name);
    }
    const auto original_classes = unique_classes(spec.placements);
    if (spec.target < 0 || static_cast<std::size_t>(spec.target) >= original_classes.size()) {
        throw ConfigError("scene '" + spec.name + "': target index out of range");
    }

    Scene scene;
    scene.name = spec.name;
    scene.bias = spec.bias;
    scene.target = spec.target;
    scene.seed = spec.seed;
    scene.vocabulary = vocab;
    std::vector<Placement> placements = spec.placements;
    apply_bias(placements, original_classes[static_cast<std::size_t>(spec.target)], spec, scene.vocabulary);
    scene.classes = unique_classes(placements);

    const auto h = static_cast<std::size_t>(spec.height);
    const auto w = static_cast<std::size_t>(spec.width);
    LabelMask labels(h, w);
    for (const Placement& p : placements) {
        const auto idx = std::find(scene.classes.begin(), scene.classes.end(), p.class_name) - scene.classes.begin();
        for (int r = p.rect.y; r < p.rect.y + p.rect.h; ++r) {
            for (int c = p.rect.x; c < p.rect.x + p.rect.w; ++c) {
                labels.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = static_cast<int>(idx) + 1;
            }
        }
    }
    scene.background_mask = LabelMask(h, w);
    for (std::size_t p = 0; p < labels.size(); ++p) scene.background_mask.labels[p] = labels.labels[p] == 0 ? 1 : 0;
    for (std::size_t i = 0; i < scene.classes.size(); ++i) {
        LabelMask mask(h, w);
        for (std::size_t p = 0; p < labels.size(); ++p) mask.labels[p] = labels.labels[p] == static_cast<int>(i) + 1;
        if (mask.count(1) == 0) {
            throw ConfigError("scene '" + spec.name + "': class '" + scene.classes[i] + "' has no visible pixels");
        }
        scene.gt_masks.push_back(std::move(mask));
    }

    const std::size_t d = scene.vocabulary.dim();
    scene.latent = Latent(Shape3{h, w, d});
    std::mt19937_64 engine(spec.seed);
    std::normal_distribution<double> texture(0.0, spec.texture_std);
    for (std::size_t p = 0; p < labels.size(); ++p) {
        const int label = labels.labels[p];
        const std::vector<double>& base =
            label == 0 ? scene.vocabulary.background()
                       : scene.vocabulary.entry(scene.classes[static_cast<std::size_t>(label - 1)]).embedding;
        auto px = scene.latent.pixel(p);
        for (std::size_t k = 0; k < d; ++k) px[k] = base[k] + (spec.texture_std > 0.0 ? texture(engine) : 0.0);
    }

    scene.caption = kPromptPrefix;
    for (std::size_t i = 0; i < scene.classes.size(); ++i) {
        if (i > 0) scene.caption.emplace_back(",");
        std::vector<int> span;
        for (const std::string& word : split_phrase(scene.classes[i])) {
            span.push_back(static_cast<int>(scene.caption.size()));
            scene.caption.push_back(word);
        }
        scene.spans.push_back(std::move(span));
    }
    return scene;
}

SceneSpec random_scene_spec(const std::string& name, const ClassVocabulary& vocab, std::uint64_t seed, int height,
                            int width) {
    std::vector<std::string> common;
    for (const VocabularyEntry& e : vocab.entries()) {
        if (e.rarity == 1.0 && e.name != vocab.occluder()) common.push_back(e.name);
    }
    if (common.size() < 2) throw ConfigError("vocabulary needs two common classes for random scenes");
    std::mt19937_64 engine(seed);
    std::shuffle(common.begin(), common.end(), engine);

    std::uniform_int_distribution<int> side(4, 6);
    const int w = side(engine);
    const int h = side(engine);
    if (w + 1 > width || h + 1 > height) throw ConfigError("grid too small for random scenes");
    std::uniform_int_distribution<int> xs(0, width - w);
    std::uniform_int_distribution<int> ys(0, height - h);

    SceneSpec spec;
    spec.name = name;
    spec.height = height;
    spec.width = width;
    spec.seed = seed;
    for (int attempt = 0; attempt < 10000; ++attempt) {
        const Rect first{xs(engine), ys(engine), w, h};
        const Rect second{xs(engine), ys(engine), w, h};
        if (!second.overlaps(first, 1)) {
            spec.placements.push_back({common[0], first});
            spec.placements.push_back({common[1], second});
            return spec;
        }
    }
    throw ConfigError("could not place two separated rectangles in scene '" + name + "'");
}

double suite_magnitude(BiasMode mode) {
    switch (mode) {
        case BiasMode::None: return 0.0;
        case BiasMode::SmallSize:
        case BiasMode::Occlusion:
        case BiasMode::MultiObject: return 0.5;
        case BiasMode::RareClass: return 1.0;
    }
    return 0.0;
}

std::vector<SceneSpec> bias_suite(const SceneSpec& base) {
    std::vector<SceneSpec> out;
    for (BiasMode mode : kAllBiasModes) {
        SceneSpec variant = base;
        variant.name = base.name + "_" + std::string(to_string(mode));
        variant.bias = {mode, suite_magnitude(mode)};
        out.push_back(std::move(variant));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Denoiser and attention

ToyDenoiser::ToyDenoiser(ClassVocabulary vocab, Schedule schedule, ObjectiveKind kind, ToyModelParams params)
    : vocab_(std::move(vocab)), schedule_(schedule), kind_(kind), params_(params) {
    schedule_.validate();
}

ToyOutput ToyDenoiser::run(const Latent& zt, double t, std::span<const std::string> tokens,
                           bool with_self_attention) const {
    if (zt.shape.channels != vocab_.dim()) {
        throw ShapeError("latent has " + std::to_string(zt.shape.channels) + " channels, vocabulary dimension is " +
                         std::to_string(vocab_.dim()));
    }
    if (tokens.empty()) throw VocabularyError("empty condition");
    const auto [alpha, sigma] = alpha_sigma(schedule_, t);
    const double shrink = alpha / (alpha * alpha + sigma * sigma);

    // A rare token is both a weak key and a blurred appearance prior: its mean
    // leans towards the background by (1 - rarity).
    std::vector<TokenKey> keys;
    std::vector<std::vector<double>> means;
    keys.reserve(tokens.size());
    means.reserve(tokens.size());
    for (const std::string& token : tokens) {
        const VocabularyEntry* owner = vocab_.token_owner(token);
        if (owner == nullptr) {
            keys.push_back({vocab_.background(), params_.filler_gain});
            means.push_back(vocab_.background());
        } else {
            keys.push_back({owner->embedding, params_.attention_gain * owner->rarity});
            std::vector<double> m(owner->embedding.size());
            for (std::size_t k = 0; k < m.size(); ++k) {
                m[k] = owner->rarity * owner->embedding[k] + (1.0 - owner->rarity) * vocab_.background()[k];
            }
            means.push_back(std::move(m));
        }
    }

    Latent fine = box_blur(zt);
    Latent coarse = average_pool2(zt);
    for (double& v : fine.values) v *= shrink;
    for (double& v : coarse.values) v *= shrink;

    ToyOutput out;
    out.attention.t = t;
    out.attention.cross.push_back(cross_attention(fine, keys));
    out.attention.cross.push_back(cross_attention(coarse, keys));
    out.attention.layer_resolutions = {{fine.shape.height, fine.shape.width}, {coarse.shape.height, coarse.shape.width}};
    if (with_self_attention) {
        out.attention.self.push_back(self_attention(fine, params_.self_gain));
        out.attention.self.push_back(self_attention(coarse, params_.self_gain));
    }

    // Blend per-token Gaussian means with the layer-averaged attention weights.
    Matrix weights = out.attention.cross[0];
    const Matrix upsampled = resize_cross_attention(out.attention.cross[1], coarse.shape.height, coarse.shape.width,
                                                    fine.shape.height, fine.shape.width);
    for (std::size_t i = 0; i < weights.values.size(); ++i) weights.values[i] = 0.5 * (weights.values[i] + upsampled.values[i]);

    const double variance = params_.texture_std * params_.texture_std;
    const double denom = alpha * alpha * variance + sigma * sigma;
    const std::size_t d = zt.shape.channels;
    out.eps_hat = Latent(zt.shape);
    std::vector<double> mean(d);
    for (std::size_t p = 0; p < zt.pixels(); ++p) {
        std::fill(mean.begin(), mean.end(), 0.0);
        const auto w = weights.row(p);
        for (std::size_t j = 0; j < keys.size(); ++j) {
            for (std::size_t k = 0; k < d; ++k) mean[k] += w[j] * means[j][k];
        }
        const auto z = zt.pixel(p);
        auto e = out.eps_hat.pixel(p);
        for (std::size_t k = 0; k < d; ++k) e[k] = sigma * (z[k] - alpha * mean[k]) / denom;
    }
    return out;
}

Latent ToyDenoiser::predict(const Latent& zt, double t, const Condition& condition) const {
    Latent eps_hat = run(zt, t, condition.tokens, false).eps_hat;
    if (kind_ == ObjectiveKind::Epsilon) return eps_hat;
    return prediction_from_epsilon(kind_, schedule_, eps_hat, zt, t);
}

Matrix resize_cross_attention(const Matrix& map, std::size_t src_h, std::size_t src_w, std::size_t dst_h,
                              std::size_t dst_w) {
    if (map.rows != src_h * src_w) throw ShapeError("resize_cross_attention: rows do not match source size");
    if (src_h == dst_h && src_w == dst_w) return map;
    Matrix out(dst_h * dst_w, map.cols);
    for (std::size_t j = 0; j < map.cols; ++j) {
        const Grid g = bilinear_resize(column_grid(map, j, src_h, src_w), dst_h, dst_w);
        for (std::size_t p = 0; p < g.size(); ++p) out.at(p, j) = g.values[p];
    }
    normalize_rows(out);
    return out;
}

Matrix resize_self_attention(const Matrix& map, std::size_t src_h, std::size_t src_w, std::size_t dst_h,
                             std::size_t dst_w) {
    if (map.rows != src_h * src_w || map.cols != src_h * src_w) {
        throw ShapeError("resize_self_attention: map does not match source size");
    }
    if (src_h == dst_h && src_w == dst_w) return map;
    const Matrix rows_resized = resize_cross_attention(map, src_h, src_w, dst_h, dst_w);
    Matrix out(dst_h * dst_w, dst_h * dst_w);
    for (std::size_t p = 0; p < rows_resized.rows; ++p) {
        Grid g(src_h, src_w);
        std::copy(rows_resized.row(p).begin(), rows_resized.row(p).end(), g.values.begin());
        const Grid up = bilinear_resize(g, dst_h, dst_w);
        std::copy(up.values.begin(), up.values.end(), out.row(p).begin());
    }
    normalize_rows(out);
    return out;
}

CrossAttentionStack aggregate_layers(const CrossAttentionStack& stack) {
    if (stack.cross.empty() || stack.cross.size() != stack.layer_resolutions.size()) {
        throw ShapeError("aggregate_layers: inconsistent attention stack");
    }
    std::size_t best = 0;
    for (std::size_t l = 1; l < stack.layer_resolutions.size(); ++l) {
        const auto [h, w] = stack.layer_resolutions[l];
        const auto [bh, bw] = stack.layer_resolutions[best];
        if (h * w > bh * bw) best = l;
    }
    const auto [dst_h, dst_w] = stack.layer_resolutions[best];

    CrossAttentionStack out;
    out.t = stack.t;
    out.layer_resolutions = {{dst_h, dst_w}};
    const double layers = static_cast<double>(stack.cross.size());
    Matrix cross(dst_h * dst_w, stack.cross.front().cols);
    for (std::size_t l = 0; l < stack.cross.size(); ++l) {
        const auto [h, w] = stack.layer_resolutions[l];
        const Matrix r = resize_cross_attention(stack.cross[l], h, w, dst_h, dst_w);
        for (std::size_t i = 0; i < cross.values.size(); ++i) cross.values[i] += r.values[i] / layers;
    }
    out.cross.push_back(std::move(cross));
    if (!stack.self.empty()) {
        if (stack.self.size() != stack.cross.size()) throw ShapeError("aggregate_layers: self/cross layer mismatch");
        Matrix self(dst_h * dst_w, dst_h * dst_w);
        for (std::size_t l = 0; l < stack.self.size(); ++l) {
            const auto [h, w] = stack.layer_resolutions[l];
            const Matrix r = resize_self_attention(stack.self[l], h, w, dst_h, dst_w);
            for (std::size_t i = 0; i < self.values.size(); ++i) self.values[i] += r.values[i] / layers;
        }
        out.self.push_back(std::move(self));
    }
    return out;
}

CrossAttentionStack collect_attention(const ToyDenoiser& denoiser, const Scene& scene, std::span<const double> times,
                                      std::uint64_t seed, bool float32) {
    if (times.empty()) throw ConfigError("collect_attention needs at least one timestep");
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    CrossAttentionStack total;
    const double count = static_cast<double>(times.size());
    for (double t : times) {
        Latent eps(scene.latent.shape);
        for (double& v : eps.values) v = normal(engine);
        Latent zt = add_noise(denoiser.schedule(), scene.latent, t, eps).zt;
        if (float32) round_to_float(zt.values);
        CrossAttentionStack step = aggregate_layers(denoiser.run(zt, t, scene.caption, true).attention);
        if (total.cross.empty()) {
            total.layer_resolutions = step.layer_resolutions;
            total.cross.emplace_back(step.cross[0].rows, step.cross[0].cols);
            total.self.emplace_back(step.self[0].rows, step.self[0].cols);
        }
        for (std::size_t i = 0; i < total.cross[0].values.size(); ++i) total.cross[0].values[i] += step.cross[0].values[i] / count;
        for (std::size_t i = 0; i < total.self[0].values.size(); ++i) total.self[0].values[i] += step.self[0].values[i] / count;
        total.t += t / count;
    }
    if (float32) {
        round_to_float(total.cross[0].values);
        round_to_float(total.self[0].values);
        normalize_rows(total.cross[0]);
        normalize_rows(total.self[0]);
    }
    return total;
}

}  // namespace elbocal
