// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "elbocal/elbo.hpp"
#include "elbocal/objectives.hpp"
#include "elbocal/schedule.hpp"
#include "elbocal/tensor.hpp"

namespace elbocal {

/// One class phrase. Its whitespace-separated words are its caption tokens and
/// all of them share the entry's embedding.
struct VocabularyEntry {
    std::string name;
    std::vector<double> embedding;
    double rarity = 1.0;  ///< 1 = common, < 1 = underrepresented.

    friend bool operator==(const VocabularyEntry&, const VocabularyEntry&) = default;
};

/// Class embeddings plus a background embedding that also keys the filler tokens
/// ("a", "photo", "of", ",").
class ClassVocabulary {
public:
    ClassVocabulary() = default;
    /// Throws ConfigError on non-unit embeddings, rarity outside (0,1], mismatched
    /// dimensions or a token shared by two entries.
    ClassVocabulary(std::vector<double> background, std::vector<VocabularyEntry> entries, std::string occluder);

    /// Orthonormal embeddings for the built-in class list, drawn from `seed`.
    static ClassVocabulary make_default(std::size_t dim = 16, std::uint64_t seed = 7);

    [[nodiscard]] std::size_t dim() const { return background_.size(); }
    [[nodiscard]] const std::vector<double>& background() const { return background_; }
    [[nodiscard]] const std::vector<VocabularyEntry>& entries() const { return entries_; }
    [[nodiscard]] const std::string& occluder() const { return occluder_; }
    [[nodiscard]] bool contains(std::string_view name) const;
    /// Throws VocabularyError for unknown names.
    [[nodiscard]] const VocabularyEntry& entry(std::string_view name) const;
    /// Entry owning `token`, or nullptr for filler tokens. Throws VocabularyError otherwise.
    [[nodiscard]] const VocabularyEntry* token_owner(std::string_view token) const;

    void set_rarity(std::string_view name, double rarity);

    friend bool operator==(const ClassVocabulary&, const ClassVocabulary&) = default;

private:
    std::vector<double> background_;
    std::vector<VocabularyEntry> entries_;
    std::string occluder_;
};

bool is_filler_token(std::string_view token);
std::vector<std::string> split_phrase(std::string_view phrase);

enum class BiasMode { None, SmallSize, Occlusion, MultiObject, RareClass };

inline constexpr std::array<BiasMode, 5> kAllBiasModes = {BiasMode::None, BiasMode::SmallSize, BiasMode::Occlusion,
                                                          BiasMode::MultiObject, BiasMode::RareClass};

std::string_view to_string(BiasMode mode);
BiasMode bias_mode_from_string(std::string_view name);

struct BiasSpec {
    BiasMode mode = BiasMode::None;
    double magnitude = 0.0;

    friend bool operator==(const BiasSpec&, const BiasSpec&) = default;
};

struct Rect {
    int x = 0;  ///< column
    int y = 0;  ///< row
    int w = 0;
    int h = 0;

    [[nodiscard]] bool overlaps(const Rect& o, int gap = 0) const;
    friend bool operator==(const Rect&, const Rect&) = default;
};

struct Placement {
    std::string class_name;
    Rect rect;

    friend bool operator==(const Placement&, const Placement&) = default;
};

struct SceneSpec {
    std::string name;
    int height = 16;
    int width = 16;
    std::vector<Placement> placements;
    int target = 0;  ///< index into the scene's class list that the bias acts on
    BiasSpec bias;
    std::uint64_t seed = 0;
    double texture_std = 0.03;

    friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct Scene {
    std::string name;
    Latent latent;
    std::vector<std::string> classes;
    std::vector<std::string> caption;
    std::vector<std::vector<int>> spans;  ///< caption token indices of each class
    std::vector<LabelMask> gt_masks;      ///< binary, one per class
    LabelMask background_mask;
    ClassVocabulary vocabulary;  ///< entries as seen by this scene (rarity after bias)
    BiasSpec bias;
    int target = 0;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t height() const { return latent.shape.height; }
    [[nodiscard]] std::size_t width() const { return latent.shape.width; }
    /// 0 = background, i + 1 = classes[i].
    [[nodiscard]] LabelMask label_map() const;
    /// Caption for a single class, as used for its ELBO condition.
    [[nodiscard]] std::vector<std::string> class_prompt(std::size_t class_index) const;
};

/// Builds a scene: rasterizes placements in order (later wins), applies the bias to
/// the target class, and paints class embeddings plus texture noise into the latent.
///   small-size   scales the target's rectangles by 1 - 0.75 m about their centres
///   occlusion    covers the right round(m w) columns of each target rectangle with the occluder
///   multi-object adds round(4 m) copies of a distractor class
///   rare-class   swaps the target for a rare entry with rarity 1 - m (1 - rarity)
/// Throws ConfigError when a rectangle leaves the grid or a class ends up with no
/// visible pixels.
Scene generate_scene(const SceneSpec& spec, const ClassVocabulary& vocab);

/// Random two-class base scene with equal-sized, separated rectangles.
SceneSpec random_scene_spec(const std::string& name, const ClassVocabulary& vocab, std::uint64_t seed,
                            int height = 16, int width = 16);

/// The base scene plus one variant per bias mode, named <base>_<mode>.
std::vector<SceneSpec> bias_suite(const SceneSpec& base);

/// Default magnitude each bias mode gets inside bias_suite.
double suite_magnitude(BiasMode mode);

struct CrossAttentionStack {
    std::vector<Matrix> cross;  ///< per layer: (h*w) x L, row-stochastic
    std::vector<Matrix> self;   ///< per layer: (h*w) x (h*w), row-stochastic
    std::vector<std::pair<std::size_t, std::size_t>> layer_resolutions;
    double t = 0.0;
};

struct ToyModelParams {
    double attention_gain = 6.0;  ///< logit of a perfectly matching class token
    double filler_gain = 3.0;     ///< logit of filler tokens on background pixels
    double self_gain = 8.0;
    double texture_std = 0.03;
};

struct ToyOutput {
    Latent eps_hat;
    CrossAttentionStack attention;
};

/// Constructed conditional denoiser with two attention layers (full and half resolution).
///
/// Queries are shrunk (alpha / (alpha^2 + sigma^2)) pixel features of z_t, box-blurred
/// at full resolution and 2x2-pooled at half resolution; keys are token embeddings
/// scaled by rarity, so logits are q.k / sqrt(d). The epsilon estimate is the optimal
/// Gaussian denoiser whose per-pixel mean is the attention-weighted blend of token means.
class ToyDenoiser final : public ConditionalDenoiser {
public:
    ToyDenoiser(ClassVocabulary vocab, Schedule schedule, ObjectiveKind kind = ObjectiveKind::Epsilon,
                ToyModelParams params = {});

    [[nodiscard]] ObjectiveKind objective() const override { return kind_; }
    [[nodiscard]] Latent predict(const Latent& zt, double t, const Condition& condition) const override;

    /// Throws VocabularyError for tokens the vocabulary does not know.
    [[nodiscard]] ToyOutput run(const Latent& zt, double t, std::span<const std::string> tokens,
                                bool with_self_attention) const;

    [[nodiscard]] const Schedule& schedule() const { return schedule_; }
    [[nodiscard]] const ClassVocabulary& vocabulary() const { return vocab_; }

private:
    ClassVocabulary vocab_;
    Schedule schedule_;
    ObjectiveKind kind_;
    ToyModelParams params_;
};

/// Bilinear resize of the query axis of a cross map, rows renormalized.
Matrix resize_cross_attention(const Matrix& map, std::size_t src_h, std::size_t src_w, std::size_t dst_h,
                              std::size_t dst_w);

/// Bilinear resize of both spatial axes of a self-attention map, rows renormalized.
Matrix resize_self_attention(const Matrix& map, std::size_t src_h, std::size_t src_w, std::size_t dst_h,
                             std::size_t dst_w);

/// Resizes every layer to the finest resolution and averages over layers; the
/// result holds one cross and one self map.
CrossAttentionStack aggregate_layers(const CrossAttentionStack& stack);

/// Runs the denoiser on the full caption at each timestep (noise drawn from `seed`)
/// and averages the layer-aggregated maps over timesteps.
CrossAttentionStack collect_attention(const ToyDenoiser& denoiser, const Scene& scene, std::span<const double> times,
                                      std::uint64_t seed, bool float32 = false);

}  // namespace elbocal
