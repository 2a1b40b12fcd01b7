// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"

#include "elbocal/calibrate.hpp"
#include "elbocal/errors.hpp"
#include "elbocal/toyscene.hpp"

using namespace elbocal;

namespace {

const ClassVocabulary& vocab() {
    static const ClassVocabulary v = ClassVocabulary::make_default();
    return v;
}

SceneSpec two_box_spec() {
    SceneSpec spec;
    spec.name = "pair";
    spec.seed = 11;
    spec.placements = {{"dog", {1, 1, 6, 6}}, {"car", {9, 8, 5, 6}}};
    return spec;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("default vocabulary") {
    const ClassVocabulary& v = vocab();
    CHECK(v.dim() == 16);
    CHECK(v.contains("dog"));
    CHECK(v.contains("fire hydrant"));
    CHECK(v.contains(v.occluder()));
    bool has_rare = false;
    for (const VocabularyEntry& a : v.entries()) {
        has_rare = has_rare || a.rarity < 1.0;
        CHECK(dot(a.embedding, a.embedding) == doctest::Approx(1.0));
        CHECK(dot(a.embedding, v.background()) == doctest::Approx(0.0).scale(1.0));
        for (const VocabularyEntry& b : v.entries()) {
            if (&a != &b) CHECK(std::abs(dot(a.embedding, b.embedding)) < 1e-9);
        }
    }
    CHECK(has_rare);
    CHECK(v.token_owner("hydrant")->name == "fire hydrant");
    CHECK(v.token_owner("a") == nullptr);
    CHECK_THROWS_AS((void)v.entry("unicorn"), VocabularyError);
    CHECK_THROWS_AS(ClassVocabulary::make_default(4), ConfigError);
    CHECK(ClassVocabulary::make_default() == ClassVocabulary::make_default());
}

TEST_CASE("vocabulary validation") {
    const std::vector<double> bg{1.0, 0.0, 0.0};
    CHECK_THROWS_AS(ClassVocabulary(bg, {{"a", {0.0, 2.0, 0.0}, 1.0}}, ""), ConfigError);
    CHECK_THROWS_AS(ClassVocabulary(bg, {{"a", {0.0, 1.0}, 1.0}}, ""), ConfigError);
    CHECK_THROWS_AS(ClassVocabulary(bg, {{"a", {0.0, 1.0, 0.0}, 0.0}}, ""), ConfigError);
    CHECK_THROWS_AS(ClassVocabulary(bg, {{"red car", {0.0, 1.0, 0.0}, 1.0}, {"car", {0.0, 0.0, 1.0}, 1.0}}, ""),
                    ConfigError);
    CHECK_THROWS_AS(ClassVocabulary(bg, {{"a", {0.0, 1.0, 0.0}, 1.0}}, "b"), ConfigError);
}

TEST_CASE("scene generation") {
    const Scene scene = generate_scene(two_box_spec(), vocab());
    CHECK(scene.classes == std::vector<std::string>{"dog", "car"});
    CHECK(scene.gt_masks[0].count(1) == 36);
    CHECK(scene.gt_masks[1].count(1) == 30);
    CHECK(scene.background_mask.count(1) == 256 - 66);
    CHECK(scene.latent.shape == Shape3{16, 16, 16});
    const LabelMask labels = scene.label_map();
    CHECK(labels.at(3, 3) == 1);
    CHECK(labels.at(10, 10) == 2);
    CHECK(labels.at(0, 15) == 0);
    for (std::size_t i = 0; i < scene.classes.size(); ++i) {
        const auto prompt = scene.class_prompt(i);
        CHECK(prompt.back() == scene.classes[i]);
        CHECK(scene.caption[static_cast<std::size_t>(scene.spans[i].front())] == scene.classes[i]);
    }
    // Pixel values sit near the class embedding.
    const auto px = scene.latent.pixel(3 * 16 + 3);
    CHECK(dot(px, vocab().entry("dog").embedding) > 0.8);
    CHECK(generate_scene(two_box_spec(), vocab()).latent == scene.latent);
}

TEST_CASE("scene errors") {
    SceneSpec spec = two_box_spec();
    spec.placements[1].rect = {12, 12, 6, 6};
    CHECK_THROWS_AS(generate_scene(spec, vocab()), ConfigError);
    spec = two_box_spec();
    spec.placements[1].class_name = "unicorn";
    CHECK_THROWS_AS(generate_scene(spec, vocab()), VocabularyError);
    spec = two_box_spec();
    spec.placements.clear();
    CHECK_THROWS_AS(generate_scene(spec, vocab()), ConfigError);
    spec = two_box_spec();
    spec.target = 2;
    CHECK_THROWS_AS(generate_scene(spec, vocab()), ConfigError);
    spec = two_box_spec();
    spec.bias = {BiasMode::SmallSize, 1.5};
    CHECK_THROWS_AS(generate_scene(spec, vocab()), ConfigError);
    spec = two_box_spec();
    spec.placements.push_back({"car", {0, 0, 8, 8}});  // hides the dog entirely
    CHECK_THROWS_AS(generate_scene(spec, vocab()), ConfigError);
    CHECK_THROWS_AS(bias_mode_from_string("tiny"), ConfigError);
    for (BiasMode m : kAllBiasModes) CHECK(bias_mode_from_string(to_string(m)) == m);
}

TEST_CASE("small-size bias shrinks the target monotonically") {
    std::size_t previous = 1000;
    for (double m : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        SceneSpec spec = two_box_spec();
        spec.bias = {BiasMode::SmallSize, m};
        const Scene scene = generate_scene(spec, vocab());
        const std::size_t area = scene.gt_masks[0].count(1);
        CHECK(area <= previous);
        CHECK(scene.gt_masks[1].count(1) == 30);
        previous = area;
    }
    CHECK(previous < 36);
}

TEST_CASE("bias modes") {
    const SceneSpec base = two_box_spec();
    const auto suite = bias_suite(base);
    REQUIRE(suite.size() == 5);
    CHECK(suite[0].name == "pair_none");
    CHECK(suite[4].bias == BiasSpec{BiasMode::RareClass, 1.0});

    const Scene occluded = generate_scene(suite[2], vocab());
    CHECK(occluded.classes.size() == 3);
    CHECK(occluded.classes[2] == vocab().occluder());
    CHECK(occluded.gt_masks[0].count(1) == 18);

    const Scene crowded = generate_scene(suite[3], vocab());
    CHECK(crowded.classes.size() == 2);
    CHECK(crowded.gt_masks[1].count(1) > 30);

    const Scene rare = generate_scene(suite[4], vocab());
    CHECK(rare.classes[1] == "car");
    CHECK(vocab().entry(rare.classes[0]).rarity < 1.0);
    CHECK(rare.vocabulary.entry(rare.classes[0]).rarity == doctest::Approx(vocab().entry(rare.classes[0]).rarity));
}

TEST_CASE("random scene specs") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const SceneSpec spec = random_scene_spec("s", vocab(), seed);
        REQUIRE(spec.placements.size() == 2);
        CHECK_FALSE(spec.placements[0].rect.overlaps(spec.placements[1].rect, 1));
        CHECK(spec.placements[0].class_name != spec.placements[1].class_name);
        for (const SceneSpec& variant : bias_suite(spec)) CHECK_NOTHROW(generate_scene(variant, vocab()));
    }
    CHECK(random_scene_spec("s", vocab(), 4) == random_scene_spec("s", vocab(), 4));
    CHECK_THROWS_AS(random_scene_spec("s", vocab(), 4, 4, 4), ConfigError);
}

TEST_CASE("toy denoiser attention") {
    const Scene scene = generate_scene(two_box_spec(), vocab());
    const ToyDenoiser denoiser(vocab(), Schedule::vp_linear());
    const ToyOutput out = denoiser.run(scene.latent, 0.05, scene.caption, true);
    REQUIRE(!out.attention.cross.empty());
    CHECK(out.attention.cross.size() == out.attention.self.size());
    for (const Matrix& m : out.attention.cross) CHECK(max_row_stochastic_error(m) < 1e-12);
    for (const Matrix& m : out.attention.self) CHECK(max_row_stochastic_error(m) < 1e-12);
    CHECK(out.eps_hat.shape == scene.latent.shape);

    SUBCASE("class tokens attend to their own region") {
        const Matrix& cross = out.attention.cross.front();
        const auto [h, w] = out.attention.layer_resolutions.front();
        const Grid dog = extract_class_map(cross, h, w, scene.spans[0]);
        const Grid car = extract_class_map(cross, h, w, scene.spans[1]);
        const Grid dog_hi = bilinear_resize(dog, 16, 16);
        const Grid car_hi = bilinear_resize(car, 16, 16);
        CHECK(dog_hi.at(3, 3) > car_hi.at(3, 3));
        CHECK(car_hi.at(11, 11) > dog_hi.at(11, 11));
    }

    SUBCASE("swapping the caption order permutes the columns") {
        std::vector<std::string> swapped = scene.caption;
        const std::size_t a = static_cast<std::size_t>(scene.spans[0][0]);
        const std::size_t b = static_cast<std::size_t>(scene.spans[1][0]);
        std::swap(swapped[a], swapped[b]);
        const ToyOutput other = denoiser.run(scene.latent, 0.05, swapped, false);
        const Matrix& m0 = out.attention.cross.front();
        const Matrix& m1 = other.attention.cross.front();
        for (std::size_t p = 0; p < m0.rows; ++p) {
            CHECK(m0.at(p, a) == doctest::Approx(m1.at(p, b)).epsilon(1e-12));
            CHECK(m0.at(p, b) == doctest::Approx(m1.at(p, a)).epsilon(1e-12));
        }
    }

    CHECK_THROWS_AS((void)denoiser.run(Latent({4, 4, 3}), 0.5, scene.caption, false), ShapeError);
    CHECK_THROWS_AS((void)denoiser.run(scene.latent, 0.5, std::vector<std::string>{}, false), VocabularyError);
    CHECK_THROWS_AS((void)denoiser.run(scene.latent, 0.5, std::vector<std::string>{"unicorn"}, false), VocabularyError);
}

TEST_CASE("attention collection") {
    const Scene scene = generate_scene(two_box_spec(), vocab());
    const ToyDenoiser denoiser(vocab(), Schedule::vp_linear());
    const std::vector<double> times{0.02, 0.1, 0.18};
    const CrossAttentionStack a = collect_attention(denoiser, scene, times, 5);
    const CrossAttentionStack b = collect_attention(denoiser, scene, times, 5);
    CHECK(a.cross == b.cross);
    REQUIRE(a.cross.size() == 1);
    CHECK(max_row_stochastic_error(a.cross.front()) < 1e-9);
    CHECK(max_row_stochastic_error(a.self.front()) < 1e-9);
    CHECK_THROWS_AS(collect_attention(denoiser, scene, std::vector<double>{}, 5), ConfigError);

    Matrix m(4, 2, 0.5);
    const Matrix up = resize_cross_attention(m, 2, 2, 4, 4);
    CHECK(up.rows == 16);
    CHECK(max_row_stochastic_error(up) < 1e-12);
    CHECK_THROWS_AS(resize_cross_attention(m, 3, 3, 4, 4), ShapeError);
    Matrix s(4, 4, 0.25);
    CHECK(max_row_stochastic_error(resize_self_attention(s, 2, 2, 4, 4)) < 1e-12);
}

TEST_CASE("rare classes have the larger ELBO") {
    SegmentConfig config;
    config.gamma = 1.0 / 3.0;
    int agree = 0;
    const int scenes = 30;
    for (int i = 0; i < scenes; ++i) {
        SceneSpec spec = random_scene_spec("r" + std::to_string(i), vocab(), 1000 + static_cast<std::uint64_t>(i));
        spec.bias = {BiasMode::RareClass, 1.0};
        const Scene scene = generate_scene(spec, vocab());
        const AlignmentScores s = scene_alignment_scores(scene, config);
        agree += s.raw[0].value > s.raw[1].value && s.scores[0] == doctest::Approx(config.gamma);
    }
    CHECK(agree == scenes);
}
