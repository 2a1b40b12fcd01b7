// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace elbocal {

struct Shape3 {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    [[nodiscard]] std::size_t size() const { return height * width * channels; }
    friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Latent tensor H x W x D stored row-major with channels innermost.
struct Latent {
    Shape3 shape;
    std::vector<double> values;

    Latent() = default;
    explicit Latent(Shape3 s, double fill = 0.0) : shape(s), values(s.size(), fill) {}
    Latent(Shape3 s, std::vector<double> v);

    [[nodiscard]] std::size_t size() const { return values.size(); }
    [[nodiscard]] std::size_t pixels() const { return shape.height * shape.width; }
    [[nodiscard]] std::span<const double> pixel(std::size_t k) const {
        return {values.data() + k * shape.channels, shape.channels};
    }
    [[nodiscard]] std::span<double> pixel(std::size_t k) {
        return {values.data() + k * shape.channels, shape.channels};
    }

    friend bool operator==(const Latent&, const Latent&) = default;
};

/// Real-valued H x W map (heatmaps, attention columns).
struct Grid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

    [[nodiscard]] double& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
    [[nodiscard]] std::size_t size() const { return values.size(); }

    friend bool operator==(const Grid&, const Grid&) = default;
};

/// Integer label map; 0 is background, 1..N are classes. Binary masks use {0,1}.
struct LabelMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<int> labels;

    LabelMask() = default;
    LabelMask(std::size_t h, std::size_t w, int fill = 0) : height(h), width(w), labels(h * w, fill) {}

    [[nodiscard]] int& at(std::size_t r, std::size_t c) { return labels[r * width + c]; }
    [[nodiscard]] int at(std::size_t r, std::size_t c) const { return labels[r * width + c]; }
    [[nodiscard]] std::size_t size() const { return labels.size(); }
    [[nodiscard]] std::size_t count(int label) const;

    friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

/// Dense row-major matrix; attention maps are (query pixels) x (keys).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    [[nodiscard]] double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
    [[nodiscard]] std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Sum of squared differences; throws ShapeError on size mismatch.
double squared_distance(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

/// a*x + b*y elementwise.
Latent linear_combination(double a, const Latent& x, double b, const Latent& y);

/// Largest deviation of any row sum from 1, or +inf if an entry is negative.
double max_row_stochastic_error(const Matrix& m);

/// Bilinear resize with half-pixel centres (sample positions clamped to the border).
Grid bilinear_resize(const Grid& src, std::size_t height, std::size_t width);

/// Rescales every row of a non-negative matrix to sum to 1; all-zero rows become uniform.
void normalize_rows(Matrix& m);

/// Rounds every value through 32-bit float.
void round_to_float(std::span<double> values);

}  // namespace elbocal
