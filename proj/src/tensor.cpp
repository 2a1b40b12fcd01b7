// Copyright (C) 2026 The elbocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "elbocal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "elbocal/errors.hpp"

namespace elbocal {

Latent::Latent(Shape3 s, std::vector<double> v) : shape(s), values(std::move(v)) {
    if (values.size() != shape.size()) {
        throw ShapeError("latent: " + std::to_string(values.size()) + " values for shape of size " +
                         std::to_string(shape.size()));
    }
}

std::size_t LabelMask::count(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("squared_distance: size " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double squared_norm(std::span<const double> a) {
    double acc = 0.0;
    for (double v : a) acc += v * v;
    return acc;
}

Latent linear_combination(double a, const Latent& x, double b, const Latent& y) {
    if (x.shape != y.shape) throw ShapeError("linear_combination: shape mismatch");
    Latent out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = a * x.values[i] + b * y.values[i];
    return out;
}

double max_row_stochastic_error(const Matrix& m) {
    double worst = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) {
        double sum = 0.0;
        for (double v : m.row(r)) {
            if (v < 0.0 || !std::isfinite(v)) return std::numeric_limits<double>::infinity();
            sum += v;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    return worst;
}

Grid bilinear_resize(const Grid& src, std::size_t height, std::size_t width) {
    if (src.height == 0 || src.width == 0) throw ShapeError("bilinear_resize: empty source");
    if (src.height == height && src.width == width) return src;
    Grid out(height, width);
    const double sy = static_cast<double>(src.height) / static_cast<double>(height);
    const double sx = static_cast<double>(src.width) / static_cast<double>(width);
    for (std::size_t r = 0; r < height; ++r) {
        const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
        const auto y0 = static_cast<std::size_t>(y);
        const std::size_t y1 = std::min(y0 + 1, src.height - 1);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t c = 0; c < width; ++c) {
            const double x =
                std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
            const auto x0 = static_cast<std::size_t>(x);
            const std::size_t x1 = std::min(x0 + 1, src.width - 1);
            const double fx = x - static_cast<double>(x0);
            const double top = (1.0 - fx) * src.at(y0, x0) + fx * src.at(y0, x1);
            const double bottom = (1.0 - fx) * src.at(y1, x0) + fx * src.at(y1, x1);
            out.at(r, c) = (1.0 - fy) * top + fy * bottom;
        }
    }
    return out;
}

void normalize_rows(Matrix& m) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        auto row = m.row(r);
        double sum = 0.0;
        for (double v : row) sum += v;
        if (sum > 0.0) {
            for (double& v : row) v /= sum;
        } else {
            for (double& v : row) v = 1.0 / static_cast<double>(m.cols);
        }
    }
}

void round_to_float(std::span<double> values) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace elbocal
