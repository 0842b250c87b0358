#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "a3/dataset.hpp"
#include "a3/errors.hpp"
#include "a3/losses.hpp"
#include "a3/model.hpp"
#include "a3/rng.hpp"
#include "a3/tensor.hpp"

namespace a3::testkit {

/// Central differences (L(x + h e_i) - L(x - h e_i)) / 2h for every coordinate.
inline Tensor<double> finite_diff_gradient(const Model& model, const Tensor<double>& x, const LossKind& loss,
                                           std::size_t y, double h = 1e-5) {
    if (!(h > 0.0)) throw DomainError("finite-difference step must be positive");
    Tensor<double> g(x.shape());
    Tensor<double> xp = x;
    auto v = xp.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double orig = v[i];
        v[i] = orig + h;
        const double up = loss_value<double>(ForwardPass<double>(model, xp.data()).logits(), y, loss);
        v[i] = orig - h;
        const double down = loss_value<double>(ForwardPass<double>(model, xp.data()).logits(), y, loss);
        v[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// ||a - b||_inf / max(||a||_inf, ||b||_inf, floor). Normwise, so tiny
/// components do not amplify finite-difference roundoff.
inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
    if (a.size() != b.size()) throw DimensionError("relative error: length mismatch");
    double diff = 0.0, scale = floor;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    return diff / scale;
}

/// Affine classifier f(x) = A x + b, A is C x D row-major.
struct LinearModelSpec {
    std::size_t num_classes = 0;
    std::size_t dim = 0;
    std::vector<double> A;
    std::vector<double> b;

    double a(std::size_t c, std::size_t j) const { return A[c * dim + j]; }
};

/// Flatten + Dense over inputs shaped (1, 1, D). Entries are stored as f32, so
/// the spec is rounded to f32 to keep oracle and model identical.
inline Model make_linear_model(LinearModelSpec& spec) {
    if (spec.A.size() != spec.num_classes * spec.dim || spec.b.size() != spec.num_classes)
        throw DimensionError("linear spec sizes do not match C x D");
    std::vector<float> w(spec.A.begin(), spec.A.end()), bias(spec.b.begin(), spec.b.end());
    for (std::size_t i = 0; i < w.size(); ++i) spec.A[i] = double(w[i]);
    for (std::size_t i = 0; i < bias.size(); ++i) spec.b[i] = double(bias[i]);
    return Model({1, 1, spec.dim}, spec.num_classes,
                 {Layer::flatten(), Layer::dense(std::uint32_t(spec.dim), std::uint32_t(spec.num_classes), w, bias)});
}

inline LinearModelSpec random_linear_spec(std::size_t C, std::size_t D, SplitMix64& rng, double scale = 1.0) {
    LinearModelSpec s{C, D, std::vector<double>(C * D), std::vector<double>(C)};
    for (auto& v : s.A) v = float(rng.uniform(-scale, scale));
    for (auto& v : s.b) v = float(rng.uniform(-scale, scale));
    return s;
}

/// Non-robust iff some c != y has (a_c - a_y).x + (b_c - b_y) + eps*||a_c - a_y||_1 > 0.
inline bool linear_attackable(const LinearModelSpec& s, std::span<const double> x, std::size_t y, double eps) {
    for (std::size_t c = 0; c < s.num_classes; ++c) {
        if (c == y) continue;
        double v = s.b[c] - s.b[y];
        for (std::size_t j = 0; j < s.dim; ++j) {
            const double d = s.a(c, j) - s.a(y, j);
            v += d * x[j] + eps * std::abs(d);
        }
        if (v > 0.0) return true;
    }
    return false;
}

/// Closed-form robust accuracy of an affine model. Requires x +/- eps strictly
/// inside (0,1) for every pixel so the box never binds.
inline double linear_robust_accuracy(const LinearModelSpec& s, const Dataset& data, double eps) {
    if (data.image_size() != s.dim) throw DimensionError("dataset dimension does not match linear spec");
    std::size_t robust = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::span<const double> x(data.pixels.data() + i * s.dim, s.dim);
        for (double v : x)
            if (!(v - eps > 0.0 && v + eps < 1.0))
                throw ValidationError("image " + std::to_string(i) + " is not interior for eps " + std::to_string(eps));
        robust += !linear_attackable(s, x, data.labels[i], eps);
    }
    return double(robust) / double(data.size());
}

/// True iff some sign corner x + eps*s (box-clamped) is misclassified.
inline bool corner_bruteforce(const Model& model, const Tensor<double>& x, std::size_t y, double eps) {
    const std::size_t D = x.size();
    if (D > 12) throw CapabilityError("corner search supports at most 12 input dimensions");
    Tensor<double> c = x;
    auto v = c.data();
    for (std::uint32_t mask = 0; mask < (1u << D); ++mask) {
        for (std::size_t j = 0; j < D; ++j) {
            const double s = (mask >> j) & 1u ? eps : -eps;
            v[j] = std::clamp(x[j] + s, 0.0, 1.0);
        }
        if (predict<double>(ForwardPass<double>(model, c.data()).logits()) != y) return true;
    }
    return false;
}

/// Images with pixels in [lo, hi] and labels drawn uniformly.
inline Dataset random_dataset(const Shape& image_shape, std::size_t n, std::size_t num_classes, SplitMix64& rng,
                              double lo = 0.0, double hi = 1.0) {
    Dataset d{image_shape, std::vector<double>(n * shape_size(image_shape)), std::vector<std::size_t>(n)};
    for (auto& v : d.pixels) v = rng.uniform(lo, hi);
    for (auto& l : d.labels) l = std::size_t(rng.below(num_classes));
    return d;
}

/// Relabels every image with the model's clean prediction, so all start correct.
inline Dataset relabel_with_predictions(const Model& model, Dataset d) {
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto x = d.image<double>(i);
        d.labels[i] = predict<double>(ForwardPass<double>(model, x.data()).logits());
    }
    return d;
}

inline std::vector<float> random_floats(std::size_t n, SplitMix64& rng, double scale) {
    std::vector<float> v(n);
    for (auto& x : v) x = float(rng.uniform(-scale, scale));
    return v;
}

/// Dense(D -> H) + ReLU + Dense(H -> C) over inputs shaped (1, 1, D).
inline Model random_mlp(std::size_t D, std::size_t H, std::size_t C, SplitMix64& rng, double scale = 1.0) {
    const auto d = std::uint32_t(D), h = std::uint32_t(H), c = std::uint32_t(C);
    return Model({1, 1, D}, C,
                 {Layer::flatten(), Layer::dense(d, h, random_floats(H * D, rng, scale), random_floats(H, rng, scale)),
                  Layer::relu(), Layer::dense(h, c, random_floats(C * H, rng, scale), random_floats(C, rng, scale))});
}

/// Conv + ReLU + MaxPool2 + Conv + Flatten + Dense + ReLU + Dense on a small
/// image; covers every layer kind.
inline Model random_cnn(std::size_t in_ch, std::size_t hw, std::size_t C, SplitMix64& rng) {
    const auto ic = std::uint32_t(in_ch);
    std::vector<Layer> layers;
    layers.push_back(Layer::conv2d(ic, 3, 3, 1, 1, random_floats(3 * in_ch * 9, rng, 0.6), random_floats(3, rng, 0.2)));
    layers.push_back(Layer::relu());
    layers.push_back(Layer::maxpool2());
    const std::size_t p = hw / 2;
    layers.push_back(Layer::conv2d(3, 4, 3, 2, 1, random_floats(4 * 3 * 9, rng, 0.6), random_floats(4, rng, 0.2)));
    const std::size_t q = (p + 2 - 3) / 2 + 1;
    layers.push_back(Layer::flatten());
    const auto flat = std::uint32_t(4 * q * q);
    layers.push_back(Layer::dense(flat, 8, random_floats(8 * flat, rng, 0.6), random_floats(8, rng, 0.2)));
    layers.push_back(Layer::relu());
    layers.push_back(Layer::dense(8, std::uint32_t(C), random_floats(C * 8, rng, 0.6), random_floats(C, rng, 0.2)));
    return Model({in_ch, hw, hw}, C, std::move(layers));
}

}  // namespace a3::testkit
