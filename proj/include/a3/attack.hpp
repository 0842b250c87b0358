#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "a3/errors.hpp"
#include "a3/losses.hpp"
#include "a3/model.hpp"
#include "a3/rng.hpp"
#include "a3/tensor.hpp"

namespace a3 {

enum class NormKind { Linf, L2 };

inline const char* to_string(NormKind n) { return n == NormKind::Linf ? "linf" : "l2"; }

/// Threat model: epsilon in pixel units of [0,1] images.
struct AttackNorm {
    NormKind kind = NormKind::Linf;
    double epsilon = 8.0 / 255.0;

    void validate() const {
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
            throw ValidationError("epsilon must be finite and non-negative");
    }
};

/// Output-space diversification direction, one weight per class.
using Direction = std::vector<double>;

inline Direction uniform_direction(std::size_t num_classes, SplitMix64& rng) {
    Direction w(num_classes);
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    return w;
}

/// Cosine-annealed step size: eps/2 * (1 + cos(pi * (t mod n) / n)).
inline double cosine_step_size(std::size_t t, std::size_t n_atk, double epsilon) {
    if (n_atk == 0) throw DomainError("cosine_step_size needs at least one iteration");
    const double phase = double(t % n_atk) / double(n_atk);
    return 0.5 * epsilon * (1.0 + std::cos(phase * std::numbers::pi));
}

template <typename T>
constexpr T sign_of(T v) {
    return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0});
}

/// Project `cand` in place onto the epsilon-ball around `orig`, then onto [0,1].
template <typename T>
void project_inplace(std::span<const T> orig, std::span<T> cand, const AttackNorm& norm) {
    if (orig.size() != cand.size()) throw DimensionError("project: shape mismatch");
    if (norm.kind == NormKind::Linf) {
        const T eps = T(norm.epsilon);
        for (std::size_t i = 0; i < cand.size(); ++i) {
            T v = std::clamp(cand[i], T(orig[i] - eps), T(orig[i] + eps));
            cand[i] = std::clamp(v, T{0}, T{1});
        }
        return;
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < cand.size(); ++i) {
        const double d = double(cand[i]) - double(orig[i]);
        sq += d * d;
    }
    const double r = std::sqrt(sq);
    if (r > norm.epsilon) {
        const double scale = norm.epsilon / r;
        for (std::size_t i = 0; i < cand.size(); ++i)
            cand[i] = T(double(orig[i]) + (double(cand[i]) - double(orig[i])) * scale);
    }
    for (auto& v : cand) v = std::clamp(v, T{0}, T{1});
}

template <typename T>
Tensor<T> project(const Tensor<T>& x_orig, const Tensor<T>& cand, const AttackNorm& norm) {
    if (x_orig.shape() != cand.shape()) throw DimensionError("project: shape mismatch");
    Tensor<T> out = cand;
    project_inplace<T>(x_orig.data(), out.data(), norm);
    return out;
}

/// True when `x` lies in the epsilon-ball of `orig` (with slack `tol`) and in [0,1].
template <typename T>
bool within_constraints(std::span<const T> orig, std::span<const T> x, const AttackNorm& norm, double tol = 1e-6) {
    for (T v : x)
        if (!(v >= T{0} && v <= T{1})) return false;
    const double d = norm.kind == NormKind::Linf ? linf_distance(orig, x) : l2_distance(orig, x);
    return d <= norm.epsilon + tol;
}

/// Input-space random start: x + zeta, zeta ~ U(-eps, eps)^D (Linf) or a
/// uniformly random direction scaled by U(0, eps) (L2); then boxed to [0,1].
template <typename T>
Tensor<T> sample_input_start(const Tensor<T>& x, const AttackNorm& norm, SplitMix64& rng) {
    Tensor<T> out = x;
    auto v = out.data();
    if (norm.kind == NormKind::Linf) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = T(double(x[i]) + rng.uniform(-norm.epsilon, norm.epsilon));
    } else {
        std::vector<double> dir(v.size());
        double sq = 0.0;
        for (auto& d : dir) {
            d = rng.normal();
            sq += d * d;
        }
        const double radius = rng.uniform(0.0, norm.epsilon);
        const double scale = sq > 0.0 ? radius / std::sqrt(sq) : 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = T(double(x[i]) + dir[i] * scale);
    }
    project_inplace<T>(x.data(), v, norm);
    return out;
}

/// Moves `x` by `eta` along `grad`: sign steps under Linf, normalised steps under L2.
/// Returns false when the gradient vanishes (x is left unchanged).
template <typename T>
bool ascend_inplace(std::span<T> x, std::span<const T> grad, double eta, const AttackNorm& norm) {
    if (norm.kind == NormKind::Linf) {
        bool any = false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const T s = sign_of(grad[i]);
            any = any || s != T{0};
            x[i] += T(eta) * s;
        }
        return any;
    }
    double sq = 0.0;
    for (T g : grad) sq += double(g) * double(g);
    if (sq == 0.0) return false;
    const double scale = eta / std::sqrt(sq);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = T(double(x[i]) + double(grad[i]) * scale);
    return true;
}

template <typename T>
struct PgdStepResult {
    Tensor<T> next;
    std::vector<T> logits;  // logits at the input iterate (the forward pass this step paid for)
    bool zero_gradient = false;
};

/// One projected ascent step on the loss. Costs one forward and one backward.
template <typename T>
PgdStepResult<T> pgd_step(const Model& model, const Tensor<T>& x_adv, std::size_t y, const LossKind& loss, double eta,
                          const Tensor<T>& x_orig, const AttackNorm& norm) {
    if (x_adv.shape() != x_orig.shape()) throw DimensionError("pgd_step: shape mismatch");
    ForwardPass<T> pass(model, x_adv.data());
    const auto gl = loss_gradient<T>(pass.logits(), y, loss);
    const auto grad = pass.backward(gl);
    PgdStepResult<T> r{x_adv, std::vector<T>(pass.logits().begin(), pass.logits().end()), false};
    if (!ascend_inplace<T>(r.next.data(), grad, eta, norm)) {
        r.zero_gradient = true;
        r.next = x_adv;
        return r;
    }
    project_inplace<T>(x_orig.data(), r.next.data(), norm);
    return r;
}

/// Raw (unnormalised) gradient of w^T f(x) at the pass input.
template <typename T>
std::vector<T> direction_gradient(const ForwardPass<T>& pass, const Direction& w) {
    std::vector<T> gl(w.size());
    for (std::size_t c = 0; c < w.size(); ++c) gl[c] = T(w[c]);
    return pass.backward(gl);
}

/// Unit-L2 vector along grad_x(w^T f(x)).
template <typename T>
Tensor<T> odi_direction_vector(const Model& model, const Tensor<T>& x, const Direction& w) {
    if (w.size() != model.num_classes()) throw DimensionError("direction length must equal num_classes");
    ForwardPass<T> pass(model, x.data());
    auto g = direction_gradient(pass, w);
    double sq = 0.0;
    for (T v : g) sq += double(v) * double(v);
    if (sq == 0.0) throw DegenerateDirectionError("gradient of w^T f(x) vanishes");
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& v : g) v = T(double(v) * inv);
    return Tensor<T>(x.shape(), std::move(g));
}

template <typename T>
struct OdiResult {
    Tensor<T> start;
    std::size_t steps_run = 0;
    std::size_t degenerate_steps = 0;
    bool stopped = false;
};

/// Output-diversified initialisation: from the random start, N steps of
/// x <- P(x + eta_odi * sign(v(x, f, w))). Steps whose direction vanishes are
/// replaced by random sign steps drawn from `fallback_rng`. `on_step` sees the
/// logits and iterate before each step; returning true stops early.
template <typename T, typename OnStep>
OdiResult<T> odi_init_observed(const Model& model, const Tensor<T>& x_orig, const Direction& w, double eta_odi,
                               std::size_t n_steps, const AttackNorm& norm, SplitMix64& start_rng,
                               SplitMix64& fallback_rng, OnStep&& on_step) {
    if (w.size() != model.num_classes()) throw DimensionError("direction length must equal num_classes");
    OdiResult<T> r{sample_input_start(x_orig, norm, start_rng), 0, 0, false};
    auto x = r.start.data();
    for (std::size_t n = 0; n < n_steps; ++n) {
        ForwardPass<T> pass(model, r.start.data());
        ++r.steps_run;
        if (on_step(pass.logits(), std::span<const T>(x))) {
            r.stopped = true;
            break;
        }
        const auto g = direction_gradient(pass, w);
        // sign(v) == sign(grad) for Linf; L2 steps use the normalised direction itself.
        if (!ascend_inplace<T>(x, g, eta_odi, norm)) {
            ++r.degenerate_steps;
            std::vector<T> noise(x.size());
            for (auto& v : noise) v = fallback_rng.coin() ? T{1} : T{-1};
            ascend_inplace<T>(x, noise, eta_odi, norm);
        }
        project_inplace<T>(x_orig.data(), x, norm);
    }
    return r;
}

template <typename T>
Tensor<T> odi_init(const Model& model, const Tensor<T>& x_orig, const Direction& w, double eta_odi, std::size_t n_steps,
                   const AttackNorm& norm, SplitMix64& rng) {
    SplitMix64 fallback(rng.state() ^ 0xD1B54A32D192ED03ULL);
    return odi_init_observed<T>(model, x_orig, w, eta_odi, n_steps, norm, rng, fallback,
                                [](std::span<const T>, std::span<const T>) { return false; })
        .start;
}

}  // namespace a3
