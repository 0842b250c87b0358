#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "a3/errors.hpp"

namespace a3 {

/// Attack objective on logits.
struct LossKind {
    enum class Kind { Margin, CrossEntropy, TargetedMargin };

    Kind kind = Kind::Margin;
    std::size_t target = 0;  // TargetedMargin only

    static constexpr LossKind margin() { return {Kind::Margin, 0}; }
    static constexpr LossKind cross_entropy() { return {Kind::CrossEntropy, 0}; }
    static constexpr LossKind targeted_margin(std::size_t t) { return {Kind::TargetedMargin, t}; }

    friend bool operator==(const LossKind&, const LossKind&) = default;
};

inline std::string to_string(const LossKind& l) {
    switch (l.kind) {
        case LossKind::Kind::Margin: return "margin";
        case LossKind::Kind::CrossEntropy: return "ce";
        case LossKind::Kind::TargetedMargin: return "targeted_margin:" + std::to_string(l.target);
    }
    return "?";
}

inline LossKind loss_from_string(const std::string& s) {
    if (s == "margin") return LossKind::margin();
    if (s == "ce") return LossKind::cross_entropy();
    const std::string prefix = "targeted_margin:";
    if (s.rfind(prefix, 0) == 0) {
        const std::string t = s.substr(prefix.size());
        if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
            throw ValidationError("bad loss target in '" + s + "'");
        return LossKind::targeted_margin(std::stoul(t));
    }
    throw ValidationError("unknown loss '" + s + "'");
}

/// argmax with ties resolved to the lowest index.
template <typename T>
std::size_t predict(std::span<const T> logits) {
    if (logits.empty()) throw DimensionError("predict on empty logits");
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c)
        if (logits[c] > logits[best]) best = c;
    return best;
}

/// Highest-scoring class other than y; lowest index on ties.
template <typename T>
std::size_t runner_up(std::span<const T> logits, std::size_t y) {
    std::size_t best = logits.size();
    for (std::size_t c = 0; c < logits.size(); ++c) {
        if (c == y) continue;
        if (best == logits.size() || logits[c] > logits[best]) best = c;
    }
    return best;
}

namespace detail {
template <typename T>
void check_label(std::span<const T> logits, std::size_t y) {
    if (logits.size() < 2) throw DomainError("loss needs at least 2 classes, got " + std::to_string(logits.size()));
    if (y >= logits.size())
        throw ValidationError("label " + std::to_string(y) + " out of range for " + std::to_string(logits.size()) +
                              " classes");
}
}  // namespace detail

/// max_{c != y} logits[c] - logits[y]. Positive iff misclassified.
template <typename T>
double margin_loss(std::span<const T> logits, std::size_t y) {
    detail::check_label(logits, y);
    const std::size_t c = runner_up(logits, y);
    return double(logits[c]) - double(logits[y]);
}

/// -log softmax(logits)[y], log-sum-exp stabilised.
template <typename T>
double cross_entropy_loss(std::span<const T> logits, std::size_t y) {
    detail::check_label(logits, y);
    double m = double(logits[0]);
    for (T v : logits) m = std::max(m, double(v));
    double s = 0.0;
    for (T v : logits) s += std::exp(double(v) - m);
    return m + std::log(s) - double(logits[y]);
}

template <typename T>
double targeted_margin_loss(std::span<const T> logits, std::size_t y, std::size_t target) {
    detail::check_label(logits, y);
    if (target >= logits.size() || target == y)
        throw ValidationError("targeted margin target " + std::to_string(target) + " invalid for label " +
                              std::to_string(y));
    return double(logits[target]) - double(logits[y]);
}

template <typename T>
double loss_value(std::span<const T> logits, std::size_t y, const LossKind& loss) {
    switch (loss.kind) {
        case LossKind::Kind::Margin: return margin_loss(logits, y);
        case LossKind::Kind::CrossEntropy: return cross_entropy_loss(logits, y);
        case LossKind::Kind::TargetedMargin: return targeted_margin_loss(logits, y, loss.target);
    }
    return 0.0;
}

/// dL/dlogits for the chosen loss.
template <typename T>
std::vector<T> loss_gradient(std::span<const T> logits, std::size_t y, const LossKind& loss) {
    detail::check_label(logits, y);
    std::vector<T> g(logits.size(), T{0});
    switch (loss.kind) {
        case LossKind::Kind::Margin: {
            g[runner_up(logits, y)] = T{1};
            g[y] = T{-1};
            break;
        }
        case LossKind::Kind::CrossEntropy: {
            double m = double(logits[0]);
            for (T v : logits) m = std::max(m, double(v));
            double s = 0.0;
            for (T v : logits) s += std::exp(double(v) - m);
            for (std::size_t c = 0; c < logits.size(); ++c) g[c] = T(std::exp(double(logits[c]) - m) / s);
            g[y] -= T{1};
            break;
        }
        case LossKind::Kind::TargetedMargin: {
            if (loss.target >= logits.size() || loss.target == y)
                throw ValidationError("targeted margin target invalid");
            g[loss.target] = T{1};
            g[y] = T{-1};
            break;
        }
    }
    return g;
}

}  // namespace a3
