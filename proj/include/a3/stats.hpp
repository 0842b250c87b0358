#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "a3/adi.hpp"
#include "a3/dataset.hpp"
#include "a3/evaluator.hpp"
#include "a3/format.hpp"
#include "a3/model.hpp"

namespace a3 {

/// Mean successful direction, organised by misclassification rank.
/// Row r-1 holds records whose predicted class has clean-logit rank r among the
/// error classes. Columns 0..C-2 are error-class positions by clean-logit rank;
/// column C-1 is the ground-truth class.
struct BiasMatrix {
    std::size_t num_classes = 0;
    std::vector<std::vector<double>> cells;  // (C-1) x C
    std::vector<std::size_t> counts;         // per row
    double mean_true = 0.0;                  // mean w_d^y over all records
    double mean_predicted = 0.0;             // mean w_d^{predicted} over all records
    std::size_t total = 0;
};

/// Error classes of `clean_logits` ordered by descending logit, lower index first on ties.
inline std::vector<std::size_t> error_class_order(std::span<const double> clean_logits, std::size_t y) {
    std::vector<std::size_t> order;
    for (std::size_t c = 0; c < clean_logits.size(); ++c)
        if (c != y) order.push_back(c);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return clean_logits[a] > clean_logits[b]; });
    return order;
}

/// `clean_logits[image_id]` must hold the clean logits of every recorded image.
inline BiasMatrix bias_matrix(const DirectionSet& records, const std::vector<std::vector<double>>& clean_logits) {
    const std::size_t C = records.num_classes();
    if (C < 2) throw DomainError("bias matrix needs at least 2 classes");
    BiasMatrix m{C, std::vector<std::vector<double>>(C - 1, std::vector<double>(C, 0.0)),
                 std::vector<std::size_t>(C - 1, 0), 0.0, 0.0, 0};
    for (const auto& e : records.entries()) {
        if (e.image_id >= clean_logits.size() || clean_logits[e.image_id].size() != C)
            throw DimensionError("missing clean logits for image " + std::to_string(e.image_id));
        const auto order = error_class_order(clean_logits[e.image_id], e.label);
        const auto row = std::size_t(std::find(order.begin(), order.end(), e.predicted) - order.begin());
        for (std::size_t k = 0; k < C - 1; ++k) m.cells[row][k] += e.w[order[k]];
        m.cells[row][C - 1] += e.w[e.label];
        ++m.counts[row];
        m.mean_true += e.w[e.label];
        m.mean_predicted += e.w[e.predicted];
        ++m.total;
    }
    for (std::size_t r = 0; r + 1 < C; ++r)
        if (m.counts[r] > 0)
            for (auto& v : m.cells[r]) v /= double(m.counts[r]);
    if (m.total > 0) {
        m.mean_true /= double(m.total);
        m.mean_predicted /= double(m.total);
    }
    return m;
}

/// rank,count,err1..err{C-1},true
inline std::string bias_matrix_csv(const BiasMatrix& m) {
    std::ostringstream os;
    os << "rank,count";
    for (std::size_t k = 1; k < m.num_classes; ++k) os << ",err" << k;
    os << ",true\n";
    for (std::size_t r = 0; r < m.cells.size(); ++r) {
        os << r + 1 << ',' << m.counts[r];
        for (double v : m.cells[r]) os << ',' << format_number(v);
        os << '\n';
    }
    return os.str();
}

enum class AttackTag { Easy, Hard };

inline const char* to_string(AttackTag t) { return t == AttackTag::Easy ? "easy" : "hard"; }

/// Runs ODI-PGD with about `budget` attack iterations per image (whole
/// restarts of `base.osd.gamma`); images it breaks, or that start
/// misclassified, are easy.
inline std::vector<AttackTag> tag_easy_hard(const Model& model, const Dataset& data, std::size_t budget,
                                            AttackConfig base = {}) {
    if (budget < 1) throw ValidationError("easy/hard budget must be at least 1");
    base.method = Method::ODI_PGD;
    base.restarts = std::max<std::size_t>(1, (budget + base.osd.gamma - 1) / base.osd.gamma);
    const auto rep = run_evaluation(model, data, base);
    std::vector<AttackTag> tags;
    for (const auto& o : rep.per_image)
        tags.push_back(o.status == ImageStatus::Succeeded || o.status == ImageStatus::CleanMisclassified ? AttackTag::Easy
                                                                                                         : AttackTag::Hard);
    return tags;
}

/// Descending-loss rank (count of strictly larger losses) as a percentage of n.
inline std::vector<double> loss_percentiles(std::span<const double> losses) {
    const std::size_t n = losses.size();
    std::vector<double> sorted(losses.begin(), losses.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto rank = std::size_t(std::lower_bound(sorted.begin(), sorted.end(), losses[i], std::greater<>()) -
                                      sorted.begin());
        out[i] = double(rank) / double(n) * 100.0;
    }
    return out;
}

struct LossTrace {
    std::vector<std::size_t> image_ids;          // tracked (easy) images
    std::vector<AttackTag> tags;                 // every image
    std::vector<std::vector<double>> percentile;  // [iteration][tracked image]

    double mean_at(std::size_t iteration) const {
        const auto& row = percentile.at(iteration);
        if (row.empty()) return 0.0;
        double s = 0.0;
        for (double v : row) s += v;
        return s / double(row.size());
    }
};

/// One ODI-PGD restart of `iterations` steps in f64 with early exit off. At every
/// evaluated iterate, each easy image's running best margin is ranked among the
/// running best margins of all images.
inline LossTrace loss_percentile_trace(const Model& model, const Dataset& data, const std::vector<AttackTag>& tags,
                                       std::size_t iterations, AttackConfig base = {}) {
    if (tags.size() != data.size()) throw DimensionError("one tag per image required");
    base.method = Method::ODI_PGD;
    base.restarts = 1;
    base.osd.gamma = iterations;
    base.early_exit = false;
    base.record_traces = true;
    auto res = evaluate<double>(model, data, base);

    const std::size_t n = data.size();
    std::size_t len = 0;
    for (const auto& t : res.traces) len = std::max(len, t.size());
    LossTrace out;
    out.tags = tags;
    for (std::size_t i = 0; i < n; ++i)
        if (tags[i] == AttackTag::Easy) out.image_ids.push_back(i);

    std::vector<double> best(n);
    for (std::size_t i = 0; i < n; ++i) best[i] = margin_loss<double>(res.states[i].clean_logits, res.states[i].label);
    for (std::size_t k = 0; k < len; ++k) {
        for (std::size_t i = 0; i < n; ++i)
            if (k < res.traces[i].size()) best[i] = std::max(best[i], res.traces[i][k]);
        const auto pct = loss_percentiles(best);
        std::vector<double> row;
        row.reserve(out.image_ids.size());
        for (auto id : out.image_ids) row.push_back(pct[id]);
        out.percentile.push_back(std::move(row));
    }
    return out;
}

/// iteration,image_id,percentile,tag
inline std::string loss_trace_csv(const LossTrace& t) {
    std::ostringstream os;
    os << "iteration,image_id,percentile,tag\n";
    for (std::size_t k = 0; k < t.percentile.size(); ++k)
        for (std::size_t j = 0; j < t.image_ids.size(); ++j)
            os << k << ',' << t.image_ids[j] << ',' << format_number(t.percentile[k][j]) << ','
               << to_string(t.tags[t.image_ids[j]]) << '\n';
    return os.str();
}

}  // namespace a3
