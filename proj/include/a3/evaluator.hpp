#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "a3/adi.hpp"
#include "a3/attack.hpp"
#include "a3/dataset.hpp"
#include "a3/errors.hpp"
#include "a3/losses.hpp"
#include "a3/model.hpp"
#include "a3/osd.hpp"
#include "a3/rng.hpp"
#include "a3/tensor.hpp"

namespace a3 {

enum class Method { A3, PGD, IFGSM, ODI_PGD, MT_PGD };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::A3: return "a3";
        case Method::PGD: return "pgd";
        case Method::IFGSM: return "ifgsm";
        case Method::ODI_PGD: return "odi";
        case Method::MT_PGD: return "mt";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "a3") return Method::A3;
    if (s == "pgd") return Method::PGD;
    if (s == "ifgsm") return Method::IFGSM;
    if (s == "odi") return Method::ODI_PGD;
    if (s == "mt") return Method::MT_PGD;
    throw ValidationError("unknown method '" + s + "'");
}

struct AttackConfig {
    Method method = Method::A3;
    AttackNorm norm;
    std::size_t restarts = 13;
    std::size_t n_init = 7;  // ODI-style initialisation steps per restart
    OsdSchedule osd;         // baselines use only osd.gamma (iterations per restart)
    LossKind loss = LossKind::margin();
    std::size_t mt_targets = 3;
    std::uint64_t seed = 0;
    bool early_exit = true;
    Precision precision = Precision::F32;
    std::size_t threads = 1;          // not part of the result; reports are identical for any value
    bool adaptive_directions = true;  // A3 only: use kappa-guided directions after restart 0
    AdiParams adi;
    bool record_traces = false;  // keep the margin of every evaluated iterate per image

    void validate(std::size_t num_classes) const {
        norm.validate();
        osd.validate();
        if (restarts < 1) throw ValidationError("restarts must be at least 1");
        if (method == Method::MT_PGD && (mt_targets < 1 || mt_targets > num_classes - 1))
            throw ValidationError("mt_targets must lie in [1, C-1]");
        if (loss.kind == LossKind::Kind::TargetedMargin && method != Method::MT_PGD)
            throw ValidationError("targeted loss is only available through the mt method");
    }
};

/// Robust accuracy and budget after each restart barrier.
struct ProgressPoint {
    std::size_t restart = 0;
    std::uint64_t forwards = 0;
    std::uint64_t backwards = 0;
    std::size_t pending = 0;
    std::size_t discarded = 0;
    double robust_accuracy = 0.0;
};

struct ImageOutcome {
    std::size_t image_id = 0;
    std::size_t label = 0;
    ImageStatus status = ImageStatus::Pending;
    std::size_t restarts_attacked = 0;
    std::uint64_t iterations_spent = 0;
    double best_loss = 0.0;
    double final_margin = 0.0;
};

struct EvalReport {
    static constexpr int kSchemaVersion = 1;

    Method method = Method::A3;
    AttackConfig config;
    std::size_t n_images = 0;
    double clean_accuracy = 0.0;
    double robust_accuracy = 0.0;
    std::uint64_t forwards = 0;
    std::uint64_t backwards = 0;
    std::uint64_t verification_forwards = 0;  // after-loop checks of final iterates, outside the budget
    double wall_time_s = 0.0;
    std::vector<ProgressPoint> progress;
    std::vector<ImageOutcome> per_image;
};

/// Full evaluation state, including witnesses and observed directions.
template <typename T>
struct EvalResult {
    EvalReport report;
    std::vector<ImageState<T>> states;
    DirectionSet restart0_directions;  // successes of restart 0 (feeds kappa)
    DirectionSet directions;           // every success found through an ODI-style start
    Kappa kappa;
    std::vector<std::vector<double>> traces;  // per image, margin of every evaluated iterate (record_traces)
};

/// True iff predict(x_adv) != y and x_adv satisfies the threat model. A
/// misclassified point outside the constraint set is an internal error.
template <typename T>
bool verify_adversarial(const Model& model, const Tensor<T>& x_adv, const Tensor<T>& x_orig, std::size_t y,
                        const AttackNorm& norm, std::span<const T> logits = {}) {
    std::vector<T> own;
    if (logits.empty()) {
        ForwardPass<T> pass(model, x_adv.data());
        own.assign(pass.logits().begin(), pass.logits().end());
        logits = own;
    }
    if (predict<T>(logits) == y) return false;
    if (!within_constraints<T>(x_orig.data(), x_adv.data(), norm))
        throw InvariantError("misclassified candidate violates the threat model");
    return true;
}

namespace detail {

/// Static contiguous partition of [0, n) over `threads` workers.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t lo = n * w / threads, hi = n * (w + 1) / threads;
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// MT targets: the k highest clean logits other than y, lowest index on ties.
template <typename T>
std::vector<std::size_t> mt_target_order(std::span<const T> clean_logits, std::size_t y, std::size_t k) {
    std::vector<std::size_t> cls;
    for (std::size_t c = 0; c < clean_logits.size(); ++c)
        if (c != y) cls.push_back(c);
    std::stable_sort(cls.begin(), cls.end(),
                     [&](std::size_t a, std::size_t b) { return clean_logits[a] > clean_logits[b]; });
    cls.resize(std::min(k, cls.size()));
    return cls;
}

struct RestartPlan {
    std::size_t restart = 0;
    std::size_t attack_iters = 0;
    bool random_start = true;
    bool odi_init = false;
    const Kappa* kappa = nullptr;  // non-null: draw adaptive directions
};

template <typename T>
class ImageAttack {
public:
    ImageAttack(const Model& model, const AttackConfig& cfg, ImageState<T>& st, std::vector<double>* trace)
        : model_(model), cfg_(cfg), st_(st), trace_(trace) {}

    void run(const RestartPlan& plan) {
        ++st_.restarts_attacked;
        restart_success_ = false;
        const std::uint64_t id = st_.image_id, r = plan.restart;
        auto start_rng = derive_substream(cfg_.seed, id, r, StreamTag::InputStart);

        Tensor<T> x;
        bool stopped = false;
        if (plan.odi_init) {
            Direction w;
            if (plan.kappa) {
                auto adi_rng = derive_substream(cfg_.seed, id, r, StreamTag::AdaptiveDirection);
                w = generate_adaptive_direction(*plan.kappa, st_.label, adi_rng, cfg_.adi).w;
            } else {
                auto dir_rng = derive_substream(cfg_.seed, id, r, StreamTag::Direction);
                w = uniform_direction(model_.num_classes(), dir_rng);
            }
            st_.w_d_used = w;
            auto fb_rng = derive_substream(cfg_.seed, id, r, StreamTag::OdiFallback);
            auto res = odi_init_observed<T>(model_, st_.x_orig, w, cfg_.norm.epsilon, cfg_.n_init, cfg_.norm,
                                            start_rng, fb_rng, [&](std::span<const T> logits, std::span<const T> xi) {
                                                ++st_.forwards_spent;
                                                return observe(logits, xi) && cfg_.early_exit;
                                            });
            st_.iterations_spent += res.steps_run - (res.stopped ? 1 : 0);
            stopped = res.stopped;
            x = std::move(res.start);
        } else if (plan.random_start) {
            x = sample_input_start(st_.x_orig, cfg_.norm, start_rng);
        } else {
            x = st_.x_orig;
        }

        const LossKind loss = plan_loss(plan);
        for (std::size_t t = 0; t < plan.attack_iters && !stopped; ++t) {
            ForwardPass<T> pass(model_, x.data());
            ++st_.forwards_spent;
            if (observe(pass.logits(), x.data()) && cfg_.early_exit) {
                stopped = true;
                break;
            }
            const auto grad = pass.backward(loss_gradient<T>(pass.logits(), st_.label, loss));
            ++st_.iterations_spent;
            const double eta = cosine_step_size(t, plan.attack_iters, cfg_.norm.epsilon);
            if (ascend_inplace<T>(x.data(), grad, eta, cfg_.norm)) project_inplace<T>(st_.x_orig.data(), x.data(), cfg_.norm);
        }
        if (!stopped) {
            // After-loop check of the final iterate.
            ForwardPass<T> pass(model_, x.data());
            ++st_.verification_forwards;
            observe(pass.logits(), x.data());
        }
        if (restart_success_) {
            st_.status = ImageStatus::Succeeded;
            st_.succeeded_restart = plan.restart;
        }
    }

private:
    LossKind plan_loss(const RestartPlan& plan) const {
        if (cfg_.method != Method::MT_PGD) return cfg_.loss;
        const auto targets = mt_target_order<T>(st_.clean_logits, st_.label, cfg_.mt_targets);
        return LossKind::targeted_margin(targets[plan.restart % targets.size()]);
    }

    // Bookkeeping for one evaluated iterate; returns true when it is adversarial.
    bool observe(std::span<const T> logits, std::span<const T> x) {
        const double m = margin_loss<T>(logits, st_.label);
        const std::size_t pred = predict<T>(logits);
        const bool success = pred != st_.label;
        if (trace_) trace_->push_back(m);
        st_.final_margin = m;
        const bool best_is_success = st_.best_prediction != st_.label;
        if (m > st_.best_loss || (success && !best_is_success && m == st_.best_loss)) {
            st_.best_loss = m;
            st_.best_candidate = Tensor<T>(st_.x_orig.shape(), std::vector<T>(x.begin(), x.end()));
            st_.best_prediction = pred;
        }
        if (success) {
            if (!within_constraints<T>(st_.x_orig.data(), x, cfg_.norm))
                throw InvariantError("iterate of image " + std::to_string(st_.image_id) + " left the threat model");
            restart_success_ = true;
        }
        return success;
    }

    const Model& model_;
    const AttackConfig& cfg_;
    ImageState<T>& st_;
    std::vector<double>* trace_;
    bool restart_success_ = false;
};

}  // namespace detail

/// Runs A3 or one of the baselines and returns the full state.
template <typename T>
EvalResult<T> evaluate(const Model& model, const Dataset& data, const AttackConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t C = model.num_classes();
    cfg.validate(C);
    data.validate(C);
    if (data.image_shape != model.input_shape())
        throw DimensionError("dataset image shape " + shape_string(data.image_shape) + " does not match model input " +
                             shape_string(model.input_shape()));

    const std::size_t n = data.size();
    EvalResult<T> res;
    res.restart0_directions = DirectionSet(C);
    res.directions = DirectionSet(C);
    res.states.resize(n);
    if (cfg.record_traces) res.traces.resize(n);
    BudgetCounter budget;

    // Clean pass.
    detail::parallel_for(n, cfg.threads, [&](std::size_t i) {
        auto& st = res.states[i];
        st.image_id = i;
        st.label = data.labels[i];
        st.x_orig = data.image<T>(i);
        ForwardPass<T> pass(model, st.x_orig.data());
        st.clean_logits.assign(pass.logits().begin(), pass.logits().end());
        st.best_loss = margin_loss<T>(pass.logits(), st.label);
        st.best_candidate = st.x_orig;
        st.best_prediction = predict<T>(pass.logits());
        st.final_margin = st.best_loss;
        if (st.best_prediction != st.label) st.status = ImageStatus::CleanMisclassified;
    });
    budget = charge(budget, n, 0);
    std::size_t clean_wrong = 0;
    for (const auto& st : res.states) clean_wrong += st.status == ImageStatus::CleanMisclassified;

    const bool is_a3 = cfg.method == Method::A3;
    // Restarts of I-FGSM all retrace the same deterministic path, so its whole
    // per-image budget is spent in one run.
    const std::size_t restarts = cfg.method == Method::IFGSM ? 1 : cfg.restarts;

    for (std::size_t r = 0; r < restarts; ++r) {
        std::vector<std::size_t> work;
        if (is_a3) {
            work = select_working_set<T>(res.states, discard_rate(r, cfg.osd));
        } else {
            for (const auto& st : res.states)
                if (st.status == ImageStatus::Pending) work.push_back(st.image_id);
        }

        detail::RestartPlan plan;
        plan.restart = r;
        switch (cfg.method) {
            case Method::A3:
                plan.attack_iters = iters_for_restart(r, cfg.osd);
                plan.odi_init = true;
                if (r > 0 && cfg.adaptive_directions && res.kappa.available) plan.kappa = &res.kappa;
                break;
            case Method::ODI_PGD:
                plan.attack_iters = cfg.osd.gamma;
                plan.odi_init = true;
                break;
            case Method::PGD:
            case Method::MT_PGD:
                plan.attack_iters = cfg.osd.gamma;
                break;
            case Method::IFGSM:
                plan.attack_iters = cfg.osd.gamma * cfg.restarts;
                plan.random_start = false;
                break;
        }

        std::vector<std::uint64_t> f_before(work.size()), b_before(work.size());
        for (std::size_t k = 0; k < work.size(); ++k) {
            f_before[k] = res.states[work[k]].forwards_spent;
            b_before[k] = res.states[work[k]].iterations_spent;
        }
        detail::parallel_for(work.size(), cfg.threads, [&](std::size_t k) {
            auto& st = res.states[work[k]];
            detail::ImageAttack<T> attack(model, cfg, st, cfg.record_traces ? &res.traces[st.image_id] : nullptr);
            attack.run(plan);
        });
        // Barrier: merge in image-id order.
        for (std::size_t k = 0; k < work.size(); ++k) {
            const auto& st = res.states[work[k]];
            budget = charge(budget, st.forwards_spent - f_before[k], st.iterations_spent - b_before[k]);
            if (st.status == ImageStatus::Succeeded && st.succeeded_restart == r && plan.odi_init) {
                DirectionRecord rec{st.image_id, st.label, st.best_prediction, st.w_d_used};
                res.directions.record(rec);
                if (r == 0) res.restart0_directions.record(rec);
            }
        }
        if (is_a3 && r == 0) res.kappa = kappa(res.restart0_directions);

        ProgressPoint p{r, budget.forwards, budget.backwards, 0, 0, 0.0};
        for (const auto& st : res.states) {
            p.pending += st.status == ImageStatus::Pending;
            p.discarded += st.status == ImageStatus::Discarded;
        }
        p.robust_accuracy = double(p.pending + p.discarded) / double(n);
        res.report.progress.push_back(p);
    }

    EvalReport& rep = res.report;
    rep.method = cfg.method;
    rep.config = cfg;
    rep.n_images = n;
    rep.clean_accuracy = double(n - clean_wrong) / double(n);
    std::size_t robust = 0;
    for (const auto& st : res.states) {
        robust += st.status == ImageStatus::Pending || st.status == ImageStatus::Discarded;
        rep.verification_forwards += st.verification_forwards;
        rep.per_image.push_back({st.image_id, st.label, st.status, st.restarts_attacked, st.iterations_spent,
                                 st.best_loss, st.final_margin});
    }
    rep.robust_accuracy = double(robust) / double(n);
    rep.forwards = budget.forwards;
    rep.backwards = budget.backwards;
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

/// Dispatches on the configured precision.
inline EvalReport run_evaluation(const Model& model, const Dataset& data, const AttackConfig& cfg) {
    if (cfg.precision == Precision::F64) return evaluate<double>(model, data, cfg).report;
    return evaluate<float>(model, data, cfg).report;
}

inline EvalReport run_a3(const Model& model, const Dataset& data, AttackConfig cfg) {
    cfg.method = Method::A3;
    return run_evaluation(model, data, cfg);
}

inline EvalReport run_baseline(Method method, const Model& model, const Dataset& data, AttackConfig cfg) {
    if (method == Method::A3) throw ValidationError("run_baseline expects a baseline method");
    cfg.method = method;
    return run_evaluation(model, data, cfg);
}

}  // namespace a3
