// a3eval: command-line front end for the evaluator, baselines and statistics.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "a3/a3.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

struct CommonFlags {
    std::string model, data, labels, out, per_image;
    double eps = 8.0 / 255.0;
    std::string norm = "linf";
    std::uint64_t seed = 0;
    std::size_t restarts = 0;  // 0: subcommand default
    std::size_t gamma = 25, nu = 5;
    double phi = 0.0, iota = 0.1;
    std::size_t n_init = 7;
    std::string precision = "f32";
    std::size_t threads = 1;
    bool no_early_exit = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_data) {
    cmd->add_option("--model", f.model, "A3MW model file")->required()->check(CLI::ExistingFile);
    auto* data = cmd->add_option("--data", f.data, "A3DS dataset or IDX image file")->check(CLI::ExistingFile);
    if (needs_data) data->required();
    cmd->add_option("--labels", f.labels, "IDX label file (IDX datasets only)")->check(CLI::ExistingFile);
    cmd->add_option("--eps", f.eps, "perturbation bound in [0,1] pixel units")->check(CLI::NonNegativeNumber);
    cmd->add_option("--norm", f.norm, "threat model")->check(CLI::IsMember({"linf", "l2"}));
    cmd->add_option("--seed", f.seed, "64-bit seed");
    cmd->add_option("--restarts", f.restarts, "number of restarts R")->check(CLI::PositiveNumber);
    cmd->add_option("--gamma", f.gamma, "attack iterations at restart 0")->check(CLI::PositiveNumber);
    cmd->add_option("--nu", f.nu, "attack iteration increment per restart")->check(CLI::NonNegativeNumber);
    cmd->add_option("--phi", f.phi, "initial discard rate")->check(CLI::Range(0.0, 0.9));
    cmd->add_option("--iota", f.iota, "discard rate increment")->check(CLI::NonNegativeNumber);
    cmd->add_option("--n-init", f.n_init, "output-diversified initialisation steps")->check(CLI::NonNegativeNumber);
    cmd->add_option("--precision", f.precision, "working precision")->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_option("--threads", f.threads, "worker threads")->envname("A3_THREADS")->check(CLI::PositiveNumber);
    cmd->add_flag("--no-early-exit", f.no_early_exit, "check success only after each restart's loop");
    cmd->add_option("--out", f.out, "output path");
}

a3::AttackConfig make_config(const CommonFlags& f, a3::Method method, std::size_t default_restarts) {
    a3::AttackConfig c;
    c.method = method;
    c.norm.kind = f.norm == "l2" ? a3::NormKind::L2 : a3::NormKind::Linf;
    c.norm.epsilon = f.eps;
    c.seed = f.seed;
    c.restarts = f.restarts ? f.restarts : default_restarts;
    c.osd.gamma = f.gamma;
    c.osd.nu = f.nu;
    c.osd.phi = f.phi;
    c.osd.iota = f.iota;
    c.n_init = f.n_init;
    c.precision = f.precision == "f64" ? a3::Precision::F64 : a3::Precision::F32;
    c.threads = f.threads;
    c.early_exit = !f.no_early_exit;
    return c;
}

std::string millions(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3fM", double(v) / 1e6);
    return buf;
}

void print_summary(const a3::EvalReport& r) {
    std::printf("%s: robust_acc=%.4f clean_acc=%.4f forwards=%s backwards=%s\n", a3::to_string(r.method),
                r.robust_accuracy, r.clean_accuracy, millions(r.forwards).c_str(), millions(r.backwards).c_str());
}

int emit_report(const a3::EvalReport& r, const CommonFlags& f) {
    if (!f.out.empty()) a3::write_report(r, f.out, !f.per_image.empty());
    if (!f.per_image.empty()) a3::write_per_image_csv(r.per_image, f.per_image);
    print_summary(r);
    return kExitOk;
}

template <typename T>
std::vector<std::vector<double>> clean_logits_of(const std::vector<a3::ImageState<T>>& states) {
    std::vector<std::vector<double>> out;
    for (const auto& s : states) out.emplace_back(s.clean_logits.begin(), s.clean_logits.end());
    return out;
}

template <typename T>
int stats_direction(const a3::Model& model, const a3::Dataset& data, const a3::AttackConfig& cfg,
                    const std::string& directions_out, const std::string& out) {
    const auto res = a3::evaluate<T>(model, data, cfg);
    const auto m = a3::bias_matrix(res.directions, clean_logits_of(res.states));
    const auto csv = a3::bias_matrix_csv(m);
    if (out.empty())
        std::cout << csv;
    else
        a3::write_file_text(out, csv);
    if (!directions_out.empty()) a3::write_file_text(directions_out, a3::direction_set_csv(res.directions));
    std::printf("directions=%zu mean_w_true=%s mean_w_predicted=%s\n", m.total, a3::format_number(m.mean_true).c_str(),
                a3::format_number(m.mean_predicted).c_str());
    return kExitOk;
}

int check_model(const std::string& model_path, const std::string& data_path, const std::string& labels) {
    const auto model = a3::load_model(model_path);
    std::printf("input %s, %zu classes, %zu layers\n", a3::shape_string(model.input_shape()).c_str(),
                model.num_classes(), model.layers().size());
    for (std::size_t i = 0; i < model.layers().size(); ++i)
        std::printf("  %zu %-8s %s -> %s\n", i, a3::to_string(model.layers()[i].kind),
                    a3::shape_string(model.activation_shapes()[i]).c_str(),
                    a3::shape_string(model.activation_shapes()[i + 1]).c_str());
    if (!data_path.empty()) {
        const auto data = a3::load_dataset(data_path, labels);
        data.validate(model.num_classes());
        if (data.image_shape != model.input_shape())
            throw a3::DimensionError("dataset image shape does not match model input");
        std::size_t correct = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto x = data.image<float>(i);
            correct += a3::predict(model, x) == data.labels[i];
        }
        std::printf("clean_acc=%.4f over %zu images\n", double(correct) / double(data.size()), data.size());
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive auto attack robustness evaluation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "a3eval 1.0");

    CommonFlags ev, bl, sd, sl;

    auto* evaluate = app.add_subcommand("evaluate", "run A3 over a dataset");
    add_common(evaluate, ev, true);
    evaluate->add_option("--per-image", ev.per_image, "per-image outcome CSV");
    bool no_adi = false;
    evaluate->add_flag("--no-adaptive-directions", no_adi, "use uniform directions in every restart");

    auto* baseline = app.add_subcommand("baseline", "run a baseline attack");
    add_common(baseline, bl, true);
    baseline->add_option("--per-image", bl.per_image, "per-image outcome CSV");
    std::string method;
    baseline->add_option("--method", method, "baseline attack")
        ->required()
        ->check(CLI::IsMember({"ifgsm", "pgd", "odi", "mt"}));
    std::size_t mt_targets = 3;
    baseline->add_option("--mt-targets", mt_targets, "target classes cycled by mt")->check(CLI::PositiveNumber);

    auto* stats_dir = app.add_subcommand("stats-direction", "bias matrix of successful ODI directions");
    add_common(stats_dir, sd, true);
    std::string directions_out;
    stats_dir->add_option("--directions", directions_out, "CSV of every successful direction");

    auto* stats_loss = app.add_subcommand("stats-loss", "loss-percentile trace of easy images");
    add_common(stats_loss, sl, true);
    std::size_t budget = 500, iterations = 100;
    stats_loss->add_option("--budget", budget, "attack iterations used to tag easy images")
        ->check(CLI::PositiveNumber);
    stats_loss->add_option("--iterations", iterations, "iterations of the traced run")->check(CLI::PositiveNumber);

    auto* check = app.add_subcommand("check-model", "validate a model file and print its layers");
    std::string cm_model, cm_data, cm_labels;
    check->add_option("--model", cm_model, "A3MW model file")->required()->check(CLI::ExistingFile);
    check->add_option("--data", cm_data, "dataset to report clean accuracy on")->check(CLI::ExistingFile);
    check->add_option("--labels", cm_labels, "IDX label file")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*check) return check_model(cm_model, cm_data, cm_labels);

        const CommonFlags& f = *evaluate ? ev : *baseline ? bl : *stats_dir ? sd : sl;
        const auto model = a3::load_model(f.model);
        const auto data = a3::load_dataset(f.data, f.labels);

        if (*evaluate) {
            auto cfg = make_config(f, a3::Method::A3, 13);
            cfg.adaptive_directions = !no_adi;
            cfg.validate(model.num_classes());
            return emit_report(a3::run_a3(model, data, cfg), f);
        }
        if (*baseline) {
            const auto m = a3::method_from_string(method);
            auto cfg = make_config(f, m, 4);
            if (!baseline->count("--n-init")) cfg.n_init = m == a3::Method::ODI_PGD ? 2 : 0;
            cfg.mt_targets = mt_targets;
            cfg.validate(model.num_classes());
            return emit_report(a3::run_baseline(m, model, data, cfg), f);
        }
        if (*stats_dir) {
            auto cfg = make_config(f, a3::Method::ODI_PGD, 4);
            if (!stats_dir->count("--n-init")) cfg.n_init = 2;
            cfg.validate(model.num_classes());
            if (cfg.precision == a3::Precision::F64)
                return stats_direction<double>(model, data, cfg, directions_out, f.out);
            return stats_direction<float>(model, data, cfg, directions_out, f.out);
        }
        auto cfg = make_config(f, a3::Method::ODI_PGD, 1);
        if (!stats_loss->count("--n-init")) cfg.n_init = 2;
        cfg.validate(model.num_classes());
        const auto tags = a3::tag_easy_hard(model, data, budget, cfg);
        const auto trace = a3::loss_percentile_trace(model, data, tags, iterations, cfg);
        const auto csv = a3::loss_trace_csv(trace);
        if (f.out.empty())
            std::cout << csv;
        else
            a3::write_file_text(f.out, csv);
        std::size_t easy = trace.image_ids.size();
        std::printf("easy=%zu hard=%zu\n", easy, data.size() - easy);
        return kExitOk;
    } catch (const a3::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const a3::FormatError& e) {
        std::fprintf(stderr, "error: %s (byte offset %zu)\n", e.what(), e.offset());
        return kExitValidation;
    } catch (const a3::DimensionError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return kExitRuntime;
    }
}
