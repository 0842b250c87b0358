#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "a3/binary_io.hpp"
#include "a3/errors.hpp"
#include "a3/evaluator.hpp"
#include "a3/format.hpp"

namespace a3 {

using ordered_json = nlohmann::ordered_json;

inline ordered_json config_to_json(const AttackConfig& c) {
    ordered_json j;
    j["method"] = to_string(c.method);
    j["norm"] = to_string(c.norm.kind);
    j["epsilon"] = c.norm.epsilon;
    j["restarts"] = c.restarts;
    j["n_init"] = c.n_init;
    j["gamma"] = c.osd.gamma;
    j["nu"] = c.osd.nu;
    j["phi"] = c.osd.phi;
    j["iota"] = c.osd.iota;
    j["phase2_iota"] = c.osd.phase2_iota;
    j["cap1"] = c.osd.cap1;
    j["cap2"] = c.osd.cap2;
    j["iter_cap"] = c.osd.iter_cap;
    j["loss"] = to_string(c.loss);
    j["mt_targets"] = c.mt_targets;
    j["early_exit"] = c.early_exit;
    j["precision"] = to_string(c.precision);
    j["adaptive_directions"] = c.adaptive_directions;
    j["partner_magnitude"] = c.adi.partner_magnitude;
    return j;
}

inline AttackConfig config_from_json(const ordered_json& j) {
    AttackConfig c;
    c.method = method_from_string(j.at("method").get<std::string>());
    const auto norm = j.at("norm").get<std::string>();
    if (norm != "linf" && norm != "l2") throw ValidationError("unknown norm '" + norm + "'");
    c.norm.kind = norm == "linf" ? NormKind::Linf : NormKind::L2;
    c.norm.epsilon = j.at("epsilon").get<double>();
    c.restarts = j.at("restarts").get<std::size_t>();
    c.n_init = j.at("n_init").get<std::size_t>();
    c.osd.gamma = j.at("gamma").get<std::size_t>();
    c.osd.nu = j.at("nu").get<std::size_t>();
    c.osd.phi = j.at("phi").get<double>();
    c.osd.iota = j.at("iota").get<double>();
    c.osd.phase2_iota = j.at("phase2_iota").get<double>();
    c.osd.cap1 = j.at("cap1").get<double>();
    c.osd.cap2 = j.at("cap2").get<double>();
    c.osd.iter_cap = j.at("iter_cap").get<std::size_t>();
    c.loss = loss_from_string(j.at("loss").get<std::string>());
    c.mt_targets = j.at("mt_targets").get<std::size_t>();
    c.early_exit = j.at("early_exit").get<bool>();
    const auto prec = j.at("precision").get<std::string>();
    if (prec != "f32" && prec != "f64") throw ValidationError("unknown precision '" + prec + "'");
    c.precision = prec == "f32" ? Precision::F32 : Precision::F64;
    c.adaptive_directions = j.at("adaptive_directions").get<bool>();
    c.adi.partner_magnitude = j.at("partner_magnitude").get<double>();
    return c;
}

inline ImageStatus status_from_string(const std::string& s) {
    for (auto st : {ImageStatus::Pending, ImageStatus::Succeeded, ImageStatus::Discarded, ImageStatus::CleanMisclassified})
        if (s == to_string(st)) return st;
    throw ValidationError("unknown image status '" + s + "'");
}

/// Report JSON. `per_image` adds the outcome array.
inline ordered_json report_to_json(const EvalReport& r, bool per_image = false) {
    ordered_json j;
    j["schema_version"] = EvalReport::kSchemaVersion;
    j["method"] = to_string(r.method);
    j["config"] = config_to_json(r.config);
    j["seed"] = r.config.seed;
    j["n_images"] = r.n_images;
    j["clean_accuracy"] = r.clean_accuracy;
    j["robust_accuracy"] = r.robust_accuracy;
    j["forwards"] = r.forwards;
    j["backwards"] = r.backwards;
    j["verification_forwards"] = r.verification_forwards;
    j["wall_time_s"] = r.wall_time_s;
    auto& prog = j["progress"] = ordered_json::array();
    for (const auto& p : r.progress)
        prog.push_back({{"restart", p.restart},
                        {"forwards", p.forwards},
                        {"backwards", p.backwards},
                        {"pending", p.pending},
                        {"discarded", p.discarded},
                        {"robust_accuracy", p.robust_accuracy}});
    if (per_image) {
        auto& arr = j["per_image"] = ordered_json::array();
        for (const auto& o : r.per_image)
            arr.push_back({{"image_id", o.image_id},
                           {"label", o.label},
                           {"status", to_string(o.status)},
                           {"restarts_attacked", o.restarts_attacked},
                           {"iterations_spent", o.iterations_spent},
                           {"best_loss", o.best_loss},
                           {"final_margin", o.final_margin}});
    }
    return j;
}

inline EvalReport report_from_json(const ordered_json& j) {
    try {
        if (j.at("schema_version").get<int>() != EvalReport::kSchemaVersion)
            throw ValidationError("unsupported report schema_version");
        EvalReport r;
        r.config = config_from_json(j.at("config"));
        r.method = method_from_string(j.at("method").get<std::string>());
        r.config.seed = j.at("seed").get<std::uint64_t>();
        r.n_images = j.at("n_images").get<std::size_t>();
        r.clean_accuracy = j.at("clean_accuracy").get<double>();
        r.robust_accuracy = j.at("robust_accuracy").get<double>();
        r.forwards = j.at("forwards").get<std::uint64_t>();
        r.backwards = j.at("backwards").get<std::uint64_t>();
        r.verification_forwards = j.value("verification_forwards", std::uint64_t{0});
        r.wall_time_s = j.at("wall_time_s").get<double>();
        if (j.contains("progress"))
            for (const auto& p : j["progress"])
                r.progress.push_back({p.at("restart").get<std::size_t>(), p.at("forwards").get<std::uint64_t>(),
                                      p.at("backwards").get<std::uint64_t>(), p.at("pending").get<std::size_t>(),
                                      p.at("discarded").get<std::size_t>(), p.at("robust_accuracy").get<double>()});
        if (j.contains("per_image"))
            for (const auto& o : j["per_image"])
                r.per_image.push_back({o.at("image_id").get<std::size_t>(), o.at("label").get<std::size_t>(),
                                       status_from_string(o.at("status").get<std::string>()),
                                       o.at("restarts_attacked").get<std::size_t>(),
                                       o.at("iterations_spent").get<std::uint64_t>(), o.at("best_loss").get<double>(),
                                       o.at("final_margin").get<double>()});
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed report: ") + e.what());
    }
}

inline std::string report_string(const EvalReport& r, bool per_image = false) {
    return report_to_json(r, per_image).dump(2) + "\n";
}

/// Serialized report without wall_time_s, the form used for determinism checks.
inline std::string report_payload(const EvalReport& r, bool per_image = true) {
    auto j = report_to_json(r, per_image);
    j.erase("wall_time_s");
    return j.dump();
}

inline void write_report(const EvalReport& r, const std::string& path, bool per_image = false) {
    write_file_text(path, report_string(r, per_image));
}

inline EvalReport read_report(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    ordered_json j;
    try {
        j = ordered_json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("report '" + path + "' is not valid JSON: " + e.what(), e.byte);
    }
    return report_from_json(j);
}

/// image_id,label,status,restarts_attacked,iterations_spent,best_loss,final_margin
inline std::string per_image_csv(const std::vector<ImageOutcome>& rows) {
    std::ostringstream os;
    os << "image_id,label,status,restarts_attacked,iterations_spent,best_loss,final_margin\n";
    for (const auto& o : rows)
        os << o.image_id << ',' << o.label << ',' << to_string(o.status) << ',' << o.restarts_attacked << ','
           << o.iterations_spent << ',' << format_number(o.best_loss) << ',' << format_number(o.final_margin) << '\n';
    return os.str();
}

inline void write_per_image_csv(const std::vector<ImageOutcome>& rows, const std::string& path) {
    write_file_text(path, per_image_csv(rows));
}

}  // namespace a3
