// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lpwanloc/classify/evaluate.hpp"
#include "lpwanloc/error.hpp"
#include "lpwanloc/ranging/cdf.hpp"
#include "lpwanloc/ranging/regression.hpp"

namespace lpwanloc::harness {

using json = nlohmann::json;

struct EvaluationEntry {
    classify::Algorithm algorithm = classify::Algorithm::svm;
    std::size_t k = 1;
    double sigma2 = 0.0;
    double accuracy = 0.0;
    std::vector<ClassId> class_ids;
    std::vector<std::vector<std::size_t>> confusion;
    double mean_geographic_error_m = 0.0;
    double mean_feature_residual = 0.0;
};

struct ClassificationResult {
    double class_separation_m = 0.0;
    std::vector<classify::SigmaCurve> sigma_curves;
    std::vector<classify::TrainingCurve> training_curves;
    std::vector<EvaluationEntry> evaluations;
};

struct AnchorModel {
    std::string anchor;
    ranging::RegressionModel model;
};

struct FixSet {
    ranging::RegressionKind kind = ranging::RegressionKind::polynomial;
    std::vector<double> errors_m;
    std::vector<ranging::CdfPoint> cdf;
    double fraction_below_20m = 0.0;
    double fraction_below_50m = 0.0;
    double rms_error_m = 0.0;
    /// Range estimates flagged as beyond the regression range limit.
    std::size_t beyond_range_limit = 0;
    /// Fixes where multilateration hit its iteration cap (best iterate used).
    std::size_t non_converged = 0;
};

struct RangingResult {
    std::vector<AnchorModel> models;
    std::vector<FixSet> fixes;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::optional<ClassificationResult> classification;
    std::optional<RangingResult> ranging;
};

struct ExperimentReport {
    std::string scenario;
    std::string config_hash;
    std::string toolkit_version;
    std::vector<SeedResult> per_seed;
};

namespace detail {

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

/// Sample standard deviation (n - 1); 0 for a single value.
inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd r;
    if (v.empty()) return r;
    for (double x : v) r.mean += x;
    r.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double s = 0.0;
        for (double x : v) s += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(s / static_cast<double>(v.size() - 1));
    }
    return r;
}

inline json cdf_json(const std::vector<ranging::CdfPoint>& cdf) {
    json a = json::array();
    for (const auto& p : cdf) a.push_back({{"error_m", p.error_m}, {"probability", p.probability}});
    return a;
}

inline json classification_json(const ClassificationResult& c) {
    json j;
    j["class_separation_m"] = c.class_separation_m;
    j["sigma_sweep"] = json::array();
    for (const auto& s : c.sigma_curves)
        j["sigma_sweep"].push_back({{"k", s.k}, {"sigma2", s.sigma2}, {"accuracy", s.accuracy}});
    j["training_curves"] = json::array();
    for (const auto& t : c.training_curves)
        j["training_curves"].push_back({{"algorithm", classify::to_string(t.algorithm)},
                                        {"k", t.k},
                                        {"counts", t.counts},
                                        {"accuracy", t.accuracy}});
    j["evaluation"] = json::array();
    for (const auto& e : c.evaluations)
        j["evaluation"].push_back({{"algorithm", classify::to_string(e.algorithm)},
                                   {"k", e.k},
                                   {"sigma2", e.sigma2},
                                   {"accuracy", e.accuracy},
                                   {"class_ids", e.class_ids},
                                   {"confusion", e.confusion},
                                   {"mean_geographic_error_m", e.mean_geographic_error_m},
                                   {"mean_feature_residual", e.mean_feature_residual}});
    return j;
}

inline json ranging_json(const RangingResult& r) {
    json j;
    j["models"] = json::array();
    for (const auto& m : r.models)
        j["models"].push_back({{"anchor", m.anchor},
                               {"kind", ranging::to_string(m.model.kind)},
                               {"coefficients", m.model.coefficients},
                               {"fit_rms_m", m.model.fit_rms_m}});
    j["fixes"] = json::array();
    for (const auto& f : r.fixes)
        j["fixes"].push_back({{"kind", ranging::to_string(f.kind)},
                              {"errors_m", f.errors_m},
                              {"cdf", cdf_json(f.cdf)},
                              {"fraction_below_20m", f.fraction_below_20m},
                              {"fraction_below_50m", f.fraction_below_50m},
                              {"rms_error_m", f.rms_error_m},
                              {"beyond_range_limit", f.beyond_range_limit},
                              {"non_converged", f.non_converged}});
    return j;
}

}  // namespace detail

/// Mean and sample std across seeds of every per-seed metric. Curves are
/// matched by position; all seeds of one scenario share the same layout.
inline json aggregate(const ExperimentReport& report) {
    using detail::mean_std;
    json agg = json::object();
    const auto& seeds = report.per_seed;
    if (seeds.empty()) return agg;

    auto series = [](const std::vector<std::vector<double>>& rows) {
        json mean = json::array(), std = json::array();
        for (std::size_t i = 0; i < rows.front().size(); ++i) {
            std::vector<double> col;
            for (const auto& r : rows) col.push_back(r.at(i));
            const auto ms = mean_std(col);
            mean.push_back(ms.mean);
            std.push_back(ms.std);
        }
        return std::pair{mean, std};
    };

    if (seeds.front().classification) {
        const auto& first = *seeds.front().classification;
        json c;
        c["sigma_sweep"] = json::array();
        for (std::size_t i = 0; i < first.sigma_curves.size(); ++i) {
            std::vector<std::vector<double>> rows;
            for (const auto& s : seeds) rows.push_back(s.classification->sigma_curves.at(i).accuracy);
            auto [m, sd] = series(rows);
            c["sigma_sweep"].push_back({{"k", first.sigma_curves[i].k},
                                        {"sigma2", first.sigma_curves[i].sigma2},
                                        {"accuracy_mean", m},
                                        {"accuracy_std", sd}});
        }
        c["training_curves"] = json::array();
        for (std::size_t i = 0; i < first.training_curves.size(); ++i) {
            std::vector<std::vector<double>> rows;
            for (const auto& s : seeds) rows.push_back(s.classification->training_curves.at(i).accuracy);
            auto [m, sd] = series(rows);
            c["training_curves"].push_back({{"algorithm", classify::to_string(first.training_curves[i].algorithm)},
                                            {"k", first.training_curves[i].k},
                                            {"counts", first.training_curves[i].counts},
                                            {"accuracy_mean", m},
                                            {"accuracy_std", sd}});
        }
        c["evaluation"] = json::array();
        for (std::size_t i = 0; i < first.evaluations.size(); ++i) {
            std::vector<double> acc, geo;
            for (const auto& s : seeds) {
                acc.push_back(s.classification->evaluations.at(i).accuracy);
                geo.push_back(s.classification->evaluations.at(i).mean_geographic_error_m);
            }
            const auto a = mean_std(acc), g = mean_std(geo);
            c["evaluation"].push_back({{"algorithm", classify::to_string(first.evaluations[i].algorithm)},
                                       {"k", first.evaluations[i].k},
                                       {"sigma2", first.evaluations[i].sigma2},
                                       {"accuracy_mean", a.mean},
                                       {"accuracy_std", a.std},
                                       {"mean_geographic_error_m_mean", g.mean},
                                       {"mean_geographic_error_m_std", g.std}});
        }
        agg["classification"] = c;
    }

    if (seeds.front().ranging) {
        const auto& first = *seeds.front().ranging;
        json r;
        r["fixes"] = json::array();
        for (std::size_t i = 0; i < first.fixes.size(); ++i) {
            std::vector<double> b20, b50, rms, pooled;
            for (const auto& s : seeds) {
                const auto& f = s.ranging->fixes.at(i);
                b20.push_back(f.fraction_below_20m);
                b50.push_back(f.fraction_below_50m);
                rms.push_back(f.rms_error_m);
                pooled.insert(pooled.end(), f.errors_m.begin(), f.errors_m.end());
            }
            const auto m20 = mean_std(b20), m50 = mean_std(b50), mr = mean_std(rms);
            r["fixes"].push_back({{"kind", ranging::to_string(first.fixes[i].kind)},
                                  {"fraction_below_20m_mean", m20.mean},
                                  {"fraction_below_20m_std", m20.std},
                                  {"fraction_below_50m_mean", m50.mean},
                                  {"fraction_below_50m_std", m50.std},
                                  {"rms_error_m_mean", mr.mean},
                                  {"rms_error_m_std", mr.std},
                                  {"pooled_cdf", detail::cdf_json(ranging::empirical_cdf(pooled))}});
        }
        agg["ranging"] = r;
    }
    return agg;
}

inline json to_json(const ExperimentReport& report) {
    json j;
    j["scenario"] = report.scenario;
    std::vector<std::uint64_t> seeds;
    for (const auto& s : report.per_seed) seeds.push_back(s.seed);
    j["provenance"] = {{"config_hash", report.config_hash},
                       {"seeds", seeds},
                       {"toolkit_version", report.toolkit_version}};
    j["per_seed"] = json::array();
    for (const auto& s : report.per_seed) {
        json e{{"seed", s.seed}};
        e["classification"] = s.classification ? detail::classification_json(*s.classification) : json(nullptr);
        e["ranging"] = s.ranging ? detail::ranging_json(*s.ranging) : json(nullptr);
        j["per_seed"].push_back(std::move(e));
    }
    j["aggregate"] = aggregate(report);
    return j;
}

/// Formats a double with 6 significant digits; non-finite values become null.
inline std::string format_number(double v) {
    if (!std::isfinite(v)) return "null";
    if (v == 0.0) return "0";  // folds -0
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

namespace detail {

inline void write_canonical(const json& j, std::string& out, int indent) {
    const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
    const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {  // std::map storage: keys sorted
                if (!first) out += ",\n";
                first = false;
                out += inner + json(it.key()).dump() + ": ";
                write_canonical(it.value(), out, indent + 1);
            }
            out += "\n" + pad + "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            bool scalars = true;
            for (const auto& e : j) scalars = scalars && e.is_primitive();
            if (scalars) {
                out += "[";
                for (std::size_t i = 0; i < j.size(); ++i) {
                    if (i) out += ", ";
                    write_canonical(j[i], out, indent + 1);
                }
                out += "]";
                return;
            }
            out += "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) out += ",\n";
                out += inner;
                write_canonical(j[i], out, indent + 1);
            }
            out += "\n" + pad + "]";
            return;
        }
        case json::value_t::number_float:
            out += format_number(j.get<double>());
            return;
        default:
            out += j.dump();
    }
}

}  // namespace detail

/// Bit-stable JSON text: sorted keys, 2-space indent, floats at 6 significant digits.
inline std::string canonical_json(const json& j) {
    std::string out;
    detail::write_canonical(j, out, 0);
    out += "\n";
    return out;
}

enum class ReportFormat { json, csv_bundle };

inline ReportFormat parse_format(const std::string& s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv-bundle") return ReportFormat::csv_bundle;
    throw ValidationError("unknown format '" + s + "' (expected json or csv-bundle)");
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write '" + path.string() + "'");
    out << text;
    out.flush();
    if (!out) throw RuntimeError("write failed for '" + path.string() + "'");
}

inline std::string cell(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_float()) return format_number(v.get<double>());
    if (v.is_null()) return "";
    return v.dump();
}

class CsvTable {
public:
    explicit CsvTable(std::string header) : text_(std::move(header) + "\n") {}
    void row(std::initializer_list<json> cells) {
        bool first = true;
        for (const auto& c : cells) {
            if (!first) text_ += ",";
            first = false;
            text_ += cell(c);
        }
        text_ += "\n";
    }
    const std::string& text() const { return text_; }

private:
    std::string text_;
};

inline void write_csv_bundle(const json& r, const std::filesystem::path& dir) {
    CsvTable provenance("key,value");
    provenance.row({"scenario", r.at("scenario")});
    provenance.row({"config_hash", r.at("provenance").at("config_hash")});
    provenance.row({"toolkit_version", r.at("provenance").at("toolkit_version")});
    for (const auto& s : r.at("provenance").at("seeds")) provenance.row({"seed", s});
    write_file(dir / "provenance.csv", provenance.text());

    CsvTable sweep("seed,k,sigma2,accuracy"), curves("seed,algorithm,k,training_messages,accuracy"),
        eval("seed,algorithm,k,sigma2,accuracy,mean_geographic_error_m,mean_feature_residual"),
        confusion("seed,algorithm,k,truth,predicted,count"), models("seed,anchor,kind,coefficient_index,coefficient"),
        model_rms("seed,anchor,kind,fit_rms_m"), errors("seed,kind,fix,error_m"),
        fix_summary("seed,kind,fraction_below_20m,fraction_below_50m,rms_error_m,beyond_range_limit,non_converged");
    std::map<std::string, CsvTable> cdfs;
    bool any_class = false, any_range = false;
    for (const auto& s : r.at("per_seed")) {
        const auto seed = s.at("seed");
        if (const auto& c = s.at("classification"); !c.is_null()) {
            any_class = true;
            for (const auto& sw : c.at("sigma_sweep"))
                for (std::size_t i = 0; i < sw.at("sigma2").size(); ++i)
                    sweep.row({seed, sw.at("k"), sw.at("sigma2")[i], sw.at("accuracy")[i]});
            for (const auto& t : c.at("training_curves"))
                for (std::size_t i = 0; i < t.at("counts").size(); ++i)
                    curves.row({seed, t.at("algorithm"), t.at("k"), t.at("counts")[i], t.at("accuracy")[i]});
            for (const auto& e : c.at("evaluation")) {
                eval.row({seed, e.at("algorithm"), e.at("k"), e.at("sigma2"), e.at("accuracy"),
                          e.at("mean_geographic_error_m"), e.at("mean_feature_residual")});
                const auto& ids = e.at("class_ids");
                for (std::size_t a = 0; a < ids.size(); ++a)
                    for (std::size_t b = 0; b < ids.size(); ++b)
                        confusion.row({seed, e.at("algorithm"), e.at("k"), ids[a], ids[b], e.at("confusion")[a][b]});
            }
        }
        if (const auto& g = s.at("ranging"); !g.is_null()) {
            any_range = true;
            for (const auto& m : g.at("models")) {
                model_rms.row({seed, m.at("anchor"), m.at("kind"), m.at("fit_rms_m")});
                for (std::size_t i = 0; i < m.at("coefficients").size(); ++i)
                    models.row({seed, m.at("anchor"), m.at("kind"), i, m.at("coefficients")[i]});
            }
            for (const auto& f : g.at("fixes")) {
                const std::string kind = f.at("kind");
                fix_summary.row({seed, kind, f.at("fraction_below_20m"), f.at("fraction_below_50m"),
                                 f.at("rms_error_m"), f.at("beyond_range_limit"), f.at("non_converged")});
                for (std::size_t i = 0; i < f.at("errors_m").size(); ++i)
                    errors.row({seed, kind, i, f.at("errors_m")[i]});
                const std::string name = "cdf_" + kind + "_seed" + seed.dump() + ".csv";
                auto [it, _] = cdfs.try_emplace(name, "error_m,probability");
                for (const auto& p : f.at("cdf")) it->second.row({p.at("error_m"), p.at("probability")});
            }
        }
    }
    const auto& agg = r.at("aggregate");
    if (any_class) {
        write_file(dir / "sigma_sweep.csv", sweep.text());
        write_file(dir / "training_curves.csv", curves.text());
        write_file(dir / "evaluation.csv", eval.text());
        write_file(dir / "confusion.csv", confusion.text());
        CsvTable sm("k,sigma2,accuracy_mean,accuracy_std"), tm("algorithm,k,training_messages,accuracy_mean,accuracy_std"),
            em("algorithm,k,sigma2,accuracy_mean,accuracy_std");
        const auto& c = agg.at("classification");
        for (const auto& sw : c.at("sigma_sweep"))
            for (std::size_t i = 0; i < sw.at("sigma2").size(); ++i)
                sm.row({sw.at("k"), sw.at("sigma2")[i], sw.at("accuracy_mean")[i], sw.at("accuracy_std")[i]});
        for (const auto& t : c.at("training_curves"))
            for (std::size_t i = 0; i < t.at("counts").size(); ++i)
                tm.row({t.at("algorithm"), t.at("k"), t.at("counts")[i], t.at("accuracy_mean")[i],
                        t.at("accuracy_std")[i]});
        for (const auto& e : c.at("evaluation"))
            em.row({e.at("algorithm"), e.at("k"), e.at("sigma2"), e.at("accuracy_mean"), e.at("accuracy_std")});
        write_file(dir / "sigma_sweep_mean.csv", sm.text());
        write_file(dir / "training_curves_mean.csv", tm.text());
        write_file(dir / "evaluation_mean.csv", em.text());
    }
    if (any_range) {
        write_file(dir / "regression_models.csv", models.text());
        write_file(dir / "regression_fit.csv", model_rms.text());
        write_file(dir / "fix_errors.csv", errors.text());
        write_file(dir / "fix_summary.csv", fix_summary.text());
        for (const auto& [name, table] : cdfs) write_file(dir / name, table.text());
        CsvTable fm("kind,fraction_below_20m_mean,fraction_below_20m_std,fraction_below_50m_mean,fraction_below_50m_std,"
                    "rms_error_m_mean,rms_error_m_std");
        for (const auto& f : agg.at("ranging").at("fixes")) {
            fm.row({f.at("kind"), f.at("fraction_below_20m_mean"), f.at("fraction_below_20m_std"),
                    f.at("fraction_below_50m_mean"), f.at("fraction_below_50m_std"), f.at("rms_error_m_mean"),
                    f.at("rms_error_m_std")});
            CsvTable pooled("error_m,probability");
            for (const auto& p : f.at("pooled_cdf")) pooled.row({p.at("error_m"), p.at("probability")});
            write_file(dir / ("cdf_" + f.at("kind").get<std::string>() + ".csv"), pooled.text());
        }
        write_file(dir / "fix_summary_mean.csv", fm.text());
    }
}

}  // namespace detail

/// Writes report.json, or one CSV per curve/table, into `dir` (created if missing).
inline void emit_report(const json& report, ReportFormat format, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw RuntimeError("cannot create output directory '" + dir.string() + "': " + ec.message());
    if (format == ReportFormat::json) {
        detail::write_file(dir / "report.json", canonical_json(report));
        return;
    }
    try {
        detail::write_csv_bundle(report, dir);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("report is missing expected fields: ") + e.what());
    }
}

inline void emit_report(const ExperimentReport& report, ReportFormat format, const std::filesystem::path& dir) {
    emit_report(to_json(report), format, dir);
}

}  // namespace lpwanloc::harness
