// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "lpwanloc/channel/rng.hpp"
#include "lpwanloc/channel/scenario.hpp"
#include "lpwanloc/classify/evaluate.hpp"
#include "lpwanloc/core/fingerprint.hpp"
#include "lpwanloc/harness/report.hpp"
#include "lpwanloc/harness/scenario_spec.hpp"
#include "lpwanloc/ranging/cdf.hpp"
#include "lpwanloc/ranging/multilateration.hpp"
#include "lpwanloc/ranging/regression.hpp"
#include "lpwanloc/version.hpp"

namespace lpwanloc::harness {

/// Classification data of one seed, as handed to the classify module.
struct ClassificationData {
    FingerprintDatabase db;
    std::vector<AnchorClass> anchors;
    std::vector<classify::TestNode> test;
};

inline ClassificationData classification_data(const ScenarioSpec& spec, std::uint64_t seed) {
    const auto dep = spec.classification_deployment();
    const auto gen = channel::generate_scenario(dep, seed);
    const auto receivers = dep.receiver_ids();

    ClassificationData out;
    std::vector<AnchorClass> anchors;
    for (const auto& a : spec.anchors) anchors.push_back({a.id, a.position, {}});
    std::vector<RssiMessage> anchor_messages;
    for (const auto& m : gen.messages)
        if (std::any_of(spec.anchors.begin(), spec.anchors.end(), [&](const auto& a) { return a.id == m.node_id; }))
            anchor_messages.push_back(m);
    out.db = build_fingerprint_db(anchor_messages, anchors, receivers);
    out.anchors = with_training_rows(anchors, out.db);
    for (const auto& n : spec.nodes) out.test.push_back({n.id, n.class_id, node_series(gen.messages, n.id, receivers)});
    return out;
}

inline ClassificationResult run_classification(const ScenarioSpec& spec, std::uint64_t seed, std::size_t jobs) {
    const auto& cs = *spec.classification;
    const auto data = classification_data(spec, seed);
    const auto config = cs.classifier_config();

    ClassificationResult r;
    r.class_separation_m = class_separation(data.anchors);
    r.sigma_curves = classify::sigma_sweep(data.db, data.anchors, data.test, cs.sigma2_grid, cs.averaging, config, jobs);
    r.training_curves = classify::training_size_curve(data.db, data.anchors, data.test, cs.training_counts,
                                                      cs.averaging, cs.algorithms, config, jobs);
    for (auto alg : cs.algorithms)
        for (auto k : cs.averaging) {
            const auto train = classify::training_set(data.db, k, config.policy);
            const auto test = classify::test_samples(data.test, k, config.policy);
            const auto ev = classify::train_and_evaluate(alg, train, test, data.anchors, config);
            EvaluationEntry e{alg, k, cs.sigma2, ev.accuracy, ev.class_ids, ev.confusion, 0.0, 0.0};
            for (const auto& o : ev.outcomes) {
                e.mean_geographic_error_m += o.geographic_error;
                e.mean_feature_residual += o.feature_residual;
            }
            e.mean_geographic_error_m /= static_cast<double>(ev.outcomes.size());
            e.mean_feature_residual /= static_cast<double>(ev.outcomes.size());
            r.evaluations.push_back(std::move(e));
        }
    return r;
}

namespace detail {

inline bool inside_convex_hull(const Position& p, const std::vector<Position>& hull) {
    // hull is counter-clockwise
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % hull.size()];
        if ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) < 0.0) return false;
    }
    return true;
}

/// Andrew's monotone chain, counter-clockwise, collinear points dropped.
inline std::vector<Position> convex_hull(std::vector<Position> pts) {
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    auto cross = [](const Position& o, const Position& a, const Position& b) {
        return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    };
    std::vector<Position> h(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0.0) --k;
        h[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0.0) --k;
        h[k++] = pts[i];
    }
    h.resize(k > 1 ? k - 1 : k);
    return h;
}

/// Per-receiver mean RSSI of each transmitter over all its heard messages.
inline std::map<std::pair<NodeId, ReceiverId>, double> mean_rssi(const std::vector<RssiMessage>& messages) {
    std::map<std::pair<NodeId, ReceiverId>, std::pair<double, std::size_t>> acc;
    for (const auto& m : messages) {
        auto& [sum, n] = acc[{m.node_id, m.receiver_id}];
        sum += m.rssi_dbm;
        ++n;
    }
    std::map<std::pair<NodeId, ReceiverId>, double> out;
    for (const auto& [key, v] : acc) out[key] = v.first / static_cast<double>(v.second);
    return out;
}

inline std::string padded(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    return buf;
}

}  // namespace detail

/// Calibration deployment of the ranging pipeline (see RangingSpec).
inline channel::Deployment calibration_deployment(const ScenarioSpec& spec) {
    const auto& rs = *spec.ranging;
    channel::Deployment dep;
    dep.long_range = spec.long_range;
    dep.peer = spec.peer;
    const double centre = 0.5 * static_cast<double>(rs.anchors.size() - 1);
    for (std::size_t i = 0; i < rs.anchors.size(); ++i)
        dep.receivers.push_back({rs.anchors[i].id, {(static_cast<double>(i) - centre) * rs.receiver_spacing_m, 0.0},
                                 channel::LinkKind::peer, std::nullopt});
    for (std::size_t i = 0; i < rs.calibration_distances_m.size(); ++i)
        dep.transmitters.push_back(
            {"cal-" + detail::padded(i), {0.0, rs.calibration_distances_m[i]}, rs.calibration_messages, 0.0, {}});
    return dep;
}

/// Test nodes placed uniformly inside the anchors' hull, heard by the anchors.
inline channel::Deployment positioning_deployment(const ScenarioSpec& spec, std::uint64_t seed) {
    const auto& rs = *spec.ranging;
    std::vector<Position> anchor_pos;
    for (const auto& a : rs.anchors) anchor_pos.push_back(a.position);
    const auto hull = detail::convex_hull(anchor_pos);
    if (hull.size() < 3) throw ValidationError("degenerate geometry");
    double x0 = hull[0].x, x1 = x0, y0 = hull[0].y, y1 = y0;
    for (const auto& p : hull) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    Rng rng(derive_seed(seed, "ranging/placement"));
    channel::Deployment dep;
    dep.long_range = spec.long_range;
    dep.peer = spec.peer;
    for (const auto& a : rs.anchors) dep.receivers.push_back({a.id, a.position, channel::LinkKind::peer, std::nullopt});
    while (dep.transmitters.size() < rs.test_nodes) {
        const Position p{rng.uniform(x0, x1), rng.uniform(y0, y1)};
        if (!detail::inside_convex_hull(p, hull)) continue;
        dep.transmitters.push_back({"T" + detail::padded(dep.transmitters.size() + 1), p, rs.test_messages, 0.0, {}});
    }
    return dep;
}

inline RangingResult run_ranging(const ScenarioSpec& spec, std::uint64_t seed) {
    const auto& rs = *spec.ranging;
    RangingResult r;

    // Calibration: one regression per anchor radio on time-averaged RSSI.
    const auto cal_dep = calibration_deployment(spec);
    const auto cal = channel::generate_scenario(cal_dep, derive_seed(seed, "ranging/calibration"));
    const auto cal_mean = detail::mean_rssi(cal.messages);
    std::map<std::string, std::map<ranging::RegressionKind, ranging::RegressionModel>> models;
    for (const auto& rx : cal_dep.receivers) {
        std::vector<ranging::RangeSample> samples;
        for (const auto& tx : cal_dep.transmitters)
            if (auto it = cal_mean.find({tx.id, rx.id}); it != cal_mean.end())
                samples.push_back({it->second, lpwanloc::distance(tx.position, rx.position)});
        for (auto kind : rs.models) {
            auto model = kind == ranging::RegressionKind::polynomial
                             ? ranging::fit_polynomial(samples, rs.polynomial_order)
                             : ranging::fit_power(samples, {.two_parameter = rs.power_two_parameter});
            r.models.push_back({rx.id, model});
            models[rx.id][kind] = std::move(model);
        }
    }

    // Positioning.
    const auto pos_dep = positioning_deployment(spec, seed);
    const auto gen = channel::generate_scenario(pos_dep, derive_seed(seed, "ranging/test"));
    const auto test_mean = detail::mean_rssi(gen.messages);
    for (auto kind : rs.models) {
        FixSet fs;
        fs.kind = kind;
        for (const auto& tx : pos_dep.transmitters) {
            std::vector<Position> anchors;
            std::vector<double> ranges;
            for (const auto& rx : pos_dep.receivers) {
                auto it = test_mean.find({tx.id, rx.id});
                if (it == test_mean.end()) continue;
                const auto est = ranging::estimate_distance(models.at(rx.id).at(kind), it->second);
                if (est.beyond_range_limit) ++fs.beyond_range_limit;
                anchors.push_back(rx.position);
                ranges.push_back(est.meters);
            }
            if (anchors.size() < 3)
                throw RuntimeError("test node '" + tx.id + "' heard by fewer than 3 anchors");
            ranging::PositionFix fix;
            try {
                fix = ranging::multilaterate(anchors, ranges, {.variance_weighting = rs.variance_weighting});
            } catch (const ranging::ConvergenceError<ranging::PositionFix>& e) {
                fix = e.best();
                ++fs.non_converged;
            }
            fs.errors_m.push_back(lpwanloc::distance(fix.position, tx.position));
        }
        fs.cdf = ranging::empirical_cdf(fs.errors_m);
        fs.fraction_below_20m = static_cast<double>(std::count_if(fs.errors_m.begin(), fs.errors_m.end(),
                                                                  [](double e) { return e < 20.0; })) /
                                static_cast<double>(fs.errors_m.size());
        fs.fraction_below_50m = static_cast<double>(std::count_if(fs.errors_m.begin(), fs.errors_m.end(),
                                                                  [](double e) { return e < 50.0; })) /
                                static_cast<double>(fs.errors_m.size());
        const std::vector<double> zeros(fs.errors_m.size(), 0.0);
        fs.rms_error_m = ranging::rms_error(fs.errors_m, zeros);
        r.fixes.push_back(std::move(fs));
    }
    return r;
}

inline std::string config_hash(const ScenarioSpec& spec) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(scenario_to_json(spec).dump())));
    return buf;
}

/// Runs every configured pipeline for every seed. Module errors are rethrown
/// with the scenario name and seed prefixed.
inline ExperimentReport run_experiment(const ScenarioSpec& spec, std::size_t jobs = 1) {
    spec.validate();
    ExperimentReport report;
    report.scenario = spec.name;
    report.config_hash = config_hash(spec);
    report.toolkit_version = kVersion;
    for (auto seed : spec.seeds) {
        const std::string where = "scenario '" + spec.name + "', seed " + std::to_string(seed) + ": ";
        SeedResult s;
        s.seed = seed;
        try {
            if (spec.classification) s.classification = run_classification(spec, seed, jobs);
            if (spec.ranging) s.ranging = run_ranging(spec, seed);
        } catch (const ValidationError& e) {
            throw ValidationError(where + e.what());
        } catch (const RuntimeError& e) {
            throw RuntimeError(where + e.what());
        }
        report.per_seed.push_back(std::move(s));
    }
    return report;
}

/// Runs the experiment and writes its report into `dir`.
inline ExperimentReport run_experiment(const ScenarioSpec& spec, const std::filesystem::path& dir,
                                       ReportFormat format = ReportFormat::json, std::size_t jobs = 1) {
    auto report = run_experiment(spec, jobs);
    emit_report(report, format, dir);
    return report;
}

// ---------------------------------------------------------------------------
// Built-in scenarios.

namespace detail {

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t n) {
    std::vector<std::uint64_t> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = first + i;
    return s;
}

/// Three long-range base stations 6, 11 and 14 km away at spread bearings.
inline std::vector<ReceiverSpec> base_stations() {
    auto at = [](double r, double bearing_deg) {
        const double b = bearing_deg * std::numbers::pi / 180.0;
        return Position{r * std::cos(b), r * std::sin(b)};
    };
    return {{"BS1", at(6000.0, 20.0), channel::LinkKind::long_range, std::nullopt},
            {"BS2", at(11000.0, 140.0), channel::LinkKind::long_range, std::nullopt},
            {"BS3", at(14000.0, 260.0), channel::LinkKind::long_range, std::nullopt}};
}

}  // namespace detail

/// Two classes with D = 10R: GPS-1 at an indoor site (23 dB extra loss) with
/// three nodes, GPS-2 100 m away with one node. Six nodes in total.
inline ScenarioSpec separated_scenario() {
    ScenarioSpec s;
    s.name = "separated";
    s.description = "two well separated classes (D = 10R), indoor class 23 dB below the outdoor one";
    s.seeds = detail::seed_range(1, 20);
    s.long_range.params.shadowing_std_db = 1.5;
    s.long_range.static_shadowing_std_db = 2.0;
    s.long_range.decorrelation_m = 50.0;
    s.receivers = detail::base_stations();
    s.anchors = {{"GPS-1", {0.0, 0.0}, "", 100, 23.0, std::nullopt}, {"GPS-2", {100.0, 0.0}, "", 100, 0.0, std::nullopt}};
    s.nodes = {{"Nd1", {10.0, 0.0}, "GPS-1", 100, 23.0, std::nullopt},
               {"Nd2", {-5.0, 8.7}, "GPS-1", 100, 23.0, std::nullopt},
               {"Nd3", {-5.0, -8.7}, "GPS-1", 100, 23.0, std::nullopt},
               {"Nd4", {108.0, 6.0}, "GPS-2", 100, 0.0, std::nullopt}};
    ClassificationSpec c;
    c.sigma2 = 16.0;
    c.training_counts = {1, 2, 3, 6, 12, 24, 48, 100};
    s.classification = c;
    return s;
}

/// Two overlapping classes with D = 2.5R: anchors 50 m apart, seven nodes on
/// a 20 m circle around each. Class GPS-B is 1.2 dB weaker and steadier
/// (1.2 dB vs 3 dB per-message shadowing). 16 nodes in total.
inline ScenarioSpec overlap_scenario() {
    ScenarioSpec s;
    s.name = "overlap";
    s.description = "two overlapping classes (D = 2.5R) with unequal channel variability";
    s.seeds = detail::seed_range(1, 20);
    s.long_range.params.shadowing_std_db = 3.0;
    s.long_range.static_shadowing_std_db = 0.5;
    s.long_range.decorrelation_m = 30.0;
    s.receivers = detail::base_stations();
    const double d = 50.0, r = 20.0;
    const double steady_std = 1.2, steady_loss = 1.2;
    s.anchors = {{"GPS-A", {0.0, 0.0}, "", 100, 0.0, std::nullopt},
                 {"GPS-B", {d, 0.0}, "", 100, steady_loss, steady_std}};
    for (int c = 0; c < 2; ++c) {
        const auto& a = s.anchors[static_cast<std::size_t>(c)];
        for (int j = 0; j < 7; ++j) {
            const double ang = 2.0 * std::numbers::pi * j / 7.0 + 0.3 * c;
            TransmitterSpec n{std::string(c == 0 ? "A" : "B") + std::to_string(j + 1),
                              {a.position.x + r * std::cos(ang), a.position.y + r * std::sin(ang)},
                              a.id,
                              100,
                              a.site_loss_db,
                              a.shadowing_std_db};
            s.nodes.push_back(n);
        }
    }
    ClassificationSpec c;
    c.sigma2 = 2.0;
    c.box_c = 0.1;
    c.training_counts = {3, 6, 12, 24, 48, 70, 80, 90, 100};
    s.classification = c;
    return s;
}

/// Peer-to-peer ranging: three anchors on a 100 m triangle, radios calibrated
/// on a line at 10..200 m, 30 test nodes inside the triangle.
inline ScenarioSpec tdlan_line_scenario() {
    ScenarioSpec s;
    s.name = "tdlan-line";
    s.description = "peer-to-peer RSSI regression and multilateration with three anchors";
    s.seeds = detail::seed_range(1, 20);
    RangingSpec r;
    r.anchors = {{"GPS-R1", {0.0, 0.0}}, {"GPS-R2", {100.0, 0.0}}, {"GPS-R3", {50.0, 50.0 * std::sqrt(3.0)}}};
    for (int dd = 10; dd <= 200; dd += 10) r.calibration_distances_m.push_back(dd);
    s.ranging = r;
    return s;
}

inline std::vector<std::string> builtin_scenarios() { return {"overlap", "separated", "tdlan-line"}; }

inline ScenarioSpec builtin_scenario(const std::string& name) {
    if (name == "separated") return separated_scenario();
    if (name == "overlap") return overlap_scenario();
    if (name == "tdlan-line") return tdlan_line_scenario();
    std::string list;
    for (const auto& n : builtin_scenarios()) list += (list.empty() ? "" : ", ") + n;
    throw ValidationError("unknown scenario '" + name + "' (available: " + list + ")");
}

}  // namespace lpwanloc::harness
