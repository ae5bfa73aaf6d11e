// SPDX-License-Identifier: Apache-2.0
// lpwanloc command-line front end.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lpwanloc/lpwanloc.hpp"

namespace fs = std::filesystem;
using namespace lpwanloc;
using namespace lpwanloc::harness;

namespace {

struct Common {
    std::string out;
    std::string format = "json";
    std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_jobs = false) {
    cmd->add_option("--out", c.out, "Output directory (stdout when omitted, json only)");
    cmd->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"json", "csv-bundle"}));
    if (with_jobs) cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::Range(1, 1024));
}

/// Writes a small result document: canonical JSON to --out/<stem>.json or stdout,
/// or one CSV produced by `to_csv` for csv-bundle. `exact` keeps full double
/// precision, for documents that are read back as inputs.
template <typename CsvFn>
void write_result(const Common& c, const std::string& stem, const json& doc, CsvFn to_csv, bool exact = false) {
    const auto format = parse_format(c.format);
    const auto text = [&] { return exact ? doc.dump(2) + "\n" : canonical_json(doc); };
    if (c.out.empty()) {
        if (format != ReportFormat::json) throw ValidationError("--format csv-bundle requires --out");
        std::cout << text();
        return;
    }
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) throw RuntimeError("cannot create output directory '" + c.out + "': " + ec.message());
    const fs::path path = fs::path(c.out) / (stem + (format == ReportFormat::json ? ".json" : ".csv"));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot write '" + path.string() + "'");
    f << (format == ReportFormat::json ? text() : to_csv(doc));
    if (!f) throw RuntimeError("write failed for '" + path.string() + "'");
}

json read_json_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
    }
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    Common common;
    std::string config;
    std::string scenario;
    std::optional<std::uint64_t> seed;
    bool print_config = false;
    bool export_messages = false;
};

void export_classification_inputs(const ScenarioSpec& spec, std::uint64_t seed, const fs::path& dir) {
    const auto gen = channel::generate_scenario(spec.classification_deployment(), seed);
    std::set<std::string> anchor_ids;
    for (const auto& a : spec.anchors) anchor_ids.insert(a.id);
    std::vector<RssiMessage> train, test;
    for (const auto& m : gen.messages) (anchor_ids.count(m.node_id) ? train : test).push_back(m);
    const std::string suffix = "_seed" + std::to_string(seed) + ".csv";
    export_messages((dir / ("train" + suffix)).string(), train);
    export_messages((dir / ("test" + suffix)).string(), test);
    std::ofstream labels(dir / ("labels" + suffix), std::ios::binary);
    labels << "node_id,class_id\n";
    for (const auto& n : spec.nodes) labels << n.id << ',' << n.class_id << '\n';
    std::ofstream pos(dir / ("positions" + suffix), std::ios::binary);
    pos << "id,kind,x_m,y_m,lat,lon\n";
    for (const auto& a : spec.anchors)
        pos << a.id << ",anchor," << format_exact(a.position.x) << ',' << format_exact(a.position.y) << ",,\n";
    for (const auto& n : spec.nodes)
        pos << n.id << ",node," << format_exact(n.position.x) << ',' << format_exact(n.position.y) << ",,\n";
    for (const auto& r : spec.receivers)
        pos << r.id << ",receiver," << format_exact(r.position.x) << ',' << format_exact(r.position.y) << ",,\n";
    if (!labels || !pos) throw RuntimeError("write failed in '" + dir.string() + "'");
}

int run_simulate(const SimulateArgs& a) {
    if (a.config.empty() == a.scenario.empty()) throw ValidationError("give exactly one of --config or --scenario");
    ScenarioSpec spec = a.config.empty() ? builtin_scenario(a.scenario) : load_scenario(a.config);
    if (a.seed) spec.seeds = {*a.seed};
    spec.validate();
    if (a.print_config) {
        std::cout << scenario_to_json(spec).dump(2) << "\n";
        return 0;
    }
    const auto format = parse_format(a.common.format);
    const auto report = run_experiment(spec, a.common.jobs);
    if (a.common.out.empty()) {
        if (format != ReportFormat::json) throw ValidationError("--format csv-bundle requires --out");
        std::cout << canonical_json(to_json(report));
    } else {
        emit_report(report, format, a.common.out);
    }
    if (a.export_messages) {
        if (a.common.out.empty()) throw ValidationError("--export-messages requires --out");
        if (!spec.classification) throw ValidationError("--export-messages needs a classification scenario");
        for (auto s : spec.seeds) export_classification_inputs(spec, s, a.common.out);
    }
    return 0;
}

// ---------------------------------------------------------------- classify

struct ClassifyArgs {
    Common common;
    std::string train, test, labels, positions;
    std::string algorithm = "svm";
    double sigma2 = 4.0;
    double box_c = 10.0;
    std::size_t averaging = 1;
    double floor_dbm = -140.0;
};

std::map<std::string, std::string> read_labels(const std::string& path) {
    const auto doc = read_csv(path);
    if (doc.header != std::vector<std::string>{"node_id", "class_id"})
        throw ValidationError(path + ":" + std::to_string(doc.header_line) + ": header must be 'node_id,class_id'");
    std::map<std::string, std::string> out;
    for (const auto& r : doc.rows) {
        if (r.fields[0].empty() || r.fields[1].empty())
            throw ValidationError(path + ":" + std::to_string(r.line) + ": empty id");
        if (!out.emplace(r.fields[0], r.fields[1]).second)
            throw ValidationError(path + ":" + std::to_string(r.line) + ": duplicate node '" + r.fields[0] + "'");
    }
    return out;
}

int run_classify(const ClassifyArgs& a) {
    const auto train = ingest_messages(a.train);
    std::set<ReceiverId> receiver_set;
    std::set<ClassId> class_set;
    for (const auto& m : train) {
        receiver_set.insert(m.receiver_id);
        class_set.insert(m.node_id);
    }
    const auto test = ingest_messages(a.test, receiver_set);
    const std::vector<ReceiverId> receivers(receiver_set.begin(), receiver_set.end());

    std::map<std::string, Position> positions;
    if (!a.positions.empty())
        for (const auto& p : ingest_positions(a.positions)) positions[p.id] = p.position;
    std::vector<AnchorClass> anchors;
    for (const auto& c : class_set) {
        if (!a.positions.empty() && !positions.count(c))
            throw ValidationError("anchor '" + c + "' missing from positions file");
        anchors.push_back({c, positions.count(c) ? positions[c] : Position{}, {}});
    }
    const auto db = build_fingerprint_db(train, anchors, receivers);
    anchors = with_training_rows(anchors, db);

    classify::ClassifierConfig config;
    config.kernel.sigma2 = a.sigma2;
    config.box_c = a.box_c;
    config.policy.floor_dbm = a.floor_dbm;
    const auto algorithm = classify::parse_algorithm(a.algorithm);
    const auto training = classify::training_set(db, a.averaging, config.policy);

    std::set<NodeId> nodes;
    for (const auto& m : test) nodes.insert(m.node_id);
    const auto labels = a.labels.empty() ? std::map<std::string, std::string>{} : read_labels(a.labels);

    json doc;
    doc["algorithm"] = a.algorithm;
    doc["sigma2"] = a.sigma2;
    doc["box_c"] = a.box_c;
    doc["averaging"] = a.averaging;
    doc["receivers"] = receivers;
    doc["classes"] = std::vector<ClassId>(class_set.begin(), class_set.end());
    doc["nodes"] = json::array();

    const auto svm = algorithm == classify::Algorithm::svm
                         ? std::optional(classify::train_svm(training, config.kernel, config.box_c, config.svm))
                         : std::nullopt;
    const auto tree = algorithm == classify::Algorithm::dtree
                          ? std::optional(classify::train_dtree(training, config.dtree_max_depth, config.dtree_min_leaf))
                          : std::nullopt;
    auto classify_one = [&](std::span<const double> x) { return svm ? svm->predict(x) : tree->predict(x); };

    std::vector<classify::TestNode> labelled;
    for (const auto& n : nodes) {
        const auto series = node_series(test, n, receivers);
        const auto samples = average_k_by_k(classify::impute(series, config.policy), a.averaging);
        std::map<ClassId, std::size_t> votes;
        for (const auto& s : samples) ++votes[classify_one(s)];
        ClassId best;
        std::size_t best_n = 0;
        for (const auto& [c, v] : votes)
            if (v > best_n) {
                best = c;
                best_n = v;
            }
        json entry{{"node_id", n}, {"samples", samples.size()}, {"votes", votes}, {"predicted", best}};
        if (auto it = labels.find(n); it != labels.end()) {
            entry["truth"] = it->second;
            labelled.push_back({n, it->second, series});
        }
        doc["nodes"].push_back(std::move(entry));
    }
    if (!labelled.empty()) {
        const auto samples = classify::test_samples(labelled, a.averaging, config.policy);
        const auto ev = classify::train_and_evaluate(algorithm, training, samples, anchors, config);
        doc["accuracy"] = ev.accuracy;
        doc["confusion"] = ev.confusion;
        if (!a.positions.empty()) {
            double geo = 0.0;
            for (const auto& o : ev.outcomes) geo += o.geographic_error;
            doc["mean_geographic_error_m"] = geo / static_cast<double>(ev.outcomes.size());
        }
    }
    write_result(a.common, "classify", doc, [](const json& d) {
        std::string csv = "node_id,predicted,truth,samples\n";
        for (const auto& n : d.at("nodes"))
            csv += n.at("node_id").get<std::string>() + "," + n.at("predicted").get<std::string>() + "," +
                   n.value("truth", std::string()) + "," + std::to_string(n.at("samples").get<std::size_t>()) + "\n";
        return csv;
    });
    return 0;
}

// ---------------------------------------------------------------- range

struct RangeArgs {
    Common common;
    // fit
    std::string samples;
    std::string model = "polynomial";
    std::size_t order = 3;
    bool two_parameter = false;
    // estimate
    std::string model_file;
    std::vector<double> rssi;
    // multilaterate
    std::string ranges;
    bool weighted = false;
};

/// Sample CSV `distance_m,rssi_dbm`; rows sharing a distance are averaged.
std::vector<ranging::RangeSample> read_range_samples(const std::string& path) {
    const auto doc = read_csv(path);
    const std::vector<std::string> cols{"distance_m", "rssi_dbm"};
    if (doc.header != cols)
        throw ValidationError(path + ":" + std::to_string(doc.header_line) + ": header must be 'distance_m,rssi_dbm'");
    if (doc.rows.empty()) throw ValidationError(path + ": empty file (no data rows)");
    std::map<double, std::pair<double, std::size_t>> acc;
    for (const auto& r : doc.rows) {
        double d = 0, v = 0;
        if (!parse_double(r.fields[0], d) || !(d > 0.0))
            throw ValidationError(csv_location(path, r.line, 0, cols[0]) + ": '" + r.fields[0] + "' is not a positive number");
        if (!parse_double(r.fields[1], v))
            throw ValidationError(csv_location(path, r.line, 1, cols[1]) + ": '" + r.fields[1] + "' is not a finite number");
        acc[d].first += v;
        acc[d].second += 1;
    }
    std::vector<ranging::RangeSample> out;
    for (const auto& [d, sv] : acc) out.push_back({sv.first / static_cast<double>(sv.second), d});
    return out;
}

json model_json(const ranging::RegressionModel& m) {
    return {{"kind", ranging::to_string(m.kind)}, {"coefficients", m.coefficients}, {"fit_rms_m", m.fit_rms_m}};
}

ranging::RegressionModel model_from_json(const json& j) {
    try {
        ranging::RegressionModel m;
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "polynomial") m.kind = ranging::RegressionKind::polynomial;
        else if (kind == "power") m.kind = ranging::RegressionKind::power;
        else throw ValidationError("unknown model kind '" + kind + "'");
        m.coefficients = j.at("coefficients").get<std::vector<double>>();
        m.fit_rms_m = j.value("fit_rms_m", 0.0);
        if (m.coefficients.size() < (m.kind == ranging::RegressionKind::power ? 3u : 2u))
            throw ValidationError("model has too few coefficients");
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed model file: ") + e.what());
    }
}

int run_range_fit(const RangeArgs& a) {
    const auto samples = read_range_samples(a.samples);
    ranging::RegressionModel model;
    if (a.model == "polynomial") model = ranging::fit_polynomial(samples, a.order);
    else model = ranging::fit_power(samples, {.two_parameter = a.two_parameter});
    write_result(a.common, "model", model_json(model), [](const json& d) {
        std::string csv = "kind,index,coefficient\n";
        for (std::size_t i = 0; i < d.at("coefficients").size(); ++i)
            csv += d.at("kind").get<std::string>() + "," + std::to_string(i) + "," +
                   format_exact(d.at("coefficients")[i].get<double>()) + "\n";
        return csv;
    }, true);
    return 0;
}

int run_range_estimate(const RangeArgs& a) {
    const auto model = model_from_json(read_json_file(a.model_file));
    json doc = json::array();
    for (double r : a.rssi) {
        const auto est = ranging::estimate_distance(model, r);
        doc.push_back({{"rssi_dbm", r}, {"distance_m", est.meters}, {"beyond_range_limit", est.beyond_range_limit}});
    }
    write_result(a.common, "estimates", doc, [](const json& d) {
        std::string csv = "rssi_dbm,distance_m,beyond_range_limit\n";
        for (const auto& e : d)
            csv += format_number(e.at("rssi_dbm").get<double>()) + "," +
                   format_number(e.at("distance_m").get<double>()) + "," +
                   (e.at("beyond_range_limit").get<bool>() ? "true" : "false") + "\n";
        return csv;
    });
    return 0;
}

int run_range_multilaterate(const RangeArgs& a) {
    const auto doc = read_csv(a.ranges);
    const std::vector<std::string> cols{"anchor_id", "x_m", "y_m", "distance_m"};
    if (doc.header != cols)
        throw ValidationError(a.ranges + ":" + std::to_string(doc.header_line) +
                              ": header must be 'anchor_id,x_m,y_m,distance_m'");
    std::vector<Position> anchors;
    std::vector<double> distances;
    for (const auto& r : doc.rows) {
        double v[3];
        for (std::size_t c = 1; c < 4; ++c)
            if (!parse_double(r.fields[c], v[c - 1]))
                throw ValidationError(csv_location(a.ranges, r.line, c, cols[c]) + ": '" + r.fields[c] +
                                      "' is not a finite number");
        anchors.push_back({v[0], v[1]});
        distances.push_back(v[2]);
    }
    const auto fix = ranging::multilaterate(anchors, distances, {.variance_weighting = a.weighted});
    const json out{{"x_m", fix.position.x},
                   {"y_m", fix.position.y},
                   {"residual_m", fix.residual_m},
                   {"anchors_used", fix.anchors_used},
                   {"iterations", fix.iterations}};
    write_result(a.common, "fix", out, [](const json& d) {
        return "x_m,y_m,residual_m,anchors_used\n" + format_number(d.at("x_m").get<double>()) + "," +
               format_number(d.at("y_m").get<double>()) + "," + format_number(d.at("residual_m").get<double>()) +
               "," + std::to_string(d.at("anchors_used").get<std::size_t>()) + "\n";
    });
    return 0;
}

// ---------------------------------------------------------------- bounds

struct BoundsArgs {
    Common common;
    double sigma_sh = 6.0;
    double path_loss_exponent = 3.0;
    std::vector<double> distances{10, 100, 1000, 10000};
    double snr = 10.0;
    std::vector<double> bandwidths{100.0};
};

int run_bounds(const BoundsArgs& a) {
    channel::ChannelParams p;
    p.shadowing_std_db = a.sigma_sh;
    p.path_loss_exponent = a.path_loss_exponent;
    json doc;
    doc["rssi"] = json::array();
    for (double d : a.distances)
        doc["rssi"].push_back({{"distance_m", d},
                               {"shadowing_std_db", a.sigma_sh},
                               {"path_loss_exponent", a.path_loss_exponent},
                               {"std_m", channel::crlb_rssi_std(d, p)}});
    doc["toa"] = json::array();
    for (double b : a.bandwidths)
        doc["toa"].push_back({{"bandwidth_hz", b},
                              {"snr_linear", a.snr},
                              {"std_m", channel::crlb_toa_std({.snr_linear = a.snr, .bandwidth_hz = b})}});
    write_result(a.common, "bounds", doc, [](const json& d) {
        std::string csv = "method,distance_m,bandwidth_hz,std_m\n";
        for (const auto& r : d.at("rssi"))
            csv += "rssi," + format_number(r.at("distance_m").get<double>()) + ",," +
                   format_number(r.at("std_m").get<double>()) + "\n";
        for (const auto& t : d.at("toa"))
            csv += "toa,," + format_number(t.at("bandwidth_hz").get<double>()) + "," +
                   format_number(t.at("std_m").get<double>()) + "\n";
        return csv;
    });
    return 0;
}

// ---------------------------------------------------------------- fixtures / report

int run_fixtures_list() {
    for (const auto& n : fixture_names()) std::cout << n << "\n";
    return 0;
}

int run_fixtures_dump(const std::string& name, const Common& c) {
    const auto fx = load_fixture(name);
    std::string text;
    for (const auto& line : fx.comments) text += line + "\n";
    for (std::size_t i = 0; i < fx.columns.size(); ++i) text += (i ? "," : "") + fx.columns[i];
    text += "\n";
    for (const auto& row : fx.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) text += (i ? "," : "") + row[i];
        text += "\n";
    }
    if (c.out.empty()) {
        std::cout << text;
        return 0;
    }
    std::error_code ec;
    fs::create_directories(c.out, ec);
    const fs::path path = fs::path(c.out) / (name + ".csv");
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f) throw RuntimeError("cannot write '" + path.string() + "'");
    return 0;
}

int run_report(const std::string& in, const Common& c) {
    const auto doc = read_json_file(in);
    if (!doc.is_object() || !doc.contains("per_seed") || !doc.contains("aggregate"))
        throw ValidationError("'" + in + "' is not an experiment report");
    const auto format = parse_format(c.format);
    if (c.out.empty()) {
        if (format != ReportFormat::json) throw ValidationError("--format csv-bundle requires --out");
        std::cout << canonical_json(doc);
        return 0;
    }
    emit_report(doc, format, c.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RSSI-based localization toolkit for LPWAN deployments"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run a scenario and write its report");
    simulate->add_option("--config", sim.config, "Scenario JSON file");
    simulate->add_option("--scenario", sim.scenario, "Built-in scenario (overlap, separated, tdlan-line)");
    simulate->add_option("--seed", sim.seed, "Run this single seed instead of the configured list");
    simulate->add_flag("--print-config", sim.print_config, "Print the resolved scenario JSON and exit");
    simulate->add_flag("--export-messages", sim.export_messages, "Also write the generated message CSVs");
    add_common(simulate, sim.common, true);

    ClassifyArgs cls;
    auto* classify = app.add_subcommand("classify", "Train on anchor messages and classify node messages");
    classify->add_option("--train", cls.train, "Anchor messages CSV (node_id is the class id)")->required();
    classify->add_option("--test", cls.test, "Node messages CSV")->required();
    classify->add_option("--labels", cls.labels, "CSV node_id,class_id with true classes");
    classify->add_option("--positions", cls.positions, "Positions CSV id,kind,x_m,y_m,lat,lon");
    classify->add_option("--algorithm", cls.algorithm)->check(CLI::IsMember({"svm", "dtree"}));
    classify->add_option("--sigma2", cls.sigma2, "Gaussian kernel variance");
    classify->add_option("--box-c", cls.box_c, "SVM box constraint");
    classify->add_option("--averaging", cls.averaging, "k-by-k averaging factor")->check(CLI::PositiveNumber);
    classify->add_option("--floor-dbm", cls.floor_dbm, "RSSI imputed for unheard receivers");
    add_common(classify, cls.common);

    RangeArgs rng;
    auto* range = app.add_subcommand("range", "Distance regression and multilateration");
    range->require_subcommand(1);
    auto* fit = range->add_subcommand("fit", "Fit distance = f(rssi) from CSV distance_m,rssi_dbm");
    fit->add_option("--samples", rng.samples, "CSV distance_m,rssi_dbm; rows at one distance are averaged")->required();
    fit->add_option("--model", rng.model)->check(CLI::IsMember({"polynomial", "power"}));
    fit->add_option("--order", rng.order, "Polynomial order")->check(CLI::PositiveNumber);
    fit->add_flag("--two-parameter", rng.two_parameter, "Power model a*x^b without offset");
    add_common(fit, rng.common);
    auto* estimate = range->add_subcommand("estimate", "Evaluate a fitted model");
    estimate->add_option("--model", rng.model_file, "Model JSON written by 'range fit'")->required();
    estimate->add_option("--rssi", rng.rssi, "Query RSSI values (dBm)")->required()->allow_extra_args();
    add_common(estimate, rng.common);
    auto* multi = range->add_subcommand("multilaterate", "Position from CSV anchor_id,x_m,y_m,distance_m");
    multi->add_option("--ranges", rng.ranges, "CSV anchor_id,x_m,y_m,distance_m")->required();
    multi->add_flag("--weighted", rng.weighted, "Weight ranges by 1/d^2");
    add_common(multi, rng.common);

    BoundsArgs bnd;
    auto* bounds = app.add_subcommand("bounds", "Ranging accuracy lower bounds for RSSI and time of arrival");
    bounds->add_option("--sigma-sh", bnd.sigma_sh, "Shadowing std (dB)");
    bounds->add_option("--np", bnd.path_loss_exponent, "Path-loss exponent");
    bounds->add_option("--distances", bnd.distances, "Distances (m)")->delimiter(',');
    bounds->add_option("--snr", bnd.snr, "Linear SNR");
    bounds->add_option("--bandwidth", bnd.bandwidths, "Bandwidths (Hz)")->delimiter(',');
    add_common(bounds, bnd.common);

    Common fx_common;
    std::string fx_name;
    auto* fixtures = app.add_subcommand("fixtures", "Bundled digitized data tables");
    fixtures->require_subcommand(1);
    auto* fx_list = fixtures->add_subcommand("list", "List fixture names");
    auto* fx_dump = fixtures->add_subcommand("dump", "Print a fixture as CSV");
    fx_dump->add_option("name", fx_name)->required();
    fx_dump->add_option("--out", fx_common.out, "Output directory");

    Common rep_common;
    std::string rep_in;
    auto* report = app.add_subcommand("report", "Re-emit a JSON report in another format");
    report->add_option("--in", rep_in, "report.json")->required();
    add_common(report, rep_common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        if (*simulate) return run_simulate(sim);
        if (*classify) return run_classify(cls);
        if (*fit) return run_range_fit(rng);
        if (*estimate) return run_range_estimate(rng);
        if (*multi) return run_range_multilaterate(rng);
        if (*bounds) return run_bounds(bnd);
        if (*fx_list) return run_fixtures_list();
        if (*fx_dump) return run_fixtures_dump(fx_name, fx_common);
        if (*report) return run_report(rep_in, rep_common);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
