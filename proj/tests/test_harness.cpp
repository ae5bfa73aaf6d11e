// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "lpwanloc/lpwanloc.hpp"

using namespace lpwanloc;
using namespace lpwanloc::harness;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("lpwanloc_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

ScenarioSpec small_separated() {
    auto s = separated_scenario();
    s.seeds = {1, 2, 3};
    s.classification->sigma2_grid = {1, 16};
    s.classification->training_counts = {1, 2, 10};
    return s;
}

ScenarioSpec small_line() {
    auto s = tdlan_line_scenario();
    s.seeds = {4, 5};
    s.ranging->test_nodes = 12;
    return s;
}

}  // namespace

TEST_CASE("message ingest") {
    const std::string ok = "node_id,receiver_id,time_index,rssi_dbm\nn1,BS1,1,-120\nn1,BS2,1,-118.5\nn2,BS1,2,-99\n";
    const auto msgs = parse_messages(ok, "mem.csv");
    REQUIRE(msgs.size() == 3);
    CHECK(msgs[1] == RssiMessage{"n1", "BS2", 1, -118.5});

    const std::string bad = "node_id,receiver_id,time_index,rssi_dbm\nn1,BS1,1,-120\nn1,BS2,1,n/a\n";
    CHECK_THROWS_WITH(parse_messages(bad, "mem.csv"), ContainsSubstring("mem.csv:3, column 4 (rssi_dbm)"));
    CHECK_THROWS_AS(parse_messages(bad, "mem.csv"), ValidationError);

    CHECK_THROWS_WITH(parse_messages("", "e.csv"), ContainsSubstring("empty file"));
    CHECK_THROWS_WITH(parse_messages("node_id,receiver_id,time_index,rssi_dbm\n", "e.csv"),
                      ContainsSubstring("empty file"));
    CHECK_THROWS_WITH(parse_messages(ok, "m.csv", {"BS1"}), ContainsSubstring("m.csv:3, column 2 (receiver_id)"));
    CHECK_THROWS_WITH(parse_messages("a,b\n1,2\n", "h.csv"), ContainsSubstring("header must be"));
    CHECK_THROWS_AS(parse_messages("node_id,receiver_id,time_index,rssi_dbm\nn,r,-1,-90\n", "t.csv"), ValidationError);
    CHECK_THROWS_AS(parse_messages("node_id,receiver_id,time_index,rssi_dbm\nn,r,1\n", "t.csv"), ValidationError);
    CHECK_THROWS_AS(ingest_messages("/nonexistent/file.csv"), ValidationError);
}

TEST_CASE("600 messages round-trip through export") {
    channel::Deployment dep;
    dep.receivers = {{"BS1", {0, 0}, channel::LinkKind::long_range, std::nullopt}};
    dep.long_range.params.quantize_to_integer_dbm = false;
    for (int i = 0; i < 6; ++i) dep.transmitters.push_back({"n" + std::to_string(i), {6000.0 + 10 * i, 0}, 100, 0.0, {}});
    const auto msgs = channel::generate_scenario(dep, 77).messages;
    REQUIRE(msgs.size() == 600);
    const auto dir = scratch("roundtrip");
    export_messages((dir / "m.csv").string(), msgs);
    CHECK(ingest_messages((dir / "m.csv").string(), {"BS1"}) == msgs);
}

TEST_CASE("position ingest") {
    const auto dir = scratch("positions");
    write(dir / "p.csv",
          "id,kind,x_m,y_m,lat,lon\n"
          "a,anchor,1.5,-2,,\n"
          "b,node,,,45.001,7.0\n"
          "c,receiver,,,44.999,7.0\n"
          "d,node,,,45.0,7.001\n");
    const auto p = ingest_positions((dir / "p.csv").string());
    REQUIRE(p.size() == 4);
    CHECK(p[0].position == Position{1.5, -2});
    CHECK(p[0].kind == PositionKind::anchor);
    CHECK(p[2].kind == PositionKind::receiver);
    const double deg = kEarthRadiusM * std::numbers::pi / 180.0;
    CHECK_THAT(p[1].position.y - p[2].position.y, WithinAbs(0.002 * deg, 1e-6));
    CHECK_THAT(p[3].position.x - p[1].position.x, WithinAbs(0.001 * deg * std::cos(45.0 * std::numbers::pi / 180.0), 1e-6));

    write(dir / "bad.csv", "id,kind,x_m,y_m,lat,lon\na,tower,1,2,,\n");
    CHECK_THROWS_WITH(ingest_positions((dir / "bad.csv").string()), ContainsSubstring("column 2 (kind)"));
    write(dir / "nolat.csv", "id,kind,x_m,y_m,lat,lon\na,node,,,,\n");
    CHECK_THROWS_WITH(ingest_positions((dir / "nolat.csv").string()), ContainsSubstring("latitude required"));
    write(dir / "dup.csv", "id,kind,x_m,y_m,lat,lon\na,node,1,1,,\na,node,2,2,,\n");
    CHECK_THROWS_WITH(ingest_positions((dir / "dup.csv").string()), ContainsSubstring("duplicate id"));
}

TEST_CASE("fixtures") {
    const auto fig6 = load_fixture("fig6-rssi-vs-distance");
    bool found = false;
    for (std::size_t r = 0; r < fig6.rows.size(); ++r)
        if (fig6.text(r, "receiver") == "1" && fig6.number(r, "distance_m") == 10.0) {
            CHECK(fig6.number(r, "rssi_dbm") == -58.7);
            found = true;
        }
    CHECK(found);
    CHECK_FALSE(fig6.comments.empty());

    const auto fig2 = load_fixture("fig2-histograms");
    double count = -1;
    for (std::size_t r = 0; r < fig2.rows.size(); ++r)
        if (fig2.number(r, "distance_m") == 130.0 && fig2.number(r, "bin_start_dbm") == -99.5)
            count = fig2.number(r, "count");
    CHECK(count == 24.0);

    const auto fig7 = load_fixture("fig7-cdfs");
    double max_err = 0;
    for (std::size_t r = 0; r < fig7.rows.size(); ++r)
        if (fig7.text(r, "curve") == "polynomial") max_err = std::max(max_err, fig7.number(r, "error_m"));
    CHECK_THAT(max_err, WithinAbs(80.57, 0.005));

    for (const auto& n : fixture_names()) CHECK_NOTHROW(load_fixture(n));
    CHECK_THROWS_WITH(load_fixture("fig9"), ContainsSubstring("fig2-histograms, fig4-sigma-curves"));
    CHECK_THROWS_AS(load_fixture("fig9"), ValidationError);
    CHECK_THROWS_AS(fig6.column_index("nope"), ValidationError);
}

TEST_CASE("tampered fixture fails checksum verification") {
    const auto dir = scratch("fixtures");
    auto text = slurp(fixture_dir() / "fig6-rssi-vs-distance.csv");
    text.replace(text.find("-58.7"), 5, "-58.8");
    write(dir / "fig6-rssi-vs-distance.csv", text);
    ::setenv("LPWANLOC_FIXTURE_DIR", dir.string().c_str(), 1);
    CHECK_THROWS_WITH(load_fixture("fig6-rssi-vs-distance"), ContainsSubstring("checksum"));
    CHECK_THROWS_AS(load_fixture("fig6-rssi-vs-distance"), RuntimeError);
    ::unsetenv("LPWANLOC_FIXTURE_DIR");
    CHECK_NOTHROW(load_fixture("fig6-rssi-vs-distance"));
}

TEST_CASE("scenario json round trip") {
    for (const auto& name : builtin_scenarios()) {
        const auto spec = builtin_scenario(name);
        const auto j = scenario_to_json(spec);
        const auto back = scenario_from_json(j);
        CHECK(scenario_to_json(back) == j);
        CHECK(config_hash(back) == config_hash(spec));
        CHECK(config_hash(spec).size() == 16);
    }
    CHECK(config_hash(separated_scenario()) != config_hash(overlap_scenario()));
    CHECK_THROWS_WITH(builtin_scenario("nope"), ContainsSubstring("overlap, separated, tdlan-line"));

    const auto dir = scratch("scenario");
    write(dir / "s.json", scenario_to_json(overlap_scenario()).dump(2));
    CHECK(scenario_to_json(load_scenario((dir / "s.json").string())) == scenario_to_json(overlap_scenario()));
    write(dir / "broken.json", "{ not json");
    CHECK_THROWS_AS(load_scenario((dir / "broken.json").string()), ValidationError);
}

TEST_CASE("scenario validation") {
    const auto base = scenario_to_json(separated_scenario());
    auto expect = [&](auto mutate, const std::string& text) {
        auto j = base;
        mutate(j);
        CHECK_THROWS_WITH(scenario_from_json(j), ContainsSubstring(text));
        CHECK_THROWS_AS(scenario_from_json(j), ValidationError);
    };
    expect([](json& j) { j.erase("name"); }, "'name' is required");
    expect([](json& j) { j["nodes"][0]["id"] = j["anchors"][0]["id"]; }, "duplicate id");
    expect([](json& j) { j["nodes"][0]["class_id"] = "ghost"; }, "unknown class 'ghost'");
    expect([](json& j) { j["anchors"].erase(1); j["nodes"] = json::array(); }, "at least 2 anchors");
    expect([](json& j) { j["classification"]["sigma2_grid"] = json::array(); }, "sigma2_grid is empty");
    expect([](json& j) { j["classification"]["algorithms"] = {"knn"}; }, "unknown algorithm");
    expect([](json& j) { j["receivers"][0]["link"] = "wifi"; }, "wifi");
    expect([](json& j) { j["seeds"] = "many"; }, "'seeds'");
    expect([](json& j) { j["channels"]["long_range"]["path_loss_exponent"] = 0; }, "path_loss_exponent");
    expect([](json& j) { j.erase("classification"); }, "neither classification nor ranging");

    auto line = scenario_to_json(tdlan_line_scenario());
    line["ranging"]["anchors"].erase(2);
    CHECK_THROWS_WITH(scenario_from_json(line), ContainsSubstring("at least 3 anchors"));
    line = scenario_to_json(tdlan_line_scenario());
    line["ranging"]["calibration_distances_m"] = {10, 20, 30};
    CHECK_THROWS_WITH(scenario_from_json(line), ContainsSubstring("too few calibration distances"));
}

TEST_CASE("canonical json formatting") {
    json j{{"b", 1.0 / 3.0}, {"a", {1.5, -0.0, std::nan("")}}, {"c", {{{"z", 1}}}}, {"i", 7}};
    CHECK(canonical_json(j) ==
          "{\n  \"a\": [1.5, 0, null],\n  \"b\": 0.333333,\n  \"c\": [\n    {\n      \"z\": 1\n    }\n  ],\n  \"i\": 7\n}\n");
    CHECK(format_number(123456789.0) == "1.23457e+08");
    CHECK(parse_format("csv-bundle") == ReportFormat::csv_bundle);
    CHECK_THROWS_AS(parse_format("xml"), ValidationError);
}

TEST_CASE("report emission is stable and round-trips") {
    const auto spec = small_separated();
    const auto d1 = scratch("report1"), d2 = scratch("report2");
    run_experiment(spec, d1, ReportFormat::json, 1);
    run_experiment(spec, d2, ReportFormat::json, 3);
    const auto text = slurp(d1 / "report.json");
    CHECK(text == slurp(d2 / "report.json"));

    const auto parsed = json::parse(text);
    CHECK(canonical_json(parsed) == text);
    CHECK(parsed.at("provenance").at("config_hash") == config_hash(spec));
    CHECK(parsed.at("provenance").at("toolkit_version") == kVersion);
    CHECK(parsed.at("per_seed").size() == 3);

    const auto d3 = scratch("report3");
    emit_report(parsed, ReportFormat::json, d3);
    CHECK(slurp(d3 / "report.json") == text);
}

TEST_CASE("aggregates equal recomputation from per-seed entries") {
    const auto report = run_experiment(small_separated(), 2);
    const auto agg = aggregate(report);
    const auto& sweep = agg.at("classification").at("sigma_sweep");
    for (std::size_t c = 0; c < sweep.size(); ++c)
        for (std::size_t g = 0; g < sweep[c].at("sigma2").size(); ++g) {
            double sum = 0;
            for (const auto& s : report.per_seed) sum += s.classification->sigma_curves[c].accuracy[g];
            CHECK_THAT(sweep[c]["accuracy_mean"][g].get<double>(), WithinAbs(sum / 3.0, 1e-12));
        }

    const auto line = run_experiment(small_line());
    const auto& fixes = aggregate(line).at("ranging").at("fixes");
    for (std::size_t f = 0; f < fixes.size(); ++f) {
        std::vector<double> v;
        for (const auto& s : line.per_seed) v.push_back(s.ranging->fixes[f].rms_error_m);
        const double mean = (v[0] + v[1]) / 2.0;
        const double sd = std::sqrt(((v[0] - mean) * (v[0] - mean) + (v[1] - mean) * (v[1] - mean)) / 1.0);
        CHECK_THAT(fixes[f]["rms_error_m_mean"].get<double>(), WithinAbs(mean, 1e-12));
        CHECK_THAT(fixes[f]["rms_error_m_std"].get<double>(), WithinAbs(sd, 1e-12));
        CHECK(fixes[f]["pooled_cdf"].size() == 24);
    }
}

TEST_CASE("csv bundle tables") {
    const auto dir = scratch("bundle");
    run_experiment(small_line(), dir, ReportFormat::csv_bundle);
    std::size_t cdf_files = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("cdf_", 0) != 0) continue;
        ++cdf_files;
        const auto doc = read_csv(e.path().string());
        CHECK(doc.header == std::vector<std::string>{"error_m", "probability"});
        REQUIRE_FALSE(doc.rows.empty());
        CHECK(doc.rows.back().fields[1] == "1");
        double prev = 0;
        for (const auto& r : doc.rows) {
            double p = 0;
            REQUIRE(parse_double(r.fields[1], p));
            CHECK(p >= prev);
            prev = p;
        }
    }
    CHECK(cdf_files == 2 * 2 + 2);  // per seed and pooled, for each model
    CHECK(fs::exists(dir / "provenance.csv"));
    CHECK(fs::exists(dir / "fix_summary_mean.csv"));
    CHECK(fs::exists(dir / "regression_models.csv"));
    CHECK_FALSE(fs::exists(dir / "sigma_sweep.csv"));

    const auto cdir = scratch("bundle_class");
    run_experiment(small_separated(), cdir, ReportFormat::csv_bundle);
    for (const char* f : {"sigma_sweep.csv", "training_curves.csv", "evaluation.csv", "confusion.csv",
                          "sigma_sweep_mean.csv", "training_curves_mean.csv", "evaluation_mean.csv"})
        CHECK(fs::exists(cdir / f));
}

TEST_CASE("experiment metrics equal direct module calls") {
    const auto spec = small_separated();
    const auto report = run_experiment(spec);
    const auto& cs = *spec.classification;
    const auto config = cs.classifier_config();
    for (const auto& s : report.per_seed) {
        const auto data = classification_data(spec, s.seed);
        const auto sweep = classify::sigma_sweep(data.db, data.anchors, data.test, cs.sigma2_grid, cs.averaging, config);
        for (std::size_t i = 0; i < sweep.size(); ++i) CHECK(sweep[i].accuracy == s.classification->sigma_curves[i].accuracy);
        std::size_t e = 0;
        for (auto alg : cs.algorithms)
            for (auto k : cs.averaging) {
                const auto ev = classify::train_and_evaluate(alg, classify::training_set(data.db, k, config.policy),
                                                             classify::test_samples(data.test, k, config.policy),
                                                             data.anchors, config);
                CHECK(ev.accuracy == s.classification->evaluations.at(e).accuracy);
                CHECK(ev.confusion == s.classification->evaluations.at(e).confusion);
                ++e;
            }
        CHECK(s.classification->class_separation_m == class_separation(data.anchors));
    }

    const auto line = small_line();
    const auto lr = run_experiment(line);
    for (const auto& s : lr.per_seed)
        for (const auto& f : s.ranging->fixes) {
            CHECK(f.errors_m.size() == line.ranging->test_nodes);
            const std::vector<double> zero(f.errors_m.size(), 0.0);
            CHECK(f.rms_error_m == ranging::rms_error(f.errors_m, zero));
            const auto cdf = ranging::empirical_cdf(f.errors_m);
            CHECK(ranging::cdf_at(cdf, 20.0 - 1e-12) == f.fraction_below_20m);
        }
}

TEST_CASE("module errors carry scenario context") {
    auto spec = small_separated();
    spec.classification->training_counts = {1, 500};
    try {
        run_experiment(spec);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK_THAT(e.what(), ContainsSubstring("scenario 'separated', seed 1: "));
        CHECK_THAT(e.what(), ContainsSubstring("exceeds available messages"));
    }
}
