// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <random>

#include "lpwanloc/classify/dtree.hpp"
#include "lpwanloc/classify/evaluate.hpp"
#include "lpwanloc/harness/experiment.hpp"

using namespace lpwanloc;
using namespace lpwanloc::classify;
using Catch::Matchers::WithinAbs;

namespace {

struct Truth {
    ClassId predict(std::span<const double> x) const { return x[0] < -95.0 ? "A" : "B"; }
};

std::vector<AnchorClass> two_anchors() { return {{"A", {0, 0}, {}}, {"B", {100, 0}, {}}}; }

// Two classes, one receiver, Gaussian spread around the given means.
struct Synthetic {
    FingerprintDatabase db;
    std::vector<AnchorClass> anchors;
    std::vector<TestNode> test;
};

Synthetic synthetic(double mean_a, double mean_b, double sd, std::size_t train_rows, std::size_t test_rows,
                    std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd(0.0, sd);
    Synthetic s;
    std::vector<RssiMessage> msgs;
    for (std::uint64_t t = 1; t <= train_rows; ++t) {
        msgs.push_back({"A", "R1", t, mean_a + nd(gen)});
        msgs.push_back({"A", "R2", t, mean_b - 5 + nd(gen)});
        msgs.push_back({"B", "R1", t, mean_b + nd(gen)});
        msgs.push_back({"B", "R2", t, mean_a - 5 + nd(gen)});
    }
    s.anchors = two_anchors();
    s.db = build_fingerprint_db(msgs, s.anchors, {"R1", "R2"});
    s.anchors = with_training_rows(s.anchors, s.db);
    for (const char* c : {"A", "B"}) {
        TestNode node{std::string("n") + c, c, {}};
        const bool a = std::string(c) == "A";
        for (std::size_t i = 0; i < test_rows; ++i)
            node.series.push_back({(a ? mean_a : mean_b) + nd(gen), (a ? mean_b : mean_a) - 5 + nd(gen)});
        s.test.push_back(std::move(node));
    }
    return s;
}

}  // namespace

TEST_CASE("23 dB separation gives a depth-1 tree") {
    TrainingSet data;
    for (int i = 0; i < 10; ++i) {
        data.push_back({{-99.0 + 0.2 * i}, "far"});
        data.push_back({{-76.0 + 0.2 * i}, "near"});
    }
    const auto tree = train_dtree(data);
    CHECK(tree.depth() == 1);
    for (const auto& s : data) CHECK(tree.predict(s.features) == s.label);
}

TEST_CASE("pure input is a single leaf") {
    TrainingSet data{{{-90.0}, "only"}, {{-80.0}, "only"}, {{-70.0}, "only"}};
    const auto tree = train_dtree(data);
    CHECK(tree.nodes.size() == 1);
    CHECK(predict_dtree(tree, std::vector{0.0}) == "only");
}

TEST_CASE("3-class 1-D set matches exhaustive threshold search") {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    TrainingSet data;
    const char* labels[3] = {"a", "b", "c"};
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 15; ++i) data.push_back({{-100.0 * (c + 1) - u(gen)}, labels[c]});
    std::shuffle(data.begin(), data.end(), gen);

    // oracle: best accuracy over threshold pairs t1 < t2 and any labelling of the three intervals
    std::vector<double> xs;
    for (const auto& s : data) xs.push_back(s.features[0]);
    std::sort(xs.begin(), xs.end());
    std::vector<double> cuts{xs.front() - 1};
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) cuts.push_back(0.5 * (xs[i] + xs[i + 1]));
    cuts.push_back(xs.back() + 1);
    std::size_t best = 0;
    for (std::size_t i = 0; i < cuts.size(); ++i)
        for (std::size_t j = i; j < cuts.size(); ++j)
            for (const char* l0 : labels)
                for (const char* l1 : labels)
                    for (const char* l2 : labels) {
                        std::size_t ok = 0;
                        for (const auto& s : data) {
                            const double x = s.features[0];
                            ok += s.label == (x <= cuts[i] ? l0 : x <= cuts[j] ? l1 : l2);
                        }
                        best = std::max(best, ok);
                    }

    const auto tree = train_dtree(data, 2);
    std::size_t ok = 0;
    for (const auto& s : data) ok += tree.predict(s.features) == s.label;
    CHECK(ok == best);
    CHECK(best == data.size());
}

TEST_CASE("max_depth 0 is the majority baseline") {
    TrainingSet data{{{1.0}, "x"}, {{2.0}, "y"}, {{3.0}, "y"}, {{4.0}, "z"}};
    const auto tree = train_dtree(data, 0);
    CHECK(tree.nodes.size() == 1);
    for (double v : {-5.0, 2.5, 100.0}) CHECK(tree.predict(std::vector{v}) == "y");
    CHECK_THROWS_AS(train_dtree({}), ValidationError);
}

TEST_CASE("evaluate_accuracy") {
    const auto anchors = two_anchors();
    std::vector<LabeledSample> test{{{-100.0}, "A"}, {{-90.0}, "B"}, {{-99.0}, "A"}};
    const auto perfect = evaluate_accuracy(Truth{}, test, anchors);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.confusion == std::vector<std::vector<std::size_t>>{{2, 0}, {0, 1}});

    test.push_back({{-90.0}, "A"});  // misclassified as B
    const auto ev = evaluate_accuracy(Truth{}, test, anchors);
    CHECK_THAT(ev.accuracy, WithinAbs(0.75, 1e-15));
    CHECK(ev.confusion[0][1] == 1);
    CHECK(ev.outcomes.back().geographic_error == 100.0);
    for (const auto& o : ev.outcomes)
        if (o.predicted_class != o.true_class) CHECK(o.geographic_error >= class_separation(anchors));

    CHECK_THROWS_AS(evaluate_accuracy(Truth{}, {}, anchors), ValidationError);
    CHECK_THROWS_AS(evaluate_accuracy(Truth{}, {{{-100.0}, "Q"}}, anchors), ValidationError);
}

TEST_CASE("sigma sweep on a one-point grid equals direct evaluation") {
    const auto s = synthetic(-95, -100, 4.0, 40, 40, 9);
    const ClassifierConfig config{.kernel = {1.0}};
    const auto curves = sigma_sweep(s.db, s.anchors, s.test, {1.0}, {1, 5}, config);
    REQUIRE(curves.size() == 2);
    for (const auto& c : curves) {
        REQUIRE(c.accuracy.size() == 1);
        const auto direct = train_and_evaluate(Algorithm::svm, training_set(s.db, c.k, config.policy),
                                               test_samples(s.test, c.k, config.policy), s.anchors, config);
        CHECK(c.accuracy[0] == direct.accuracy);
    }
    CHECK_THROWS_AS(sigma_sweep(s.db, s.anchors, s.test, {}, {1}, config), ValidationError);
    CHECK_THROWS_AS(sigma_sweep(s.db, s.anchors, s.test, {4.0, 1.0}, {1}, config), ValidationError);

    // parallel evaluation gives the same numbers
    const auto serial = sigma_sweep(s.db, s.anchors, s.test, {0.5, 2, 8}, {1, 5}, config, 1);
    const auto threaded = sigma_sweep(s.db, s.anchors, s.test, {0.5, 2, 8}, {1, 5}, config, 4);
    for (std::size_t i = 0; i < serial.size(); ++i) CHECK(serial[i].accuracy == threaded[i].accuracy);
}

TEST_CASE("training curve at m = T equals full evaluation") {
    const auto s = synthetic(-95, -100, 4.0, 30, 30, 10);
    const ClassifierConfig config;
    const auto curves = training_size_curve(s.db, s.anchors, s.test, {3, 30}, {1, 10}, {Algorithm::svm, Algorithm::dtree},
                                            config);
    REQUIRE(curves.size() == 4);
    for (const auto& c : curves) {
        const auto full = train_and_evaluate(c.algorithm, training_set(s.db, c.k, config.policy),
                                             test_samples(s.test, c.k, config.policy), s.anchors, config);
        CHECK(c.accuracy.back() == full.accuracy);
    }
    CHECK_THROWS_AS(training_size_curve(s.db, s.anchors, s.test, {31}, {1}, {Algorithm::svm}, config), ValidationError);
    CHECK_THROWS_AS(training_size_curve(s.db, s.anchors, s.test, {0}, {1}, {Algorithm::svm}, config), ValidationError);
}

TEST_CASE("averaging improves accuracy on overlapping classes") {
    // 5 dB apart with 6 dB spread: single messages overlap, 10-message means do not
    double one = 0, ten = 0;
    ClassifierConfig config{.kernel = {4.0}, .box_c = 1.0};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto s = synthetic(-95, -100, 6.0, 100, 100, seed);
        const auto curves = sigma_sweep(s.db, s.anchors, s.test, {4.0}, {1, 10}, config);
        one += curves[0].accuracy[0];
        ten += curves[1].accuracy[0];
    }
    CHECK(ten > one);
}

TEST_CASE("separated scenario is perfectly classified from two training messages") {
    const auto spec = harness::separated_scenario();
    const auto config = spec.classification->classifier_config();
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto data = harness::classification_data(spec, seed);
        const auto curves = training_size_curve(data.db, data.anchors, data.test, {2}, {1},
                                                {Algorithm::svm, Algorithm::dtree}, config);
        for (const auto& c : curves) {
            INFO("seed " << seed << ", " << to_string(c.algorithm));
            CHECK(c.accuracy[0] == 1.0);
        }
    }
}

TEST_CASE("algorithm names") {
    CHECK(parse_algorithm("svm") == Algorithm::svm);
    CHECK(to_string(parse_algorithm("dtree")) == "dtree");
    CHECK_THROWS_AS(parse_algorithm("knn"), ValidationError);
}
