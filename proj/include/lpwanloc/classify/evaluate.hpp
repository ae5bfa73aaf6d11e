// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lpwanloc/classify/dtree.hpp"
#include "lpwanloc/classify/kernel.hpp"
#include "lpwanloc/classify/svm.hpp"
#include "lpwanloc/core/fingerprint.hpp"
#include "lpwanloc/parallel.hpp"

namespace lpwanloc::classify {

enum class Algorithm { svm, dtree };

inline std::string to_string(Algorithm a) { return a == Algorithm::svm ? "svm" : "dtree"; }

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "svm") return Algorithm::svm;
    if (s == "dtree") return Algorithm::dtree;
    throw ValidationError("unknown algorithm '" + s + "' (expected svm or dtree)");
}

struct ClassifierConfig {
    KernelParams kernel{4.0};
    double box_c = 10.0;
    ImputationPolicy policy;
    SvmOptions svm;
    std::size_t dtree_max_depth = 32;
    std::size_t dtree_min_leaf = 1;
};

/// Messages of one non-anchor node, with the class it truly belongs to.
struct TestNode {
    NodeId node_id;
    ClassId truth;
    std::vector<MaskedFeatures> series;
};

/// Imputes each node's series, then averages it k-by-k.
inline std::vector<LabeledSample> test_samples(const std::vector<TestNode>& nodes, std::size_t k,
                                               const ImputationPolicy& policy) {
    std::vector<LabeledSample> out;
    for (const auto& node : nodes) {
        std::vector<FeatureVector> dense = impute(node.series, policy);
        for (auto& v : average_k_by_k(dense, k)) out.push_back({std::move(v), node.truth});
    }
    return out;
}

struct Evaluation {
    double accuracy = 0.0;
    std::vector<ClassId> class_ids;
    /// confusion[truth][predicted], indexed like class_ids.
    std::vector<std::vector<std::size_t>> confusion;
    std::vector<ClassificationOutcome> outcomes;
};

/// Mean imputed training fingerprint of an anchor; empty when it has none.
inline FeatureVector class_centroid(const AnchorClass& anchor, const ImputationPolicy& policy) {
    if (anchor.training_fingerprints.empty()) return {};
    FeatureVector mean(anchor.training_fingerprints.front().size(), 0.0);
    for (const auto& row : anchor.training_fingerprints) {
        const auto dense = impute(row, policy);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += dense[i];
    }
    for (auto& v : mean) v /= static_cast<double>(anchor.training_fingerprints.size());
    return mean;
}

/// Scores any model exposing `ClassId predict(span<const double>) const`.
/// feature_residual is 0 when either class lacks training fingerprints.
template <typename Model>
Evaluation evaluate_accuracy(const Model& model, const std::vector<LabeledSample>& test,
                             const std::vector<AnchorClass>& anchors, const ImputationPolicy& policy = {}) {
    if (test.empty()) throw ValidationError("empty test set");
    Evaluation ev;
    std::map<ClassId, std::size_t> index;
    std::map<ClassId, FeatureVector> centroid;
    for (const auto& a : anchors) {
        if (!index.emplace(a.class_id, ev.class_ids.size()).second)
            throw ValidationError("duplicate class id '" + a.class_id + "'");
        ev.class_ids.push_back(a.class_id);
        centroid[a.class_id] = class_centroid(a, policy);
    }
    ev.confusion.assign(ev.class_ids.size(), std::vector<std::size_t>(ev.class_ids.size(), 0));
    std::size_t correct = 0;
    for (const auto& sample : test) {
        auto t = index.find(sample.label);
        if (t == index.end()) throw ValidationError("unknown truth label '" + sample.label + "'");
        ClassId predicted = model.predict(sample.features);
        auto p = index.find(predicted);
        if (p == index.end()) throw ValidationError("model predicted unknown class '" + predicted + "'");
        ++ev.confusion[t->second][p->second];
        if (predicted == sample.label) ++correct;
        const auto& cp = centroid[predicted];
        const auto& ct = centroid[sample.label];
        const double residual = (cp.empty() || ct.empty()) ? 0.0 : squared_distance(cp, ct);
        ev.outcomes.push_back({predicted, sample.label, residual, geographic_error(predicted, sample.label, anchors)});
    }
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    return ev;
}

/// Trains the requested algorithm on `train` and evaluates it on `test`.
inline Evaluation train_and_evaluate(Algorithm algorithm, const TrainingSet& train,
                                     const std::vector<LabeledSample>& test, const std::vector<AnchorClass>& anchors,
                                     const ClassifierConfig& config) {
    if (algorithm == Algorithm::svm)
        return evaluate_accuracy(train_svm(train, config.kernel, config.box_c, config.svm), test, anchors,
                                 config.policy);
    return evaluate_accuracy(train_dtree(train, config.dtree_max_depth, config.dtree_min_leaf), test, anchors,
                             config.policy);
}

struct SigmaCurve {
    std::size_t k = 1;
    std::vector<double> sigma2;
    std::vector<double> accuracy;
};

/// SVM accuracy over a sigma^2 grid for each averaging factor; training and
/// test messages are averaged with the same k.
inline std::vector<SigmaCurve> sigma_sweep(const FingerprintDatabase& db, const std::vector<AnchorClass>& anchors,
                                           const std::vector<TestNode>& test, const std::vector<double>& grid,
                                           const std::vector<std::size_t>& ks, const ClassifierConfig& config,
                                           std::size_t jobs = 1) {
    if (grid.empty()) throw ValidationError("sigma2 grid is empty");
    if (!std::is_sorted(grid.begin(), grid.end())) throw ValidationError("sigma2 grid must be ascending");
    if (ks.empty()) throw ValidationError("averaging list is empty");

    std::vector<TrainingSet> train(ks.size());
    std::vector<std::vector<LabeledSample>> tests(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) {
        train[i] = training_set(db, ks[i], config.policy);
        tests[i] = test_samples(test, ks[i], config.policy);
    }
    std::vector<SigmaCurve> curves(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) {
        curves[i].k = ks[i];
        curves[i].sigma2 = grid;
        curves[i].accuracy.assign(grid.size(), 0.0);
    }
    parallel_for(ks.size() * grid.size(), jobs, [&](std::size_t cell) {
        const std::size_t ki = cell / grid.size(), gi = cell % grid.size();
        ClassifierConfig c = config;
        c.kernel.sigma2 = grid[gi];
        curves[ki].accuracy[gi] = train_and_evaluate(Algorithm::svm, train[ki], tests[ki], anchors, c).accuracy;
    });
    return curves;
}

struct TrainingCurve {
    Algorithm algorithm = Algorithm::svm;
    std::size_t k = 1;
    std::vector<std::size_t> counts;
    std::vector<double> accuracy;
};

/// Accuracy versus the number m of training messages per anchor (the first m
/// rows). Training rows are averaged min(k, m) at a time so that every m
/// yields at least one training vector; test messages are averaged k-by-k.
inline std::vector<TrainingCurve> training_size_curve(const FingerprintDatabase& db,
                                                      const std::vector<AnchorClass>& anchors,
                                                      const std::vector<TestNode>& test,
                                                      const std::vector<std::size_t>& counts,
                                                      const std::vector<std::size_t>& ks,
                                                      const std::vector<Algorithm>& algorithms,
                                                      const ClassifierConfig& config, std::size_t jobs = 1) {
    if (counts.empty() || ks.empty() || algorithms.empty()) throw ValidationError("training curve grid is empty");
    std::size_t available = db.rows();
    for (std::size_t l = 0; l < db.class_count(); ++l) available = std::min(available, db.class_rows(l).size());
    for (auto m : counts) {
        if (m == 0) throw ValidationError("training count must be >= 1");
        if (m > available)
            throw ValidationError("training count " + std::to_string(m) + " exceeds available messages (" +
                                  std::to_string(available) + ")");
    }

    std::vector<std::vector<LabeledSample>> tests(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) tests[i] = test_samples(test, ks[i], config.policy);

    std::vector<TrainingCurve> curves;
    for (auto alg : algorithms)
        for (auto k : ks) curves.push_back({alg, k, counts, std::vector<double>(counts.size(), 0.0)});

    parallel_for(curves.size() * counts.size(), jobs, [&](std::size_t cell) {
        const std::size_t ci = cell / counts.size(), mi = cell % counts.size();
        auto& curve = curves[ci];
        const std::size_t ki = static_cast<std::size_t>(std::find(ks.begin(), ks.end(), curve.k) - ks.begin());
        const std::size_t m = counts[mi];
        const auto train = training_set(db, std::min(curve.k, m), config.policy, m);
        curve.accuracy[mi] = train_and_evaluate(curve.algorithm, train, tests[ki], anchors, config).accuracy;
    });
    return curves;
}

}  // namespace lpwanloc::classify
