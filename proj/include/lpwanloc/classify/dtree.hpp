// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "lpwanloc/classify/kernel.hpp"
#include "lpwanloc/error.hpp"

namespace lpwanloc::classify {

/// Binary threshold tree. Node 0 is the root; `feature < 0` marks a leaf.
/// A sample goes left when x[feature] <= threshold.
struct TreeModel {
    struct Node {
        int feature = -1;
        double threshold = 0.0;
        std::size_t left = 0;
        std::size_t right = 0;
        ClassId label;
    };

    std::vector<Node> nodes;
    std::size_t max_depth = 0;
    std::size_t min_leaf = 1;
    std::size_t feature_count = 0;

    ClassId predict(std::span<const double> x) const {
        if (x.size() != feature_count) throw ValidationError("feature length mismatch");
        std::size_t at = 0;
        while (nodes[at].feature >= 0)
            at = x[static_cast<std::size_t>(nodes[at].feature)] <= nodes[at].threshold ? nodes[at].left : nodes[at].right;
        return nodes[at].label;
    }

    std::size_t depth() const { return depth_from(0); }

private:
    std::size_t depth_from(std::size_t at) const {
        if (nodes[at].feature < 0) return 0;
        return 1 + std::max(depth_from(nodes[at].left), depth_from(nodes[at].right));
    }
};

namespace detail {

inline double entropy(const std::map<ClassId, std::size_t>& counts, std::size_t total) {
    double h = 0.0;
    for (const auto& [c, k] : counts) {
        if (k == 0) continue;
        const double p = static_cast<double>(k) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

/// Majority label; ties go to the smallest class id.
inline ClassId majority(const TrainingSet& data, std::span<const std::size_t> idx) {
    std::map<ClassId, std::size_t> counts;
    for (auto i : idx) ++counts[data[i].label];
    const ClassId* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [c, k] : counts)
        if (k > best_count) {
            best = &c;
            best_count = k;
        }
    return *best;
}

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

inline Split best_split(const TrainingSet& data, std::span<const std::size_t> idx, std::size_t min_leaf) {
    std::map<ClassId, std::size_t> all;
    for (auto i : idx) ++all[data[i].label];
    const double parent = entropy(all, idx.size());
    Split best;
    const std::size_t width = data[idx.front()].features.size();
    std::vector<std::size_t> order(idx.begin(), idx.end());
    for (std::size_t f = 0; f < width; ++f) {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return data[a].features[f] < data[b].features[f]; });
        std::map<ClassId, std::size_t> left;
        std::map<ClassId, std::size_t> right = all;
        for (std::size_t pos = 0; pos + 1 < order.size(); ++pos) {
            const auto& s = data[order[pos]];
            ++left[s.label];
            --right[s.label];
            const double lo = s.features[f], hi = data[order[pos + 1]].features[f];
            if (!(lo < hi)) continue;
            const std::size_t nl = pos + 1, nr = order.size() - nl;
            if (nl < min_leaf || nr < min_leaf) continue;
            const double n = static_cast<double>(order.size());
            const double child = (static_cast<double>(nl) * entropy(left, nl) + static_cast<double>(nr) * entropy(right, nr)) / n;
            const double gain = parent - child;
            if (gain > best.gain + 1e-12) best = {static_cast<int>(f), 0.5 * (lo + hi), gain};
        }
    }
    return best;
}

inline std::size_t grow(TreeModel& tree, const TrainingSet& data, std::vector<std::size_t> idx, std::size_t depth) {
    const std::size_t at = tree.nodes.size();
    tree.nodes.push_back({-1, 0.0, 0, 0, majority(data, idx)});
    if (depth >= tree.max_depth) return at;
    const auto split = best_split(data, idx, tree.min_leaf);
    if (split.feature < 0) return at;
    std::vector<std::size_t> left, right;
    for (auto i : idx)
        (data[i].features[static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(i);
    tree.nodes[at].feature = split.feature;
    tree.nodes[at].threshold = split.threshold;
    const std::size_t l = grow(tree, data, std::move(left), depth + 1);
    const std::size_t r = grow(tree, data, std::move(right), depth + 1);
    tree.nodes[at].left = l;
    tree.nodes[at].right = r;
    return at;
}

}  // namespace detail

/// Greedy top-down induction: at each node the split with the largest
/// information gain over midpoints of sorted per-feature values. No pruning.
inline TreeModel train_dtree(const TrainingSet& data, std::size_t max_depth = 32, std::size_t min_leaf = 1) {
    if (data.empty()) throw ValidationError("empty training set");
    if (min_leaf == 0) throw ValidationError("min_leaf must be >= 1");
    TreeModel tree;
    tree.max_depth = max_depth;
    tree.min_leaf = min_leaf;
    tree.feature_count = data.front().features.size();
    for (const auto& s : data) {
        if (s.features.size() != tree.feature_count) throw ValidationError("feature length mismatch in training set");
        for (double v : s.features) require_finite(v, "training feature");
    }
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    detail::grow(tree, data, std::move(idx), 0);
    return tree;
}

inline ClassId predict_dtree(const TreeModel& model, std::span<const double> x) { return model.predict(x); }

}  // namespace lpwanloc::classify
