// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lpwanloc/classify/kernel.hpp"
#include "lpwanloc/core/fingerprint.hpp"
#include "lpwanloc/error.hpp"

namespace lpwanloc::classify {

struct SvmOptions {
    /// Stop when the maximal KKT violation m(a) - M(a) falls below this.
    double kkt_tolerance = 1e-3;
    std::size_t max_iterations = 100000;
};

/// Solution of the two-class soft-margin dual
///   max  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij   s.t.  0 <= a_i <= C,  sum(y_i a_i) = 0.
struct DualSolution {
    std::vector<double> alpha;
    double bias = 0.0;       ///< decision(x) = sum_i alpha_i y_i K(x_i, x) + bias
    double objective = 0.0;  ///< dual objective value (maximization form)
    std::size_t iterations = 0;
    bool converged = false;
};

inline double dual_objective(const Eigen::MatrixXd& gram, std::span<const int> y, std::span<const double> alpha) {
    const auto n = static_cast<Eigen::Index>(alpha.size());
    double lin = 0.0, quad = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        lin += alpha[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < n; ++j)
            quad += alpha[static_cast<std::size_t>(i)] * alpha[static_cast<std::size_t>(j)] * y[static_cast<std::size_t>(i)] *
                    y[static_cast<std::size_t>(j)] * gram(i, j);
    }
    return lin - 0.5 * quad;
}

/// Sequential minimal optimization with maximal-violating-pair / second order
/// working set selection. Labels must be +1 or -1.
inline DualSolution solve_dual_smo(const Eigen::MatrixXd& gram, std::span<const int> y, double box_c,
                                   const SvmOptions& opts = {}) {
    const std::size_t n = y.size();
    if (static_cast<std::size_t>(gram.rows()) != n || static_cast<std::size_t>(gram.cols()) != n)
        throw ValidationError("gram matrix size does not match label count");
    if (!(box_c > 0.0)) throw ValidationError("box constraint must be > 0");
    for (int v : y)
        if (v != 1 && v != -1) throw ValidationError("labels must be +1/-1");

    constexpr double tau = 1e-12;
    DualSolution sol;
    sol.alpha.assign(n, 0.0);
    auto& a = sol.alpha;
    // s_t = -y_t * grad_t of the minimization form; starts at y_t for a = 0.
    std::vector<double> s(n);
    for (std::size_t t = 0; t < n; ++t) s[t] = y[t];

    auto in_up = [&](std::size_t t) { return (y[t] == 1 && a[t] < box_c) || (y[t] == -1 && a[t] > 0.0); };
    auto in_low = [&](std::size_t t) { return (y[t] == 1 && a[t] > 0.0) || (y[t] == -1 && a[t] < box_c); };

    for (; sol.iterations < opts.max_iterations; ++sol.iterations) {
        std::size_t i = n;
        double m_up = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t)
            if (in_up(t) && s[t] > m_up) {
                m_up = s[t];
                i = t;
            }
        std::size_t j = n;
        double m_low = std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t) {
            if (!in_low(t)) continue;
            m_low = std::min(m_low, s[t]);
            if (i == n) continue;
            const double b = m_up - s[t];
            if (b <= 0.0) continue;
            double curv = gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) +
                          gram(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t)) -
                          2.0 * gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
            if (curv <= 0.0) curv = tau;
            const double gain = -b * b / curv;
            if (gain < best) {
                best = gain;
                j = t;
            }
        }
        if (i == n || j == n || m_up - m_low < opts.kkt_tolerance) {
            sol.converged = true;
            break;
        }

        const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
        double curv = gram(ii, ii) + gram(jj, jj) - 2.0 * gram(ii, jj);
        if (curv <= 0.0) curv = tau;
        double step = (s[i] - s[j]) / curv;
        step = std::min(step, y[i] == 1 ? box_c - a[i] : a[i]);
        step = std::min(step, y[j] == 1 ? a[j] : box_c - a[j]);

        a[i] += y[i] * step;
        a[j] -= y[j] * step;
        // Snap to the box to keep the index sets exact.
        for (std::size_t t : {i, j}) {
            if (a[t] < 1e-14 * box_c) a[t] = 0.0;
            if (a[t] > box_c * (1.0 - 1e-14)) a[t] = box_c;
        }
        for (std::size_t t = 0; t < n; ++t)
            s[t] -= step * (gram(static_cast<Eigen::Index>(t), ii) - gram(static_cast<Eigen::Index>(t), jj));
    }

    double free_sum = 0.0;
    std::size_t free_count = 0;
    double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
        if (a[t] > 0.0 && a[t] < box_c) {
            free_sum += s[t];
            ++free_count;
        } else {
            if (in_up(t)) lb = std::max(lb, s[t]);
            if (in_low(t)) ub = std::min(ub, s[t]);
        }
    }
    if (free_count > 0)
        sol.bias = free_sum / static_cast<double>(free_count);
    else if (std::isfinite(ub) && std::isfinite(lb))
        sol.bias = 0.5 * (ub + lb);
    else
        sol.bias = std::isfinite(ub) ? ub : (std::isfinite(lb) ? lb : 0.0);

    sol.objective = dual_objective(gram, y, a);
    return sol;
}

inline Eigen::MatrixXd gram_matrix(const std::vector<FeatureVector>& xs, const KernelParams& kernel) {
    const auto n = static_cast<Eigen::Index>(xs.size());
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        g(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j)
            g(i, j) = g(j, i) = gaussian_kernel(xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)], kernel);
    }
    return g;
}

/// One pairwise (positive vs negative) decision function.
struct BinarySvm {
    ClassId positive;
    ClassId negative;
    std::vector<FeatureVector> support_vectors;
    std::vector<double> coefficients;  ///< alpha_i * y_i
    double bias = 0.0;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;

    double decision(std::span<const double> x, const KernelParams& kernel) const {
        double f = bias;
        for (std::size_t i = 0; i < support_vectors.size(); ++i)
            f += coefficients[i] * gaussian_kernel(support_vectors[i], x, kernel);
        return f;
    }
};

/// Gaussian-kernel SVM, one-vs-one over sorted class ids.
struct SvmModel {
    KernelParams kernel;
    double box_c = 10.0;
    std::vector<ClassId> class_ids;
    std::vector<BinarySvm> pairs;
    std::size_t feature_count = 0;

    /// Majority vote over pairwise decisions. Ties go to the class with the
    /// largest summed |decision| over the pairs it won, then to the smallest
    /// class id.
    ClassId predict(std::span<const double> x) const {
        if (x.size() != feature_count) throw ValidationError("feature length mismatch");
        std::map<ClassId, std::pair<int, double>> tally;
        for (const auto& c : class_ids) tally[c] = {0, 0.0};
        for (const auto& p : pairs) {
            const double f = p.decision(x, kernel);
            auto& winner = tally[f >= 0.0 ? p.positive : p.negative];
            winner.first += 1;
            winner.second += std::abs(f);
        }
        const ClassId* best = nullptr;
        std::pair<int, double> best_score{-1, 0.0};
        for (const auto& [c, score] : tally) {
            // std::map iterates ids in ascending order, so strict comparison keeps the smallest id on full ties.
            if (score.first > best_score.first ||
                (score.first == best_score.first && score.second > best_score.second)) {
                best = &c;
                best_score = score;
            }
        }
        return *best;
    }
};

inline SvmModel train_svm(const TrainingSet& data, const KernelParams& kernel, double box_c,
                          const SvmOptions& opts = {}) {
    kernel.validate();
    if (!(box_c > 0.0)) throw ValidationError("box constraint must be > 0");
    std::map<ClassId, std::vector<std::size_t>> by_class;
    std::size_t width = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (i == 0) width = data[i].features.size();
        if (data[i].features.size() != width) throw ValidationError("feature length mismatch in training set");
        for (double v : data[i].features) require_finite(v, "training feature");
        by_class[data[i].label].push_back(i);
    }
    if (by_class.size() < 2) throw ValidationError("svm needs at least two classes");

    SvmModel model;
    model.kernel = kernel;
    model.box_c = box_c;
    model.feature_count = width;
    for (const auto& [c, idx] : by_class) model.class_ids.push_back(c);

    for (auto a = by_class.begin(); a != by_class.end(); ++a)
        for (auto b = std::next(a); b != by_class.end(); ++b) {
            std::vector<FeatureVector> xs;
            std::vector<int> y;
            for (auto i : a->second) {
                xs.push_back(data[i].features);
                y.push_back(1);
            }
            for (auto i : b->second) {
                xs.push_back(data[i].features);
                y.push_back(-1);
            }
            const auto sol = solve_dual_smo(gram_matrix(xs, kernel), y, box_c, opts);
            BinarySvm bin{a->first, b->first, {}, {}, sol.bias, sol.objective, sol.iterations, sol.converged};
            for (std::size_t i = 0; i < xs.size(); ++i)
                if (sol.alpha[i] > 0.0) {
                    bin.support_vectors.push_back(xs[i]);
                    bin.coefficients.push_back(sol.alpha[i] * y[i]);
                }
            model.pairs.push_back(std::move(bin));
        }
    return model;
}

/// Builds a dense training set from the database: each class's first
/// `max_rows` rows are imputed and then averaged `k` at a time.
inline TrainingSet training_set(const FingerprintDatabase& db, std::size_t k, const ImputationPolicy& policy,
                                std::size_t max_rows = std::numeric_limits<std::size_t>::max()) {
    TrainingSet out;
    for (std::size_t l = 0; l < db.class_count(); ++l) {
        auto rows = db.class_rows(l);
        if (rows.size() > max_rows) rows.resize(max_rows);
        std::vector<MaskedFeatures> imputed;
        for (const auto& r : rows) {
            auto dense = impute(r, policy);
            imputed.emplace_back(dense.begin(), dense.end());
        }
        for (const auto& avg : average_k_by_k(imputed, k)) out.push_back({impute(avg, policy), db.class_ids()[l]});
    }
    return out;
}

/// Trains on every row of the database (optionally k-by-k averaged).
inline SvmModel train_svm(const FingerprintDatabase& db, const KernelParams& kernel, double box_c,
                          const ImputationPolicy& policy, std::size_t k = 1, const SvmOptions& opts = {}) {
    for (std::size_t l = 0; l < db.class_count(); ++l)
        if (db.class_rows(l).size() < k) throw ValidationError("empty class '" + db.class_ids()[l] + "'");
    return train_svm(training_set(db, k, policy), kernel, box_c, opts);
}

inline ClassId predict_svm(const SvmModel& model, const MaskedFeatures& feature, const ImputationPolicy& policy) {
    return model.predict(impute(feature, policy));
}

}  // namespace lpwanloc::classify
