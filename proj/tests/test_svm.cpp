// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>

#include "lpwanloc/classify/svm.hpp"

using namespace lpwanloc;
using namespace lpwanloc::classify;
using Catch::Matchers::WithinAbs;

namespace {

// Projected accelerated gradient ascent on the dual. The projection onto
// {0 <= a <= C, y.a = 0} solves for the multiplier of the equality by bisection.
std::vector<double> project(const Eigen::VectorXd& v, const std::vector<int>& y, double c) {
    auto clipped = [&](double lambda) {
        std::vector<double> a(y.size());
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            a[i] = std::clamp(v(static_cast<Eigen::Index>(i)) - lambda * y[i], 0.0, c);
            s += a[i] * y[i];
        }
        return std::pair{a, s};
    };
    double lo = -1e6, hi = 1e6;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (clipped(mid).second > 0 ? lo : hi) = mid;
    }
    return clipped(0.5 * (lo + hi)).first;
}

double projected_gradient_dual(const Eigen::MatrixXd& gram, const std::vector<int>& y, double c) {
    const auto n = static_cast<Eigen::Index>(y.size());
    Eigen::MatrixXd q(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) q(i, j) = y[i] * y[j] * gram(i, j);
    const double lip = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q).eigenvalues().maxCoeff();
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n), z = a;
    double t = 1.0;
    for (int it = 0; it < 50000; ++it) {
        const Eigen::VectorXd grad = Eigen::VectorXd::Ones(n) - q * z;
        const auto p = project(z + grad / lip, y, c);
        const Eigen::VectorXd next = Eigen::Map<const Eigen::VectorXd>(p.data(), n);
        const double tn = 0.5 * (1 + std::sqrt(1 + 4 * t * t));
        z = next + ((t - 1) / tn) * (next - a);
        a = next;
        t = tn;
    }
    std::vector<double> alpha(a.data(), a.data() + n);
    return dual_objective(gram, y, alpha);
}

TrainingSet scalar_set(std::initializer_list<double> a, std::initializer_list<double> b) {
    TrainingSet s;
    for (double v : a) s.push_back({{v}, "A"});
    for (double v : b) s.push_back({{v}, "B"});
    return s;
}

}  // namespace

TEST_CASE("gaussian kernel") {
    const KernelParams k{2.0};
    const FeatureVector u{-90.0, -100.0}, v{-92.0, -100.0};
    CHECK(gaussian_kernel(u, u, k) == 1.0);
    CHECK_THAT(gaussian_kernel(u, v, k), WithinAbs(std::exp(-1.0), 1e-15));  // |u-v|^2 = 2 sigma^2
    CHECK(gaussian_kernel(u, v, k) == gaussian_kernel(v, u, k));
    double prev = 0.0;
    for (double s2 : {0.5, 1.0, 10.0, 100.0, 1e4}) {
        const double val = gaussian_kernel(u, v, {s2});
        CHECK(val > prev);
        CHECK(val <= 1.0);
        prev = val;
    }
    CHECK_THROWS_AS(gaussian_kernel(u, FeatureVector{1.0}, k), ValidationError);
}

TEST_CASE("gram matrices are positive semidefinite") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd(-100.0, 8.0);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<FeatureVector> xs(2 + trial % 10, FeatureVector(3));
        for (auto& x : xs)
            for (auto& v : x) v = nd(gen);
        const auto g = gram_matrix(xs, {1.0 + trial});
        CHECK((g - g.transpose()).norm() == 0.0);
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g).eigenvalues().minCoeff() >= -1e-8);
        CHECK((g.array() > 0.0).all());
        CHECK((g.array() <= 1.0).all());
    }
}

TEST_CASE("scalar classes 22 dB apart") {
    TrainingSet data{{{-98.0}, "-98"}, {{-76.0}, "-76"}};
    const auto model = train_svm(data, {4.0}, 10.0);
    CHECK(model.predict(std::vector{-98.0}) == "-98");
    CHECK(model.predict(std::vector{-76.0}) == "-76");
    // boundary lies between the two groups
    const auto& pair = model.pairs.at(0);
    CHECK(pair.decision(std::vector{-98.0}, model.kernel) * pair.decision(std::vector{-76.0}, model.kernel) < 0);
    // the midpoint is equidistant: decision is zero and the tie goes to the positive class "-76"
    CHECK_THAT(pair.decision(std::vector{-87.0}, model.kernel), WithinAbs(0.0, 1e-12));
    CHECK(model.predict(std::vector{-87.0}) == "-76");
    CHECK(model.predict(std::vector{-86.0}) == "-76");
    CHECK(model.predict(std::vector{-88.0}) == "-98");
}

TEST_CASE("separable 2-D toy set has zero training error") {
    TrainingSet data{{{-90, -100}, "A"}, {{-92, -103}, "A"}, {{-110, -80}, "B"}, {{-108, -84}, "B"}};
    const auto model = train_svm(data, {16.0}, 10.0);
    for (const auto& s : data) CHECK(model.predict(s.features) == s.label);
    CHECK(model.predict(std::vector{-91.0, -101.0}) == "A");
}

TEST_CASE("20-point 1-D set with overlap matches a projected gradient oracle") {
    std::vector<double> a, b;
    for (int i = 0; i < 10; ++i) a.push_back(-100.0 + i);
    for (int i = 0; i < 10; ++i) b.push_back(-90.0 + i);
    std::swap(a[9], b[0]);  // -91 joins B, -90 joins A
    std::swap(a[8], b[1]);
    TrainingSet data;
    for (double v : a) data.push_back({{v}, "A"});
    for (double v : b) data.push_back({{v}, "B"});
    const KernelParams kernel{4.0};
    const auto model = train_svm(data, kernel, 10.0);
    std::size_t correct = 0;
    for (const auto& s : data) correct += model.predict(s.features) == s.label;
    CHECK(correct >= 18);

    std::vector<FeatureVector> xs;
    std::vector<int> y;
    for (const auto& s : data) {
        xs.push_back(s.features);
        y.push_back(s.label == "A" ? 1 : -1);
    }
    const auto g = gram_matrix(xs, kernel);
    const auto sol = solve_dual_smo(g, y, 10.0);
    CHECK(sol.converged);
    const double oracle = projected_gradient_dual(g, y, 10.0);
    CHECK_THAT(sol.objective, WithinAbs(oracle, 1e-3));
    CHECK(sol.objective >= oracle - 1e-3);
    double eq = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        CHECK(sol.alpha[i] >= 0.0);
        CHECK(sol.alpha[i] <= 10.0);
        eq += sol.alpha[i] * y[i];
    }
    CHECK_THAT(eq, WithinAbs(0.0, 1e-9));
}

TEST_CASE("svm input errors") {
    CHECK_THROWS_AS(train_svm(scalar_set({-90}, {}), {4.0}, 10.0), ValidationError);
    CHECK_THROWS_AS(train_svm(scalar_set({-90}, {-80}), {0.0}, 10.0), ValidationError);
    CHECK_THROWS_AS(train_svm(scalar_set({-90}, {-80}), {4.0}, 0.0), ValidationError);
    const auto model = train_svm(scalar_set({-90}, {-80}), {4.0}, 10.0);
    CHECK_THROWS_AS(model.predict(std::vector{1.0, 2.0}), ValidationError);

    FingerprintDatabase db({"R"}, {"A", "B"}, 1);
    db.set(0, 0, 0, -90.0);
    db.set_row_time_index(0, 0, 1);
    CHECK_THROWS_WITH(train_svm(db, {4.0}, 10.0, {}), Catch::Matchers::StartsWith("empty class"));
}

TEST_CASE("offset, permutation and masked-input invariances") {
    std::mt19937_64 gen(21);
    std::normal_distribution<double> noise(0.0, 3.0);
    TrainingSet data;
    const double centers[3][2] = {{-95, -110}, {-100, -100}, {-108, -96}};
    const char* labels[3] = {"c0", "c1", "c2"};
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 12; ++i) data.push_back({{centers[c][0] + noise(gen), centers[c][1] + noise(gen)}, labels[c]});
    std::vector<FeatureVector> probes;
    for (int i = 0; i < 200; ++i) probes.push_back({-100 + 3 * noise(gen), -102 + 3 * noise(gen)});

    const KernelParams kernel{8.0};
    const auto base = train_svm(data, kernel, 10.0);

    auto shifted = data;
    for (auto& s : shifted)
        for (auto& v : s.features) v += 37.0;
    const auto off = train_svm(shifted, kernel, 10.0);

    auto shuffled = data;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    const auto perm = train_svm(shuffled, kernel, 10.0);

    std::size_t offset_diff = 0, perm_diff = 0;
    for (const auto& p : probes) {
        const auto label = base.predict(p);
        FeatureVector q = p;
        for (auto& v : q) v += 37.0;
        offset_diff += off.predict(q) != label;
        perm_diff += perm.predict(p) != label;
    }
    CHECK(offset_diff == 0);
    CHECK(perm_diff == 0);

    const ImputationPolicy policy;
    const MaskedFeatures silent(2);
    const auto first = predict_svm(base, silent, policy);
    CHECK(predict_svm(base, silent, policy) == first);
    CHECK(first == base.predict(std::vector{-140.0, -140.0}));
}

TEST_CASE("memorizes an isolated class") {
    TrainingSet data{{{-60, -60}, "x"}, {{-120, -120}, "y"}, {{-121, -119}, "y"}, {{-90, -130}, "z"}};
    const auto model = train_svm(data, {4.0}, 10.0);
    CHECK(model.predict(std::vector{-60.0, -60.0}) == "x");
    CHECK(model.predict(std::vector{-90.0, -130.0}) == "z");
}
