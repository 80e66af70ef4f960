#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "levy_fbsde/teugels.hpp"

using namespace levy_fbsde;

namespace {

const double kRt2 = std::sqrt(2.0);

LevyModel two_point() { return LevyModel(1.0, LevyMeasure::atomic({{1.0, 1.0}})); }

void expect_coeffs(const Polynomial& p, std::vector<double> expected, double tol = 1e-14) {
    ASSERT_EQ(p.degree(), static_cast<int>(expected.size()) - 1);
    for (std::size_t k = 0; k < expected.size(); ++k) EXPECT_NEAR(p.coeff(static_cast<int>(k)), expected[k], tol) << "k=" << k;
}

}  // namespace

TEST(BuildBasis, BrownianOrderOne) {
    const LevyModel m(1.0, LevyMeasure::zero());
    const TeugelsBasis b = build_basis(m, 1);
    expect_coeffs(b.q[0], {1.0});
    EXPECT_EQ(b.q_at_zero[0], 1.0);
    expect_coeffs(b.p[0], {0.0, 1.0});
    EXPECT_EQ(b.p_norm_sq[0], 0.0);
}

TEST(BuildBasis, SingleAtomOrderOne) {
    const TeugelsBasis b = build_basis(LevyModel(0.0, LevyMeasure::atomic({{1.0, 1.0}})), 1);
    expect_coeffs(b.q[0], {1.0});
    expect_coeffs(b.p[0], {0.0, 1.0});
    EXPECT_DOUBLE_EQ(b.p_norm_sq[0], 1.0);
}

TEST(BuildBasis, TwoPointOrderTwo) {
    const TeugelsBasis b = build_basis(two_point(), 2);
    expect_coeffs(b.q[0], {1.0 / kRt2});
    expect_coeffs(b.q[1], {-kRt2 / 2.0, kRt2});
    EXPECT_NEAR(b.q_at_zero[0], 1.0 / kRt2, 1e-15);
    EXPECT_NEAR(b.q_at_zero[1], -1.0 / kRt2, 1e-15);
    expect_coeffs(b.p[0], {0.0, 1.0 / kRt2});
    expect_coeffs(b.p[1], {0.0, -kRt2 / 2.0, kRt2});
    // int p_1 p_2 dnu = 1/2 = 0 - a^2 q_0(0) q_1(0)
    EXPECT_NEAR(b.p[0](1.0) * b.p[1](1.0), 0.5, 1e-15);
    EXPECT_NEAR(b.tail_indicator(), 1.0, 1e-15);
}

TEST(BuildBasis, BrownianOrderTwoIsDegenerate) {
    const LevyModel m(1.0, LevyMeasure::zero());
    try {
        build_basis(m, 2);
        FAIL() << "expected DegenerateMeasure";
    } catch (const DegenerateMeasure& e) {
        EXPECT_EQ(e.max_feasible_order(), 1);
    }
}

TEST(BuildBasis, RankOfAtomicMeasure) {
    // a = 0 and three atoms: mu has three support points.
    const LevyModel m(0.0, LevyMeasure::atomic({{-1.0, 1.0}, {0.5, 2.0}, {1.5, 0.5}}));
    EXPECT_NO_THROW(build_basis(m, 3));
    try {
        build_basis(m, 4);
        FAIL();
    } catch (const DegenerateMeasure& e) {
        EXPECT_EQ(e.max_feasible_order(), 3);
    }
}

TEST(BuildBasis, OrderRange) {
    EXPECT_THROW(build_basis(two_point(), 0), ConfigError);
    EXPECT_THROW(build_basis(two_point(), 11), ConfigError);
}

TEST(BuildBasis, LeadingCoefficientsPositive) {
    const LevyModel m(0.5, LevyMeasure::truncated_gaussian(2.0, 0.1, 0.6, {-2.0, 2.0}, 0.05));
    const TeugelsBasis b = build_basis(m, 5);
    for (const Polynomial& q : b.q) EXPECT_GT(q.leading(), 0.0);
    for (int i = 0; i < 5; ++i) {
        const Polynomial expect = b.q[static_cast<std::size_t>(i)].times_x();
        EXPECT_EQ(b.p[static_cast<std::size_t>(i)], expect);
    }
}

TEST(BuildBasis, Deterministic) {
    const LevyModel m(0.3, LevyMeasure::truncated_gaussian(1.0, 0.0, 0.5, {-1.5, 1.5}, 0.05));
    const TeugelsBasis b1 = build_basis(m, 4), b2 = build_basis(m, 4);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(b1.q[static_cast<std::size_t>(i)], b2.q[static_cast<std::size_t>(i)]);
}

TEST(BuildBasis, ScaleCovariance) {
    const double c = 3.7;
    const LevyModel m1(0.6, LevyMeasure::atomic({{-0.7, 1.0}, {1.2, 0.4}, {0.3, 2.0}}));
    const LevyModel m2(0.6 * std::sqrt(c), LevyMeasure::atomic({{-0.7, c}, {1.2, 0.4 * c}, {0.3, 2.0 * c}}));
    const Polynomial x2 = Polynomial::monomial(2, 1.0) + Polynomial::monomial(0, -0.4);
    EXPECT_NEAR(mu_inner(m2, x2, x2), c * mu_inner(m1, x2, x2), 1e-12);
    const TeugelsBasis b1 = build_basis(m1, 3), b2 = build_basis(m2, 3);
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k <= i; ++k)
            EXPECT_NEAR(b2.q[static_cast<std::size_t>(i)].coeff(k), b1.q[static_cast<std::size_t>(i)].coeff(k) / std::sqrt(c), 1e-10);
}

TEST(CheckOrthogonality, BuiltBasesPass) {
    const std::vector<std::pair<LevyModel, int>> cases{
        {LevyModel(1.0, LevyMeasure::zero()), 1},
        {LevyModel(0.0, LevyMeasure::atomic({{0.8, 2.0}})), 1},
        {LevyModel(1.0, LevyMeasure::atomic({{1.0, 1.0}})), 2},
        {LevyModel(0.2, LevyMeasure::atomic({{-0.5, 1.0}, {0.9, 0.5}, {1.6, 0.25}})), 4},
        {LevyModel(0.4, LevyMeasure::truncated_gaussian(2.0, 0.0, 0.5, {-1.5, 1.5}, 0.05)), 5},
    };
    for (const auto& [model, order] : cases) {
        const OrthogonalityReport r = check_orthogonality(build_basis(model, order), model);
        EXPECT_LT(r.max_residual(), 1e-9);
    }
}

TEST(CheckOrthogonality, SingleAtomExact) {
    const LevyModel m(0.0, LevyMeasure::atomic({{1.3, 0.7}}));
    EXPECT_LT(check_orthogonality(build_basis(m, 1), m).max_residual(), 1e-15);
}

TEST(CheckOrthogonality, PerturbedBasis) {
    // Perturb both coefficients of q_1 of the two-point basis by 1e-3 and
    // compare with the Gram residual computed directly on mu = delta_0 + delta_1.
    const LevyModel m = two_point();
    TeugelsBasis b = build_basis(m, 2);
    b.q[1] += Polynomial::monomial(0, 1e-3) + Polynomial::monomial(1, 1e-3);
    b.p[1] = b.q[1].times_x();
    b.q_at_zero[1] = b.q[1](0.0);

    auto mu2 = [](auto f, auto g) { return f(0.0) * g(0.0) + f(1.0) * g(1.0); };
    auto q0 = [](double) { return 1.0 / std::sqrt(2.0); };
    auto q1 = [](double x) { return (-std::sqrt(2.0) / 2.0 + 1e-3) + (std::sqrt(2.0) + 1e-3) * x; };
    const double off = std::abs(mu2(q0, q1));
    const double diag = std::abs(mu2(q1, q1) - 1.0);
    const double expected = std::max(off, diag);

    const OrthogonalityReport r = check_orthogonality(b, m);
    EXPECT_NEAR(r.max_gram, expected, 1e-14);
    EXPECT_NEAR(r.max_gram, 3e-3 / std::sqrt(2.0), 1e-14);
    EXPECT_GE(r.max_residual(), 1e-4);
}
