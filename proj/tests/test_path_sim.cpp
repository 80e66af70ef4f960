#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "levy_fbsde/path_sim.hpp"

using namespace levy_fbsde;

namespace {

std::vector<SamplePath> simulate(const LevyModel& m, const TeugelsBasis& b, const TimeGrid& g, int n, std::uint64_t seed) {
    std::vector<SamplePath> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) out.push_back(sample_path(m, b, g, {seed, static_cast<std::uint64_t>(k)}));
    return out;
}

}  // namespace

TEST(TimeGrid, UniformAndStepLookup) {
    const TimeGrid g(2.0, 8);
    EXPECT_DOUBLE_EQ(g.dt(), 0.25);
    EXPECT_EQ(g.times().front(), 0.0);
    EXPECT_EQ(g.times().back(), 2.0);
    EXPECT_EQ(g.step_of(0.25), 0);
    EXPECT_EQ(g.step_of(0.2501), 1);
    EXPECT_EQ(g.step_of(2.0), 7);
    EXPECT_THROW(TimeGrid(0.0, 4), ConfigError);
    EXPECT_THROW(TimeGrid(1.0, 0), ConfigError);
}

TEST(SamplePath, PureBrownian) {
    const LevyModel m(1.0, LevyMeasure::zero());
    const TeugelsBasis b = build_basis(m, 1);
    const SamplePath p = sample_path(m, b, TimeGrid(1.0, 50), {5, 2});
    EXPECT_EQ(p.jump_count(), 0);
    for (int s = 0; s < 50; ++s) EXPECT_EQ(p.dH(s, 0), p.dB[static_cast<std::size_t>(s)]);
}

TEST(SamplePath, CompensatedPoisson) {
    const double lambda = 3.0;
    const LevyModel m(0.0, LevyMeasure::atomic({{1.0, lambda}}));
    const TeugelsBasis b = build_basis(m, 1);
    const TimeGrid g(1.0, 40);
    const SamplePath p = sample_path(m, b, g, {9, 1});
    const double p1 = b.p[0](1.0);
    for (int s = 0; s < 40; ++s) {
        EXPECT_EQ(p.dB[static_cast<std::size_t>(s)], 0.0);
        const double n = static_cast<double>(p.jumps[static_cast<std::size_t>(s)].size());
        EXPECT_NEAR(p.dH(s, 0), n * p1 - g.dt() * lambda * p1, 1e-15);
    }
}

TEST(SamplePath, Deterministic) {
    const LevyModel m(0.5, LevyMeasure::atomic({{-0.5, 1.0}, {1.0, 2.0}}));
    const TeugelsBasis b = build_basis(m, 2);
    const TimeGrid g(1.0, 100);
    const SamplePath p1 = sample_path(m, b, g, {42, 7}), p2 = sample_path(m, b, g, {42, 7});
    EXPECT_EQ(p1.dB, p2.dB);
    EXPECT_EQ(p1.jumps, p2.jumps);
    EXPECT_TRUE(p1.dH == p2.dH);
    const SamplePath p3 = sample_path(m, b, g, {42, 8});
    EXPECT_NE(p1.dB, p3.dB);
}

TEST(SamplePath, JumpSetIndependentOfGrid) {
    const LevyModel m(0.5, LevyMeasure::atomic({{-0.5, 1.0}, {1.0, 2.0}}));
    const TeugelsBasis b = build_basis(m, 2);
    const SamplePath coarse = sample_path(m, b, TimeGrid(1.0, 10), {1, 3});
    const SamplePath fine = sample_path(m, b, TimeGrid(1.0, 80), {1, 3});
    std::vector<double> a, c;
    for (const auto& v : coarse.jump_times) a.insert(a.end(), v.begin(), v.end());
    for (const auto& v : fine.jump_times) c.insert(c.end(), v.begin(), v.end());
    EXPECT_EQ(a, c);
}

TEST(MartingaleStats, BrownianVariance) {
    const LevyModel m(1.0, LevyMeasure::zero());
    const TeugelsBasis b = build_basis(m, 1);
    const auto paths = simulate(m, b, TimeGrid(1.0, 20), 4000, 17);
    const MartingaleReport r = martingale_stats(paths, 0.0);
    EXPECT_TRUE(r.passed()) << (r.flags.empty() ? "counts" : r.flags.front());
    EXPECT_LT(std::abs(r.cov(0, 0) - 1.0), 4 * r.cov_se(0, 0));
}

TEST(MartingaleStats, TwoPointCrossCovarianceVanishes) {
    // For this basis E[H1_T H2_T] = T (q0(0)q1(0) a^2 + int p1 p2 dnu) = T(-1/2 + 1/2) = 0.
    const LevyModel m(1.0, LevyMeasure::atomic({{1.0, 1.0}}));
    const TeugelsBasis b = build_basis(m, 2);
    EXPECT_NEAR(b.q_at_zero[0] * b.q_at_zero[1] + b.p[0](1.0) * b.p[1](1.0), 0.0, 1e-15);
    const auto paths = simulate(m, b, TimeGrid(1.0, 20), 5000, 21);
    const MartingaleReport r = martingale_stats(paths, 1.0);
    EXPECT_LT(std::abs(r.cov_z(0, 1)), 4.0);
    EXPECT_TRUE(r.passed());
}

TEST(MartingaleStats, NeedsHundredPaths) {
    const LevyModel m(1.0, LevyMeasure::zero());
    const TeugelsBasis b = build_basis(m, 1);
    const auto paths = simulate(m, b, TimeGrid(1.0, 4), 50, 1);
    EXPECT_THROW(martingale_stats(paths, 0.0), ConfigError);
}

TEST(PoissonCountTest, AcceptsPoissonRejectsShifted) {
    auto eng = make_engine({99, 0}, 0);
    std::poisson_distribution<int> pois(2.5);
    std::vector<int> counts(5000);
    for (int& c : counts) c = pois(eng);
    EXPECT_TRUE(poisson_count_test(counts, 2.5).passed);
    EXPECT_FALSE(poisson_count_test(counts, 3.0).passed);
}

TEST(ChaosIdentity, TwoStepHandCheck) {
    // a = 0, nu = 2 delta_{0.5}, M = 1, fn(s, y) = p_1(y). One hand-built path
    // with a jump in each step; the identity is exact for time-independent fn.
    const LevyModel m(0.0, LevyMeasure::atomic({{0.5, 2.0}}));
    const TeugelsBasis b = build_basis(m, 1);
    SamplePath p;
    p.grid = TimeGrid(1.0, 2);
    p.dB = {0.0, 0.0};
    p.jumps = {{0.5}, {0.5, 0.5}};
    p.jump_times = {{0.2}, {0.6, 0.9}};
    const double p1 = b.p[0](0.5);
    const double comp = 2.0 * p1;
    p.dH = Eigen::MatrixXd(2, 1);
    p.dH << p1 - 0.5 * comp, 2 * p1 - 0.5 * comp;
    // coefficient int p1 p1 dnu = 1 (a = 0), compensator int p1 dnu * T = comp.
    // RHS = 1 * (3 p1 - comp) + comp = 3 p1 = LHS.
    const std::vector<SamplePath> paths{p};
    const auto r = chaos_identity_check(m, b, paths, {[&](double, double y) { return b.p[0](y); }, 1});
    EXPECT_NEAR(r.max_abs, 0.0, 1e-14);
    EXPECT_FALSE(r.truncation_warning);
}

TEST(ChaosIdentity, ZeroIntegrand) {
    const LevyModel m(0.0, LevyMeasure::atomic({{1.0, 1.0}}));
    const TeugelsBasis b = build_basis(m, 1);
    const auto paths = simulate(m, b, TimeGrid(1.0, 10), 20, 2);
    const auto r = chaos_identity_check(m, b, paths, {[](double, double) { return 0.0; }, 0});
    EXPECT_EQ(r.max_abs, 0.0);
}

TEST(ChaosIdentity, CubicOutsideSpanWarns) {
    // With a = 1 the Brownian component makes y^3 unrepresentable by p_1 alone.
    const LevyModel m(1.0, LevyMeasure::atomic({{1.0, 1.0}}));
    const TeugelsBasis b = build_basis(m, 1);
    const auto paths = simulate(m, b, TimeGrid(1.0, 50), 50, 3);
    const auto r = chaos_identity_check(m, b, paths, {[](double, double y) { return y * y * y; }, 3});
    EXPECT_TRUE(r.truncation_warning);
    EXPECT_GT(r.max_abs, 0.1);
}

TEST(ChaosIdentity, TimeDependentResidualShrinks) {
    const LevyModel m(0.0, LevyMeasure::atomic({{-0.5, 1.0}, {1.0, 1.5}}));
    const TeugelsBasis b = build_basis(m, 2);
    const ChaosIntegrand fn{[&](double s, double y) { return std::cos(3.0 * s) * b.p[0](y) + s * b.p[1](y); }, 2};
    double prev = 0.0;
    for (int n : {100, 200, 400}) {
        const auto paths = simulate(m, b, TimeGrid(1.0, n), 100, 8);
        const double rms = chaos_identity_check(m, b, paths, fn).rms;
        if (prev > 0.0) {
            EXPECT_GT(prev / rms, 1.5);
        }
        prev = rms;
    }
}
