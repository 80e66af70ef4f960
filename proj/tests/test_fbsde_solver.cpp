#include <cmath>

#include <gtest/gtest.h>

#include "levy_fbsde/fbsde_solver.hpp"
#include "levy_fbsde/verify/acceptance.hpp"

using namespace levy_fbsde;

namespace {

FbsdeProblem frozen_problem(double c) {
    FbsdeProblem pb;
    pb.name = "frozen";
    pb.drift = [](double, const StateVec&, const ValueVec&, const ZMatrix&) { return StateVec::Zero(1); };
    pb.volatility = [](double, const StateVec&, const ValueVec&) { return VolMatrix::Zero(1, 1); };
    pb.driver = [](double, const StateVec&, const ValueVec&, const ZMatrix&) { return ValueVec::Zero(1); };
    pb.terminal = [c](const StateVec&) { return ValueVec::Constant(1, c); };
    return pb;
}

struct HeatFixture {
    verify::HeatCase hc;
    FbsdeProblem pb = hc.problem();
    PideSolution sol;
    HeatFixture(int n_points = 201, int n_time = 100) {
        SolverConfig cfg;
        cfg.n_time = n_time;
        sol = solve_pide(pb, hc.model, hc.basis, hc.grid(n_points), cfg);
    }
};

}  // namespace

TEST(SimulateForward, FrozenPath) {
    const LevyModel m(1.0, LevyMeasure::zero());
    const TeugelsBasis b = build_basis(m, 1);
    const FbsdeProblem pb = frozen_problem(1.5);
    const PideSolution sol = solve_pide(pb, m, b, SpatialGrid({Axis{-2.0, 2.0, 41}}), SolverConfig{});
    const CoefficientSet cs(pb, b, m);
    const FbsdePath p = simulate_forward(sol, cs, m, b, StateVec::Constant(1, 0.3), TimeGrid(1.0, 50), {1, 0});
    EXPECT_FALSE(p.escaped);
    EXPECT_EQ(p.X.rows(), 51);
    EXPECT_TRUE((p.X.array() == 0.3).all());
    EXPECT_TRUE((p.Y.array() == 1.5).all());
    EXPECT_LT(std::abs(bsde_residual(p, pb)(0)), 1e-6);
}

TEST(SimulateForward, BrownianIncrements) {
    HeatFixture f;
    const CoefficientSet cs(f.pb, f.hc.basis, f.hc.model);
    const FbsdePath p = simulate_forward(f.sol, cs, f.hc.model, f.hc.basis, StateVec::Zero(1), TimeGrid(1.0, 100), {3, 4});
    for (int s = 0; s < 100; ++s) EXPECT_NEAR(p.X(s + 1, 0) - p.X(s, 0), f.hc.s * p.base.dB[static_cast<std::size_t>(s)], 1e-15);
    EXPECT_EQ(p.X(0, 0), 0.0);
}

TEST(SimulateForward, DecouplingIdentityAndDeterminism) {
    HeatFixture f;
    const CoefficientSet cs(f.pb, f.hc.basis, f.hc.model);
    const TimeGrid g(1.0, 100);
    const FbsdePath a = simulate_forward(f.sol, cs, f.hc.model, f.hc.basis, StateVec::Zero(1), g, {8, 2});
    const FbsdePath b = simulate_forward(f.sol, cs, f.hc.model, f.hc.basis, StateVec::Zero(1), g, {8, 2});
    EXPECT_EQ(a.X, b.X);
    EXPECT_EQ(a.Y, b.Y);
    EXPECT_EQ(a.Z, b.Z);
    for (int s = 0; s <= 100; ++s) EXPECT_EQ(a.Y(s, 0), f.sol.value(g.time(s), StateVec::Constant(1, a.X(s, 0)))(0));
    const UniquenessReport u = uniqueness_probe(f.sol, a);
    EXPECT_EQ(u.y_gap, 0.0);
    EXPECT_EQ(u.z_gap, 0.0);
}

TEST(UniquenessProbe, PerturbedCandidate) {
    HeatFixture f;
    const CoefficientSet cs(f.pb, f.hc.basis, f.hc.model);
    FbsdePath p = simulate_forward(f.sol, cs, f.hc.model, f.hc.basis, StateVec::Zero(1), TimeGrid(1.0, 100), {8, 3});
    p.Y(37, 0) += 1e-3;
    EXPECT_NEAR(uniqueness_probe(f.sol, p).y_gap, 1e-3, 1e-15);
}

TEST(UniquenessProbe, CoarseVersusFineGrid) {
    HeatFixture coarse(101, 50), fine(401, 400);
    const CoefficientSet cs(coarse.pb, coarse.hc.basis, coarse.hc.model);
    const FbsdePath p = simulate_forward(coarse.sol, cs, coarse.hc.model, coarse.hc.basis, StateVec::Zero(1), TimeGrid(1.0, 100), {5, 5});
    const UniquenessReport u = uniqueness_probe(fine.sol, p);
    // bounded by the mesh error of the coarse solve (heat_error(101, 50) ~ 4e-3)
    EXPECT_LT(u.y_gap, 1e-2);
    EXPECT_LT(u.z_gap, 1e-2);
}

TEST(SimulateForward, JumpConsistencyAndAdaptedness) {
    const LevyModel m(0.5, LevyMeasure::atomic({{-0.5, 1.0}, {1.0, 2.0}}));
    const TeugelsBasis b = build_basis(m, 3);
    FbsdeProblem pb = frozen_problem(0.0);
    pb.order = 3;
    pb.volatility = [](double, const StateVec& x, const ValueVec& y) {
        VolMatrix v(1, 3);
        v << 0.2, 0.1 * std::cos(x(0)), -0.05 * (1.0 + std::sin(y(0)));
        return v;
    };
    pb.terminal = [](const StateVec& x) { return ValueVec::Constant(1, std::tanh(x(0))); };
    const PideSolution sol = solve_pide(pb, m, b, SpatialGrid({Axis{-4.0, 4.0, 161}}), SolverConfig{});
    const CoefficientSet cs(pb, b, m);
    const TimeGrid g(1.0, 200);
    const SamplePath base = sample_path(m, b, g, {17, 0});
    ASSERT_GT(base.jump_count(), 0);
    const FbsdePath p = simulate_forward(sol, cs, StateVec::Zero(1), base);
    EXPECT_LT(p.jump_defect, 1e-10);

    SamplePath altered = base;
    for (int s = 120; s < 200; ++s) altered.dH.row(s) *= -2.0;
    const FbsdePath q = simulate_forward(sol, cs, StateVec::Zero(1), altered);
    EXPECT_EQ(p.X.topRows(121), q.X.topRows(121));
    EXPECT_EQ(p.Y.topRows(121), q.Y.topRows(121));
    EXPECT_EQ(p.Z.topRows(121), q.Z.topRows(121));
}

TEST(SimulateForward, EscapeTruncatesPath) {
    const LevyModel m(1.0, LevyMeasure::zero());
    const TeugelsBasis b = build_basis(m, 1);
    FbsdeProblem pb = frozen_problem(1.0);
    pb.drift = [](double, const StateVec&, const ValueVec&, const ZMatrix&) { return StateVec::Constant(1, 4.5); };
    const PideSolution sol = solve_pide(pb, m, b, SpatialGrid({Axis{-1.0, 1.0, 41}}), SolverConfig{});
    const CoefficientSet cs(pb, b, m);
    const FbsdePath p = simulate_forward(sol, cs, m, b, StateVec::Zero(1), TimeGrid(1.0, 100), {1, 1});
    EXPECT_TRUE(p.escaped);
    EXPECT_NEAR(p.escape_time, 0.23, 1e-12);
    EXPECT_EQ(p.X.rows(), 24);
    EXPECT_THROW(bsde_residual(p, pb), ConfigError);
}

TEST(BsdeResidual, ConstantTerminalAnyDynamics) {
    const LevyModel m(0.5, LevyMeasure::atomic({{-0.5, 1.0}, {1.0, 2.0}}));
    const TeugelsBasis b = build_basis(m, 3);
    FbsdeProblem pb = frozen_problem(2.0);
    pb.order = 3;
    pb.volatility = [](double, const StateVec&, const ValueVec&) {
        VolMatrix v(1, 3);
        v << 0.3, 0.2, -0.1;
        return v;
    };
    const PideSolution sol = solve_pide(pb, m, b, SpatialGrid({Axis{-4.0, 4.0, 81}}), SolverConfig{});
    const CoefficientSet cs(pb, b, m);
    for (std::uint64_t k = 0; k < 20; ++k) {
        const FbsdePath p = simulate_forward(sol, cs, m, b, StateVec::Zero(1), TimeGrid(1.0, 100), {2, k});
        ASSERT_FALSE(p.escaped);
        EXPECT_LT(std::abs(bsde_residual(p, pb)(0)), 1e-8);
    }
}

TEST(ResidualStudy, HeatMeanWithinBand) {
    HeatFixture f(401, 400);
    const CoefficientSet cs(f.pb, f.hc.basis, f.hc.model);
    const ResidualStudy st = residual_study(f.sol, cs, f.hc.model, f.hc.basis, StateVec::Zero(1), TimeGrid(1.0, 100), 2000, 31, 1);
    EXPECT_TRUE(st.passed());
    EXPECT_EQ(st.exclusion_rate, 0.0);
    EXPECT_GT(st.rms(0), 0.0);
    EXPECT_THROW(residual_study(f.sol, cs, f.hc.model, f.hc.basis, StateVec::Zero(1), TimeGrid(1.0, 100), 1, 31, 1), ConfigError);
}
