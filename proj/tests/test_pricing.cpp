#include <cmath>

#include <gtest/gtest.h>

#include "levy_fbsde/pricing.hpp"
#include "levy_fbsde/verify/acceptance.hpp"
#include "levy_fbsde/verify/oracles.hpp"

using namespace levy_fbsde;

namespace {

AssetVec one(double v) { return AssetVec::Constant(1, v); }

VolMatrix vol1(double s) { return VolMatrix::Constant(1, 1, s); }

PriceResult bs_price(const Payoff& payoff, double r0 = 0.05, int n = 401) {
    const verify::BlackScholesCase bs;
    const MarketModel mk = constant_market(r0, one(r0 - 0.02), vol1(bs.vol), payoff, one(bs.spot));
    return price(mk, bs.model, bs.basis, bs.grid(n), bs.solver());
}

}  // namespace

TEST(Oracle, BlackScholesFrozenValues) {
    // scipy.stats.norm reference values
    EXPECT_NEAR(oracle::black_scholes_call(100, 100, 0.05, 0.2, 0.25), 4.614997129602855, 1e-12);
    EXPECT_NEAR(oracle::black_scholes_put(100, 100, 0.05, 0.2, 0.25), 3.372777178991001, 1e-12);
    EXPECT_NEAR(oracle::black_scholes_call(90, 100, 0.03, 0.35, 1.3), 11.834791190574265, 1e-12);
}

TEST(Oracle, CompoundPoissonReducesToForward) {
    // E[S_T] for a risk-neutral log drift is the forward price
    const double k = -0.2, lambda = 1.3, r = 0.04, T = 0.7;
    const double b = r - lambda * (std::exp(k) - 1.0);
    EXPECT_NEAR(oracle::compound_poisson_price([](double s) { return s; }, 50.0, r, b, k, lambda, T), 50.0, 1e-12);
}

TEST(RecoverPortfolio, ScalarExact) {
    const PortfolioFit fit = recover_portfolio(Eigen::RowVectorXd::Constant(1, 0.3), Eigen::MatrixXd::Constant(1, 1, 0.2), one(1.0));
    EXPECT_NEAR(fit.alpha(0), 1.5, 1e-15);
    EXPECT_EQ(fit.residual, 0.0);
    EXPECT_TRUE(fit.nonnegative);
}

TEST(RecoverPortfolio, ConsistentOverdetermined) {
    Eigen::MatrixXd rows(1, 2);
    rows << 0.3, 0.4;
    const PortfolioFit fit = recover_portfolio(-2.0 * rows.row(0), rows, one(1.0));
    EXPECT_NEAR(fit.alpha(0), -2.0, 1e-14);
    EXPECT_LT(fit.residual, 1e-15);
    EXPECT_FALSE(fit.nonnegative);
}

TEST(RecoverPortfolio, InconsistentLeastSquares) {
    // normal equations: residual = eps * s1 / |s|
    Eigen::MatrixXd rows(1, 2);
    rows << 0.3, 0.4;
    Eigen::RowVectorXd z = 2.0 * rows.row(0);
    z(1) += 0.01;
    const PortfolioFit fit = recover_portfolio(z, rows, one(1.0));
    EXPECT_NEAR(fit.residual, 0.006, 1e-15);
    EXPECT_NEAR(fit.alpha(0), 2.0 + 0.01 * 0.4 / 0.25, 1e-14);
}

TEST(RecoverPortfolio, PricesScaleHoldings) {
    const PortfolioFit fit = recover_portfolio(Eigen::RowVectorXd::Constant(1, 6.0), Eigen::MatrixXd::Constant(1, 1, 0.2), one(50.0));
    EXPECT_NEAR(fit.alpha(0), 0.6, 1e-15);
}

TEST(BuildMarketProblem, RankDeficientVolatility) {
    const LevyModel m(1.0, LevyMeasure::zero());
    VolMatrix v(2, 1);
    v << 0.2, 0.3;
    AssetVec s0(2), f(2);
    s0 << 100, 90;
    f << 0.0, 0.0;
    EXPECT_THROW(build_market_problem(constant_market(0.01, f, v, Payoff::call(100), s0), build_basis(m, 1), m), RankDeficientVolatility);
}

TEST(BuildMarketProblem, SmallInvestorIsAffineInWealth) {
    const verify::BlackScholesCase bs;
    const FbsdeProblem pb = build_market_problem(bs.market(), bs.basis, bs.model);
    const StateVec q = one(std::log(100.0));
    ZMatrix z(1, 1);
    z << 3.0;
    auto g = [&](double w) { return pb.driver(0.1, q, ValueVec::Constant(1, w), z)(0); };
    EXPECT_NEAR(g(2.0) - g(1.0), g(5.0) - g(4.0), 1e-12);
    EXPECT_NEAR(g(2.0) - g(1.0), -bs.r, 1e-12);
}

TEST(Price, BlackScholesCallAndPut) {
    const verify::BlackScholesCase bs;
    const PriceResult call = price(bs.market(), bs.model, bs.basis, bs.grid(401), bs.solver());
    EXPECT_LT(std::abs(call.w0 / 4.614997129602855 - 1.0), 0.01);
    MarketModel mk = bs.market();
    mk.payoff = Payoff::put(bs.strike);
    const PriceResult put = price(mk, bs.model, bs.basis, bs.grid(401), bs.solver());
    EXPECT_LT(std::abs(put.w0 / 3.372777178991001 - 1.0), 0.01);
}

TEST(Price, PhysicalDriftDoesNotChangeThePrice) {
    const verify::BlackScholesCase bs;
    const PriceResult a = price(bs.market(0.15), bs.model, bs.basis, bs.grid(401), bs.solver());
    EXPECT_LT(std::abs(a.w0 / bs.exact() - 1.0), 0.01);
}

TEST(Price, ZeroConstantAndDiscounting) {
    EXPECT_LT(std::abs(bs_price(Payoff::constant(0.0)).w0), 1e-14);
    const PriceResult c = bs_price(Payoff::constant(3.0), 0.0);
    for (const auto& level : c.solution.theta) EXPECT_LT((level.array() - 3.0).abs().maxCoeff(), 1e-12);
    EXPECT_NEAR(bs_price(Payoff::constant(1.0)).w0, std::exp(-0.05 * 0.25), 1e-4);
}

TEST(Price, LinearInPayoff) {
    const Payoff p = Payoff::call(95.0);
    const double w1 = bs_price(p, 0.05, 201).w0, w2 = bs_price(p.scaled(2.0), 0.05, 201).w0;
    EXPECT_NEAR(w2 / w1, 2.0, 2e-8);
}

TEST(Price, JumpMarketOracle) {
    const verify::JumpMarketCase jc;
    const double c = std::log(jc.spot);
    SolverConfig cfg;
    cfg.horizon = jc.maturity;
    const PriceResult pr = price(jc.market(), jc.model, jc.basis, SpatialGrid({Axis{c - 1.5, c + 1.5, 401}}), cfg);
    EXPECT_LT(std::abs(pr.w0 / jc.exact() - 1.0), 0.01);
}

TEST(Price, StartOutsideGrid) {
    const verify::BlackScholesCase bs;
    EXPECT_THROW(price(bs.market(), bs.model, bs.basis, SpatialGrid({Axis{0.0, 1.0, 41}}), bs.solver()), ConfigError);
}

TEST(Payoff, TableInterpolatesAndClamps) {
    const Payoff p = Payoff::table({{80.0, 20.0}, {100.0, 0.0}, {120.0, 0.0}});
    EXPECT_NEAR(p.fn(one(90.0)), 10.0, 1e-12);
    EXPECT_NEAR(p.fn(one(60.0)), 20.0, 1e-12);
    EXPECT_NEAR(p.fn(one(130.0)), 0.0, 1e-12);
}

TEST(Replication, ConstantAndZeroClaims) {
    const verify::BlackScholesCase bs;
    const MarketModel zero = constant_market(0.0, one(0.0), vol1(0.2), Payoff::constant(0.0), one(100.0));
    const PriceResult pz = price(zero, bs.model, bs.basis, bs.grid(201), bs.solver());
    const HedgeReport hz = replication_check(zero, bs.model, bs.basis, pz.solution, TimeGrid(0.25, 50), 200, 4, 1);
    EXPECT_EQ(hz.terminal_error.cwiseAbs().maxCoeff(), 0.0);

    const MarketModel cst = constant_market(0.0, one(0.0), vol1(0.2), Payoff::constant(7.0), one(100.0));
    const PriceResult pc = price(cst, bs.model, bs.basis, bs.grid(201), bs.solver());
    const HedgeReport hc = replication_check(cst, bs.model, bs.basis, pc.solution, TimeGrid(0.25, 50), 200, 4, 1);
    EXPECT_LT(hc.terminal_error.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Replication, BlackScholesHedgeIsUnbiasedAndRefines) {
    const verify::BlackScholesCase bs;
    const MarketModel mk = bs.market();
    const PriceResult pr = price(mk, bs.model, bs.basis, bs.grid(401), bs.solver());
    const HedgeReport coarse = replication_check(mk, bs.model, bs.basis, pr.solution, TimeGrid(0.25, 25), 2000, 12, 1);
    const HedgeReport fine = replication_check(mk, bs.model, bs.basis, pr.solution, TimeGrid(0.25, 100), 2000, 12, 1);
    EXPECT_TRUE(fine.mean_within(4.0));
    EXPECT_LT(fine.max_fit_residual, 1e-12);
    EXPECT_LT(fine.rms_error, coarse.rms_error);
    EXPECT_TRUE(fine.alpha_nonnegative);
    // alpha is the delta of a call, in [0, 1] up to the mesh error of the gradient
    EXPECT_LE(fine.alpha[0].maxCoeff(), 1.0 + 1e-3);
}
