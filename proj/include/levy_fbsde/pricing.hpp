#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "levy_fbsde/errors.hpp"
#include "levy_fbsde/fbsde_solver.hpp"
#include "levy_fbsde/pide_solver.hpp"
#include "levy_fbsde/problem.hpp"
#include "levy_fbsde/rng.hpp"

namespace levy_fbsde {

inline constexpr int kMaxAssets = kMaxStateDim;

using AssetVec = StateVec;

/// Claim on terminal prices S = exp(q).
struct Payoff {
    std::string kind = "call";
    std::function<double(const AssetVec&)> fn;

    double operator()(const AssetVec& prices) const { return fn(prices); }

    static Payoff call(double strike, int asset = 0) {
        return {"call", [strike, asset](const AssetVec& s) { return std::max(s(asset) - strike, 0.0); }};
    }
    static Payoff put(double strike, int asset = 0) {
        return {"put", [strike, asset](const AssetVec& s) { return std::max(strike - s(asset), 0.0); }};
    }
    static Payoff constant(double value) {
        return {"constant", [value](const AssetVec&) { return value; }};
    }
    /// Piecewise-linear in the price of `asset` through (price, value) points,
    /// flat beyond the end points.
    static Payoff table(std::vector<std::pair<double, double>> points, int asset = 0) {
        if (points.size() < 2) throw ConfigError("payoff.points needs at least two entries");
        std::sort(points.begin(), points.end());
        return {"custom-table", [points = std::move(points), asset](const AssetVec& s) {
                    const double x = s(asset);
                    if (x <= points.front().first) return points.front().second;
                    if (x >= points.back().first) return points.back().second;
                    auto it = std::upper_bound(points.begin(), points.end(), x,
                                               [](double v, const std::pair<double, double>& p) { return v < p.first; });
                    const auto& [x1, y1] = *it;
                    const auto& [x0, y0] = *(it - 1);
                    return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
                }};
    }
    Payoff scaled(double c) const {
        return {kind, [f = fn, c](const AssetVec& s) { return c * f(s); }};
    }
};

/// Large-investor market in log-price coordinates q = log S. Coefficients may
/// depend on the investor's wealth w and on z.
struct MarketModel {
    using RateFn = std::function<double(double, double, const ZMatrix&)>;
    using LogDriftFn = std::function<AssetVec(double, const AssetVec&, double, const ZMatrix&)>;
    using LogVolFn = std::function<VolMatrix(double, const AssetVec&, double)>;

    int d = 1;
    int order = 1;
    RateFn r;
    LogDriftFn f_log;
    LogVolFn sigma_log;
    Payoff payoff;
    AssetVec s0;
    bool wz_dependent = false;

    AssetVec q0() const { return s0.array().log().matrix(); }

    void validate() const {
        if (d < 1 || d > kMaxAssets) throw ConfigError("market.d must be 1 or 2");
        if (!r || !f_log || !sigma_log || !payoff.fn) throw ConfigError("market is missing a coefficient function");
        if (s0.size() != d) throw ConfigError("market.S0 must have d entries");
        for (int j = 0; j < d; ++j)
            if (!(s0(j) > 0.0)) throw ConfigError("market.S0 entries must be positive");
    }
};

/// Constant-coefficient market with a single rate r0; the small-investor case.
inline MarketModel constant_market(double r0, const AssetVec& drift, const VolMatrix& vol, Payoff payoff,
                                   const AssetVec& s0) {
    MarketModel mk;
    mk.d = static_cast<int>(s0.size());
    mk.order = static_cast<int>(vol.cols());
    mk.r = [r0](double, double, const ZMatrix&) { return r0; };
    mk.f_log = [drift](double, const AssetVec&, double, const ZMatrix&) { return drift; };
    mk.sigma_log = [vol](double, const AssetVec&, double) { return vol; };
    mk.payoff = std::move(payoff);
    mk.s0 = s0;
    return mk;
}

struct PortfolioFit {
    AssetVec alpha;
    double residual = 0.0;
    bool nonnegative = true;
};

/// Holdings alpha with z_i ~ sum_j alpha_j prices_j rows(j, i), the
/// minimal-norm least-squares solution. `rows` are relative (per unit of
/// price) volatility rows, d x M.
inline PortfolioFit recover_portfolio(const Eigen::RowVectorXd& z, const Eigen::MatrixXd& rows, const AssetVec& prices) {
    const auto d = rows.rows();
    if (prices.size() != d || z.size() != rows.cols()) throw ConfigError("recover_portfolio: shape mismatch");
    Eigen::MatrixXd a(rows.cols(), d);  // M x d
    for (Eigen::Index j = 0; j < d; ++j) a.col(j) = prices(j) * rows.row(j).transpose();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    const Eigen::VectorXd alpha = cod.solve(z.transpose());
    PortfolioFit fit;
    fit.alpha = AssetVec(d);
    for (Eigen::Index j = 0; j < d; ++j) fit.alpha(j) = alpha(j);
    fit.residual = (a * alpha - z.transpose()).norm();
    fit.nonnegative = (alpha.array() >= 0.0).all();
    return fit;
}

namespace detail {

/// Price-space dynamics implied by the log-price coefficients. For S = exp(q),
///   relative volatility rows  R(j, i) = int (e^{delta_j} - 1) p_i dnu + c(j, i)
///   relative drift            phi_j   = f_j + beta(j, j) + int (e^{delta_j} - 1 - delta_j) dnu
/// i.e. theta^(1) and the generator applied to e^{q_j}, divided by S_j.
class PriceDynamics {
public:
    PriceDynamics(const TeugelsBasis& basis, const LevyModel& model) : a_(model.a()) {
        const int m = basis.order;
        q0_ = Eigen::Map<const Eigen::VectorXd>(basis.q_at_zero.data(), m);
        const auto x = model.measure().nodes();
        const auto w = model.measure().weights();
        weights_.assign(w.begin(), w.end());
        p_at_nodes_.resize(static_cast<Eigen::Index>(x.size()), m);
        for (std::size_t j = 0; j < x.size(); ++j)
            for (int i = 0; i < m; ++i) p_at_nodes_(static_cast<Eigen::Index>(j), i) = basis.p[static_cast<std::size_t>(i)](x[j]);
    }

    Eigen::MatrixXd rows(const VolMatrix& sig) const {
        const StateVec v = sig * q0_;
        Eigen::MatrixXd out = a_ * a_ * v * q0_.transpose();
        for (Eigen::Index j = 0; j < p_at_nodes_.rows(); ++j) {
            const StateVec d = sig * p_at_nodes_.row(j).transpose();
            for (Eigen::Index k = 0; k < sig.rows(); ++k)
                out.row(k) += weights_[static_cast<std::size_t>(j)] * std::expm1(d(k)) * p_at_nodes_.row(j);
        }
        return out;
    }

    AssetVec drift(const AssetVec& f, const VolMatrix& sig) const {
        const StateVec v = sig * q0_;
        AssetVec phi = f;
        for (Eigen::Index k = 0; k < sig.rows(); ++k) phi(k) += 0.5 * a_ * a_ * v(k) * v(k);
        for (Eigen::Index j = 0; j < p_at_nodes_.rows(); ++j) {
            const StateVec d = sig * p_at_nodes_.row(j).transpose();
            for (Eigen::Index k = 0; k < sig.rows(); ++k)
                phi(k) += weights_[static_cast<std::size_t>(j)] * (std::expm1(d(k)) - d(k));
        }
        return phi;
    }

private:
    double a_;
    Eigen::VectorXd q0_;
    std::vector<double> weights_;
    Eigen::MatrixXd p_at_nodes_;
};

}  // namespace detail

/// Log-price forward equation with wealth as the backward component:
///   dq = f_log dt + sigma_log dH,  W_T = payoff(e^{q_T}),
///   g(t, q, w, z) = -[ sum_j alpha_j S_j phi_j + (w - sum_j alpha_j S_j) r ],
/// alpha recovered from z by recover_portfolio.
inline FbsdeProblem build_market_problem(const MarketModel& market, const TeugelsBasis& basis, const LevyModel& model) {
    market.validate();
    if (market.order != basis.order)
        throw BasisMismatch("market volatility has " + std::to_string(market.order) + " columns, basis order is " +
                            std::to_string(basis.order));
    const detail::PriceDynamics dyn(basis, model);

    // Identifiability of alpha from z at a few probe states.
    const AssetVec q0 = market.q0();
    const double w0 = market.payoff(market.s0);
    for (double shift : {-1.0, 0.0, 1.0}) {
        const AssetVec q = q0.array() + shift;
        const VolMatrix sig = market.sigma_log(0.0, q, w0);
        if (sig.rows() != market.d || sig.cols() != basis.order)
            throw ConfigError("market.sigma_log must be d x M");
        const Eigen::MatrixXd rows = dyn.rows(sig);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(rows);
        lu.setThreshold(1e-10);
        if (lu.rank() < market.d)
            throw RankDeficientVolatility("price volatility rows have rank " + std::to_string(lu.rank()) + " < d = " +
                                          std::to_string(market.d) + " at q = q0 + " + std::to_string(shift));
    }

    FbsdeProblem pb;
    pb.name = "market";
    pb.state_dim = market.d;
    pb.value_dim = 1;
    pb.order = basis.order;
    pb.z_dependent = true;
    pb.drift = [f = market.f_log](double t, const StateVec& q, const ValueVec& y, const ZMatrix& z) {
        return f(t, q, y(0), z);
    };
    pb.volatility = [s = market.sigma_log](double t, const StateVec& q, const ValueVec& y) { return s(t, q, y(0)); };
    pb.driver = [market, dyn](double t, const StateVec& q, const ValueVec& y, const ZMatrix& z) {
        const double w = y(0);
        const VolMatrix sig = market.sigma_log(t, q, w);
        const AssetVec prices = q.array().exp().matrix();
        const PortfolioFit fit = recover_portfolio(z.row(0), dyn.rows(sig), prices);
        const AssetVec phi = dyn.drift(market.f_log(t, q, w, z), sig);
        const double rate = market.r(t, w, z);
        double risky = 0.0, gain = 0.0;
        for (int j = 0; j < market.d; ++j) {
            risky += fit.alpha(j) * prices(j);
            gain += fit.alpha(j) * prices(j) * phi(j);
        }
        ValueVec g(1);
        g(0) = -(gain + (w - risky) * rate);
        return g;
    };
    pb.terminal = [payoff = market.payoff](const StateVec& q) {
        ValueVec v(1);
        v(0) = payoff(q.array().exp().matrix());
        return v;
    };
    return pb;
}

struct PriceResult {
    double w0 = 0.0;
    AssetVec q0;
    PideSolution solution;
};

inline PriceResult price(const MarketModel& market, const LevyModel& model, const TeugelsBasis& basis,
                         const SpatialGrid& grid, const SolverConfig& config) {
    const FbsdeProblem pb = build_market_problem(market, basis, model);
    PriceResult res;
    res.q0 = market.q0();
    if (!grid.contains(res.q0)) throw ConfigError("log S0 lies outside the pricing grid");
    res.solution = solve_pide(pb, model, basis, grid, config);
    res.w0 = res.solution.value(0.0, res.q0)(0);
    return res;
}

struct HedgeReport {
    int n_paths = 0;
    int n_steps = 0;
    std::vector<Eigen::MatrixXd> alpha;       // per asset: n_steps x n_paths
    Eigen::VectorXd fit_residual;             // per step, max over paths
    Eigen::VectorXd terminal_error;           // per path, NaN if escaped
    std::vector<std::uint8_t> escaped;
    double mean_error = 0.0, se_error = 0.0, rms_error = 0.0;
    double max_fit_residual = 0.0;
    double exclusion_rate = 0.0;
    bool alpha_nonnegative = true;

    bool mean_within(double z_band) const { return std::abs(mean_error) <= z_band * se_error; }
};

/// Self-financing replication of the claim along simulated price paths:
/// alpha from Z at the left end of each step, wealth rolled forward with
///   W_{s+1} = W_s + sum_j alpha_j (S_j(s+1) - S_j(s)) + (W_s - sum_j alpha_j S_j(s)) r dt,
/// starting from W_0 = theta(0, q0).
inline HedgeReport replication_check(const MarketModel& market, const LevyModel& model, const TeugelsBasis& basis,
                                     const PideSolution& solution, const TimeGrid& grid, int n_paths,
                                     std::uint64_t seed, int threads) {
    const FbsdeProblem pb = build_market_problem(market, basis, model);
    const CoefficientSet cs(pb, basis, model);
    const detail::PriceDynamics dyn(basis, model);
    const int n = grid.n_steps();
    const int d = market.d;
    const int m = basis.order;
    const AssetVec q0 = market.q0();
    const double w0 = solution.value(0.0, q0)(0);

    HedgeReport rep;
    rep.n_paths = n_paths;
    rep.n_steps = n;
    rep.alpha.assign(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(n, n_paths));
    rep.terminal_error = Eigen::VectorXd::Constant(n_paths, std::numeric_limits<double>::quiet_NaN());
    rep.escaped.assign(static_cast<std::size_t>(n_paths), 0);
    Eigen::MatrixXd fit(n, n_paths);
    fit.setZero();
    std::vector<std::uint8_t> nonneg(static_cast<std::size_t>(n_paths), 1);

    parallel_for(static_cast<std::size_t>(n_paths), threads, [&](std::size_t k) {
        const auto col = static_cast<Eigen::Index>(k);
        const FbsdePath path = simulate_forward(solution, cs, model, basis, q0, grid, {seed, k});
        if (path.escaped) {
            rep.escaped[k] = 1;
            return;
        }
        double wealth = w0;
        for (int s = 0; s < n; ++s) {
            const double t = grid.time(s);
            const AssetVec q = path.X.row(s).transpose();
            const AssetVec q1 = path.X.row(s + 1).transpose();
            const double y = path.Y(s, 0);
            ZMatrix z(1, m);
            for (int i = 0; i < m; ++i) z(0, i) = path.Z(s, i);
            const AssetVec prices = q.array().exp().matrix();
            const AssetVec next = q1.array().exp().matrix();
            const PortfolioFit pf = recover_portfolio(z.row(0), dyn.rows(market.sigma_log(t, q, y)), prices);
            fit(s, col) = pf.residual;
            if (!pf.nonnegative) nonneg[k] = 0;
            double risky = 0.0, gain = 0.0;
            for (int j = 0; j < d; ++j) {
                rep.alpha[static_cast<std::size_t>(j)](s, col) = pf.alpha(j);
                risky += pf.alpha(j) * prices(j);
                gain += pf.alpha(j) * (next(j) - prices(j));
            }
            wealth += gain + (wealth - risky) * market.r(t, y, z) * grid.dt();
        }
        const AssetVec last = path.X.row(n).transpose();
        rep.terminal_error(col) = wealth - market.payoff(last.array().exp().matrix());
    });

    rep.fit_residual = fit.rowwise().maxCoeff();
    rep.max_fit_residual = n > 0 ? rep.fit_residual.maxCoeff() : 0.0;
    rep.alpha_nonnegative = std::all_of(nonneg.begin(), nonneg.end(), [](std::uint8_t v) { return v != 0; });
    int kept = 0;
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < n_paths; ++k) {
        if (rep.escaped[static_cast<std::size_t>(k)]) continue;
        ++kept;
        sum += rep.terminal_error(k);
        sq += rep.terminal_error(k) * rep.terminal_error(k);
    }
    rep.exclusion_rate = static_cast<double>(n_paths - kept) / n_paths;
    if (kept < 2) throw ConfigError("fewer than 2 hedging paths stayed inside the pricing grid");
    rep.mean_error = sum / kept;
    rep.rms_error = std::sqrt(sq / kept);
    double var = 0.0;
    for (int k = 0; k < n_paths; ++k)
        if (!rep.escaped[static_cast<std::size_t>(k)]) var += std::pow(rep.terminal_error(k) - rep.mean_error, 2);
    rep.se_error = std::sqrt(var / (kept - 1.0) / kept);
    return rep;
}

}  // namespace levy_fbsde
