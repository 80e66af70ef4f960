#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "levy_fbsde/errors.hpp"
#include "levy_fbsde/grid.hpp"
#include "levy_fbsde/path_sim.hpp"
#include "levy_fbsde/problem.hpp"
#include "levy_fbsde/teugels.hpp"

namespace levy_fbsde {

enum class SolveMode { strict, extended };

inline std::string to_string(SolveMode m) { return m == SolveMode::strict ? "strict" : "extended"; }

struct SolverConfig {
    double horizon = 1.0;
    double fp_tol = 1e-8;
    int fp_max = 50;
    /// 1.0 is backward Euler, 0.5 Crank-Nicolson for the local part.
    double theta_scheme = 1.0;
    int n_time = 200;
    double min_dt_split = 1e-4;
    SolveMode mode = SolveMode::extended;
    /// Upper bound on dt * nu(R) for the explicit jump term.
    double jump_cfl = 0.5;

    void validate() const {
        if (!(horizon > 0.0)) throw ConfigError("solver.horizon must be positive");
        if (!(fp_tol > 0.0)) throw ConfigError("solver.fp_tol must be positive");
        if (fp_max < 1) throw ConfigError("solver.fp_max must be at least 1");
        if (!(theta_scheme >= 0.5 && theta_scheme <= 1.0)) throw ConfigError("solver.theta_scheme must lie in [0.5, 1]");
        if (n_time < 1) throw ConfigError("solver.n_time must be at least 1");
        if (!(min_dt_split > 0.0)) throw ConfigError("solver.min_dt_split must be positive");
        if (!(jump_cfl > 0.0)) throw ConfigError("solver.jump_cfl must be positive");
    }
};

struct SweepRecord {
    int interval = 0;
    double t_begin = 0.0;
    double t_end = 0.0;
    int sweep = 0;
    double residual = 0.0;
};

struct IntervalRecord {
    double t_begin = 0.0;
    double t_end = 0.0;
    int sweeps = 0;
    bool converged = false;
    /// Geometric-mean contraction ratio of the logged residuals (NaN if < 3 sweeps).
    double ratio = std::numeric_limits<double>::quiet_NaN();
    std::string outcome;
};

/// Decoupling field on the space-time grid. theta[l] is nodes x Q at time level
/// l; theta1[l] is nodes x (Q*M) with column q*M + i.
class PideSolution {
public:
    std::string problem_name;
    SpatialGrid grid;
    TimeGrid time_grid{1.0, 1};
    int value_dim = 1;
    int order = 1;
    SolveMode mode = SolveMode::extended;
    std::vector<Eigen::MatrixXd> theta;
    std::vector<Eigen::MatrixXd> theta1;
    std::vector<SweepRecord> sweeps;
    std::vector<IntervalRecord> intervals;
    int subintervals = 0;
    double ratio_estimate = std::numeric_limits<double>::quiet_NaN();
    double tail_indicator = 0.0;
    /// Largest |delta_k| / extent_k seen during the solve.
    double max_jump_fraction = 0.0;
    double lipschitz_estimate = 0.0;

    double horizon() const noexcept { return time_grid.horizon(); }
    int levels() const noexcept { return static_cast<int>(theta.size()); }

    ValueVec value(double t, const StateVec& x) const { return to_value(interp(theta, t, x)); }

    ZMatrix z_value(double t, const StateVec& x) const {
        const Eigen::RowVectorXd row = interp(theta1, t, x);
        ZMatrix z(value_dim, order);
        for (int q = 0; q < value_dim; ++q)
            for (int i = 0; i < order; ++i) z(q, i) = row(q * order + i);
        return z;
    }

private:
    ValueVec to_value(const Eigen::RowVectorXd& row) const {
        ValueVec v(value_dim);
        for (int q = 0; q < value_dim; ++q) v(q) = row(q);
        return v;
    }

    Eigen::RowVectorXd interp(const std::vector<Eigen::MatrixXd>& field, double t, const StateVec& x) const {
        const int n = time_grid.n_steps();
        const double u = std::clamp(t / time_grid.dt(), 0.0, static_cast<double>(n));
        const int k = std::min(static_cast<int>(std::floor(u)), n - 1);
        const double w = u - k;
        const Eigen::RowVectorXd lo = grid.interpolate(field[static_cast<std::size_t>(k)], x);
        if (w == 0.0) return lo;
        return (1.0 - w) * lo + w * grid.interpolate(field[static_cast<std::size_t>(k + 1)], x);
    }
};

namespace detail {

inline ZMatrix unpack_z(const Eigen::MatrixXd& rho1, int node, int q_dim, int m) {
    ZMatrix z(q_dim, m);
    for (int q = 0; q < q_dim; ++q)
        for (int i = 0; i < m; ++i) z(q, i) = rho1(node, q * m + i);
    return z;
}

inline ValueVec row_value(const Eigen::MatrixXd& field, int node) {
    ValueVec y(field.cols());
    for (Eigen::Index q = 0; q < field.cols(); ++q) y(q) = field(node, q);
    return y;
}

// Interpolation stencil of point(node) + d, guarding against displacements that leave
// too little of the grid to be meaningful.
inline NodeStencil jump_target(const SpatialGrid& grid, int node, const StateVec& d, double& max_fraction) {
    for (int k = 0; k < grid.dims(); ++k) {
        const double frac = std::abs(d(k)) / grid.axis(k).extent();
        if (!std::isfinite(frac)) throw GridTooSmall("non-finite jump displacement");
        max_fraction = std::max(max_fraction, frac);
        if (frac > 0.5)
            throw GridTooSmall("jump displacement " + std::to_string(d(k)) + " exceeds half the grid extent along axis " +
                               std::to_string(k));
    }
    return grid.displaced(node, d);
}

/// Operators of the linearized problem at one time level, coefficients frozen
/// at (rho, rho1): local part L (convection with the jump compensator, plus
/// diffusion), nonlocal jump part J, and the source g.
struct FrozenLevel {
    Eigen::SparseMatrix<double> local;
    Eigen::SparseMatrix<double> jump;
    Eigen::MatrixXd source;
};

class LevelAssembler {
public:
    LevelAssembler(const CoefficientSet& cs, const SpatialGrid& grid, bool use_z)
        : cs_(cs), grid_(grid), use_z_(use_z) {}

    FrozenLevel freeze(double t, const Eigen::MatrixXd& rho, const Eigen::MatrixXd* rho1) {
        const FbsdeProblem& pb = cs_.problem();
        const int n = grid_.size();
        const int q_dim = pb.value_dim;
        const int m = cs_.order();
        const auto weights = cs_.jump_weights();
        std::vector<Eigen::Triplet<double>> loc;
        std::vector<Eigen::Triplet<double>> jmp;
        loc.reserve(static_cast<std::size_t>(n) * 10);
        jmp.reserve(static_cast<std::size_t>(n) * (weights.size() * 4 + 1));
        FrozenLevel out;
        out.source.resize(n, q_dim);
        const ZMatrix zero = zero_z(pb);

        for (int node = 0; node < n; ++node) {
            const StateVec x = grid_.point(node);
            const ValueVec y = row_value(rho, node);
            const ZMatrix z = (use_z_ && rho1 != nullptr) ? unpack_z(*rho1, node, q_dim, m) : zero;
            const VolMatrix sig = cs_.sigma(t, x, y);
            const StateVec b = pb.drift(t, x, y, z) - cs_.mean_jump_from(sig);
            const BetaMatrix beta = cs_.beta_from(sig);
            const ValueVec g = pb.driver(t, x, y, z);
            for (int q = 0; q < q_dim; ++q) out.source(node, q) = g(q);

            add_local_row(node, b, beta, loc);

            double diag = 0.0;
            for (std::size_t j = 0; j < weights.size(); ++j) {
                if (weights[j] == 0.0) continue;
                const NodeStencil st = jump_target(grid_, node, cs_.delta_at_node(sig, j), max_fraction_);
                for (int k = 0; k < st.count; ++k)
                    jmp.emplace_back(node, st.node[static_cast<std::size_t>(k)], weights[j] * st.weight[static_cast<std::size_t>(k)]);
                diag -= weights[j];
            }
            if (!weights.empty()) jmp.emplace_back(node, node, diag);
        }
        out.local.resize(n, n);
        out.local.setFromTriplets(loc.begin(), loc.end());
        out.jump.resize(n, n);
        out.jump.setFromTriplets(jmp.begin(), jmp.end());
        return out;
    }

    double max_jump_fraction() const noexcept { return max_fraction_; }

private:
    // Every stencil entry is inserted even when its coefficient is zero so the
    // sparsity pattern is identical across levels and the LU analysis is reused.
    void add_local_row(int node, const StateVec& b, const BetaMatrix& beta, std::vector<Eigen::Triplet<double>>& out) const {
        const auto idx = grid_.index(node);
        for (int k = 0; k < grid_.dims(); ++k) {
            const Axis& ax = grid_.axis(k);
            const int ik = idx[static_cast<std::size_t>(k)];
            const AxisStencil d1 = first_derivative_stencil(ik, ax.n, ax.step());
            for (int s = 0; s < d1.count; ++s)
                out.emplace_back(node, node + d1.offset[static_cast<std::size_t>(s)] * grid_.stride(k),
                                 b(k) * d1.weight[static_cast<std::size_t>(s)]);
            const AxisStencil d2 = second_derivative_stencil(ik, ax.n, ax.step());
            for (int s = 0; s < d2.count; ++s)
                out.emplace_back(node, node + d2.offset[static_cast<std::size_t>(s)] * grid_.stride(k),
                                 beta(k, k) * d2.weight[static_cast<std::size_t>(s)]);
        }
        if (grid_.dims() == 2) {
            const AxisStencil s0 = first_derivative_stencil(idx[0], grid_.axis(0).n, grid_.axis(0).step());
            const AxisStencil s1 = first_derivative_stencil(idx[1], grid_.axis(1).n, grid_.axis(1).step());
            const double cross = beta(0, 1) + beta(1, 0);
            for (int u = 0; u < s0.count; ++u)
                for (int v = 0; v < s1.count; ++v)
                    out.emplace_back(node,
                                     node + s0.offset[static_cast<std::size_t>(u)] * grid_.stride(0) +
                                         s1.offset[static_cast<std::size_t>(v)] * grid_.stride(1),
                                     cross * s0.weight[static_cast<std::size_t>(u)] * s1.weight[static_cast<std::size_t>(v)]);
        }
    }

    const CoefficientSet& cs_;
    const SpatialGrid& grid_;
    bool use_z_;
    double max_fraction_ = 0.0;
};

}  // namespace detail

/// theta^(1)_i = int [theta(t, x + delta) - theta(t, x)] p_i dnu + c_i . grad theta
/// for a snapshot `theta` (nodes x Q) at time t. Result is nodes x (Q*M).
inline Eigen::MatrixXd theta1_from_theta(const Eigen::MatrixXd& theta, double t, const CoefficientSet& cs,
                                         const SpatialGrid& grid) {
    const int n = grid.size();
    const int q_dim = static_cast<int>(theta.cols());
    const int m = cs.order();
    const auto weights = cs.jump_weights();
    const Eigen::MatrixXd& pn = cs.p_at_nodes();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, q_dim * m);
    double ignored = 0.0;
    for (int node = 0; node < n; ++node) {
        const StateVec x = grid.point(node);
        const ValueVec y = detail::row_value(theta, node);
        const VolMatrix sig = cs.sigma(t, x, y);
        const VolMatrix c = cs.c_from(sig);
        Eigen::MatrixXd grad(grid.dims(), q_dim);
        for (int k = 0; k < grid.dims(); ++k) grad.row(k) = grid.derivative(theta, node, k);
        for (std::size_t j = 0; j < weights.size(); ++j) {
            if (weights[j] == 0.0) continue;
            const NodeStencil st = detail::jump_target(grid, node, cs.delta_at_node(sig, j), ignored);
            Eigen::RowVectorXd diff = Eigen::RowVectorXd::Zero(q_dim);
            for (int k = 0; k < st.count; ++k)
                diff += st.weight[static_cast<std::size_t>(k)] * (theta.row(st.node[static_cast<std::size_t>(k)]) - theta.row(node));
            for (int q = 0; q < q_dim; ++q)
                for (int i = 0; i < m; ++i)
                    out(node, q * m + i) += weights[j] * diff(q) * pn(static_cast<Eigen::Index>(j), i);
        }
        for (int q = 0; q < q_dim; ++q)
            for (int i = 0; i < m; ++i) out(node, q * m + i) += c.col(i).dot(grad.col(q));
    }
    return out;
}

namespace detail {

// Largest finite-difference slope of f, sigma and g between neighbouring grid
// nodes, with y = h(x) and z = 0.
inline double lipschitz_probe(const CoefficientSet& cs, const SpatialGrid& grid, double horizon) {
    const FbsdeProblem& pb = cs.problem();
    const ZMatrix z = zero_z(pb);
    double worst = 0.0;
    for (double t : {0.0, horizon}) {
        for (int node = 0; node < grid.size(); ++node) {
            const auto idx = grid.index(node);
            const StateVec x = grid.point(node);
            const ValueVec y = pb.terminal(x);
            const StateVec f0 = pb.drift(t, x, y, z);
            const VolMatrix s0 = cs.sigma(t, x, y);
            const ValueVec g0 = pb.driver(t, x, y, z);
            if (!f0.allFinite() || !s0.allFinite() || !g0.allFinite() || !y.allFinite())
                throw ConfigError("coefficients of '" + pb.name + "' are not finite on the grid");
            for (int k = 0; k < grid.dims(); ++k) {
                if (idx[static_cast<std::size_t>(k)] + 1 >= grid.axis(k).n) continue;
                const int nb = node + grid.stride(k);
                const StateVec x1 = grid.point(nb);
                const ValueVec y1 = pb.terminal(x1);
                const double h = grid.axis(k).step();
                worst = std::max(worst, (pb.drift(t, x1, y1, z) - f0).cwiseAbs().maxCoeff() / h);
                worst = std::max(worst, (cs.sigma(t, x1, y1) - s0).cwiseAbs().maxCoeff() / h);
                worst = std::max(worst, (pb.driver(t, x1, y1, z) - g0).cwiseAbs().maxCoeff() / h);
            }
        }
    }
    return worst;
}

// A u for an operator whose rows sum to zero, evaluated as
// sum_{k != i} A_ik (u_k - u_i) so that constants are annihilated exactly.
inline Eigen::MatrixXd apply_differenced(const Eigen::SparseMatrix<double>& a, const Eigen::MatrixXd& u) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(u.rows(), u.cols());
    for (int col = 0; col < a.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(a, col); it; ++it)
            if (it.row() != col) out.row(it.row()) += it.value() * (u.row(col) - u.row(it.row()));
    return out;
}

class FixedPointDriver {
public:
    FixedPointDriver(const CoefficientSet& cs, const SpatialGrid& grid, const SolverConfig& cfg, bool use_z,
                     PideSolution& sol)
        : cs_(cs), grid_(grid), cfg_(cfg), use_z_(use_z), sol_(sol), assembler_(cs, grid, use_z) {}

    void run(int i0, int i1) {
        if (attempt(i0, i1)) return;
        const TimeGrid& tg = sol_.time_grid;
        const double half = 0.5 * (tg.time(i1) - tg.time(i0));
        if (i1 - i0 < 2 || half < cfg_.min_dt_split)
            throw NoConvergence("fixed-point iteration failed on [" + std::to_string(tg.time(i0)) + ", " +
                                std::to_string(tg.time(i1)) + "] and the interval cannot be split further");
        const int mid = (i0 + i1) / 2;
        run(mid, i1);
        run(i0, mid);
    }

    double max_jump_fraction() const noexcept { return assembler_.max_jump_fraction(); }

private:
    bool attempt(int i0, int i1) {
        const TimeGrid& tg = sol_.time_grid;
        const int len = i1 - i0;
        const double dt = tg.dt();
        const double th = cfg_.theta_scheme;
        const int interval_id = static_cast<int>(sol_.intervals.size());
        IntervalRecord rec{tg.time(i0), tg.time(i1), 0, false, std::numeric_limits<double>::quiet_NaN(), ""};

        std::vector<Eigen::MatrixXd> rho(static_cast<std::size_t>(len + 1), sol_.theta[static_cast<std::size_t>(i1)]);
        std::vector<Eigen::MatrixXd> rho1;
        if (use_z_) {
            rho1.resize(static_cast<std::size_t>(len + 1));
            for (int k = 0; k <= len; ++k)
                rho1[static_cast<std::size_t>(k)] = theta1_from_theta(rho[static_cast<std::size_t>(k)], tg.time(i0 + k), cs_, grid_);
        }
        std::vector<Eigen::MatrixXd> next(static_cast<std::size_t>(len + 1));
        const Eigen::Index n = grid_.size();
        Eigen::SparseMatrix<double> eye(n, n);
        eye.setIdentity();
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        bool analyzed = false;
        std::vector<double> residuals;

        for (int sweep = 1; sweep <= cfg_.fp_max; ++sweep) {
            next[static_cast<std::size_t>(len)] = sol_.theta[static_cast<std::size_t>(i1)];
            auto frozen_at = [&](int k) {
                const auto ks = static_cast<std::size_t>(k);
                return assembler_.freeze(tg.time(i0 + k), rho[ks], use_z_ ? &rho1[ks] : nullptr);
            };
            FrozenLevel upper = frozen_at(len);
            for (int k = len - 1; k >= 0; --k) {
                FrozenLevel lower = frozen_at(k);
                const Eigen::MatrixXd& tu = next[static_cast<std::size_t>(k + 1)];
                // increment form: (I - th dt L^k) u = dt (th L^k + (1 - th) L^{k+1} + J^{k+1}) tu + dt g^{k+1}
                Eigen::MatrixXd rhs = dt * (apply_differenced(upper.jump, tu) + upper.source + th * apply_differenced(lower.local, tu));
                if (th < 1.0) rhs += (1.0 - th) * dt * apply_differenced(upper.local, tu);
                Eigen::SparseMatrix<double> a = eye - (th * dt) * lower.local;
                a.makeCompressed();
                if (!analyzed) {
                    lu.analyzePattern(a);
                    analyzed = true;
                }
                lu.factorize(a);
                if (lu.info() != Eigen::Success) throw NoConvergence("implicit step matrix is singular");
                next[static_cast<std::size_t>(k)] = tu + lu.solve(rhs);
                upper = std::move(lower);
            }

            double res = 0.0;
            for (int k = 0; k < len; ++k) {
                const auto ks = static_cast<std::size_t>(k);
                res = std::max(res, (next[ks] - rho[ks]).cwiseAbs().maxCoeff());
            }
            if (!std::isfinite(res)) res = std::numeric_limits<double>::infinity();
            residuals.push_back(res);
            sol_.sweeps.push_back({interval_id, rec.t_begin, rec.t_end, sweep, res});
            rec.sweeps = sweep;

            if (res < cfg_.fp_tol) {
                for (int k = 0; k < len; ++k) sol_.theta[static_cast<std::size_t>(i0 + k)] = std::move(next[static_cast<std::size_t>(k)]);
                rec.converged = true;
                rec.outcome = "converged";
                rec.ratio = contraction_ratio(residuals);
                sol_.intervals.push_back(rec);
                ++sol_.subintervals;
                return true;
            }
            if (!std::isfinite(res)) {
                rec.outcome = "non-finite residual";
                break;
            }
            if (sweep >= 2 && res >= residuals[residuals.size() - 2]) {
                rec.outcome = "non-contracting residual";
                break;
            }
            std::swap(rho, next);
            if (use_z_)
                for (int k = 0; k < len; ++k)
                    rho1[static_cast<std::size_t>(k)] = theta1_from_theta(rho[static_cast<std::size_t>(k)], tg.time(i0 + k), cs_, grid_);
        }
        if (rec.outcome.empty()) rec.outcome = "fp_max reached";
        sol_.intervals.push_back(rec);
        return false;
    }

    static double contraction_ratio(const std::vector<double>& r) {
        if (r.size() < 3 || !(r[1] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
        const double last = std::max(r.back(), std::numeric_limits<double>::min());
        return std::pow(last / r[1], 1.0 / static_cast<double>(r.size() - 2));
    }

    const CoefficientSet& cs_;
    const SpatialGrid& grid_;
    const SolverConfig& cfg_;
    bool use_z_;
    PideSolution& sol_;
    LevelAssembler assembler_;
};

}  // namespace detail

/// Number of time steps actually used: the configured count, raised so that
/// dt * nu(R) stays below the explicit jump bound.
inline int effective_time_steps(const SolverConfig& cfg, const LevyModel& model) {
    const double mass = model.measure().total_mass();
    const int cfl = static_cast<int>(std::ceil(cfg.horizon * mass / cfg.jump_cfl));
    return std::max(cfg.n_time, cfl);
}

/// Solves the decoupling PIDE backward from theta(T) = h by fixed-point sweeps
/// over the frozen-coefficient linear problem, splitting [0, T] when the sweeps
/// stop contracting.
inline PideSolution solve_pide(const FbsdeProblem& problem, const LevyModel& model, const TeugelsBasis& basis,
                               const SpatialGrid& grid, const SolverConfig& config) {
    config.validate();
    validate(problem);
    if (grid.dims() != problem.state_dim)
        throw ConfigError("grid has " + std::to_string(grid.dims()) + " dimension(s) but the problem has P = " +
                          std::to_string(problem.state_dim));
    if (config.mode == SolveMode::strict && problem.z_dependent)
        throw ConfigError("strict mode requires f and g independent of z (problem '" + problem.name + "')");
    const CoefficientSet cs(problem, basis, model);
    const bool use_z = config.mode == SolveMode::extended && problem.z_dependent;

    PideSolution sol;
    sol.problem_name = problem.name;
    sol.grid = grid;
    sol.time_grid = TimeGrid(config.horizon, effective_time_steps(config, model));
    sol.value_dim = problem.value_dim;
    sol.order = problem.order;
    sol.mode = config.mode;
    sol.tail_indicator = basis.tail_indicator();
    sol.lipschitz_estimate = detail::lipschitz_probe(cs, grid, config.horizon);

    const int n_levels = sol.time_grid.n_steps() + 1;
    Eigen::MatrixXd terminal(grid.size(), problem.value_dim);
    for (int node = 0; node < grid.size(); ++node) {
        const ValueVec h = problem.terminal(grid.point(node));
        if (h.size() != problem.value_dim) throw ConfigError("terminal function of '" + problem.name + "' has the wrong size");
        for (int q = 0; q < problem.value_dim; ++q) terminal(node, q) = h(q);
    }
    sol.theta.assign(static_cast<std::size_t>(n_levels), terminal);

    detail::FixedPointDriver driver(cs, grid, config, use_z, sol);
    driver.run(0, n_levels - 1);
    sol.max_jump_fraction = driver.max_jump_fraction();

    double ratio = std::numeric_limits<double>::quiet_NaN();
    for (const IntervalRecord& r : sol.intervals)
        if (r.converged && std::isfinite(r.ratio)) ratio = std::isfinite(ratio) ? std::max(ratio, r.ratio) : r.ratio;
    sol.ratio_estimate = ratio;

    sol.theta1.resize(static_cast<std::size_t>(n_levels));
    for (int l = 0; l < n_levels; ++l)
        sol.theta1[static_cast<std::size_t>(l)] = theta1_from_theta(sol.theta[static_cast<std::size_t>(l)], sol.time_grid.time(l), cs, grid);
    return sol;
}

}  // namespace levy_fbsde
