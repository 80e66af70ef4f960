#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "levy_fbsde/path_sim.hpp"
#include "levy_fbsde/pide_solver.hpp"
#include "levy_fbsde/problem.hpp"
#include "levy_fbsde/rng.hpp"

namespace levy_fbsde {

/// Forward path with Y = theta(t, X) and Z = theta^(1)(t, X_{t-}) read from a
/// PIDE solution. Z row s (Q*M entries, q*M + i) is the integrand over step s.
struct FbsdePath {
    SamplePath base;
    Eigen::MatrixXd X;  // (steps + 1) x P
    Eigen::MatrixXd Y;  // (steps + 1) x Q
    Eigen::MatrixXd Z;  // steps x (Q*M)
    bool escaped = false;
    double escape_time = std::numeric_limits<double>::quiet_NaN();
    /// Largest |realized jump of X - sum of delta over the step's jumps|.
    double jump_defect = 0.0;

    int steps() const noexcept { return static_cast<int>(Z.rows()); }
};

/// Euler scheme for dX = f(t, X, theta, theta1) dt + sigma(t, X, theta) dH on
/// the path's grid. Leaving the PIDE grid truncates the path and marks it.
inline FbsdePath simulate_forward(const PideSolution& sol, const CoefficientSet& cs, const StateVec& x0,
                                  SamplePath base) {
    const FbsdeProblem& pb = cs.problem();
    const TimeGrid& grid = base.grid;
    if (std::abs(grid.horizon() - sol.horizon()) > 1e-12 * sol.horizon())
        throw ConfigError("path horizon differs from the PIDE horizon");
    if (x0.size() != pb.state_dim) throw ConfigError("x0 has the wrong dimension");
    const int n = grid.n_steps();
    const int p_dim = pb.state_dim, q_dim = pb.value_dim, m = cs.order();
    const double dt = grid.dt();
    const Eigen::VectorXd comp = cs.compensator();

    FbsdePath path;
    path.X.resize(n + 1, p_dim);
    path.Y.resize(n + 1, q_dim);
    path.Z.resize(n, q_dim * m);
    StateVec x = x0;
    auto truncate = [&](int rows_x, int rows_yz, double t) {
        path.escaped = true;
        path.escape_time = t;
        path.X.conservativeResize(rows_x, p_dim);
        path.Y.conservativeResize(rows_yz, q_dim);
        path.Z.conservativeResize(std::min(rows_yz, n), q_dim * m);
    };
    path.X.row(0) = x.transpose();
    if (!sol.grid.contains(x)) truncate(1, 0, 0.0);
    for (int s = 0; s < n && !path.escaped; ++s) {
        const double t = grid.time(s);
        const ValueVec y = sol.value(t, x);
        const ZMatrix z = sol.z_value(t, x);
        path.Y.row(s) = y.transpose();
        for (int q = 0; q < q_dim; ++q)
            for (int i = 0; i < m; ++i) path.Z(s, q * m + i) = z(q, i);

        const VolMatrix sig = cs.sigma(t, x, y);
        const StateVec drift = pb.drift(t, x, y, z) * dt;
        const Eigen::VectorXd dh = base.dH.row(s).transpose();
        const auto& jumps = base.jumps[static_cast<std::size_t>(s)];
        if (!jumps.empty()) {
            // jump part of the increment against sum of delta over the step's jumps
            const Eigen::VectorXd cont = cs.q_at_zero() * base.dB[static_cast<std::size_t>(s)] - dt * comp;
            StateVec expected = StateVec::Zero(p_dim);
            for (double dl : jumps) expected += cs.delta_from(sig, dl);
            const StateVec realized = (drift + sig * dh) - drift - sig * cont;
            path.jump_defect = std::max(path.jump_defect, (realized - expected).cwiseAbs().maxCoeff());
        }
        x += drift + sig * dh;
        path.X.row(s + 1) = x.transpose();
        if (!sol.grid.contains(x)) truncate(s + 2, s + 1, grid.time(s + 1));
    }
    if (!path.escaped) path.Y.row(n) = sol.value(grid.horizon(), x).transpose();
    path.base = std::move(base);
    return path;
}

inline FbsdePath simulate_forward(const PideSolution& sol, const CoefficientSet& cs, const LevyModel& model,
                                  const TeugelsBasis& basis, const StateVec& x0, const TimeGrid& grid,
                                  const RngSpec& rng) {
    return simulate_forward(sol, cs, x0, sample_path(model, basis, grid, rng));
}

/// R = Y_0 - h(X_T) - sum g dt + sum Z dH; zero for an exact solution.
inline ValueVec bsde_residual(const FbsdePath& path, const FbsdeProblem& problem) {
    if (path.escaped) throw ConfigError("bsde_residual needs a complete path");
    const int n = path.steps();
    const int p_dim = problem.state_dim, q_dim = problem.value_dim, m = problem.order;
    const TimeGrid& grid = path.base.grid;
    const double dt = grid.dt();
    StateVec xT(p_dim);
    for (int k = 0; k < p_dim; ++k) xT(k) = path.X(n, k);
    ValueVec r = detail::row_value(path.Y, 0) - problem.terminal(xT);
    for (int s = 0; s < n; ++s) {
        StateVec x(p_dim);
        for (int k = 0; k < p_dim; ++k) x(k) = path.X(s, k);
        const ValueVec y = detail::row_value(path.Y, s);
        const ZMatrix z = detail::unpack_z(path.Z, s, q_dim, m);
        r -= problem.driver(grid.time(s), x, y, z) * dt;
        r += z * path.base.dH.row(s).transpose();
    }
    return r;
}

struct UniquenessReport {
    double y_gap = 0.0;  // sup_s |Y_s - theta(t_s, X_s)|
    double z_gap = 0.0;  // (sum_s |Z_s - theta1(t_s, X_s)|^2 dt)^(1/2)
};

/// Distance of a candidate (Y, Z) on a path from the decoupling field of
/// `reference` evaluated along the same X.
inline UniquenessReport uniqueness_probe(const PideSolution& reference, const FbsdePath& candidate) {
    UniquenessReport rep;
    const TimeGrid& grid = candidate.base.grid;
    const int p_dim = static_cast<int>(candidate.X.cols());
    const int m = reference.order;
    double zsq = 0.0;
    for (int s = 0; s < candidate.Y.rows(); ++s) {
        StateVec x(p_dim);
        for (int k = 0; k < p_dim; ++k) x(k) = candidate.X(s, k);
        const double t = grid.time(s);
        const ValueVec y = reference.value(t, x);
        for (int q = 0; q < y.size(); ++q) rep.y_gap = std::max(rep.y_gap, std::abs(candidate.Y(s, q) - y(q)));
        if (s < candidate.steps()) {
            const ZMatrix z = reference.z_value(t, x);
            for (int q = 0; q < z.rows(); ++q)
                for (int i = 0; i < m; ++i) {
                    const double d = candidate.Z(s, q * m + i) - z(q, i);
                    zsq += d * d * grid.dt();
                }
        }
    }
    rep.z_gap = std::sqrt(zsq);
    return rep;
}

/// Residual statistics over many paths. Escaped paths are excluded and
/// counted; more than 1% exclusions fails the study.
struct ResidualStudy {
    int n_paths = 0;
    int n_steps = 0;
    Eigen::MatrixXd residuals;  // n_paths x Q (NaN rows for escaped paths)
    std::vector<std::uint8_t> escaped;
    Eigen::VectorXd mean, se, rms;
    double exclusion_rate = 0.0;
    double max_jump_defect = 0.0;

    bool mean_within(double z_band) const {
        for (Eigen::Index q = 0; q < mean.size(); ++q)
            if (!(std::abs(mean(q)) <= z_band * se(q))) return false;
        return true;
    }
    bool passed() const { return exclusion_rate <= 0.01 && mean_within(4.0); }
};

inline ResidualStudy residual_study(const PideSolution& sol, const CoefficientSet& cs, const LevyModel& model,
                                    const TeugelsBasis& basis, const StateVec& x0, const TimeGrid& grid, int n_paths,
                                    std::uint64_t seed, int threads) {
    if (n_paths < 2) throw ConfigError("residual study needs at least 2 paths");
    const int q_dim = cs.problem().value_dim;
    ResidualStudy st;
    st.n_paths = n_paths;
    st.n_steps = grid.n_steps();
    st.residuals = Eigen::MatrixXd::Constant(n_paths, q_dim, std::numeric_limits<double>::quiet_NaN());
    st.escaped.assign(static_cast<std::size_t>(n_paths), 0);
    std::vector<double> defects(static_cast<std::size_t>(n_paths), 0.0);
    parallel_for(static_cast<std::size_t>(n_paths), threads, [&](std::size_t k) {
        const FbsdePath path = simulate_forward(sol, cs, model, basis, x0, grid, {seed, k});
        defects[k] = path.jump_defect;
        if (path.escaped) {
            st.escaped[k] = 1;
            return;
        }
        st.residuals.row(static_cast<Eigen::Index>(k)) = bsde_residual(path, cs.problem()).transpose();
    });
    int kept = 0;
    st.mean = Eigen::VectorXd::Zero(q_dim);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(q_dim);
    for (int k = 0; k < n_paths; ++k) {
        st.max_jump_defect = std::max(st.max_jump_defect, defects[static_cast<std::size_t>(k)]);
        if (st.escaped[static_cast<std::size_t>(k)]) continue;
        ++kept;
        st.mean += st.residuals.row(k).transpose();
        sq += st.residuals.row(k).transpose().cwiseAbs2();
    }
    st.exclusion_rate = static_cast<double>(n_paths - kept) / n_paths;
    if (kept < 2) throw ConfigError("fewer than 2 paths stayed inside the PIDE grid");
    st.mean /= kept;
    st.rms = (sq / kept).cwiseSqrt();
    Eigen::VectorXd var = Eigen::VectorXd::Zero(q_dim);
    for (int k = 0; k < n_paths; ++k) {
        if (st.escaped[static_cast<std::size_t>(k)]) continue;
        var += (st.residuals.row(k).transpose() - st.mean).cwiseAbs2();
    }
    st.se = (var / (kept - 1.0) / static_cast<double>(kept)).cwiseSqrt();
    return st;
}

}  // namespace levy_fbsde
