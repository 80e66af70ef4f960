#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "levy_fbsde/errors.hpp"
#include "levy_fbsde/levy_model.hpp"
#include "levy_fbsde/rng.hpp"
#include "levy_fbsde/teugels.hpp"

namespace levy_fbsde {

/// Uniform grid 0 = t_0 < ... < t_n = T.
class TimeGrid {
public:
    TimeGrid(double horizon, int n_steps) : horizon_(horizon), n_steps_(n_steps) {
        if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("time horizon T must be positive");
        if (n_steps < 1) throw ConfigError("time grid needs at least one step");
    }

    double horizon() const noexcept { return horizon_; }
    int n_steps() const noexcept { return n_steps_; }
    double dt() const noexcept { return horizon_ / n_steps_; }
    double time(int s) const noexcept { return s >= n_steps_ ? horizon_ : s * dt(); }

    std::vector<double> times() const {
        std::vector<double> t(static_cast<std::size_t>(n_steps_) + 1);
        for (int s = 0; s <= n_steps_; ++s) t[static_cast<std::size_t>(s)] = time(s);
        return t;
    }

    /// Step s with t in (t_s, t_{s+1}].
    int step_of(double t) const noexcept {
        const int s = static_cast<int>(std::ceil(t / dt())) - 1;
        return std::clamp(s, 0, n_steps_ - 1);
    }

private:
    double horizon_;
    int n_steps_;
};

/// One realization of the driver on a time grid: Brownian increments of B
/// (variance a^2 dt), jumps binned per step, and the increments of
/// H^(1)..H^(M).
struct SamplePath {
    TimeGrid grid{1.0, 1};
    std::vector<double> dB;
    std::vector<std::vector<double>> jumps;       // jump sizes per step
    std::vector<std::vector<double>> jump_times;  // exact arrival times per step
    Eigen::MatrixXd dH;                           // n_steps x M

    int jump_count() const {
        int n = 0;
        for (const auto& j : jumps) n += static_cast<int>(j.size());
        return n;
    }

    Eigen::VectorXd terminal_H() const { return dH.colwise().sum().transpose(); }
};

/// Per-unit-time compensators int p_i dnu, i = 1..M.
inline Eigen::VectorXd jump_compensators(const LevyModel& model, const TeugelsBasis& basis) {
    Eigen::VectorXd comp(basis.order);
    for (int i = 0; i < basis.order; ++i) comp(i) = nu_integral(model, basis.p[static_cast<std::size_t>(i)]);
    return comp;
}

/// Simulates the driver. Jumps arrive as a Poisson process of rate nu(R) in
/// continuous time (exponential inter-arrivals on their own substream) and are
/// applied at the end of the step that contains them; the Brownian part uses a
/// separate substream. For a fixed RngSpec the jump set is therefore the same
/// on every grid, which makes refinement studies pathwise.
inline SamplePath sample_path(const LevyModel& model, const TeugelsBasis& basis, const TimeGrid& grid,
                              const RngSpec& rng) {
    const int n = grid.n_steps();
    const int m = basis.order;
    const double dt = grid.dt();
    SamplePath path;
    path.grid = grid;
    path.dB.assign(static_cast<std::size_t>(n), 0.0);
    path.jumps.assign(static_cast<std::size_t>(n), {});
    path.jump_times.assign(static_cast<std::size_t>(n), {});
    path.dH = Eigen::MatrixXd::Zero(n, m);

    const double rate = model.measure().total_mass();
    if (rate > 0.0) {
        auto engine = make_engine(rng, 0);
        std::exponential_distribution<double> wait(rate);
        for (double t = wait(engine); t <= grid.horizon(); t += wait(engine)) {
            const int s = grid.step_of(t);
            path.jump_times[static_cast<std::size_t>(s)].push_back(t);
            path.jumps[static_cast<std::size_t>(s)].push_back(model.measure().sample_jump(engine));
        }
    }
    if (model.a() > 0.0) {
        auto engine = make_engine(rng, 1);
        std::normal_distribution<double> normal(0.0, model.a() * std::sqrt(dt));
        for (double& db : path.dB) db = normal(engine);
    }

    const Eigen::VectorXd comp = jump_compensators(model, basis);
    for (int s = 0; s < n; ++s) {
        for (int i = 0; i < m; ++i) {
            double inc = basis.q_at_zero[static_cast<std::size_t>(i)] * path.dB[static_cast<std::size_t>(s)] - dt * comp(i);
            for (double y : path.jumps[static_cast<std::size_t>(s)]) inc += basis.p[static_cast<std::size_t>(i)](y);
            path.dH(s, i) = inc;
        }
    }
    return path;
}

/// Chi-square goodness of fit of jump counts against Poisson(rate * T).
struct PoissonCountTest {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
    bool passed = true;  // at the 1% level
};

inline PoissonCountTest poisson_count_test(std::span<const int> counts, double mean_count, double level = 0.01) {
    PoissonCountTest out;
    const double n = static_cast<double>(counts.size());
    if (counts.empty()) return out;
    if (mean_count <= 0.0) {
        out.passed = std::all_of(counts.begin(), counts.end(), [](int c) { return c == 0; });
        out.p_value = out.passed ? 1.0 : 0.0;
        return out;
    }
    const boost::math::poisson_distribution<double> law(mean_count);
    int kmax = 0;
    for (int c : counts) kmax = std::max(kmax, c);

    // Greedy binning so every bin expects at least 5 observations; the last
    // bin absorbs the upper tail.
    std::vector<std::pair<int, int>> bins;  // [lo, hi], hi = -1 means open tail
    std::vector<double> expected;
    int lo = 0;
    double acc = 0.0;
    for (int k = 0;; ++k) {
        acc += boost::math::pdf(law, k) * n;
        const double tail = boost::math::cdf(boost::math::complement(law, k)) * n;
        if (acc >= 5.0 && tail >= 5.0) {
            bins.push_back({lo, k});
            expected.push_back(acc);
            lo = k + 1;
            acc = 0.0;
        } else if (tail < 5.0) {
            bins.push_back({lo, -1});
            expected.push_back(acc + tail);
            break;
        }
    }
    if (bins.size() < 2) return out;
    std::vector<double> observed(bins.size(), 0.0);
    for (int c : counts) {
        for (std::size_t b = 0; b < bins.size(); ++b) {
            if (c >= bins[b].first && (bins[b].second < 0 || c <= bins[b].second)) {
                observed[b] += 1.0;
                break;
            }
        }
    }
    for (std::size_t b = 0; b < bins.size(); ++b)
        out.statistic += (observed[b] - expected[b]) * (observed[b] - expected[b]) / expected[b];
    out.dof = static_cast<int>(bins.size()) - 1;
    const boost::math::chi_squared_distribution<double> chi(out.dof);
    out.p_value = boost::math::cdf(boost::math::complement(chi, out.statistic));
    out.passed = out.p_value >= level;
    return out;
}

/// CLT-band diagnostics of H_T: means against 0, covariances against T*delta_ij,
/// and the jump-count law. Entries with |z| > 4 are flagged.
struct MartingaleReport {
    int n_paths = 0;
    double horizon = 0.0;
    Eigen::VectorXd mean, mean_se, mean_z;
    Eigen::MatrixXd cov, cov_se, cov_z;
    PoissonCountTest counts;
    std::vector<std::string> flags;

    bool passed() const { return flags.empty() && counts.passed; }
};

inline constexpr double kZFlag = 4.0;

inline MartingaleReport martingale_stats_from_terminal(const Eigen::MatrixXd& terminal, std::span<const int> jump_counts,
                                                       double horizon, double jump_rate) {
    const auto n = terminal.rows();
    const auto m = terminal.cols();
    if (n < 100) throw ConfigError("martingale statistics need at least 100 paths");
    MartingaleReport rep;
    rep.n_paths = static_cast<int>(n);
    rep.horizon = horizon;
    const double nd = static_cast<double>(n);
    rep.mean = terminal.colwise().mean().transpose();
    const Eigen::MatrixXd centered = terminal.rowwise() - rep.mean.transpose();
    rep.mean_se = (centered.colwise().squaredNorm().transpose() / (nd - 1.0)).cwiseSqrt() / std::sqrt(nd);
    rep.mean_z = rep.mean.cwiseQuotient(rep.mean_se.cwiseMax(1e-300));
    rep.cov.resize(m, m);
    rep.cov_se.resize(m, m);
    rep.cov_z.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const Eigen::ArrayXd prod = centered.col(i).array() * centered.col(j).array();
            const double c = prod.sum() / (nd - 1.0);
            const double var = (prod - prod.mean()).square().sum() / (nd - 1.0);
            const double se = std::sqrt(var / nd);
            const double target = i == j ? horizon : 0.0;
            rep.cov(i, j) = c;
            rep.cov_se(i, j) = se;
            rep.cov_z(i, j) = (c - target) / std::max(se, 1e-300);
        }
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        if (std::abs(rep.mean_z(i)) > kZFlag)
            rep.flags.push_back("mean of H^(" + std::to_string(i + 1) + ")_T outside 4 SE");
        for (Eigen::Index j = 0; j < m; ++j)
            if (std::abs(rep.cov_z(i, j)) > kZFlag)
                rep.flags.push_back("cov(H^(" + std::to_string(i + 1) + "), H^(" + std::to_string(j + 1) +
                                    ")) outside 4 SE of T*delta_ij");
    }
    rep.counts = poisson_count_test(jump_counts, jump_rate * horizon);
    return rep;
}

inline MartingaleReport martingale_stats(std::span<const SamplePath> paths, double jump_rate) {
    if (paths.empty()) throw ConfigError("martingale statistics need paths");
    Eigen::MatrixXd terminal(static_cast<Eigen::Index>(paths.size()), paths.front().dH.cols());
    std::vector<int> counts;
    for (std::size_t k = 0; k < paths.size(); ++k) {
        terminal.row(static_cast<Eigen::Index>(k)) = paths[k].terminal_H().transpose();
        counts.push_back(paths[k].jump_count());
    }
    return martingale_stats_from_terminal(terminal, counts, paths.front().grid.horizon(), jump_rate);
}

/// Deterministic integrand h(s, y) for the jump-sum representation check.
/// `degree_in_y` is the polynomial degree in y, or -1 when not polynomial.
struct ChaosIntegrand {
    std::function<double(double, double)> fn;
    int degree_in_y = -1;
};

struct ChaosIdentityReport {
    std::vector<double> residuals;  // per path: jump sum minus chaos expansion
    double max_abs = 0.0;
    double rms = 0.0;
    double mean = 0.0;
    bool truncation_warning = false;  // integrand outside the span of p_1..p_M
};

/// Compares, per path, sum_{s<=T} h(s, dL_s) with
/// sum_i int (int h p_i dnu) dH^(i) + int int h dnu ds, truncated at M and
/// discretized with left-point integrands. The jump sum uses the exact arrival
/// times, so the residual measures the time discretization of the right side.
inline ChaosIdentityReport chaos_identity_check(const LevyModel& model, const TeugelsBasis& basis,
                                                std::span<const SamplePath> paths, const ChaosIntegrand& integrand) {
    ChaosIdentityReport rep;
    rep.truncation_warning = integrand.degree_in_y < 0 || integrand.degree_in_y > basis.order;
    if (paths.empty()) return rep;
    const TimeGrid& grid = paths.front().grid;
    const int n = grid.n_steps();
    const int m = basis.order;
    Eigen::MatrixXd coeff(n, m);
    Eigen::VectorXd drift(n);
    for (int s = 0; s < n; ++s) {
        const double t = grid.time(s);
        for (int i = 0; i < m; ++i)
            coeff(s, i) = nu_integral(model, [&](double y) { return integrand.fn(t, y) * basis.p[static_cast<std::size_t>(i)](y); });
        drift(s) = nu_integral(model, [&](double y) { return integrand.fn(t, y); }) * grid.dt();
    }
    for (const SamplePath& path : paths) {
        double lhs = 0.0, rhs = 0.0;
        for (int s = 0; s < n; ++s) {
            const auto& sizes = path.jumps[static_cast<std::size_t>(s)];
            const auto& times = path.jump_times[static_cast<std::size_t>(s)];
            for (std::size_t k = 0; k < sizes.size(); ++k) lhs += integrand.fn(times[k], sizes[k]);
            rhs += coeff.row(s).dot(path.dH.row(s)) + drift(s);
        }
        rep.residuals.push_back(lhs - rhs);
    }
    double sq = 0.0;
    for (double r : rep.residuals) {
        rep.max_abs = std::max(rep.max_abs, std::abs(r));
        rep.mean += r;
        sq += r * r;
    }
    rep.mean /= static_cast<double>(rep.residuals.size());
    rep.rms = std::sqrt(sq / static_cast<double>(rep.residuals.size()));
    return rep;
}

}  // namespace levy_fbsde
