#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "levy_fbsde/fbsde_solver.hpp"
#include "levy_fbsde/io/csv.hpp"
#include "levy_fbsde/path_sim.hpp"
#include "levy_fbsde/pide_solver.hpp"
#include "levy_fbsde/pricing.hpp"
#include "levy_fbsde/teugels.hpp"
#include "levy_fbsde/verify/oracles.hpp"

namespace levy_fbsde::verify {

struct CheckContext {
    std::optional<std::filesystem::path> out;  // artifacts are written here when set
    bool deterministic = false;
    int threads = 1;
    std::uint64_t seed = 20240601;
};

struct CheckResult {
    std::string id;
    std::string title;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
    double budget_seconds = 0.0;
};

namespace detail {

inline std::string num(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

inline FbsdeProblem constant_coefficient_problem(std::string name, double drift, const VolMatrix& vol,
                                                 FbsdeProblem::TerminalFn terminal) {
    FbsdeProblem pb;
    pb.name = std::move(name);
    pb.order = static_cast<int>(vol.cols());
    pb.drift = [drift](double, const StateVec&, const ValueVec&, const ZMatrix&) { return StateVec::Constant(1, drift); };
    pb.volatility = [vol](double, const StateVec&, const ValueVec&) { return vol; };
    pb.driver = [](double, const StateVec&, const ValueVec&, const ZMatrix&) { return ValueVec::Zero(1); };
    pb.terminal = std::move(terminal);
    return pb;
}

inline VolMatrix scalar_vol(double s) {
    VolMatrix v(1, 1);
    v(0, 0) = s;
    return v;
}

template <class Fn>
CheckResult timed(std::string id, std::string title, double budget, Fn&& body) {
    CheckResult r;
    r.id = std::move(id);
    r.title = std::move(title);
    r.budget_seconds = budget;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace detail

// Heat-kernel configuration shared by the PIDE oracle and the BSDE residual study.
struct HeatCase {
    double s = 0.5, amplitude = 1.0, mean = 0.0, width = 0.5, horizon = 1.0;
    LevyModel model{1.0, LevyMeasure::zero()};
    TeugelsBasis basis = build_basis(model, 1);

    FbsdeProblem problem() const {
        const double a = amplitude, m = mean, w = width;
        return detail::constant_coefficient_problem("heat", 0.0, detail::scalar_vol(s), [a, m, w](const StateVec& x) {
            const double u = (x(0) - m) / w;
            return ValueVec::Constant(1, a * std::exp(-0.5 * u * u));
        });
    }
    SpatialGrid grid(int n = 401) const { return SpatialGrid({Axis{-5.0, 5.0, n}}); }
    double exact(double x, double t) const {
        return oracle::heat_gaussian(x, amplitude, mean, width, 0.5 * s * s, horizon - t);
    }
};

// Compensated single-atom jump case with constant displacement kappa.
struct PoissonCase {
    double lambda = 2.0, atom = 0.5, kappa = 0.3, horizon = 0.5;
    LevyModel model{0.0, LevyMeasure::atomic({{0.5, 2.0}})};
    TeugelsBasis basis = build_basis(model, 1);

    static double h(double x) { return std::exp(-x * x / 0.5); }
    FbsdeProblem problem() const {
        const double sig = kappa / basis.p[0](atom);
        return detail::constant_coefficient_problem("poisson", 0.0, detail::scalar_vol(sig),
                                                    [](const StateVec& x) { return ValueVec::Constant(1, h(x(0))); });
    }
    double exact(double x, double t) const {
        return oracle::compensated_poisson_mixture(h, x, kappa, lambda, horizon - t);
    }
};

// y-coupled problem: sigma = s0 (1 + eps sin y), g = L cos y, h = sin x.
inline FbsdeProblem coupled_problem(double s0 = 0.5, double eps = 0.5, double lipschitz = 5.0) {
    FbsdeProblem pb;
    pb.name = "coupled";
    pb.drift = [](double, const StateVec&, const ValueVec&, const ZMatrix&) { return StateVec::Zero(1); };
    pb.volatility = [=](double, const StateVec&, const ValueVec& y) {
        return detail::scalar_vol(s0 * (1.0 + eps * std::sin(y(0))));
    };
    pb.driver = [=](double, const StateVec&, const ValueVec& y, const ZMatrix&) {
        return ValueVec::Constant(1, lipschitz * std::cos(y(0)));
    };
    pb.terminal = [](const StateVec& x) { return ValueVec::Constant(1, std::sin(x(0))); };
    return pb;
}

struct BlackScholesCase {
    double spot = 100.0, strike = 100.0, r = 0.05, vol = 0.2, maturity = 0.25;
    LevyModel model{1.0, LevyMeasure::zero()};
    TeugelsBasis basis = build_basis(model, 1);

    /// `drift` is the log-price drift; the risk-neutral one is r - vol^2 / 2.
    MarketModel market(double drift) const {
        AssetVec s0(1), f(1);
        s0 << spot;
        f << drift;
        return constant_market(r, f, detail::scalar_vol(vol), Payoff::call(strike), s0);
    }
    MarketModel market() const { return market(r - 0.5 * vol * vol); }
    SpatialGrid grid(int n = 401) const {
        const double c = std::log(spot);
        return SpatialGrid({Axis{c - 1.5, c + 1.5, n}});
    }
    SolverConfig solver() const {
        SolverConfig c;
        c.horizon = maturity;
        return c;
    }
    double exact() const { return oracle::black_scholes_call(spot, strike, r, vol, maturity); }
};

struct JumpMarketCase {
    double spot = 100.0, strike = 100.0, r = 0.05, lambda = 1.0, atom = 1.0, kappa = -0.2, maturity = 0.5;
    LevyModel model{0.0, LevyMeasure::atomic({{1.0, 1.0}})};
    TeugelsBasis basis = build_basis(model, 1);

    double log_drift() const { return r - lambda * (std::exp(kappa) - 1.0 - kappa); }
    MarketModel market() const {
        AssetVec s0(1), f(1);
        s0 << spot;
        f << log_drift();
        return constant_market(r, f, detail::scalar_vol(kappa / basis.p[0](atom)), Payoff::call(strike), s0);
    }
    double exact() const {
        // compensated log-price: q_T = q_0 + (f - kappa lambda) T + kappa N_T
        const double k = strike;
        return oracle::compound_poisson_price([k](double s) { return std::max(s - k, 0.0); }, spot, r,
                                              log_drift() - kappa * lambda, kappa, lambda, maturity);
    }
};

inline CheckResult check_orthogonality_suite(const CheckContext& ctx) {
    return detail::timed("1", "orthogonality suite", 1.0, [&](CheckResult& r) {
        struct Case {
            std::string label;
            LevyModel model;
            int order;
        };
        const std::vector<Case> cases{
            {"brownian", LevyModel(1.0, LevyMeasure::zero()), 1},
            {"one_atom", LevyModel(1.0, LevyMeasure::atomic({{1.0, 1.0}})), 2},
            {"two_atoms", LevyModel(0.5, LevyMeasure::atomic({{-0.5, 1.0}, {1.0, 2.0}})), 3},
            {"three_atoms", LevyModel(0.3, LevyMeasure::atomic({{-0.8, 0.5}, {0.4, 1.5}, {1.2, 0.7}})), 4},
            {"truncated_gaussian", LevyModel(0.4, LevyMeasure::truncated_gaussian(2.0, 0.0, 0.5, {-1.5, 1.5}, 0.05)), 5},
        };
        std::optional<io::CsvWriter> csv;
        if (ctx.out) csv.emplace(*ctx.out / "ortho_suite.csv", std::vector<std::string>{"model", "M", "max_gram", "max_lemma"}, ctx.deterministic);
        double worst = 0.0;
        for (const Case& c : cases) {
            for (int m = 1; m <= c.order; ++m) {
                const OrthogonalityReport rep = check_orthogonality(build_basis(c.model, m), c.model);
                worst = std::max(worst, rep.max_residual());
                if (csv) csv->raw(c.label).cell(m).cell(rep.max_gram).cell(rep.max_lemma).end_row();
            }
        }
        r.passed = worst < 1e-9;
        r.detail = "max residual " + detail::num(worst) + " over 5 models (< 1e-9)";
    });
}

inline CheckResult check_martingale_statistics(const CheckContext& ctx) {
    return detail::timed("2", "martingale statistics", 30.0, [&](CheckResult& r) {
        const LevyModel model(0.5, LevyMeasure::atomic({{-0.5, 1.0}, {1.0, 2.0}}));
        const TeugelsBasis basis = build_basis(model, 3);
        const TimeGrid grid(1.0, 200);
        const int n_paths = 10000;
        Eigen::MatrixXd terminal(n_paths, basis.order);
        std::vector<int> counts(n_paths);
        parallel_for(static_cast<std::size_t>(n_paths), ctx.threads, [&](std::size_t k) {
            const SamplePath p = sample_path(model, basis, grid, {ctx.seed, k});
            terminal.row(static_cast<Eigen::Index>(k)) = p.terminal_H().transpose();
            counts[k] = p.jump_count();
        });
        const MartingaleReport rep = martingale_stats_from_terminal(terminal, counts, grid.horizon(), model.measure().total_mass());
        if (ctx.out) {
            io::CsvWriter w(*ctx.out / "martingale_stats.csv", {"quantity", "i", "j", "value", "se", "z"}, ctx.deterministic);
            for (int i = 0; i < basis.order; ++i) w.raw("mean").cell(i + 1).cell(0).cell(rep.mean(i)).cell(rep.mean_se(i)).cell(rep.mean_z(i)).end_row();
            for (int i = 0; i < basis.order; ++i)
                for (int j = 0; j < basis.order; ++j)
                    w.raw("cov").cell(i + 1).cell(j + 1).cell(rep.cov(i, j)).cell(rep.cov_se(i, j)).cell(rep.cov_z(i, j)).end_row();
            w.raw("poisson_chi2").cell(rep.counts.dof).cell(0).cell(rep.counts.statistic).cell(0.0).cell(rep.counts.p_value).end_row();
        }
        r.passed = rep.passed();
        r.detail = "max |z| mean " + detail::num(rep.mean_z.cwiseAbs().maxCoeff()) + ", cov " +
                   detail::num(rep.cov_z.cwiseAbs().maxCoeff()) + " (< 4); Poisson chi2 p = " + detail::num(rep.counts.p_value) +
                   " (> 0.01)";
    });
}

inline CheckResult check_chaos_identity(const CheckContext& ctx) {
    return detail::timed("3", "chaos representation identity", 10.0, [&](CheckResult& r) {
        const LevyModel model(0.0, LevyMeasure::atomic({{-0.5, 1.0}, {1.0, 1.5}}));
        const TeugelsBasis basis = build_basis(model, 2);
        const ChaosIntegrand fn{[&](double s, double y) { return std::cos(3.0 * s) * basis.p[0](y) + s * basis.p[1](y); }, 2};
        auto run = [&](int n) {
            std::vector<SamplePath> paths;
            for (std::uint64_t k = 0; k < 100; ++k) paths.push_back(sample_path(model, basis, TimeGrid(1.0, n), {ctx.seed + 3, k}));
            return chaos_identity_check(model, basis, paths, fn);
        };
        const ChaosIdentityReport coarse = run(200), fine = run(400);
        const double ratio = coarse.rms / fine.rms;
        if (ctx.out) {
            io::CsvWriter w(*ctx.out / "chaos_identity.csv", {"path", "residual_dt_1_200", "residual_dt_1_400"}, ctx.deterministic);
            for (std::size_t k = 0; k < coarse.residuals.size(); ++k) w.cell(k).cell(coarse.residuals[k]).cell(fine.residuals[k]).end_row();
        }
        r.passed = coarse.max_abs < 5e-2 && ratio >= 1.5 && !coarse.truncation_warning;
        r.detail = "max |residual| " + detail::num(coarse.max_abs) + " at dt=1/200 (< 5e-2); rms ratio on halving " +
                   detail::num(ratio) + " (>= 1.5)";
    });
}

inline CheckResult check_heat_oracle(const CheckContext& ctx) {
    return detail::timed("4a", "PIDE heat-kernel oracle", 60.0, [&](CheckResult& r) {
        const HeatCase hc;
        SolverConfig cfg;
        cfg.horizon = hc.horizon;
        cfg.n_time = 200;
        const SpatialGrid grid = hc.grid(401);
        const PideSolution sol = solve_pide(hc.problem(), hc.model, hc.basis, grid, cfg);
        double err = 0.0;
        for (int node = 0; node < grid.size(); ++node)
            err = std::max(err, std::abs(sol.theta[0](node, 0) - hc.exact(grid.point(node)(0), 0.0)));
        if (ctx.out) io::write_theta(*ctx.out / "heat_theta.csv", sol, {0, sol.levels() - 1}, ctx.deterministic);
        r.passed = err < 1e-3;
        r.detail = "max grid error " + detail::num(err) + " (< 1e-3), 401 points, 200 steps";
    });
}

inline CheckResult check_poisson_oracle(const CheckContext& ctx) {
    return detail::timed("4b", "PIDE compensated-Poisson oracle", 60.0, [&](CheckResult& r) {
        const PoissonCase pc;
        SolverConfig cfg;
        cfg.horizon = pc.horizon;
        cfg.n_time = 1000;
        const SpatialGrid grid({Axis{-6.0, 6.0, 401}});
        const PideSolution sol = solve_pide(pc.problem(), pc.model, pc.basis, grid, cfg);
        double err = 0.0;
        for (int node = 0; node < grid.size(); ++node)
            err = std::max(err, std::abs(sol.theta[0](node, 0) - pc.exact(grid.point(node)(0), 0.0)));
        if (ctx.out) io::write_theta(*ctx.out / "poisson_theta.csv", sol, {0, sol.levels() - 1}, ctx.deterministic);
        r.passed = err < 1e-3;
        r.detail = "max grid error " + detail::num(err) + " (< 1e-3) against the Poisson mixture series";
    });
}

inline CheckResult check_constant_preserved(const CheckContext&) {
    return detail::timed("4c", "PIDE constant solution", 60.0, [&](CheckResult& r) {
        const LevyModel model(0.5, LevyMeasure::atomic({{-0.5, 1.0}, {1.0, 2.0}}));
        const TeugelsBasis basis = build_basis(model, 3);
        VolMatrix vol(1, 3);
        vol << 0.3, -0.2, 0.1;
        FbsdeProblem pb = detail::constant_coefficient_problem("constant", 0.4, vol,
                                                               [](const StateVec&) { return ValueVec::Constant(1, 2.5); });
        pb.volatility = [vol](double, const StateVec& x, const ValueVec& y) {
            return VolMatrix(vol * (1.0 + 0.3 * std::sin(y(0) + x(0))));
        };
        SolverConfig cfg;
        const PideSolution sol = solve_pide(pb, model, basis, SpatialGrid({Axis{-4.0, 4.0, 201}}), cfg);
        double dev = 0.0, z = 0.0;
        for (int l = 0; l < sol.levels(); ++l) {
            dev = std::max(dev, (sol.theta[static_cast<std::size_t>(l)].array() - 2.5).abs().maxCoeff());
            z = std::max(z, sol.theta1[static_cast<std::size_t>(l)].cwiseAbs().maxCoeff());
        }
        r.passed = dev < 1e-12 && z < 1e-12;
        r.detail = "max |theta - c| " + detail::num(dev) + ", max |theta1| " + detail::num(z) + " (< 1e-12)";
    });
}

inline CheckResult check_fixed_point(const CheckContext& ctx) {
    return detail::timed("5", "fixed-point behaviour", 120.0, [&](CheckResult& r) {
        const LevyModel model(1.0, LevyMeasure::zero());
        const TeugelsBasis basis = build_basis(model, 1);
        const FbsdeProblem pb = coupled_problem();
        const SpatialGrid grid({Axis{-6.0, 6.0, 401}});
        SolverConfig cfg;
        cfg.horizon = 0.1;
        const PideSolution short_run = solve_pide(pb, model, basis, grid, cfg);
        cfg.horizon = 1.0;
        const PideSolution long_run = solve_pide(pb, model, basis, grid, cfg);

        bool geometric = short_run.intervals.size() == 1 && short_run.intervals[0].converged;
        double worst_ratio = 0.0;
        for (std::size_t k = 1; k < short_run.sweeps.size(); ++k) {
            const double q = short_run.sweeps[k].residual / short_run.sweeps[k - 1].residual;
            worst_ratio = std::max(worst_ratio, q);
        }
        geometric = geometric && worst_ratio < 1.0;
        const int sweeps = static_cast<int>(short_run.sweeps.size());
        if (ctx.out) {
            io::write_iteration_log(*ctx.out / "fixed_point_T0.1.csv", short_run, ctx.deterministic);
            io::write_iteration_log(*ctx.out / "fixed_point_T1.csv", long_run, ctx.deterministic);
        }
        r.passed = geometric && sweeps <= 10 && long_run.subintervals >= 2;
        r.detail = "T=0.1: " + std::to_string(sweeps) + " sweeps (<= 10), worst residual ratio " + detail::num(worst_ratio) +
                   " (< 1); T=1: " + std::to_string(long_run.subintervals) + " chained subintervals (>= 2)";
    });
}

inline CheckResult check_bsde_residual(const CheckContext& ctx) {
    return detail::timed("6", "BSDE residual", 120.0, [&](CheckResult& r) {
        const HeatCase hc;
        SolverConfig cfg;
        cfg.horizon = hc.horizon;
        cfg.n_time = 400;
        const FbsdeProblem pb = hc.problem();
        const PideSolution sol = solve_pide(pb, hc.model, hc.basis, hc.grid(401), cfg);
        const CoefficientSet cs(pb, hc.basis, hc.model);
        const StateVec x0 = StateVec::Zero(1);
        std::vector<ResidualStudy> studies;
        for (int n : {100, 200, 400})
            studies.push_back(residual_study(sol, cs, hc.model, hc.basis, x0, TimeGrid(hc.horizon, n), 10000, ctx.seed + 6, ctx.threads));
        bool ok = true;
        std::string text;
        for (std::size_t k = 0; k < studies.size(); ++k) {
            const ResidualStudy& st = studies[k];
            ok = ok && st.passed();
            if (k > 0) ok = ok && st.rms(0) <= studies[k - 1].rms(0);
            text += (k ? "; " : "") + std::string("dt=1/") + std::to_string(st.n_steps) + " mean " + detail::num(st.mean(0)) +
                    " se " + detail::num(st.se(0)) + " rms " + detail::num(st.rms(0));
        }
        if (ctx.out) io::write_residuals(*ctx.out / "residuals.csv", studies.back(), ctx.deterministic);
        r.passed = ok;
        r.detail = text;
    });
}

inline CheckResult check_black_scholes(const CheckContext& ctx) {
    return detail::timed("7", "Black-Scholes reduction", 30.0, [&](CheckResult& r) {
        const BlackScholesCase bs;
        const PriceResult pr = price(bs.market(), bs.model, bs.basis, bs.grid(401), bs.solver());
        const double rel = std::abs(pr.w0 / bs.exact() - 1.0);
        if (ctx.out) io::write_price_surface(*ctx.out / "price_surface.csv", pr.solution, ctx.deterministic);
        r.passed = rel < 0.01;
        r.detail = "W0 " + detail::num(pr.w0) + " vs closed form " + detail::num(bs.exact()) + ", relative error " +
                   detail::num(rel) + " (< 1%)";
    });
}

inline CheckResult check_jump_pricing(const CheckContext& ctx) {
    return detail::timed("8", "jump pricing oracle", 60.0, [&](CheckResult& r) {
        const JumpMarketCase jc;
        const double c = std::log(jc.spot);
        SolverConfig cfg;
        cfg.horizon = jc.maturity;
        const PriceResult pr = price(jc.market(), jc.model, jc.basis, SpatialGrid({Axis{c - 1.5, c + 1.5, 401}}), cfg);
        const double exact = jc.exact();
        const double rel = std::abs(pr.w0 / exact - 1.0);
        if (ctx.out) io::write_price_surface(*ctx.out / "jump_price_surface.csv", pr.solution, ctx.deterministic);
        r.passed = rel < 0.01;
        r.detail = "W0 " + detail::num(pr.w0) + " vs terminal-law series " + detail::num(exact) + ", relative error " +
                   detail::num(rel) + " (< 1%)";
    });
}

inline CheckResult check_replication(const CheckContext& ctx) {
    return detail::timed("9", "replication", 120.0, [&](CheckResult& r) {
        const BlackScholesCase bs;
        const MarketModel mk = bs.market();
        const PriceResult pr = price(mk, bs.model, bs.basis, bs.grid(401), bs.solver());
        const HedgeReport rep = replication_check(mk, bs.model, bs.basis, pr.solution, TimeGrid(bs.maturity, 200), 10000,
                                                  ctx.seed + 9, ctx.threads);
        if (ctx.out) io::write_hedge_report(*ctx.out / "hedge_report.csv", rep, ctx.deterministic);
        r.passed = rep.mean_within(4.0) && rep.max_fit_residual < 1e-12 && rep.exclusion_rate <= 0.01;
        r.detail = "mean terminal error " + detail::num(rep.mean_error) + " (SE " + detail::num(rep.se_error) +
                   ", within 4 SE), max fit residual " + detail::num(rep.max_fit_residual);
    });
}

using CheckFn = std::function<CheckResult(const CheckContext&)>;

inline std::vector<std::pair<std::string, CheckFn>> all_checks() {
    return {{"1", check_orthogonality_suite}, {"2", check_martingale_statistics}, {"3", check_chaos_identity},
            {"4a", check_heat_oracle},        {"4b", check_poisson_oracle},       {"4c", check_constant_preserved},
            {"5", check_fixed_point},         {"6", check_bsde_residual},         {"7", check_black_scholes},
            {"8", check_jump_pricing},        {"9", check_replication}};
}

}  // namespace levy_fbsde::verify
