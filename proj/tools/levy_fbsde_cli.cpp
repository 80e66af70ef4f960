#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "levy_fbsde/errors.hpp"
#include "levy_fbsde/fbsde_solver.hpp"
#include "levy_fbsde/io/csv.hpp"
#include "levy_fbsde/io/spec_json.hpp"
#include "levy_fbsde/path_sim.hpp"
#include "levy_fbsde/pide_solver.hpp"
#include "levy_fbsde/pricing.hpp"
#include "levy_fbsde/teugels.hpp"
#include "levy_fbsde/verify/acceptance.hpp"
#include "levy_fbsde/verify/oracles.hpp"

namespace fs = std::filesystem;
using namespace levy_fbsde;
using io::json;
using io::Node;

namespace {

constexpr std::uint64_t kDefaultSeed = 20240601;

struct Options {
    std::string config;
    std::vector<std::string> overrides;
    std::string out = "out";
    bool deterministic = false;
    int threads = 0;
    std::string only;
};

struct Run {
    json root;
    Node cfg{root, ""};
    fs::path out;
    bool deterministic = false;
    int threads = 1;
    std::uint64_t seed = kDefaultSeed;
    json report = json::object();
    std::vector<std::string> failures;

    void check(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

void write_report(const Run& run, const std::string& name) {
    json rep = run.report;
    if (!run.deterministic) rep["generated"] = io::utc_timestamp();
    rep["failures"] = run.failures;
    std::ofstream(run.out / name) << rep.dump(2) << '\n';
}

int finish(const Run& run, const std::string& report_name) {
    write_report(run, report_name);
    for (const auto& f : run.failures) std::cout << "FAIL " << f << '\n';
    return run.failures.empty() ? 0 : 1;
}

LevyModel model_of(const Run& run) { return io::parse_model(run.cfg.at("model")); }
int order_of(const Run& run) { return run.cfg.integer("order", 3); }

SolverConfig solver_of(const Run& run) {
    static const json kEmpty = json::object();
    return io::parse_solver(run.cfg.has("solver") ? run.cfg.at("solver") : Node(kEmpty, "solver"));
}

int cmd_ortho(Run& run) {
    const LevyModel model = model_of(run);
    const TeugelsBasis basis = build_basis(model, order_of(run));
    const OrthogonalityReport rep = check_orthogonality(basis, model);
    const double tol = run.cfg.number("tolerance", 1e-9);
    io::write_basis(run.out / "basis.csv", basis, run.deterministic);
    run.report["order"] = basis.order;
    run.report["q_at_zero"] = basis.q_at_zero;
    run.report["tail_indicator"] = basis.tail_indicator();
    run.report["max_gram_residual"] = rep.max_gram;
    run.report["max_lemma_residual"] = rep.max_lemma;
    std::cout << "M = " << basis.order << ", max gram residual " << rep.max_gram << ", max identity residual "
              << rep.max_lemma << ", tail indicator " << basis.tail_indicator() << '\n';
    run.check(rep.max_residual() < tol, "orthogonality residual " + io::fmt(rep.max_residual()) + " >= " + io::fmt(tol));
    return finish(run, "ortho_report.json");
}

int cmd_simulate(Run& run) {
    const LevyModel model = model_of(run);
    const TeugelsBasis basis = build_basis(model, order_of(run));
    const Node sim = run.cfg.at("simulate");
    const int n_paths = sim.integer("n_paths", 10000);
    if (n_paths < 2) throw ConfigError("'simulate.n_paths' must be at least 2");
    const TimeGrid grid(sim.number("horizon", 1.0), sim.integer("n_steps", 200));
    const int written = std::min(n_paths, sim.integer("write_paths", 20));

    Eigen::MatrixXd terminal(n_paths, basis.order);
    std::vector<int> counts(static_cast<std::size_t>(n_paths));
    std::vector<SamplePath> kept(static_cast<std::size_t>(written));
    parallel_for(static_cast<std::size_t>(n_paths), run.threads, [&](std::size_t k) {
        SamplePath p = sample_path(model, basis, grid, {run.seed, k});
        terminal.row(static_cast<Eigen::Index>(k)) = p.terminal_H().transpose();
        counts[k] = p.jump_count();
        if (k < kept.size()) kept[k] = std::move(p);
    });
    io::write_paths(run.out / "paths.csv", kept, run.deterministic);
    const MartingaleReport rep = martingale_stats_from_terminal(terminal, counts, grid.horizon(), model.measure().total_mass());
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    auto mat = [&](const Eigen::MatrixXd& m) {
        json rows = json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
        return rows;
    };
    run.report["n_paths"] = n_paths;
    run.report["mean"] = vec(rep.mean);
    run.report["mean_se"] = vec(rep.mean_se);
    run.report["cov"] = mat(rep.cov);
    run.report["cov_se"] = mat(rep.cov_se);
    run.report["poisson_chi2"] = {{"statistic", rep.counts.statistic}, {"dof", rep.counts.dof}, {"p_value", rep.counts.p_value}};
    for (const auto& f : rep.flags) run.check(false, f);
    run.check(rep.counts.passed, "jump-count chi-square rejected at 1% (p = " + io::fmt(rep.counts.p_value) + ")");
    std::cout << "martingale statistics over " << n_paths << " paths: " << (rep.passed() ? "pass" : "fail") << '\n';

    if (sim.has("chaos")) {
        const Node ch = sim.at("chaos");
        const auto coef = ch.at("coef").numbers();
        if (coef.size() != static_cast<std::size_t>(basis.order)) throw ConfigError("'simulate.chaos.coef' must have M entries");
        const double freq = ch.number("frequency", 0.0);
        const ChaosIntegrand fn{[&](double s, double y) {
                                    double acc = 0.0;
                                    for (int i = 0; i < basis.order; ++i) acc += coef[static_cast<std::size_t>(i)] * basis.p[static_cast<std::size_t>(i)](y);
                                    return std::cos(freq * s) * acc;
                                },
                                basis.order};
        const int n_chaos = std::min(n_paths, ch.integer("n_paths", 100));
        std::vector<SamplePath> paths(static_cast<std::size_t>(n_chaos));
        parallel_for(paths.size(), run.threads, [&](std::size_t k) { paths[k] = sample_path(model, basis, grid, {run.seed, k}); });
        const ChaosIdentityReport cr = chaos_identity_check(model, basis, paths, fn);
        const double tol = ch.number("tolerance", 5e-2);
        run.report["chaos_identity"] = {{"n_paths", n_chaos}, {"max_abs", cr.max_abs}, {"rms", cr.rms}, {"mean", cr.mean}};
        std::cout << "chaos identity: max |residual| " << cr.max_abs << ", rms " << cr.rms << '\n';
        run.check(cr.max_abs < tol, "chaos identity residual " + io::fmt(cr.max_abs) + " >= " + io::fmt(tol));
    }
    return finish(run, "stats.json");
}

int cmd_solve(Run& run) {
    const LevyModel model = model_of(run);
    const TeugelsBasis basis = build_basis(model, order_of(run));
    const SpatialGrid grid = io::parse_grid(run.cfg.at("grid"));
    const SolverConfig cfg = solver_of(run);
    const Node pn = run.cfg.at("problem");
    const FbsdeProblem pb = io::parse_problem(pn, grid.dims(), basis.order);
    const PideSolution sol = solve_pide(pb, model, basis, grid, cfg);

    io::write_theta(run.out / "theta.csv", sol, io::spaced_levels(sol.levels(), run.cfg.integer("output_levels", 11)), run.deterministic);
    io::write_iteration_log(run.out / "iteration_log.csv", sol, run.deterministic);
    run.report["levels"] = sol.levels();
    run.report["sweeps"] = sol.sweeps.size();
    run.report["subintervals"] = sol.subintervals;
    run.report["tail_indicator"] = sol.tail_indicator;
    run.report["max_jump_fraction"] = sol.max_jump_fraction;
    run.report["lipschitz_estimate"] = sol.lipschitz_estimate;
    if (std::isfinite(sol.ratio_estimate)) run.report["ratio_estimate"] = sol.ratio_estimate;
    std::cout << "solved '" << pb.name << "': " << sol.levels() << " levels, " << sol.sweeps.size() << " sweeps, "
              << sol.subintervals << " subinterval(s)\n";

    const Node term = pn.at("terminal");
    const std::string driver = pn.has("driver") ? pn.at("driver").string("type", "zero") : "zero";
    if (term.at("type").string() == "constant" && driver == "zero") {
        const double c = term.at("value").number();
        double dev = 0.0;
        for (const auto& level : sol.theta) dev = std::max(dev, (level.array() - c).abs().maxCoeff());
        run.report["max_abs_theta_minus_c"] = dev;
        std::cout << "max |theta - c| = " << dev << '\n';
        run.check(dev < 1e-12, "constant solution drifted by " + io::fmt(dev));
    }
    if (run.cfg.has("residual")) {
        const Node rn = run.cfg.at("residual");
        const StateVec x0 = io::parse_state(rn.at("x0"), grid.dims());
        const CoefficientSet cs(pb, basis, model);
        const ResidualStudy st = residual_study(sol, cs, model, basis, x0, TimeGrid(cfg.horizon, rn.integer("n_steps", 200)),
                                                rn.integer("n_paths", 10000), run.seed, run.threads);
        io::write_residuals(run.out / "residuals.csv", st, run.deterministic);
        run.report["residual"] = {{"mean", st.mean(0)}, {"se", st.se(0)}, {"rms", st.rms(0)}, {"exclusion_rate", st.exclusion_rate}};
        std::cout << "BSDE residual mean " << st.mean(0) << " (SE " << st.se(0) << "), rms " << st.rms(0) << '\n';
        run.check(st.passed(), "BSDE residual mean outside 4 SE or too many escaped paths");
    }
    return finish(run, "solve_report.json");
}

int cmd_price(Run& run) {
    const LevyModel model = model_of(run);
    const TeugelsBasis basis = build_basis(model, order_of(run));
    const SpatialGrid grid = io::parse_grid(run.cfg.at("grid"));
    const SolverConfig cfg = solver_of(run);
    const MarketModel mk = io::parse_market(run.cfg.at("market"), basis, model);
    const PriceResult pr = price(mk, model, basis, grid, cfg);
    io::write_price_surface(run.out / "price_surface.csv", pr.solution, run.deterministic);
    io::write_iteration_log(run.out / "iteration_log.csv", pr.solution, run.deterministic);
    char line[64];
    std::snprintf(line, sizeof line, "%.10f", pr.w0);
    std::cout << "W0 = " << line << '\n';
    run.report["W0"] = pr.w0;
    run.report["sweeps"] = pr.solution.sweeps.size();

    if (run.cfg.has("oracle")) {
        const Node on = run.cfg.at("oracle");
        const std::string type = on.at("type").string();
        const Node m = run.cfg.at("market");
        const Node pay = m.at("payoff");
        const double s0 = mk.s0(0), r0 = m.at("r0").number(), strike = pay.at("strike").number();
        double exact = 0.0;
        if (type == "black_scholes") {
            if (mk.d != 1 || basis.order != 1 || !model.measure().is_zero())
                throw ConfigError("'oracle.type' black_scholes needs d = 1, M = 1 and no jumps");
            const double vol = std::abs(m.at("sigma_log").at(0).at(0).number());
            const std::string kind = pay.at("type").string();
            if (kind == "call") {
                exact = oracle::black_scholes_call(s0, strike, r0, vol, cfg.horizon);
            } else if (kind == "put") {
                exact = oracle::black_scholes_put(s0, strike, r0, vol, cfg.horizon);
            } else {
                throw ConfigError("'market.payoff.type' must be call or put for the black_scholes oracle");
            }
        } else {
            throw ConfigError("'oracle.type' must be black_scholes");
        }
        const double rel = std::abs(pr.w0 / exact - 1.0);
        const double tol = on.number("tolerance", 0.01);
        run.report["oracle"] = {{"type", type}, {"value", exact}, {"relative_error", rel}};
        std::cout << "oracle " << exact << ", relative error " << rel << '\n';
        run.check(rel < tol, "W0 differs from the " + type + " oracle by " + io::fmt(rel));
    }
    if (run.cfg.has("hedge")) {
        const Node hn = run.cfg.at("hedge");
        const HedgeReport rep = replication_check(mk, model, basis, pr.solution, TimeGrid(cfg.horizon, hn.integer("n_steps", 200)),
                                                  hn.integer("n_paths", 10000), run.seed, run.threads);
        io::write_hedge_report(run.out / "hedge_report.csv", rep, run.deterministic);
        run.report["hedge"] = {{"mean_error", rep.mean_error}, {"se_error", rep.se_error}, {"rms_error", rep.rms_error},
                               {"max_fit_residual", rep.max_fit_residual}, {"exclusion_rate", rep.exclusion_rate},
                               {"alpha_nonnegative", rep.alpha_nonnegative}};
        std::cout << "replication error mean " << rep.mean_error << " (SE " << rep.se_error << "), max fit residual "
                  << rep.max_fit_residual << '\n';
        run.check(rep.mean_within(4.0), "mean replication error outside 4 SE");
        run.check(rep.exclusion_rate <= 0.01, "more than 1% of hedge paths left the grid");
    }
    return finish(run, "price_report.json");
}

int cmd_verify_all(Run& run, const std::string& only) {
    std::set<std::string> enabled;
    std::stringstream ss(only);
    for (std::string id; std::getline(ss, id, ',');)
        if (!id.empty()) enabled.insert(id);
    verify::CheckContext ctx;
    ctx.out = run.out;
    ctx.deterministic = run.deterministic;
    ctx.threads = run.threads;
    ctx.seed = run.seed;
    json checks = json::array();
    for (const auto& [id, check] : verify::all_checks()) {
        if (!enabled.empty() && !enabled.count(id)) continue;
        const verify::CheckResult r = check(ctx);
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.id << ' ' << r.title << ": " << r.detail;
        if (!run.deterministic) std::cout << " [" << r.seconds << " s]";
        std::cout << std::endl;
        json j = {{"id", r.id}, {"title", r.title}, {"passed", r.passed}, {"detail", r.detail}};
        if (!run.deterministic) j["seconds"] = r.seconds;
        checks.push_back(j);
        run.check(r.passed, r.id + " " + r.title);
    }
    run.report["checks"] = checks;
    return finish(run, "verify_report.json");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Levy-driven FBSDE solver and large-investor pricing"};
    app.require_subcommand(1);
    Options opt;
    auto common = [&](CLI::App* sub, bool config_required) {
        auto* c = sub->add_option("config", opt.config, "JSON experiment config");
        if (config_required) c->required();
        sub->add_option("--set", opt.overrides, "override a config value, e.g. solver.fp_tol=1e-9");
        sub->add_option("--out", opt.out, "output directory");
        sub->add_flag("--deterministic", opt.deterministic, "omit timestamps and timings from outputs");
        sub->add_option("--threads", opt.threads, "worker threads for path-parallel sections");
    };
    auto* ortho = app.add_subcommand("ortho", "build the orthonormal basis and check it");
    auto* simulate = app.add_subcommand("simulate", "simulate paths and test martingale statistics");
    auto* solve = app.add_subcommand("solve", "solve the decoupling PIDE");
    auto* pricing = app.add_subcommand("price", "price a claim and optionally hedge it");
    auto* verify_all = app.add_subcommand("verify-all", "run the acceptance suite");
    verify_all->alias("verify");
    common(ortho, true);
    common(simulate, true);
    common(solve, true);
    common(pricing, true);
    common(verify_all, false);
    verify_all->add_option("--only", opt.only, "comma-separated check ids to report, e.g. 4a,7");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        Run run;
        if (!opt.config.empty()) run.root = io::load_json(opt.config);
        if (!run.root.is_object()) run.root = json::object();
        for (const auto& o : opt.overrides) io::apply_override(run.root, o);
        run.cfg = Node(run.root, "");
        run.out = opt.out;
        run.deterministic = opt.deterministic || (run.cfg.has("deterministic") && run.cfg.at("deterministic").boolean());
        run.threads = resolve_threads(opt.threads);
        if (run.cfg.has("seed")) run.seed = run.cfg.at("seed").unsigned_integer();
        fs::create_directories(run.out);

        if (*ortho) return cmd_ortho(run);
        if (*simulate) return cmd_simulate(run);
        if (*solve) return cmd_solve(run);
        if (*pricing) return cmd_price(run);
        return cmd_verify_all(run, opt.only);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DegenerateMeasure& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const BasisMismatch& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const GridTooSmall& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const RankDeficientVolatility& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NoConvergence& e) {
        std::cerr << "failed: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
