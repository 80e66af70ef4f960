#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "levy_fbsde/io/csv.hpp"
#include "levy_fbsde/io/spec_json.hpp"

using namespace levy_fbsde;
using io::json;
using io::Node;

namespace {

const std::filesystem::path kConfigs = LEVY_FBSDE_CONFIG_DIR;

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(SpecJson, ShippedConfigsParse) {
    for (const char* name : {"ortho_two_point.json", "simulate_two_atoms.json", "solve_constant.json", "solve_heat.json",
                             "solve_poisson.json", "solve_coupled.json", "price_black_scholes.json", "price_jump.json"}) {
        SCOPED_TRACE(name);
        const json root = io::load_json((kConfigs / name).string());
        const Node cfg(root, "");
        const LevyModel model = io::parse_model(cfg.at("model"));
        const TeugelsBasis basis = build_basis(model, cfg.integer("order", 3));
        if (cfg.has("grid")) {
            const SpatialGrid grid = io::parse_grid(cfg.at("grid"));
            if (cfg.has("problem")) {
                EXPECT_NO_THROW(io::parse_problem(cfg.at("problem"), grid.dims(), basis.order));
            }
        }
        if (cfg.has("solver")) {
            EXPECT_NO_THROW(io::parse_solver(cfg.at("solver")));
        }
        if (cfg.has("market")) {
            EXPECT_NO_THROW(io::parse_market(cfg.at("market"), basis, model));
        }
    }
}

TEST(SpecJson, PoissonConfigHasUnitDisplacement) {
    const json root = io::load_json((kConfigs / "solve_poisson.json").string());
    const Node cfg(root, "");
    const LevyModel model = io::parse_model(cfg.at("model"));
    const TeugelsBasis basis = build_basis(model, 1);
    const double sigma = cfg.at("problem").at("sigma").at(0).at(0).number();
    EXPECT_NEAR(sigma * basis.p[0](0.5), 0.3, 1e-15);
}

TEST(SpecJson, OverridesUseDottedPaths) {
    json root = {{"solver", {{"fp_tol", 1e-8}}}};
    io::apply_override(root, "solver.fp_tol=1e-9");
    io::apply_override(root, "solver.mode=strict");
    io::apply_override(root, "grid.n=33");
    EXPECT_EQ(root["solver"]["fp_tol"].get<double>(), 1e-9);
    EXPECT_EQ(root["solver"]["mode"].get<std::string>(), "strict");
    EXPECT_EQ(root["grid"]["n"].get<int>(), 33);
    EXPECT_THROW(io::apply_override(root, "novalue"), ConfigError);
    EXPECT_THROW(io::apply_override(root, "a..b=1"), ConfigError);
}

TEST(SpecJson, ErrorsNameTheKey) {
    const json bad_measure = {{"a", 1.0}, {"measure", {{"atoms", json::array()}}}};
    EXPECT_NE(error_of([&] { io::parse_model(Node(bad_measure, "model")); }).find("model.measure.type"), std::string::npos);
    const json bad_mode = {{"mode", "loose"}};
    EXPECT_NE(error_of([&] { io::parse_solver(Node(bad_mode, "solver")); }).find("solver.mode"), std::string::npos);
    const json bad_tol = {{"fp_tol", "tiny"}};
    EXPECT_NE(error_of([&] { io::parse_solver(Node(bad_tol, "solver")); }).find("solver.fp_tol"), std::string::npos);
    const json bad_vol = {{"sigma", {{1.0, 2.0}}}, {"terminal", {{"type", "constant"}, {"value", 1.0}}}};
    EXPECT_NE(error_of([&] { io::parse_problem(Node(bad_vol, "problem"), 1, 3); }).find("problem.sigma[0]"), std::string::npos);
    const json bad_atom = {{"type", "atomic"}, {"atoms", {{1.0}}}};
    EXPECT_NE(error_of([&] { io::parse_measure(Node(bad_atom, "m")); }).find("m.atoms[0]"), std::string::npos);
}

TEST(SpecJson, TwoDimensionalGrid) {
    const json g = json::array({{{"lo", -1.0}, {"hi", 1.0}, {"n", 21}}, {{"lo", 0.0}, {"hi", 2.0}, {"n", 17}}});
    const SpatialGrid grid = io::parse_grid(Node(g, "grid"));
    EXPECT_EQ(grid.dims(), 2);
    EXPECT_EQ(grid.size(), 21 * 17);
}

TEST(SpecJson, RiskNeutralDriftBlackScholes) {
    const LevyModel m(1.0, LevyMeasure::zero());
    const TeugelsBasis b = build_basis(m, 1);
    EXPECT_NEAR(io::risk_neutral_log_drift(0.05, VolMatrix::Constant(1, 1, 0.2), b, m)(0), 0.05 - 0.02, 1e-15);
}

TEST(SpecJson, DensityMeasure) {
    const json m = {{"type", "density"}, {"kind", "truncated_gaussian"}, {"mass", 2.0}, {"stddev", 0.5}, {"support", {-1.5, 1.5}}, {"gap", 0.05}};
    EXPECT_NEAR(io::parse_measure(Node(m, "measure")).total_mass(), 2.0, 1e-6);
}

TEST(SpecJson, CommentsAllowed) {
    const auto file = std::filesystem::temp_directory_path() / "levy_fbsde_comment.json";
    std::ofstream(file) << "{\n  // order of the chaos\n  \"order\": 2\n}\n";
    EXPECT_EQ(io::load_json(file.string())["order"].get<int>(), 2);
    EXPECT_THROW(io::load_json("/nonexistent/levy.json"), ConfigError);
}

TEST(Csv, FullPrecisionRoundTrip) {
    const double v = 0.1 + 0.2;
    EXPECT_EQ(std::stod(io::fmt(v)), v);
    EXPECT_EQ(io::fmt(1.0), "1.0000000000000000e+00");
}

TEST(Csv, DeterministicHeader) {
    const auto dir = std::filesystem::temp_directory_path();
    {
        io::CsvWriter a(dir / "levy_det.csv", {"x", "y"}, true);
        a.cell(1).cell(2.5).end_row();
        io::CsvWriter b(dir / "levy_stamp.csv", {"x"}, false);
    }
    EXPECT_EQ(slurp(dir / "levy_det.csv"), "x,y\n1,2.5000000000000000e+00\n");
    EXPECT_EQ(slurp(dir / "levy_stamp.csv").rfind("# generated ", 0), 0u);
}

TEST(Csv, SpacedLevels) {
    EXPECT_EQ(io::spaced_levels(201, 5), (std::vector<int>{0, 50, 100, 150, 200}));
    EXPECT_EQ(io::spaced_levels(3, 11), (std::vector<int>{0, 1, 2}));
}
