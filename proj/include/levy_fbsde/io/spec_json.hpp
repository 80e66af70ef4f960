#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "levy_fbsde/errors.hpp"
#include "levy_fbsde/grid.hpp"
#include "levy_fbsde/levy_model.hpp"
#include "levy_fbsde/pide_solver.hpp"
#include "levy_fbsde/pricing.hpp"
#include "levy_fbsde/problem.hpp"

namespace levy_fbsde::io {

using json = nlohmann::json;

/// Read-only view of a JSON node that remembers its dotted path, so every
/// ConfigError names the offending key.
class Node {
public:
    Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }
    const json& raw() const noexcept { return *j_; }
    bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

    Node at(const std::string& key) const {
        if (!has(key)) throw ConfigError("missing key '" + child(key) + "'");
        return Node((*j_)[key], child(key));
    }
    Node at(std::size_t k) const {
        if (!j_->is_array() || k >= j_->size()) throw ConfigError("missing element '" + path_ + "[" + std::to_string(k) + "]'");
        return Node((*j_)[k], path_ + "[" + std::to_string(k) + "]");
    }
    std::size_t size() const {
        if (!j_->is_array()) throw ConfigError("'" + path_ + "' must be an array");
        return j_->size();
    }

    double number() const {
        if (!j_->is_number()) throw ConfigError("'" + path_ + "' must be a number");
        const double v = j_->get<double>();
        if (!std::isfinite(v)) throw ConfigError("'" + path_ + "' must be finite");
        return v;
    }
    int integer() const {
        if (!j_->is_number_integer()) throw ConfigError("'" + path_ + "' must be an integer");
        return j_->get<int>();
    }
    std::uint64_t unsigned_integer() const {
        if (!j_->is_number_integer() || j_->get<std::int64_t>() < 0)
            throw ConfigError("'" + path_ + "' must be a nonnegative integer");
        return j_->get<std::uint64_t>();
    }
    std::string string() const {
        if (!j_->is_string()) throw ConfigError("'" + path_ + "' must be a string");
        return j_->get<std::string>();
    }
    bool boolean() const {
        if (!j_->is_boolean()) throw ConfigError("'" + path_ + "' must be true or false");
        return j_->get<bool>();
    }
    std::vector<double> numbers() const {
        std::vector<double> out;
        for (std::size_t k = 0; k < size(); ++k) out.push_back(at(k).number());
        return out;
    }

    double number(const std::string& key, double fallback) const { return has(key) ? at(key).number() : fallback; }
    int integer(const std::string& key, int fallback) const { return has(key) ? at(key).integer() : fallback; }
    std::string string(const std::string& key, const std::string& fallback) const {
        return has(key) ? at(key).string() : fallback;
    }

private:
    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* j_;
    std::string path_;
};

inline json load_json(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config file '" + file + "'");
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + file + "' is not valid JSON: " + e.what());
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON when possible and kept as
/// a string otherwise.
inline void apply_override(json& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key.path=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    std::string pointer;
    std::stringstream ss(key);
    for (std::string part; std::getline(ss, part, '.');) {
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
        pointer += "/" + part;
    }
    root[json::json_pointer(pointer)] = value;
}

inline LevyMeasure parse_measure(const Node& n) {
    const std::string type = n.at("type").string();
    if (type == "zero" || type == "none") return LevyMeasure::zero();
    if (type == "atomic") {
        const Node atoms = n.at("atoms");
        std::vector<Atom> list;
        for (std::size_t k = 0; k < atoms.size(); ++k) {
            const Node a = atoms.at(k);
            if (a.size() != 2) throw ConfigError("'" + a.path() + "' must be [location, weight]");
            list.push_back({a.at(0).number(), a.at(1).number()});
        }
        return LevyMeasure::atomic(std::move(list));
    }
    if (type == "density") {
        const std::string kind = n.at("kind").string();
        const double gap = n.number("gap", 0.0);
        const int nodes = n.integer("nodes", LevyMeasure::kDefaultNodes);
        if (kind == "truncated_gaussian") {
            const auto support = n.at("support").numbers();
            if (support.size() != 2) throw ConfigError("'" + n.path() + ".support' must be [lo, hi]");
            return LevyMeasure::truncated_gaussian(n.at("mass").number(), n.number("mean", 0.0), n.at("stddev").number(),
                                                   {support[0], support[1]}, gap, nodes);
        }
        if (kind == "table") {
            const Node pts = n.at("points");
            std::vector<std::pair<double, double>> list;
            for (std::size_t k = 0; k < pts.size(); ++k) list.emplace_back(pts.at(k).at(0).number(), pts.at(k).at(1).number());
            return LevyMeasure::table(std::move(list), gap, nodes);
        }
        throw ConfigError("'" + n.path() + ".kind' must be truncated_gaussian or table");
    }
    throw ConfigError("'" + n.path() + ".type' must be atomic, zero or density");
}

inline LevyModel parse_model(const Node& n) { return LevyModel(n.number("a", 0.0), parse_measure(n.at("measure"))); }

inline SpatialGrid parse_grid(const Node& n) {
    std::vector<Axis> axes;
    auto axis = [](const Node& a) { return Axis{a.at("lo").number(), a.at("hi").number(), a.at("n").integer()}; };
    if (n.raw().is_array()) {
        for (std::size_t k = 0; k < n.size(); ++k) axes.push_back(axis(n.at(k)));
    } else {
        axes.push_back(axis(n));
    }
    return SpatialGrid(std::move(axes));
}

inline SolverConfig parse_solver(const Node& n) {
    SolverConfig c;
    c.horizon = n.number("horizon", c.horizon);
    c.fp_tol = n.number("fp_tol", c.fp_tol);
    c.fp_max = n.integer("fp_max", c.fp_max);
    c.theta_scheme = n.number("theta_scheme", c.theta_scheme);
    c.n_time = n.integer("n_time", c.n_time);
    c.min_dt_split = n.number("min_dt_split", c.min_dt_split);
    c.jump_cfl = n.number("jump_cfl", c.jump_cfl);
    const std::string mode = n.string("mode", "extended");
    if (mode == "strict") {
        c.mode = SolveMode::strict;
    } else if (mode == "extended") {
        c.mode = SolveMode::extended;
    } else {
        throw ConfigError("'" + n.path() + ".mode' must be strict or extended");
    }
    c.validate();
    return c;
}

inline VolMatrix parse_vol(const Node& n, int p_dim, int order) {
    if (n.size() != static_cast<std::size_t>(p_dim)) throw ConfigError("'" + n.path() + "' must have one row per state dimension");
    VolMatrix v(p_dim, order);
    for (int k = 0; k < p_dim; ++k) {
        const auto row = n.at(static_cast<std::size_t>(k)).numbers();
        if (row.size() != static_cast<std::size_t>(order))
            throw ConfigError("'" + n.path() + "[" + std::to_string(k) + "]' must have M = " + std::to_string(order) + " entries");
        for (int i = 0; i < order; ++i) v(k, i) = row[static_cast<std::size_t>(i)];
    }
    return v;
}

inline StateVec parse_state(const Node& n, int p_dim) {
    const auto v = n.numbers();
    if (v.size() != static_cast<std::size_t>(p_dim)) throw ConfigError("'" + n.path() + "' must have P = " + std::to_string(p_dim) + " entries");
    StateVec x(p_dim);
    for (int k = 0; k < p_dim; ++k) x(k) = v[static_cast<std::size_t>(k)];
    return x;
}

/// Terminal conditions of the built-in problems (Q = 1, function of x_1).
inline FbsdeProblem::TerminalFn parse_terminal(const Node& n) {
    const std::string type = n.at("type").string();
    if (type == "constant") {
        const double c = n.at("value").number();
        return [c](const StateVec&) { return ValueVec::Constant(1, c); };
    }
    if (type == "gaussian") {
        const double amp = n.number("amplitude", 1.0), mean = n.number("mean", 0.0), width = n.at("width").number();
        if (!(width > 0.0)) throw ConfigError("'" + n.path() + ".width' must be positive");
        return [=](const StateVec& x) {
            const double u = (x(0) - mean) / width;
            return ValueVec::Constant(1, amp * std::exp(-0.5 * u * u));
        };
    }
    if (type == "sine") {
        const double amp = n.number("amplitude", 1.0), freq = n.number("frequency", 1.0);
        return [=](const StateVec& x) { return ValueVec::Constant(1, amp * std::sin(freq * x(0))); };
    }
    throw ConfigError("'" + n.path() + ".type' must be constant, gaussian or sine");
}

/// Built-in problem family with P from the grid, Q = 1 and constant drift and
/// volatility, optionally coupled through y:
///   sigma(t, x, y) = sigma * (1 + sigma_coupling * sin(y)),
///   g = 0 | lipschitz * cos(y) | rate * y | sum_i coef_i z_i.
inline FbsdeProblem parse_problem(const Node& n, int p_dim, int order) {
    FbsdeProblem pb;
    pb.name = n.string("name", "problem");
    pb.state_dim = p_dim;
    pb.value_dim = 1;
    pb.order = order;
    const StateVec drift = n.has("drift") ? parse_state(n.at("drift"), p_dim) : StateVec::Zero(p_dim);
    const VolMatrix vol = n.has("sigma") ? parse_vol(n.at("sigma"), p_dim, order) : VolMatrix::Zero(p_dim, order);
    const double coupling = n.number("sigma_coupling", 0.0);
    pb.drift = [drift](double, const StateVec&, const ValueVec&, const ZMatrix&) { return drift; };
    pb.volatility = [vol, coupling](double, const StateVec&, const ValueVec& y) -> VolMatrix {
        if (coupling == 0.0) return vol;
        return vol * (1.0 + coupling * std::sin(y(0)));
    };
    static const json kZeroDriver = {{"type", "zero"}};
    const Node drv = n.has("driver") ? n.at("driver") : Node(kZeroDriver, n.path() + ".driver");
    const std::string dtype = drv.has("type") ? drv.at("type").string() : "zero";
    if (dtype == "zero") {
        pb.driver = [](double, const StateVec&, const ValueVec&, const ZMatrix&) { return ValueVec::Zero(1); };
    } else if (dtype == "cos") {
        const double l = drv.at("lipschitz").number();
        pb.driver = [l](double, const StateVec&, const ValueVec& y, const ZMatrix&) { return ValueVec::Constant(1, l * std::cos(y(0))); };
    } else if (dtype == "linear") {
        const double rate = drv.at("rate").number();
        pb.driver = [rate](double, const StateVec&, const ValueVec& y, const ZMatrix&) { return ValueVec::Constant(1, rate * y(0)); };
    } else if (dtype == "z_linear") {
        const auto coef = drv.at("coef").numbers();
        if (coef.size() != static_cast<std::size_t>(order)) throw ConfigError("'" + drv.path() + ".coef' must have M entries");
        pb.driver = [coef](double, const StateVec&, const ValueVec&, const ZMatrix& z) {
            double acc = 0.0;
            for (Eigen::Index i = 0; i < z.cols(); ++i) acc += coef[static_cast<std::size_t>(i)] * z(0, i);
            return ValueVec::Constant(1, acc);
        };
        pb.z_dependent = true;
    } else {
        throw ConfigError("'" + drv.path() + ".type' must be zero, cos, linear or z_linear");
    }
    pb.terminal = parse_terminal(n.at("terminal"));
    validate(pb);
    return pb;
}

inline Payoff parse_payoff(const Node& n) {
    const std::string type = n.at("type").string();
    const int asset = n.integer("asset", 0);
    if (type == "call") return Payoff::call(n.at("strike").number(), asset);
    if (type == "put") return Payoff::put(n.at("strike").number(), asset);
    if (type == "constant") return Payoff::constant(n.at("value").number());
    if (type == "custom-table") {
        const Node pts = n.at("points");
        std::vector<std::pair<double, double>> list;
        for (std::size_t k = 0; k < pts.size(); ++k) list.emplace_back(pts.at(k).at(0).number(), pts.at(k).at(1).number());
        return Payoff::table(std::move(list), asset);
    }
    throw ConfigError("'" + n.path() + ".type' must be call, put, constant or custom-table");
}

/// Log-drift that makes every discounted price a martingale for constant
/// coefficients: f_j = r0 - beta_jj - int (e^{delta_j} - 1 - delta_j) dnu.
inline AssetVec risk_neutral_log_drift(double r0, const VolMatrix& vol, const TeugelsBasis& basis, const LevyModel& model) {
    const detail::PriceDynamics dyn(basis, model);
    const AssetVec zero = AssetVec::Zero(vol.rows());
    return AssetVec::Constant(vol.rows(), r0) - dyn.drift(zero, vol);
}

/// Constant-coefficient market: {"d", "r0", "f_log": [..] | "risk_neutral",
/// "sigma_log": [[..]], "S0": [..], "payoff": {...}}.
inline MarketModel parse_market(const Node& n, const TeugelsBasis& basis, const LevyModel& model) {
    const int d = n.integer("d", 1);
    if (d < 1 || d > kMaxAssets) throw ConfigError("'" + n.path() + ".d' must be 1 or 2");
    const double r0 = n.at("r0").number();
    const VolMatrix vol = parse_vol(n.at("sigma_log"), d, basis.order);
    const AssetVec s0 = parse_state(n.at("S0"), d);
    AssetVec drift;
    const Node f = n.at("f_log");
    if (f.raw().is_string()) {
        if (f.string() != "risk_neutral") throw ConfigError("'" + f.path() + "' must be a vector or \"risk_neutral\"");
        drift = risk_neutral_log_drift(r0, vol, basis, model);
    } else {
        drift = parse_state(f, d);
    }
    MarketModel mk = constant_market(r0, drift, vol, parse_payoff(n.at("payoff")), s0);
    mk.validate();
    return mk;
}

}  // namespace levy_fbsde::io
