#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "levy_fbsde/errors.hpp"
#include "levy_fbsde/fbsde_solver.hpp"
#include "levy_fbsde/path_sim.hpp"
#include "levy_fbsde/pide_solver.hpp"
#include "levy_fbsde/pricing.hpp"
#include "levy_fbsde/teugels.hpp"

namespace levy_fbsde::io {

/// 17 significant digits, round-trip exact.
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& file, const std::vector<std::string>& header, bool deterministic)
        : out_(file) {
        if (!out_) throw Error("cannot open " + file.string() + " for writing");
        if (!deterministic) out_ << "# generated " << utc_timestamp() << '\n';
        for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
        out_ << '\n';
    }

    CsvWriter& cell(double v) { return raw(fmt(v)); }
    CsvWriter& cell(int v) { return raw(std::to_string(v)); }
    CsvWriter& cell(std::size_t v) { return raw(std::to_string(v)); }
    CsvWriter& raw(const std::string& s) {
        if (!first_) out_ << ',';
        out_ << s;
        first_ = false;
        return *this;
    }
    void end_row() {
        out_ << '\n';
        first_ = true;
    }

private:
    std::ofstream out_;
    bool first_ = true;
};

/// One row per i: (i, q_{i-1} coefficients..., q_{i-1}(0), int p_i^2 dnu).
inline void write_basis(const std::filesystem::path& file, const TeugelsBasis& basis, bool deterministic) {
    std::vector<std::string> header{"i"};
    for (int k = 0; k < basis.order; ++k) header.push_back("c" + std::to_string(k));
    header.push_back("q_at_0");
    header.push_back("p_norm_sq");
    CsvWriter w(file, header, deterministic);
    for (int i = 0; i < basis.order; ++i) {
        const auto is = static_cast<std::size_t>(i);
        w.cell(i + 1);
        for (int k = 0; k < basis.order; ++k) w.cell(basis.q[is].coeff(k));
        w.cell(basis.q_at_zero[is]).cell(basis.p_norm_sq[is]).end_row();
    }
}

/// (path, step, t, dB, n_jumps, jump_sizes, dH_1..dH_M); jump sizes are
/// ';'-separated inside one column.
inline void write_paths(const std::filesystem::path& file, std::span<const SamplePath> paths, bool deterministic) {
    const int m = paths.empty() ? 0 : static_cast<int>(paths.front().dH.cols());
    std::vector<std::string> header{"path", "step", "t", "dB", "n_jumps", "jump_sizes"};
    for (int i = 1; i <= m; ++i) header.push_back("dH_" + std::to_string(i));
    CsvWriter w(file, header, deterministic);
    for (std::size_t k = 0; k < paths.size(); ++k) {
        const SamplePath& p = paths[k];
        for (int s = 0; s < p.grid.n_steps(); ++s) {
            const auto& jumps = p.jumps[static_cast<std::size_t>(s)];
            std::string sizes;
            for (std::size_t j = 0; j < jumps.size(); ++j) sizes += (j ? ";" : "") + fmt(jumps[j]);
            w.cell(k).cell(s).cell(p.grid.time(s + 1)).cell(p.dB[static_cast<std::size_t>(s)]).cell(static_cast<int>(jumps.size())).raw(sizes);
            for (int i = 0; i < m; ++i) w.cell(p.dH(s, i));
            w.end_row();
        }
    }
}

/// (t, x..., theta_1..theta_Q, theta1_{q,i}...) at the selected time levels.
inline void write_theta(const std::filesystem::path& file, const PideSolution& sol, const std::vector<int>& levels,
                        bool deterministic) {
    std::vector<std::string> header{"t"};
    for (int k = 0; k < sol.grid.dims(); ++k) header.push_back("x" + std::to_string(k + 1));
    for (int q = 1; q <= sol.value_dim; ++q) header.push_back("theta_" + std::to_string(q));
    for (int q = 1; q <= sol.value_dim; ++q)
        for (int i = 1; i <= sol.order; ++i) header.push_back("theta1_" + std::to_string(q) + "_" + std::to_string(i));
    CsvWriter w(file, header, deterministic);
    for (int l : levels) {
        const auto ls = static_cast<std::size_t>(l);
        for (int node = 0; node < sol.grid.size(); ++node) {
            w.cell(sol.time_grid.time(l));
            const StateVec x = sol.grid.point(node);
            for (int k = 0; k < x.size(); ++k) w.cell(x(k));
            for (Eigen::Index q = 0; q < sol.theta[ls].cols(); ++q) w.cell(sol.theta[ls](node, q));
            for (Eigen::Index c = 0; c < sol.theta1[ls].cols(); ++c) w.cell(sol.theta1[ls](node, c));
            w.end_row();
        }
    }
}

/// Up to `count` evenly spaced levels including 0 and the final level.
inline std::vector<int> spaced_levels(int n_levels, int count) {
    std::vector<int> out;
    if (n_levels <= 0) return out;
    count = std::max(2, std::min(count, n_levels));
    for (int k = 0; k < count; ++k) {
        const int l = static_cast<int>(std::llround(static_cast<double>(k) * (n_levels - 1) / (count - 1)));
        if (out.empty() || out.back() != l) out.push_back(l);
    }
    return out;
}

inline void write_iteration_log(const std::filesystem::path& file, const PideSolution& sol, bool deterministic) {
    CsvWriter w(file, {"interval", "t_begin", "t_end", "sweep", "residual"}, deterministic);
    for (const SweepRecord& r : sol.sweeps) w.cell(r.interval).cell(r.t_begin).cell(r.t_end).cell(r.sweep).cell(r.residual).end_row();
}

/// (path, R_1..R_Q, escaped).
inline void write_residuals(const std::filesystem::path& file, const ResidualStudy& st, bool deterministic) {
    std::vector<std::string> header{"path"};
    for (Eigen::Index q = 1; q <= st.residuals.cols(); ++q) header.push_back("R_" + std::to_string(q));
    header.push_back("escaped");
    CsvWriter w(file, header, deterministic);
    for (int k = 0; k < st.n_paths; ++k) {
        w.cell(k);
        for (Eigen::Index q = 0; q < st.residuals.cols(); ++q) w.cell(st.residuals(k, q));
        w.cell(static_cast<int>(st.escaped[static_cast<std::size_t>(k)])).end_row();
    }
}

/// (q..., S..., W) at t = 0.
inline void write_price_surface(const std::filesystem::path& file, const PideSolution& sol, bool deterministic) {
    std::vector<std::string> header;
    for (int k = 1; k <= sol.grid.dims(); ++k) header.push_back("q" + std::to_string(k));
    for (int k = 1; k <= sol.grid.dims(); ++k) header.push_back("S" + std::to_string(k));
    header.push_back("W");
    CsvWriter w(file, header, deterministic);
    for (int node = 0; node < sol.grid.size(); ++node) {
        const StateVec q = sol.grid.point(node);
        for (int k = 0; k < q.size(); ++k) w.cell(q(k));
        for (int k = 0; k < q.size(); ++k) w.cell(std::exp(q(k)));
        w.cell(sol.theta.front()(node, 0)).end_row();
    }
}

/// Per path: terminal replication error and escape flag; per step: fit residual.
inline void write_hedge_report(const std::filesystem::path& file, const HedgeReport& rep, bool deterministic) {
    CsvWriter w(file, {"kind", "index", "value", "escaped"}, deterministic);
    for (int k = 0; k < rep.n_paths; ++k)
        w.raw("terminal_error").cell(k).cell(rep.terminal_error(k)).cell(static_cast<int>(rep.escaped[static_cast<std::size_t>(k)])).end_row();
    for (int s = 0; s < rep.n_steps; ++s) w.raw("fit_residual").cell(s).cell(rep.fit_residual(s)).cell(0).end_row();
}

}  // namespace levy_fbsde::io
