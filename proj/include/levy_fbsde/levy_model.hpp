#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "levy_fbsde/errors.hpp"
#include "levy_fbsde/polynomial.hpp"

namespace levy_fbsde {

/// Nodes and weights of the n-point Gauss-Legendre rule on [lo, hi].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n, double lo, double hi) {
    if (n < 1) throw ConfigError("Gauss-Legendre rule needs at least one node");
    std::vector<double> nodes(static_cast<std::size_t>(n));
    std::vector<double> weights(static_cast<std::size_t>(n));
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            const double step = p0 / dp;
            z -= step;
            if (std::abs(step) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[static_cast<std::size_t>(i)] = mid - half * z;
        nodes[static_cast<std::size_t>(n - 1 - i)] = mid + half * z;
        weights[static_cast<std::size_t>(i)] = half * w;
        weights[static_cast<std::size_t>(n - 1 - i)] = half * w;
    }
    return {std::move(nodes), std::move(weights)};
}

struct Atom {
    double location;
    double weight;
};

struct Interval {
    double lo;
    double hi;
    double length() const noexcept { return hi - lo; }
};

/// Finite-activity Levy measure, either a finite sum of weighted atoms or a
/// density on a support bounded away from zero.
///
/// Every measure carries a fixed discrete rule (nodes, weights): the atoms
/// themselves, or a composite Gauss-Legendre rule against the density. All
/// integrals against nu in the library go through that rule, so they are
/// deterministic for a given measure. Infinite-activity measures must be
/// truncated to |x| >= eps by the caller; the dropped small-jump mass is not
/// replaced by a diffusion.
class LevyMeasure {
public:
    enum class Kind { atomic, density };

    static constexpr int kDefaultNodes = 64;

    LevyMeasure() = default;

    static LevyMeasure atomic(std::vector<Atom> atoms) {
        LevyMeasure m;
        m.kind_ = Kind::atomic;
        m.label_ = "atomic";
        for (const Atom& at : atoms) {
            if (!std::isfinite(at.location) || !std::isfinite(at.weight))
                throw ConfigError("atom location and weight must be finite");
            if (at.weight < 0.0) throw ConfigError("atom weights must be nonnegative");
            if (at.location == 0.0) throw ConfigError("a Levy measure cannot put an atom at 0");
            if (at.weight == 0.0) continue;
            m.nodes_.push_back(at.location);
            m.weights_.push_back(at.weight);
        }
        m.finish();
        return m;
    }

    static LevyMeasure zero() { return atomic({}); }

    /// Density measure on `support` with the open gap (-gap, gap) removed.
    /// `density_bound` must dominate the density on the support (used for
    /// rejection sampling). `breakpoints` split the quadrature panels where the
    /// density is not smooth.
    static LevyMeasure from_density(std::function<double(double)> density, double density_bound, Interval support,
                                    double gap, int nodes = kDefaultNodes, std::vector<double> breakpoints = {},
                                    std::string label = "density") {
        LevyMeasure m;
        m.kind_ = Kind::density;
        m.label_ = std::move(label);
        m.pieces_ = support_pieces(support, gap);
        m.density_ = std::move(density);
        m.density_bound_ = density_bound;
        if (nodes < 2) throw ConfigError("density quadrature needs at least 2 nodes");

        std::vector<Interval> panels;
        for (const Interval& piece : m.pieces_) {
            std::vector<double> cuts{piece.lo};
            for (double b : breakpoints)
                if (b > piece.lo && b < piece.hi) cuts.push_back(b);
            cuts.push_back(piece.hi);
            std::sort(cuts.begin(), cuts.end());
            for (std::size_t k = 0; k + 1 < cuts.size(); ++k) panels.push_back({cuts[k], cuts[k + 1]});
        }
        const int per_panel = std::max(4, (nodes + static_cast<int>(panels.size()) - 1) / static_cast<int>(panels.size()));
        for (const Interval& panel : panels) {
            auto [x, w] = gauss_legendre(per_panel, panel.lo, panel.hi);
            for (std::size_t k = 0; k < x.size(); ++k) {
                const double d = m.density_(x[k]);
                if (!(d >= 0.0) || !std::isfinite(d)) throw ConfigError("density must be finite and nonnegative");
                m.nodes_.push_back(x[k]);
                m.weights_.push_back(w[k] * d);
            }
        }
        m.finish();
        return m;
    }

    /// Gaussian shape N(mean, stddev^2) restricted to the support and scaled to
    /// total intensity `mass`.
    static LevyMeasure truncated_gaussian(double mass, double mean, double stddev, Interval support, double gap,
                                          int nodes = kDefaultNodes) {
        if (!(mass >= 0.0)) throw ConfigError("truncated_gaussian: mass must be nonnegative");
        if (!(stddev > 0.0)) throw ConfigError("truncated_gaussian: stddev must be positive");
        auto shape = [mean, stddev](double y) {
            const double u = (y - mean) / stddev;
            return std::exp(-0.5 * u * u);
        };
        // Normalize with the same rule that integrates against the measure.
        const LevyMeasure unit = from_density(shape, 1.0, support, gap, nodes, {}, "truncated_gaussian");
        const double z = unit.total_mass();
        if (!(z > 0.0)) throw ConfigError("truncated_gaussian: support carries no mass");
        const double scale = mass / z;
        double peak = 0.0;
        for (const Interval& piece : unit.pieces_) peak = std::max(peak, shape(std::clamp(mean, piece.lo, piece.hi)));
        return from_density([shape, scale](double y) { return scale * shape(y); }, scale * peak, support, gap, nodes, {},
                            "truncated_gaussian");
    }

    /// Piecewise-linear density through (location, density) points, zero outside.
    static LevyMeasure table(std::vector<std::pair<double, double>> points, double gap, int nodes = kDefaultNodes) {
        if (points.size() < 2) throw ConfigError("table density needs at least two points");
        std::sort(points.begin(), points.end());
        double peak = 0.0;
        std::vector<double> breaks;
        for (const auto& [y, d] : points) {
            if (d < 0.0) throw ConfigError("table density values must be nonnegative");
            peak = std::max(peak, d);
            breaks.push_back(y);
        }
        auto density = [points](double y) {
            if (y < points.front().first || y > points.back().first) return 0.0;
            auto it = std::upper_bound(points.begin(), points.end(), y,
                                       [](double v, const std::pair<double, double>& p) { return v < p.first; });
            if (it == points.end()) return points.back().second;
            if (it == points.begin()) return points.front().second;
            const auto& [y1, d1] = *it;
            const auto& [y0, d0] = *(it - 1);
            return d0 + (d1 - d0) * (y - y0) / (y1 - y0);
        };
        return from_density(density, peak, {points.front().first, points.back().first}, gap, nodes, breaks, "table");
    }

    Kind kind() const noexcept { return kind_; }
    const std::string& label() const noexcept { return label_; }

    /// Discrete rule representing the measure.
    std::span<const double> nodes() const noexcept { return nodes_; }
    std::span<const double> weights() const noexcept { return weights_; }

    /// nu(R), the jump intensity.
    double total_mass() const noexcept { return total_mass_; }
    bool is_zero() const noexcept { return total_mass_ == 0.0; }

    const std::vector<Interval>& pieces() const noexcept { return pieces_; }

    double density(double y) const {
        if (kind_ != Kind::density) return 0.0;
        for (const Interval& piece : pieces_)
            if (y >= piece.lo && y <= piece.hi) return density_(y);
        return 0.0;
    }

    /// Draws a jump size from nu / nu(R).
    template <class Engine>
    double sample_jump(Engine& engine) const {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        if (kind_ == Kind::atomic) {
            const double u = unit(engine) * total_mass_;
            auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
            const auto k = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), nodes_.size() - 1);
            return nodes_[k];
        }
        double total_len = 0.0;
        for (const Interval& piece : pieces_) total_len += piece.length();
        for (;;) {
            double s = unit(engine) * total_len;
            double y = pieces_.back().hi;
            for (const Interval& piece : pieces_) {
                if (s <= piece.length()) {
                    y = piece.lo + s;
                    break;
                }
                s -= piece.length();
            }
            if (unit(engine) * density_bound_ <= density_(y)) return y;
        }
    }

private:
    static std::vector<Interval> support_pieces(Interval support, double gap) {
        if (!(support.hi > support.lo)) throw ConfigError("density support must be a nonempty interval");
        if (gap < 0.0) throw ConfigError("support gap must be nonnegative");
        std::vector<Interval> out;
        if (support.lo < -gap) out.push_back({support.lo, std::min(support.hi, -gap)});
        if (support.hi > gap) out.push_back({std::max(support.lo, gap), support.hi});
        for (const Interval& piece : out)
            if (piece.lo <= 0.0 && piece.hi >= 0.0)
                throw ConfigError("density support must exclude a neighborhood of 0 (set a positive gap)");
        std::erase_if(out, [](const Interval& p) { return !(p.length() > 0.0); });
        if (out.empty()) throw ConfigError("density support is empty after removing the gap around 0");
        return out;
    }

    void finish() {
        cumulative_.clear();
        total_mass_ = 0.0;
        for (double w : weights_) {
            total_mass_ += w;
            cumulative_.push_back(total_mass_);
        }
    }

    Kind kind_ = Kind::atomic;
    std::string label_ = "atomic";
    std::vector<double> nodes_;
    std::vector<double> weights_;
    std::vector<double> cumulative_;
    double total_mass_ = 0.0;
    std::vector<Interval> pieces_;
    std::function<double(double)> density_;
    double density_bound_ = 0.0;
};

/// Driving Levy process: Brownian coefficient `a` and jump measure nu.
/// Immutable once built.
class LevyModel {
public:
    LevyModel(double a, LevyMeasure measure) : a_(a), measure_(std::move(measure)) {
        if (!(a_ >= 0.0) || !std::isfinite(a_)) throw ConfigError("diffusion coefficient a must be finite and >= 0");
        if (a_ == 0.0 && measure_.is_zero()) throw ConfigError("a = 0 together with a zero Levy measure is degenerate");
    }

    double a() const noexcept { return a_; }
    const LevyMeasure& measure() const noexcept { return measure_; }

private:
    double a_;
    LevyMeasure measure_;
};

/// Signed moment int x^k nu(dx).
inline double nu_moment(const LevyModel& model, int k) {
    if (k < 0) throw ConfigError("moment order must be nonnegative");
    const auto x = model.measure().nodes();
    const auto w = model.measure().weights();
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * std::pow(x[j], k);
    return acc;
}

/// int fn(y) nu(dy) with the measure's fixed rule.
template <class Fn>
double nu_integral(const LevyModel& model, Fn&& fn) {
    const auto x = model.measure().nodes();
    const auto w = model.measure().weights();
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * fn(x[j]);
    return acc;
}

/// Inner product under mu = x^2 nu(dx) + a^2 delta_0(dx).
inline double mu_inner(const LevyModel& model, const Polynomial& p1, const Polynomial& p2) {
    const double a = model.a();
    return nu_integral(model, [&](double x) { return x * x * p1(x) * p2(x); }) + a * a * p1(0.0) * p2(0.0);
}

}  // namespace levy_fbsde
