#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "levy_fbsde/errors.hpp"
#include "levy_fbsde/problem.hpp"

namespace levy_fbsde {

struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    int n = 16;

    double step() const noexcept { return (hi - lo) / (n - 1); }
    double coord(int i) const noexcept { return i == n - 1 ? hi : lo + i * step(); }
    double extent() const noexcept { return hi - lo; }
};

/// Up to four (node, weight) pairs.
struct NodeStencil {
    std::array<int, 4> node{};
    std::array<double, 4> weight{};
    int count = 0;
};

/// One-dimensional finite-difference stencil along an axis (index offsets).
struct AxisStencil {
    std::array<int, 4> offset{};
    std::array<double, 4> weight{};
    int count = 0;
};

/// Second-order first derivative: central inside, one-sided at the edges.
inline AxisStencil first_derivative_stencil(int i, int n, double h) {
    if (i == 0) return {{0, 1, 2, 0}, {-1.5 / h, 2.0 / h, -0.5 / h, 0.0}, 3};
    if (i == n - 1) return {{-2, -1, 0, 0}, {0.5 / h, -2.0 / h, 1.5 / h, 0.0}, 3};
    return {{-1, 1, 0, 0}, {-0.5 / h, 0.5 / h, 0.0, 0.0}, 2};
}

/// Second-order second derivative: central inside, one-sided four-point at the edges.
inline AxisStencil second_derivative_stencil(int i, int n, double h) {
    const double h2 = h * h;
    if (i == 0) return {{0, 1, 2, 3}, {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2}, 4};
    if (i == n - 1) return {{-3, -2, -1, 0}, {-1.0 / h2, 4.0 / h2, -5.0 / h2, 2.0 / h2}, 4};
    return {{-1, 0, 1, 0}, {1.0 / h2, -2.0 / h2, 1.0 / h2, 0.0}, 3};
}

/// Uniform tensor grid in one or two dimensions; node index = i0 + n0 * i1.
class SpatialGrid {
public:
    SpatialGrid() : SpatialGrid(std::vector<Axis>{Axis{}}) {}

    explicit SpatialGrid(std::vector<Axis> axes) : axes_(std::move(axes)) {
        if (axes_.empty() || axes_.size() > static_cast<std::size_t>(kMaxStateDim))
            throw ConfigError("spatial grid must have 1 or 2 dimensions");
        size_ = 1;
        for (const Axis& ax : axes_) {
            if (ax.n < 16) throw ConfigError("grid.n must be at least 16 per dimension");
            if (!(ax.hi > ax.lo)) throw ConfigError("grid.hi must exceed grid.lo");
            size_ *= ax.n;
        }
    }

    int dims() const noexcept { return static_cast<int>(axes_.size()); }
    int size() const noexcept { return size_; }
    const Axis& axis(int k) const { return axes_[static_cast<std::size_t>(k)]; }
    const std::vector<Axis>& axes() const noexcept { return axes_; }

    int stride(int k) const noexcept { return k == 0 ? 1 : axes_[0].n; }

    std::array<int, 2> index(int node) const noexcept {
        if (dims() == 1) return {node, 0};
        return {node % axes_[0].n, node / axes_[0].n};
    }

    StateVec point(int node) const {
        const auto idx = index(node);
        StateVec x(dims());
        for (int k = 0; k < dims(); ++k) x(k) = axes_[static_cast<std::size_t>(k)].coord(idx[static_cast<std::size_t>(k)]);
        return x;
    }

    bool contains(const StateVec& x) const {
        for (int k = 0; k < dims(); ++k) {
            const Axis& ax = axis(k);
            if (!(x(k) >= ax.lo && x(k) <= ax.hi)) return false;
        }
        return true;
    }

    /// Multilinear interpolation weights; points outside the box are clamped to
    /// the boundary (constant extension).
    NodeStencil interpolation(const StateVec& x) const {
        std::array<double, 2> u{0.0, 0.0};
        for (int k = 0; k < dims(); ++k) {
            const Axis& ax = axis(k);
            u[static_cast<std::size_t>(k)] = (std::clamp(x(k), ax.lo, ax.hi) - ax.lo) / ax.step();
        }
        return stencil_at(u);
    }

    /// Stencil of grid.point(node) + d, located in index space so that d = 0
    /// reproduces the node exactly.
    NodeStencil displaced(int node, const StateVec& d) const {
        const auto idx = index(node);
        std::array<double, 2> u{0.0, 0.0};
        for (int k = 0; k < dims(); ++k) {
            const auto ks = static_cast<std::size_t>(k);
            u[ks] = std::clamp(idx[ks] + d(k) / axis(k).step(), 0.0, static_cast<double>(axis(k).n - 1));
        }
        return stencil_at(u);
    }

    /// Interpolated row of a nodes x cols field.
    Eigen::RowVectorXd interpolate(const Eigen::MatrixXd& field, const StateVec& x) const {
        const NodeStencil st = interpolation(x);
        Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(field.cols());
        for (int k = 0; k < st.count; ++k) out += st.weight[static_cast<std::size_t>(k)] * field.row(st.node[static_cast<std::size_t>(k)]);
        return out;
    }

    /// Partial derivative along axis k of every column of `field` at `node`.
    Eigen::RowVectorXd derivative(const Eigen::MatrixXd& field, int node, int k) const {
        const auto idx = index(node);
        const Axis& ax = axis(k);
        const AxisStencil st = first_derivative_stencil(idx[static_cast<std::size_t>(k)], ax.n, ax.step());
        Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(field.cols());
        for (int j = 0; j < st.count; ++j)
            out += st.weight[static_cast<std::size_t>(j)] *
                   (field.row(node + st.offset[static_cast<std::size_t>(j)] * stride(k)) - field.row(node));
        return out;
    }

private:
    NodeStencil stencil_at(const std::array<double, 2>& u) const {
        std::array<int, 2> base{0, 0};
        std::array<double, 2> frac{0.0, 0.0};
        for (int k = 0; k < dims(); ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const int i = std::clamp(static_cast<int>(std::floor(u[ks])), 0, axis(k).n - 2);
            base[ks] = i;
            frac[ks] = std::clamp(u[ks] - i, 0.0, 1.0);
        }
        NodeStencil st;
        if (dims() == 1) {
            st.node = {base[0], base[0] + 1, 0, 0};
            st.weight = {1.0 - frac[0], frac[0], 0.0, 0.0};
            st.count = 2;
            return st;
        }
        const int n0 = axes_[0].n;
        const int b = base[0] + n0 * base[1];
        st.node = {b, b + 1, b + n0, b + n0 + 1};
        st.weight = {(1.0 - frac[0]) * (1.0 - frac[1]), frac[0] * (1.0 - frac[1]), (1.0 - frac[0]) * frac[1],
                     frac[0] * frac[1]};
        st.count = 4;
        return st;
    }

    std::vector<Axis> axes_;
    int size_ = 0;
};

}  // namespace levy_fbsde
