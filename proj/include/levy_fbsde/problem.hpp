#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "levy_fbsde/errors.hpp"
#include "levy_fbsde/levy_model.hpp"
#include "levy_fbsde/teugels.hpp"

namespace levy_fbsde {

inline constexpr int kMaxStateDim = 2;
inline constexpr int kMaxValueDim = 2;

// Fixed-capacity Eigen types; coefficient callbacks run per grid node and per
// quadrature point, so they must not allocate.
using StateVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxStateDim, 1>;
using ValueVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxValueDim, 1>;
using VolMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxStateDim, kMaxChaosOrder>;  // P x M
using ZMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxValueDim, kMaxChaosOrder>;    // Q x M
using BetaMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxStateDim, kMaxStateDim>;  // P x P

/// Coefficients of the coupled system
///   X_t = x + int f(s, X, Y, Z) ds + int sigma(s, X-, Y-) dH
///   Y_t = h(X_T) + int_t^T g(s, X, Y, Z) ds - int_t^T Z dH
/// truncated at chaos order M (sigma has M columns, Z has M columns).
struct FbsdeProblem {
    using DriftFn = std::function<StateVec(double, const StateVec&, const ValueVec&, const ZMatrix&)>;
    using VolatilityFn = std::function<VolMatrix(double, const StateVec&, const ValueVec&)>;
    using DriverFn = std::function<ValueVec(double, const StateVec&, const ValueVec&, const ZMatrix&)>;
    using TerminalFn = std::function<ValueVec(const StateVec&)>;

    std::string name = "problem";
    int state_dim = 1;  // P
    int value_dim = 1;  // Q
    int order = 1;      // M
    DriftFn drift;
    VolatilityFn volatility;
    DriverFn driver;
    TerminalFn terminal;
    /// True when f or g read their z argument.
    bool z_dependent = false;
};

inline void validate(const FbsdeProblem& problem) {
    if (problem.state_dim < 1 || problem.state_dim > kMaxStateDim)
        throw ConfigError("forward dimension P must be 1 or 2");
    if (problem.value_dim < 1 || problem.value_dim > kMaxValueDim)
        throw ConfigError("backward dimension Q must be 1 or 2");
    if (problem.order < 1 || problem.order > kMaxChaosOrder) throw ConfigError("chaos order M must be in [1, 10]");
    if (!problem.drift || !problem.volatility || !problem.driver || !problem.terminal)
        throw ConfigError("problem '" + problem.name + "' is missing a coefficient function");
}

inline ZMatrix zero_z(const FbsdeProblem& problem) { return ZMatrix::Zero(problem.value_dim, problem.order); }

/// Derived PIDE coefficients for a problem and its chaos basis:
///   delta(t,x,y,y') = sum_i sigma_i(t,x,y) p_i(y')
///   beta^{kl}       = (a^2/2) (sum_i sigma_i^k q_{i-1}(0)) (sum_j sigma_j^l q_{j-1}(0))
///   c_i^k           = a^2 q_{i-1}(0) sum_j sigma_j^k q_{j-1}(0)
/// All sums run over the retained orders i <= M.
class CoefficientSet {
public:
    CoefficientSet(const FbsdeProblem& problem, const TeugelsBasis& basis, const LevyModel& model)
        : problem_(problem), a_(model.a()), p_(basis.p) {
        validate(problem);
        if (problem.order != basis.order)
            throw BasisMismatch("problem chaos order " + std::to_string(problem.order) + " differs from basis order " +
                                std::to_string(basis.order));
        const int m = basis.order;
        q0_ = Eigen::Map<const Eigen::VectorXd>(basis.q_at_zero.data(), m);
        const auto x = model.measure().nodes();
        const auto w = model.measure().weights();
        nodes_.assign(x.begin(), x.end());
        weights_.assign(w.begin(), w.end());
        p_at_nodes_.resize(static_cast<Eigen::Index>(nodes_.size()), m);
        for (std::size_t j = 0; j < nodes_.size(); ++j)
            for (int i = 0; i < m; ++i) p_at_nodes_(static_cast<Eigen::Index>(j), i) = basis.p[static_cast<std::size_t>(i)](nodes_[j]);
        compensator_ = Eigen::VectorXd::Zero(m);
        for (std::size_t j = 0; j < nodes_.size(); ++j)
            compensator_ += weights_[j] * p_at_nodes_.row(static_cast<Eigen::Index>(j)).transpose();
    }

    const FbsdeProblem& problem() const noexcept { return problem_; }
    int state_dim() const noexcept { return problem_.state_dim; }
    int order() const noexcept { return static_cast<int>(q0_.size()); }
    double a() const noexcept { return a_; }
    const Eigen::VectorXd& q_at_zero() const noexcept { return q0_; }

    std::span<const double> jump_nodes() const noexcept { return nodes_; }
    std::span<const double> jump_weights() const noexcept { return weights_; }
    /// p_i at the quadrature nodes of nu (rows: nodes, cols: i).
    const Eigen::MatrixXd& p_at_nodes() const noexcept { return p_at_nodes_; }
    /// int p_i dnu.
    const Eigen::VectorXd& compensator() const noexcept { return compensator_; }

    VolMatrix sigma(double t, const StateVec& x, const ValueVec& y) const {
        VolMatrix s = problem_.volatility(t, x, y);
        if (s.rows() != problem_.state_dim || s.cols() != order())
            throw ConfigError("volatility of '" + problem_.name + "' has the wrong shape");
        return s;
    }

    StateVec delta_from(const VolMatrix& sigma, double jump) const {
        StateVec d = StateVec::Zero(sigma.rows());
        for (int i = 0; i < order(); ++i) d += sigma.col(i) * poly_p(i, jump);
        return d;
    }

    /// delta at the j-th quadrature node of nu.
    StateVec delta_at_node(const VolMatrix& sigma, std::size_t node) const {
        return sigma * p_at_nodes_.row(static_cast<Eigen::Index>(node)).transpose();
    }

    /// sum_i sigma_i q_{i-1}(0), the loading of the Brownian part.
    StateVec brownian_loading(const VolMatrix& sigma) const { return sigma * q0_; }

    BetaMatrix beta_from(const VolMatrix& sigma) const {
        const StateVec v = brownian_loading(sigma);
        return 0.5 * a_ * a_ * v * v.transpose();
    }

    /// c via the closed form a^2 q_{i-1}(0) sum_j sigma_j q_{j-1}(0).
    VolMatrix c_from(const VolMatrix& sigma) const {
        const StateVec v = brownian_loading(sigma);
        return a_ * a_ * v * q0_.transpose();
    }

    /// c via sigma_i - int delta p_i dnu.
    VolMatrix c_direct_from(const VolMatrix& sigma) const {
        VolMatrix c = sigma;
        for (std::size_t j = 0; j < nodes_.size(); ++j) {
            const StateVec d = delta_at_node(sigma, j);
            c -= weights_[j] * d * p_at_nodes_.row(static_cast<Eigen::Index>(j));
        }
        return c;
    }

    /// int delta dnu = sum_i sigma_i int p_i dnu.
    StateVec mean_jump_from(const VolMatrix& sigma) const { return sigma * compensator_; }

    StateVec delta(double t, const StateVec& x, const ValueVec& y, double jump) const {
        return delta_from(sigma(t, x, y), jump);
    }
    BetaMatrix beta(double t, const StateVec& x, const ValueVec& y) const { return beta_from(sigma(t, x, y)); }
    VolMatrix c(double t, const StateVec& x, const ValueVec& y) const { return c_from(sigma(t, x, y)); }
    VolMatrix c_direct(double t, const StateVec& x, const ValueVec& y) const { return c_direct_from(sigma(t, x, y)); }

    /// int |delta|^2 dnu, and the right-hand side ||sigma||^2 - a^2 |sum sigma_i q_{i-1}(0)|^2.
    std::pair<double, double> jump_energy(const VolMatrix& sigma) const {
        double lhs = 0.0;
        for (std::size_t j = 0; j < nodes_.size(); ++j) lhs += weights_[j] * delta_at_node(sigma, j).squaredNorm();
        const double rhs = sigma.squaredNorm() - a_ * a_ * brownian_loading(sigma).squaredNorm();
        return {lhs, rhs};
    }

private:
    double poly_p(int i, double y) const { return p_[static_cast<std::size_t>(i)](y); }

    FbsdeProblem problem_;
    double a_;
    std::vector<Polynomial> p_;
    Eigen::VectorXd q0_;
    std::vector<double> nodes_;
    std::vector<double> weights_;
    Eigen::MatrixXd p_at_nodes_;
    Eigen::VectorXd compensator_;
};

}  // namespace levy_fbsde
