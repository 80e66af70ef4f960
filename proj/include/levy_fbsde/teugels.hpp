#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "levy_fbsde/errors.hpp"
#include "levy_fbsde/levy_model.hpp"
#include "levy_fbsde/polynomial.hpp"

namespace levy_fbsde {

inline constexpr int kMaxChaosOrder = 10;

/// Orthonormal polynomials q_0..q_{M-1} under mu = x^2 nu + a^2 delta_0 and
/// the jump polynomials p_i(x) = x q_{i-1}(x) that drive the orthogonalized
/// Teugels martingales H^(1..M).
struct TeugelsBasis {
    int order = 0;
    double a = 0.0;
    std::vector<Polynomial> q;          // q[i] is q_i, i = 0..M-1
    std::vector<Polynomial> p;          // p[i] is p_{i+1}
    std::vector<double> q_at_zero;      // q_i(0)
    std::vector<double> p_norm_sq;      // int p_{i+1}^2 dnu

    /// sum_i q_{i-1}(0)^2 over the retained orders; the truncated version of
    /// the summability condition on q_{i-1}(0).
    double tail_indicator() const {
        double s = 0.0;
        for (double v : q_at_zero) s += v * v;
        return s;
    }
};

namespace detail {

struct GramSchmidtOutcome {
    std::vector<Polynomial> q;
    int feasible = 0;
    std::string reason;
};

inline constexpr double kPivotTolerance = 1e-12;
inline constexpr double kConditionLimit = 1e12;

inline double gram_condition(const LevyModel& model, int order) {
    Eigen::MatrixXd gram(order, order);
    for (int i = 0; i < order; ++i)
        for (int j = 0; j <= i; ++j)
            gram(i, j) = gram(j, i) = mu_inner(model, Polynomial::monomial(i), Polynomial::monomial(j));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

// Modified Gram-Schmidt with one re-orthogonalization pass over 1, x, x^2, ...
inline GramSchmidtOutcome orthonormalize(const LevyModel& model, int order) {
    GramSchmidtOutcome out;
    for (int k = 0; k < order; ++k) {
        const Polynomial mono = Polynomial::monomial(k);
        Polynomial v = mono;
        const double initial = std::sqrt(std::max(0.0, mu_inner(model, mono, mono)));
        for (int pass = 0; pass < 2; ++pass)
            for (const Polynomial& qj : out.q) v -= mu_inner(model, v, qj) * qj;
        const double norm = std::sqrt(std::max(0.0, mu_inner(model, v, v)));
        if (norm < kPivotTolerance * std::max(1.0, initial)) {
            out.reason = "pivot norm " + std::to_string(norm) + " at degree " + std::to_string(k);
            return out;
        }
        if (gram_condition(model, k + 1) > kConditionLimit) {
            out.reason = "Gram matrix condition number above 1e12 at order " + std::to_string(k + 1);
            return out;
        }
        v *= 1.0 / norm;
        if (v.leading() < 0.0) v *= -1.0;
        out.q.push_back(std::move(v));
        out.feasible = k + 1;
    }
    return out;
}

}  // namespace detail

/// Builds the chaos basis of order M (1 <= M <= 10). Throws DegenerateMeasure
/// when mu supports fewer than M orthonormal polynomials; the error reports the
/// largest order that would succeed.
inline TeugelsBasis build_basis(const LevyModel& model, int order) {
    if (order < 1 || order > kMaxChaosOrder) throw ConfigError("chaos order M must be in [1, 10]");
    auto gs = detail::orthonormalize(model, order);
    if (gs.feasible < order)
        throw DegenerateMeasure("measure supports only " + std::to_string(gs.feasible) +
                                    " orthonormal polynomial(s), requested M = " + std::to_string(order) + " (" +
                                    gs.reason + ")",
                                gs.feasible);

    TeugelsBasis basis;
    basis.order = order;
    basis.a = model.a();
    basis.q = std::move(gs.q);
    for (const Polynomial& qi : basis.q) {
        Polynomial pi = qi.times_x();
        basis.q_at_zero.push_back(qi(0.0));
        basis.p_norm_sq.push_back(nu_integral(model, [&](double x) { return pi(x) * pi(x); }));
        basis.p.push_back(std::move(pi));
    }
    return basis;
}

struct OrthogonalityReport {
    Eigen::MatrixXd gram_residual;   // |<q_{i-1}, q_{j-1}>_mu - delta_ij|
    Eigen::MatrixXd lemma_residual;  // |int p_i p_j dnu - (delta_ij - a^2 q_{i-1}(0) q_{j-1}(0))|
    double max_gram = 0.0;
    double max_lemma = 0.0;

    double max_residual() const { return std::max(max_gram, max_lemma); }
};

inline OrthogonalityReport check_orthogonality(const TeugelsBasis& basis, const LevyModel& model) {
    const int m = basis.order;
    OrthogonalityReport rep;
    rep.gram_residual.resize(m, m);
    rep.lemma_residual.resize(m, m);
    const double a2 = model.a() * model.a();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            const double kron = i == j ? 1.0 : 0.0;
            const double g = mu_inner(model, basis.q[i], basis.q[j]);
            const double pp = nu_integral(model, [&](double x) { return basis.p[i](x) * basis.p[j](x); });
            rep.gram_residual(i, j) = std::abs(g - kron);
            rep.lemma_residual(i, j) =
                std::abs(pp - (kron - a2 * basis.q[i](0.0) * basis.q[j](0.0)));
        }
    }
    rep.max_gram = rep.gram_residual.maxCoeff();
    rep.max_lemma = rep.lemma_residual.maxCoeff();
    return rep;
}

}  // namespace levy_fbsde
