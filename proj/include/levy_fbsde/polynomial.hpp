#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <utility>
#include <vector>

#include "levy_fbsde/errors.hpp"

namespace levy_fbsde {

/// Real polynomial in the monomial basis; coeffs[k] multiplies x^k.
class Polynomial {
public:
    /// Highest degree the library ever builds (2 * max chaos order).
    static constexpr int kMaxDegree = 20;

    Polynomial() = default;
    explicit Polynomial(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) { normalize(); }
    Polynomial(std::initializer_list<double> coeffs) : coeffs_(coeffs) { normalize(); }

    static Polynomial monomial(int power, double scale = 1.0) {
        std::vector<double> c(static_cast<std::size_t>(power) + 1, 0.0);
        c.back() = scale;
        return Polynomial(std::move(c));
    }

    /// Degree of the polynomial; -1 for the zero polynomial.
    int degree() const noexcept { return static_cast<int>(coeffs_.size()) - 1; }
    bool is_zero() const noexcept { return coeffs_.empty(); }

    const std::vector<double>& coeffs() const noexcept { return coeffs_; }

    double coeff(int k) const noexcept {
        return k >= 0 && k <= degree() ? coeffs_[static_cast<std::size_t>(k)] : 0.0;
    }

    double leading() const noexcept { return coeffs_.empty() ? 0.0 : coeffs_.back(); }

    double operator()(double x) const noexcept {
        double acc = 0.0;
        for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * x + *it;
        return acc;
    }

    /// x * p(x)
    Polynomial times_x() const {
        if (is_zero()) return {};
        std::vector<double> c(coeffs_.size() + 1, 0.0);
        std::copy(coeffs_.begin(), coeffs_.end(), c.begin() + 1);
        return Polynomial(std::move(c));
    }

    Polynomial& operator+=(const Polynomial& rhs) {
        if (rhs.coeffs_.size() > coeffs_.size()) coeffs_.resize(rhs.coeffs_.size(), 0.0);
        for (std::size_t k = 0; k < rhs.coeffs_.size(); ++k) coeffs_[k] += rhs.coeffs_[k];
        normalize();
        return *this;
    }

    Polynomial& operator-=(const Polynomial& rhs) {
        if (rhs.coeffs_.size() > coeffs_.size()) coeffs_.resize(rhs.coeffs_.size(), 0.0);
        for (std::size_t k = 0; k < rhs.coeffs_.size(); ++k) coeffs_[k] -= rhs.coeffs_[k];
        normalize();
        return *this;
    }

    Polynomial& operator*=(double s) {
        for (double& c : coeffs_) c *= s;
        normalize();
        return *this;
    }

    friend Polynomial operator+(Polynomial lhs, const Polynomial& rhs) { return lhs += rhs; }
    friend Polynomial operator-(Polynomial lhs, const Polynomial& rhs) { return lhs -= rhs; }
    friend Polynomial operator*(Polynomial p, double s) { return p *= s; }
    friend Polynomial operator*(double s, Polynomial p) { return p *= s; }

    friend bool operator==(const Polynomial&, const Polynomial&) = default;

private:
    void normalize() {
        while (!coeffs_.empty() && coeffs_.back() == 0.0) coeffs_.pop_back();
        if (degree() > kMaxDegree) throw ConfigError("polynomial degree exceeds the supported maximum of 20");
    }

    std::vector<double> coeffs_;
};

}  // namespace levy_fbsde
