#pragma once

// Closed-form and series reference values. Nothing here touches the solver,
// basis or simulation code.

#include <cmath>
#include <functional>
#include <numbers>

namespace levy_fbsde::oracle {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double black_scholes_call(double spot, double strike, double rate, double vol, double maturity) {
    const double sd = vol * std::sqrt(maturity);
    const double d1 = (std::log(spot / strike) + (rate + 0.5 * vol * vol) * maturity) / sd;
    return spot * normal_cdf(d1) - strike * std::exp(-rate * maturity) * normal_cdf(d1 - sd);
}

inline double black_scholes_put(double spot, double strike, double rate, double vol, double maturity) {
    return black_scholes_call(spot, strike, rate, vol, maturity) - spot + strike * std::exp(-rate * maturity);
}

/// Gaussian bump A exp(-(x-m)^2 / (2 w^2)) smoothed by the heat semigroup with
/// diffusivity D over time tau, i.e. convolved with N(0, 2 D tau).
inline double heat_gaussian(double x, double amplitude, double mean, double width, double diffusivity, double tau) {
    const double v = width * width + 2.0 * diffusivity * tau;
    return amplitude * width / std::sqrt(v) * std::exp(-(x - mean) * (x - mean) / (2.0 * v));
}

inline double poisson_pmf(int n, double mean) {
    if (mean == 0.0) return n == 0 ? 1.0 : 0.0;
    return std::exp(n * std::log(mean) - mean - std::lgamma(n + 1.0));
}

/// E[h(x + kappa N - kappa lambda tau)] with N ~ Poisson(lambda tau), summed
/// until the remaining Poisson mass is below `tail`.
inline double compensated_poisson_mixture(const std::function<double(double)>& h, double x, double kappa, double lambda,
                                          double tau, double tail = 1e-16) {
    const double mean = lambda * tau;
    double acc = 0.0, mass = 0.0;
    for (int n = 0; n < 10000; ++n) {
        const double w = poisson_pmf(n, mean);
        acc += w * h(x + kappa * n - kappa * mean);
        mass += w;
        if (n > mean && 1.0 - mass < tail) break;
    }
    return acc;
}

/// Discounted expected payoff of S_T = S0 exp(b T + kappa N_T), N_T ~ Poisson(lambda T).
inline double compound_poisson_price(const std::function<double(double)>& payoff, double spot, double rate,
                                     double log_drift, double kappa, double lambda, double maturity) {
    const double mean = lambda * maturity;
    double acc = 0.0, mass = 0.0;
    for (int n = 0; n < 10000; ++n) {
        const double w = poisson_pmf(n, mean);
        acc += w * payoff(spot * std::exp(log_drift * maturity + kappa * n));
        mass += w;
        if (n > mean && 1.0 - mass < 1e-16) break;
    }
    return std::exp(-rate * maturity) * acc;
}

}  // namespace levy_fbsde::oracle
