// Prices an at-the-money call under a single-atom jump market and a
// Black-Scholes market, then hedges the Black-Scholes claim along 2000 paths.
#include <cmath>
#include <cstdio>

#include "levy_fbsde/pricing.hpp"
#include "levy_fbsde/verify/acceptance.hpp"
#include "levy_fbsde/verify/oracles.hpp"

using namespace levy_fbsde;

int main() {
    const verify::BlackScholesCase bs;
    const PriceResult a = price(bs.market(), bs.model, bs.basis, bs.grid(), bs.solver());
    std::printf("Black-Scholes call  W0 %.6f  closed form %.6f\n", a.w0, bs.exact());

    const verify::JumpMarketCase jc;
    SolverConfig cfg;
    cfg.horizon = jc.maturity;
    const double c = std::log(jc.spot);
    const PriceResult b = price(jc.market(), jc.model, jc.basis, SpatialGrid({Axis{c - 1.5, c + 1.5, 401}}), cfg);
    std::printf("jump call           W0 %.6f  series     %.6f\n", b.w0, jc.exact());

    const HedgeReport h = replication_check(bs.market(), bs.model, bs.basis, a.solution, TimeGrid(bs.maturity, 100), 2000, 7, 1);
    std::printf("hedge over %d paths: mean error %.4f (SE %.4f), rms %.4f\n", h.n_paths, h.mean_error, h.se_error, h.rms_error);
}
