#pragma once

#include <vector>

#include "mpdual/model.hpp"

namespace mpdual {

// Dual variables of the undelayed system: one price per link (mu), one per
// source (nu). In the gamma = 1 mode nu is identically zero.
struct PriceState {
    std::vector<double> mu;
    std::vector<double> nu;
    double t = 0.0;
};

// Rates implied by a price point through the closed-form laws.
struct RateVector {
    std::vector<double> x;       // per route
    std::vector<double> y;       // per source
    std::vector<double> ybar;    // per source, relaxed aggregate
    std::vector<double> lambda;  // per route, sum of link prices
    std::vector<double> z;       // per link load
};

// Constant price-adjustment gains.
struct GainConstants {
    std::vector<double> kappa_link;    // per link, > 0
    std::vector<double> kappa_source;  // per source, > 0

    static GainConstants uniform(const NetworkModel& m, double kj, double ks);
};

// A full primal/dual point; produced by a converged trajectory or by the
// convex-program reference solver.
struct EquilibriumPoint {
    std::vector<double> x, y, ybar;  // rates
    std::vector<double> mu, nu;      // prices
    std::vector<double> lambda;      // per-route aggregate price
};

// Prices below this are treated as outside the rate-law domain.
inline constexpr double kPriceEpsilon = 1e-9;
// Relative guard band keeping nu away from both ends of (0, min lambda)
// after an Euler step; see step_undelayed.
inline constexpr double kPriceGuardFraction = 1e-2;

// lambda_r = sum of mu_j over the links of r.
std::vector<double> aggregate_prices(const NetworkModel& model,
                                     const std::vector<double>& mu);

// Relaxed aggregate for one source:
//   ybar = D( (gamma^p sum_r (lambda_r - nu)^(1-p) + (1-gamma)^p nu^(1-p))^(1/(1-p)) ).
// lambda_s holds the aggregate prices of the source's routes, in the order
// of Source::routes. Throws PriceDomainViolation when any lambda_r - nu or
// nu itself is <= kPriceEpsilon (for gamma = 1, only lambda_r is checked).
double ybar_from_prices(const std::vector<double>& lambda_s, double nu_s,
                        const AlgorithmParams& params, const Source& source);

// Closed-form rates at a price point:
//   x_r = ybar (gamma U'(ybar) / (lambda_r - nu))^p
//   y_s = ybar ((1-gamma) U'(ybar) / nu)^p          (y_s = sum x_r if gamma = 1)
//   z_j = sum of x_r over routes through j.
RateVector rates_from_prices(const NetworkModel& model, const AlgorithmParams& params,
                             const std::vector<double>& mu, const std::vector<double>& nu);

// One explicit-Euler step of
//   d mu_j = kappa_j (z_j - c_j)^+_{mu_j}
//   d nu_s = kappa_s (y_s - sum_r x_r)
// followed by projection of mu onto [0,inf) and clamping of nu into
// [max(eps, f*min lambda), (1-f)*min lambda] with f = kPriceGuardFraction.
// clamp_events, when given, is incremented once per clamped component.
// Throws NonFiniteState if the step produced NaN/inf.
PriceState step_undelayed(const NetworkModel& model, const AlgorithmParams& params,
                          const GainConstants& gains, const PriceState& state, double dt,
                          long* clamp_events = nullptr);

// Dual objective
//   W(mu, nu) = sum_s [ U(ybar) - sum_r (lambda_r - nu) x_r - nu y_s ] + c^T mu
// evaluated at the closed-form maximizer above.
double dual_objective(const NetworkModel& model, const AlgorithmParams& params,
                      const std::vector<double>& mu, const std::vector<double>& nu);

struct DualGradient {
    std::vector<double> d_mu;  // c_j - z_j
    std::vector<double> d_nu;  // sum_r x_r - y_s
};

DualGradient dual_gradient(const NetworkModel& model, const AlgorithmParams& params,
                           const std::vector<double>& mu, const std::vector<double>& nu);

// Default start: mu_j = mu0 everywhere, nu_s = half the cheapest route price
// (zero in the gamma = 1 mode).
PriceState default_initial_state(const NetworkModel& model, const AlgorithmParams& params,
                                 double mu0 = 0.01);

// Assemble an EquilibriumPoint from prices via the closed-form rate laws.
EquilibriumPoint equilibrium_from_prices(const NetworkModel& model,
                                         const AlgorithmParams& params,
                                         const std::vector<double>& mu,
                                         const std::vector<double>& nu);

}  // namespace mpdual
