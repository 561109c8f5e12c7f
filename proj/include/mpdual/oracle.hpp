#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mpdual/model.hpp"

namespace mpdual {

// Output of the convex-program reference solvers. For the blended program
// the recovered dual point (mu, nu) is included; for the non-strictly
// concave aggregate program only the objective value is certified (the rate
// split may be non-unique).
struct PrimalSolution {
    std::vector<double> x;   // per route
    std::vector<double> y;   // per source, sum of route rates
    std::vector<double> u;   // per source, blended aggregate
    double objective = 0.0;
    std::vector<double> mu;  // per link, recovered from the barrier
    std::vector<double> nu;  // per source, recovered from stationarity
    double kkt_residual = 0.0;
    long iterations = 0;
};

// First-order optimality residuals of a primal/dual point. eta is the
// multiplier of the blending constraint, recovered from the stationarity
// condition in u; all other residuals are reported, never thrown.
struct KktResidual {
    std::vector<double> eta;              // per source
    std::vector<double> route_stationarity;   // per route
    std::vector<double> source_stationarity;  // per source
    std::vector<double> aggregation;          // per source, u vs blended sum
    std::vector<double> rate_consistency;     // per source, y vs sum x
    std::vector<double> complementary_slackness;  // per link, mu_j (z_j - c_j)
    std::vector<double> primal_violation;         // per link, (z_j - c_j)^+
    std::vector<double> dual_violation;           // per link+source, negative prices
    double max_abs = 0.0;
};

// Reference solver for the blended program
//   max sum_s U_s(u_s^q)
//   s.t. u_s <= gamma sum_r x_r^(1/q) + (1-gamma) y_s^(1/q),  y_s = sum_r x_r,
//        A x <= c, x >= 0
// with u eliminated through its tight constraint. Log-barrier on the
// inequality constraints, gradient ascent with Barzilai-Borwein steps;
// algorithmically independent of the closed-form rate laws. Returns a point
// whose KKT residual is below tol, or throws NonConvergence after the
// iteration cap (1e6) reporting the best residual seen.
PrimalSolution solve_generalized_primal(const NetworkModel& model,
                                        const AlgorithmParams& params, double tol);

// Reference solver for the aggregate program
//   max sum_s U_s(sum_r x_r)  s.t.  A x <= c, x >= 0.
// The optimal value is certified within tol via the barrier duality gap;
// the returned x is one optimizer (possibly of many).
PrimalSolution solve_kelly_primal(const NetworkModel& model,
                                  const AlgorithmParams& params, double tol);

KktResidual kkt_residual(const NetworkModel& model, const AlgorithmParams& params,
                         const std::vector<double>& x, const std::vector<double>& y,
                         const std::vector<double>& u, const std::vector<double>& mu,
                         const std::vector<double>& nu);

// Rate-inflation factor bounding the utility gap between the two programs:
//   e_gamma = (1 + gamma (n^(1/p) - 1))^q,  n = route count of the source.
double approx_error_factor(double gamma, double p, int route_count);

// Per-source rate-inflation factors and the utility sandwich they certify.
struct ApproxBound {
    std::vector<double> e_gamma;              // per source, in [1, n^(1/(p-1))]
    double aggregate_optimum = 0.0;           // optimal value of the aggregate program
    double blended_value_in_aggregate = 0.0;  // sum_s U_s(sum_r x_r) at the blended optimum
    double inflated_value = 0.0;              // sum_s U_s(e_gamma sum_r x_r)
};

struct SandwichReport {
    ApproxBound bound;
    double lower_slack = 0.0;  // aggregate_optimum - blended_value_in_aggregate
    double upper_slack = 0.0;  // inflated_value - aggregate_optimum
    bool lower_ok = false;
    bool upper_ok = false;
    bool pass() const { return lower_ok && upper_ok; }
};

// Checks the two-sided utility sandwich between the programs' optima.
SandwichReport verify_sandwich(const NetworkModel& model, const AlgorithmParams& params,
                           double tol);

// Full certificate of one instance: the blended optimum, its recovered dual
// point, first-order residuals and the approximation bound.
struct EquilibriumCertificate {
    PrimalSolution primal;
    KktResidual kkt;
    SandwichReport approx;
};

EquilibriumCertificate certify(const NetworkModel& model, const AlgorithmParams& params,
                               double tol);

// Seeded generator of small random instances for property sweeps:
// up to max_links links with capacities in [0.5, 2], up to max_sources
// sources with up to max_routes_per_source routes over random link subsets.
struct RandomInstanceOptions {
    int max_links = 4;
    int max_sources = 2;
    int max_routes_per_source = 3;
    double min_capacity = 0.5;
    double max_capacity = 2.0;
    double hop_oneway_delay = 0.001;  // seconds
};

NetworkModel random_instance(std::mt19937& rng, const RandomInstanceOptions& opt = {});

}  // namespace mpdual
