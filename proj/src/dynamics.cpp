// Price dynamics and closed-form rate laws.
//
// The dual of the blended rate-allocation program decomposes per source; its
// inner maximizer has the closed form implemented here. Link prices mu_j
// integrate excess load, source prices nu_s integrate the gap between the
// aggregate-rate law y_s and the per-route sum. Both are gradient descent on
// the dual objective W, which therefore serves as a Lyapunov function for
// the undelayed system.

#include "mpdual/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mpdual {

namespace {

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// min over the source's routes of lambda_r.
double min_route_price(const Source& s, const std::vector<double>& lambda) {
    double m = std::numeric_limits<double>::infinity();
    for (int r : s.routes) m = std::min(m, lambda[r]);
    return m;
}

}  // namespace

GainConstants GainConstants::uniform(const NetworkModel& m, double kj, double ks) {
    GainConstants g;
    g.kappa_link.assign(m.link_count(), kj);
    g.kappa_source.assign(m.source_count(), ks);
    return g;
}

std::vector<double> aggregate_prices(const NetworkModel& model,
                                     const std::vector<double>& mu) {
    std::vector<double> lambda(model.route_count(), 0.0);
    for (int r = 0; r < model.route_count(); ++r)
        for (const RouteHop& h : model.route(r).hops) lambda[r] += mu[h.link];
    return lambda;
}

double ybar_from_prices(const std::vector<double>& lambda_s, double nu_s,
                        const AlgorithmParams& params, const Source& source) {
    const double p = params.p;
    const double gamma = params.gamma;
    double sum = 0.0;
    if (params.gamma_one()) {
        for (double lr : lambda_s) {
            if (lr <= kPriceEpsilon)
                throw PriceDomainViolation("ybar: route price <= eps in gamma=1 mode");
            sum += std::pow(lr, 1.0 - p);
        }
    } else {
        if (nu_s <= kPriceEpsilon)
            throw PriceDomainViolation("ybar: nu <= eps for source '" + source.name + "'");
        for (double lr : lambda_s) {
            if (lr - nu_s <= kPriceEpsilon)
                throw PriceDomainViolation("ybar: lambda - nu <= eps for source '" +
                                           source.name + "'");
            sum += std::pow(lr - nu_s, 1.0 - p);
        }
        sum *= std::pow(gamma, p);
        sum += std::pow(1.0 - gamma, p) * std::pow(nu_s, 1.0 - p);
    }
    const double marginal = std::pow(sum, 1.0 / (1.0 - p));
    return demand(marginal, source.weight, source.alpha);
}

RateVector rates_from_prices(const NetworkModel& model, const AlgorithmParams& params,
                             const std::vector<double>& mu, const std::vector<double>& nu) {
    const double p = params.p;
    const double gamma = params.gamma;
    if (gamma <= 0.0)
        throw ModelError("rates_from_prices: gamma = 0 has no rate law; "
                         "the aggregate program is handled by the reference solver");
    RateVector rv;
    rv.lambda = aggregate_prices(model, mu);
    rv.x.assign(model.route_count(), 0.0);
    rv.y.assign(model.source_count(), 0.0);
    rv.ybar.assign(model.source_count(), 0.0);
    rv.z.assign(model.link_count(), 0.0);

    for (int s = 0; s < model.source_count(); ++s) {
        const Source& src = model.source(s);
        std::vector<double> lam_s;
        lam_s.reserve(src.routes.size());
        for (int r : src.routes) lam_s.push_back(rv.lambda[r]);
        const double nu_s = params.gamma_one() ? 0.0 : nu[s];
        const double ybar = ybar_from_prices(lam_s, nu_s, params, src);
        rv.ybar[s] = ybar;
        const double uprime = utility_prime(ybar, src.weight, src.alpha);
        for (int r : src.routes) {
            const double denom = rv.lambda[r] - nu_s;
            rv.x[r] = ybar * std::pow(gamma * uprime / denom, p);
        }
        if (params.gamma_one()) {
            for (int r : src.routes) rv.y[s] += rv.x[r];
        } else {
            rv.y[s] = ybar * std::pow((1.0 - gamma) * uprime / nu_s, p);
        }
    }
    for (int j = 0; j < model.link_count(); ++j)
        for (int r : model.routes_through(j)) rv.z[j] += rv.x[r];
    return rv;
}

PriceState step_undelayed(const NetworkModel& model, const AlgorithmParams& params,
                          const GainConstants& gains, const PriceState& state, double dt,
                          long* clamp_events) {
    if (dt <= 0) throw ModelError("step_undelayed: dt must be > 0");
    const RateVector rv = rates_from_prices(model, params, state.mu, state.nu);

    PriceState next = state;
    next.t = state.t + dt;
    for (int j = 0; j < model.link_count(); ++j) {
        const double excess = rv.z[j] - model.link(j).capacity;
        // (b)^+_c: pass b through when the price is positive, else clip at 0.
        const double rate = state.mu[j] > 0.0 ? excess : std::max(0.0, excess);
        next.mu[j] = std::max(0.0, state.mu[j] + dt * gains.kappa_link[j] * rate);
    }
    if (!params.gamma_one()) {
        for (int s = 0; s < model.source_count(); ++s) {
            double route_sum = 0.0;
            for (int r : model.source(s).routes) route_sum += rv.x[r];
            next.nu[s] = state.nu[s] + dt * gains.kappa_source[s] * (rv.y[s] - route_sum);
        }
        // Keep nu inside the domain of the rate laws at the new link prices.
        const std::vector<double> lambda_next = aggregate_prices(model, next.mu);
        for (int s = 0; s < model.source_count(); ++s) {
            const double lmin = min_route_price(model.source(s), lambda_next);
            const double lo = std::max(kPriceEpsilon, kPriceGuardFraction * lmin);
            const double hi = std::max(lo, (1.0 - kPriceGuardFraction) * lmin);
            const double clamped = std::clamp(next.nu[s], lo, hi);
            if (clamped != next.nu[s]) {
                next.nu[s] = clamped;
                if (clamp_events) ++*clamp_events;
            }
        }
    }
    if (!all_finite(next.mu) || !all_finite(next.nu)) {
        std::ostringstream os;
        os << "non-finite price after step at t=" << next.t
           << " (gain or step size too large)";
        throw NonFiniteState(os.str(), next.t);
    }
    return next;
}

double dual_objective(const NetworkModel& model, const AlgorithmParams& params,
                      const std::vector<double>& mu, const std::vector<double>& nu) {
    const RateVector rv = rates_from_prices(model, params, mu, nu);
    double w = 0.0;
    for (int s = 0; s < model.source_count(); ++s) {
        const Source& src = model.source(s);
        const double nu_s = params.gamma_one() ? 0.0 : nu[s];
        double term = utility(rv.ybar[s], src.weight, src.alpha);
        for (int r : src.routes) term -= (rv.lambda[r] - nu_s) * rv.x[r];
        if (!params.gamma_one()) term -= nu_s * rv.y[s];
        w += term;
    }
    for (int j = 0; j < model.link_count(); ++j) w += model.link(j).capacity * mu[j];
    return w;
}

DualGradient dual_gradient(const NetworkModel& model, const AlgorithmParams& params,
                           const std::vector<double>& mu, const std::vector<double>& nu) {
    const RateVector rv = rates_from_prices(model, params, mu, nu);
    DualGradient g;
    g.d_mu.resize(model.link_count());
    g.d_nu.assign(model.source_count(), 0.0);
    for (int j = 0; j < model.link_count(); ++j)
        g.d_mu[j] = model.link(j).capacity - rv.z[j];
    if (!params.gamma_one()) {
        for (int s = 0; s < model.source_count(); ++s) {
            double route_sum = 0.0;
            for (int r : model.source(s).routes) route_sum += rv.x[r];
            g.d_nu[s] = route_sum - rv.y[s];
        }
    }
    return g;
}

PriceState default_initial_state(const NetworkModel& model, const AlgorithmParams& params,
                                 double mu0) {
    PriceState st;
    st.mu.assign(model.link_count(), mu0);
    st.nu.assign(model.source_count(), 0.0);
    if (!params.gamma_one()) {
        const std::vector<double> lambda = aggregate_prices(model, st.mu);
        for (int s = 0; s < model.source_count(); ++s)
            st.nu[s] = 0.5 * min_route_price(model.source(s), lambda);
    }
    return st;
}

EquilibriumPoint equilibrium_from_prices(const NetworkModel& model,
                                         const AlgorithmParams& params,
                                         const std::vector<double>& mu,
                                         const std::vector<double>& nu) {
    const RateVector rv = rates_from_prices(model, params, mu, nu);
    EquilibriumPoint eq;
    eq.x = rv.x;
    eq.y = rv.y;
    eq.ybar = rv.ybar;
    eq.mu = mu;
    eq.nu = nu;
    eq.lambda = rv.lambda;
    return eq;
}

}  // namespace mpdual
