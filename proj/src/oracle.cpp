// Convex-program reference solvers.
//
// Two problem shapes over x >= 0, A x <= c:
//   aggregate:  max sum_s U_s(y_s),                     y_s = sum_{r in s} x_r
//   blended:    max sum_s U_s(u_s^q),  u_s = gamma sum_r x_r^(1/q) + (1-gamma) y_s^(1/q)
// Both are solved on a log-barrier path with exact-Hessian Newton stages;
// the blended solver additionally refines each stage's point against the
// first-order system with the saturated links pinned (active-set polish),
// which is what pushes residuals to machine precision. The path is
// deterministic, so tightening the tolerance replays the same iterates and
// can only improve the returned point. Nothing here touches the closed-form
// rate laws; agreement between this solver and converged price trajectories
// is a checked property, not a construction.

#include "mpdual/oracle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mpdual {

namespace {

constexpr long kIterationCap = 1000000;
constexpr double kBarrierShrink = 0.2;
constexpr double kBarrierFloor = 1e-14;

struct Objective {
    const NetworkModel& model;
    const AlgorithmParams& params;
    bool blended;

    // Utility value; optionally fills gradient and (dense) Hessian.
    double eval(const std::vector<double>& x, std::vector<double>* grad,
                Eigen::MatrixXd* hess) const {
        const double q = params.q();
        const double gamma = params.gamma;
        double value = 0.0;
        for (int s = 0; s < model.source_count(); ++s) {
            const Source& src = model.source(s);
            double y = 0.0;
            for (int r : src.routes) y += x[r];
            if (blended) {
                double sq = 0.0;
                for (int r : src.routes) sq += std::pow(x[r], 1.0 / q);
                const double u = gamma * sq + (1.0 - gamma) * std::pow(y, 1.0 / q);
                const double ybar = std::pow(u, q);
                value += utility(ybar, src.weight, src.alpha);
                if (!grad) continue;
                // With g(u) = U(u^q):
                //   dF/dx_r = g'(u) b_r,  b_r = (gamma/q) x^(1/q-1) + ((1-gamma)/q) y^(1/q-1)
                const double uprime = utility_prime(ybar, src.weight, src.alpha);
                const double gp = q * uprime * std::pow(u, q - 1.0);
                for (int r : src.routes) {
                    const double b = (gamma / q) * std::pow(x[r], 1.0 / q - 1.0) +
                                     ((1.0 - gamma) / q) * std::pow(y, 1.0 / q - 1.0);
                    (*grad)[r] = gp * b;
                }
                if (!hess) continue;
                const double gpp =
                    q * (q - 1.0) * uprime * std::pow(u, q - 2.0) +
                    q * q * utility_second(ybar, src.weight, src.alpha) *
                        std::pow(u, 2.0 * q - 2.0);
                const double ycross =
                    gp * ((1.0 - gamma) / q) * (1.0 / q - 1.0) * std::pow(y, 1.0 / q - 2.0);
                for (int r : src.routes) {
                    const double br = (gamma / q) * std::pow(x[r], 1.0 / q - 1.0) +
                                      ((1.0 - gamma) / q) * std::pow(y, 1.0 / q - 1.0);
                    for (int r2 : src.routes) {
                        const double b2 = (gamma / q) * std::pow(x[r2], 1.0 / q - 1.0) +
                                          ((1.0 - gamma) / q) * std::pow(y, 1.0 / q - 1.0);
                        (*hess)(r, r2) += gpp * br * b2 + ycross;
                    }
                    (*hess)(r, r) +=
                        gp * (gamma / q) * (1.0 / q - 1.0) * std::pow(x[r], 1.0 / q - 2.0);
                }
            } else {
                value += utility(y, src.weight, src.alpha);
                if (!grad) continue;
                const double uy = utility_prime(y, src.weight, src.alpha);
                for (int r : src.routes) (*grad)[r] = uy;
                if (!hess) continue;
                const double uyy = utility_second(y, src.weight, src.alpha);
                for (int r : src.routes)
                    for (int r2 : src.routes) (*hess)(r, r2) += uyy;
            }
        }
        return value;
    }
};

// Capacity slacks c_j - sum x_r with Neumaier-compensated summation. Near
// the barrier path's end the slack is ~t while the load is O(c); plain
// summation would leave only ~eps*c/t relative accuracy in the recovered
// prices t/slack.
std::vector<double> link_slacks(const NetworkModel& model, const std::vector<double>& x) {
    std::vector<double> slack(model.link_count(), 0.0);
    for (int j = 0; j < model.link_count(); ++j) {
        double sum = 0.0, comp = 0.0;
        for (int r : model.routes_through(j)) {
            const double v = x[r];
            const double t = sum + v;
            if (std::abs(sum) >= std::abs(v))
                comp += (sum - t) + v;
            else
                comp += (v - t) + sum;
            sum = t;
        }
        slack[j] = (model.link(j).capacity - sum) - comp;
    }
    return slack;
}

bool strictly_feasible(const NetworkModel& model, const std::vector<double>& x) {
    for (double v : x)
        if (!(v > 0.0)) return false;
    const std::vector<double> slack = link_slacks(model, x);
    for (int j = 0; j < model.link_count(); ++j)
        if (!(slack[j] > 0.0)) return false;
    return true;
}

std::vector<double> feasible_start(const NetworkModel& model) {
    std::vector<double> x(model.route_count());
    for (int r = 0; r < model.route_count(); ++r) {
        double cap = std::numeric_limits<double>::infinity();
        for (const RouteHop& h : model.route(r).hops) {
            const int j = h.link;
            const double share =
                model.link(j).capacity / static_cast<double>(model.routes_through(j).size());
            cap = std::min(cap, share);
        }
        x[r] = 0.45 * cap;
    }
    return x;
}

// Barrier objective F + t (sum log(c - z) + sum log x) and its gradient /
// Hessian at x (x strictly feasible).
double barrier_eval(const Objective& obj, const std::vector<double>& x, double t,
                    std::vector<double>* grad, Eigen::MatrixXd* hess) {
    const NetworkModel& model = obj.model;
    if (hess) hess->setZero();
    double phi = obj.eval(x, grad, hess);
    const std::vector<double> slack = link_slacks(model, x);
    for (int j = 0; j < model.link_count(); ++j) phi += t * std::log(slack[j]);
    for (double v : x) phi += t * std::log(v);
    if (grad) {
        for (int j = 0; j < model.link_count(); ++j) {
            for (int r : model.routes_through(j)) {
                (*grad)[r] -= t / slack[j];
                if (hess)
                    for (int r2 : model.routes_through(j))
                        (*hess)(r, r2) -= t / (slack[j] * slack[j]);
            }
        }
        for (size_t r = 0; r < x.size(); ++r) {
            (*grad)[r] += t / x[r];
            if (hess) (*hess)(r, r) -= t / (x[r] * x[r]);
        }
    }
    return phi;
}

// Newton's method on the barrier objective at a fixed t, warm-started from
// x. Damped steps with a line search far from the optimum, full steps in
// the quadratic phase; stops when the decrement hits its floating-point
// floor. Returns iterations spent.
long newton_stage(const Objective& obj, std::vector<double>& x, double t, long budget) {
    const int n = static_cast<int>(x.size());
    std::vector<double> grad(n), cand(n);
    Eigen::MatrixXd hess(n, n);
    long iters = 0;
    double prev_lambda = std::numeric_limits<double>::infinity();
    const long cap = std::min<long>(budget, 200);
    while (iters < cap) {
        ++iters;
        const double phi = barrier_eval(obj, x, t, &grad, &hess);
        const Eigen::Map<const Eigen::VectorXd> g(grad.data(), n);
        Eigen::MatrixXd a = -hess;  // positive definite for a strictly concave barrier
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) {
            a.diagonal().array() += 1e-12 * (1.0 + a.diagonal().cwiseAbs().maxCoeff());
            llt.compute(a);
            if (llt.info() != Eigen::Success) break;
        }
        const Eigen::VectorXd d = llt.solve(g);
        const double dec2 = g.dot(d);
        if (!(dec2 > 0.0)) break;
        const double lambda = std::sqrt(dec2);
        if (lambda < 1e-10) break;
        // Stalled at the rounding floor of the gradient evaluation.
        if (lambda < 1e-5 && lambda > 0.9 * prev_lambda) break;
        prev_lambda = lambda;

        if (lambda >= 0.25) {
            double step = 1.0 / (1.0 + lambda);
            bool moved = false;
            while (step > 1e-14) {
                for (int r = 0; r < n; ++r) cand[r] = x[r] + step * d(r);
                if (strictly_feasible(obj.model, cand)) {
                    const double phi_cand = barrier_eval(obj, cand, t, nullptr, nullptr);
                    if (phi_cand >= phi + 0.25 * step * dec2 - 1e-12 * (1.0 + std::abs(phi))) {
                        x = cand;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if (!moved) break;
        } else {
            // Quadratic phase: take the full step, shrinking only if it
            // would leave the feasible region. Function-value tests are
            // below rounding resolution here.
            double step = 1.0;
            bool moved = false;
            while (step > 1e-14) {
                for (int r = 0; r < n; ++r) cand[r] = x[r] + step * d(r);
                if (strictly_feasible(obj.model, cand)) {
                    x = cand;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
        }
    }
    return iters;
}

// Newton refinement of a near-optimal barrier point against the first-order
// system directly: saturated links (tiny slack) are pinned to capacity and
// their prices become unknowns, so the barrier's stiffness no longer limits
// the attainable residual. A wrong active-set guess surfaces as a worse
// measured residual and the candidate is discarded by the caller.
bool polish_active_set(const Objective& obj, std::vector<double>* x_io,
                       std::vector<double>* mu_io) {
    const NetworkModel& model = obj.model;
    const int n = static_cast<int>(x_io->size());
    std::vector<double> x = *x_io;

    std::vector<int> active;
    {
        const std::vector<double> slack = link_slacks(model, x);
        for (int j = 0; j < model.link_count(); ++j)
            if (slack[j] <= 1e-3 * model.link(j).capacity) active.push_back(j);
    }
    if (active.empty()) return false;
    const int na = static_cast<int>(active.size());

    Eigen::VectorXd mu(na);
    for (int i = 0; i < na; ++i) mu(i) = (*mu_io)[active[i]];

    std::vector<double> grad(n);
    Eigen::MatrixXd hess(n, n);
    const int dim = n + na;
    for (int iter = 0; iter < 20; ++iter) {
        hess.setZero();
        obj.eval(x, &grad, &hess);
        const std::vector<double> slack = link_slacks(model, x);

        Eigen::VectorXd res(dim);
        for (int r = 0; r < n; ++r) {
            double lam = 0.0;
            for (int i = 0; i < na; ++i)
                if (model.on_route(active[i], r)) lam += mu(i);
            res(r) = grad[r] - lam;
        }
        for (int i = 0; i < na; ++i) res(n + i) = -slack[active[i]];
        if (res.cwiseAbs().maxCoeff() < 1e-14) break;

        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(dim, dim);
        jac.topLeftCorner(n, n) = hess;
        for (int i = 0; i < na; ++i) {
            for (int r : model.routes_through(active[i])) {
                jac(r, n + i) = -1.0;
                jac(n + i, r) = 1.0;
            }
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
        const Eigen::VectorXd d = lu.solve(-res);
        if (!d.allFinite()) return false;
        double step = 1.0;
        for (int r = 0; r < n; ++r)
            while (step > 1e-12 && x[r] + step * d(r) <= 0.0) step *= 0.5;
        if (step <= 1e-12) return false;
        for (int r = 0; r < n; ++r) x[r] += step * d(r);
        mu += step * d.tail(na);
    }
    for (double v : x)
        if (!std::isfinite(v) || v <= 0.0) return false;

    *x_io = x;
    mu_io->assign(model.link_count(), 0.0);
    for (int i = 0; i < na; ++i) (*mu_io)[active[i]] = mu(i);
    return true;
}

// Primal quantities and the stationarity-recovered source prices at a
// candidate point with given link prices.
void assemble_solution(const NetworkModel& model, const AlgorithmParams& params,
                       bool blended, const std::vector<double>& x,
                       const std::vector<double>& mu, PrimalSolution* sol) {
    const double q = params.q();
    const double gamma = params.gamma;
    sol->mu = mu;
    sol->y.assign(model.source_count(), 0.0);
    sol->u.assign(model.source_count(), 0.0);
    sol->nu.assign(model.source_count(), 0.0);
    for (int s = 0; s < model.source_count(); ++s) {
        const Source& src = model.source(s);
        double y = 0.0, sq = 0.0;
        for (int r : src.routes) {
            y += x[r];
            sq += std::pow(x[r], 1.0 / q);
        }
        sol->y[s] = y;
        const double u = blended ? gamma * sq + (1.0 - gamma) * std::pow(y, 1.0 / q)
                                 : std::pow(y, 1.0 / q);
        sol->u[s] = u;
        if (!params.gamma_one()) {
            const double ybar = std::pow(u, q);
            const double eta_over_q =
                utility_prime(ybar, src.weight, src.alpha) * std::pow(u, q - 1.0);
            sol->nu[s] = (1.0 - gamma) * eta_over_q * std::pow(y, -1.0 / params.p);
        }
    }
    sol->x = x;
}

// Dual recovery at a barrier point: mu from the capacity barrier.
void recover_duals(const NetworkModel& model, const AlgorithmParams& params, bool blended,
                   const std::vector<double>& x, double t, PrimalSolution* sol) {
    const std::vector<double> slack = link_slacks(model, x);
    std::vector<double> mu(model.link_count());
    for (int j = 0; j < model.link_count(); ++j) mu[j] = t / slack[j];
    assemble_solution(model, params, blended, x, mu, sol);
}

}  // namespace

PrimalSolution solve_generalized_primal(const NetworkModel& model,
                                        const AlgorithmParams& params, double tol) {
    params.validate();
    if (params.gamma <= 0.0)
        throw ModelError("solve_generalized_primal: gamma must be in (0,1]; "
                         "use solve_kelly_primal for the aggregate program");
    if (!check_assumption_h(model, params).all())
        throw AssumptionHViolated("solve_generalized_primal: alpha*p <= 1 for some source");
    if (tol <= 0) throw ModelError("solve_generalized_primal: tol must be > 0");

    const Objective obj{model, params, /*blended=*/true};
    std::vector<double> x = feasible_start(model);
    long total = 0;
    double t = 1.0;
    PrimalSolution best;
    best.kkt_residual = std::numeric_limits<double>::infinity();

    while (total < kIterationCap && t > kBarrierFloor) {
        total += newton_stage(obj, x, t, kIterationCap - total);
        PrimalSolution cand;
        recover_duals(model, params, true, x, t, &cand);
        cand.objective = obj.eval(x, nullptr, nullptr);
        const KktResidual res =
            kkt_residual(model, params, cand.x, cand.y, cand.u, cand.mu, cand.nu);
        cand.kkt_residual = res.max_abs;
        if (cand.kkt_residual < best.kkt_residual) best = cand;

        std::vector<double> xp = x, mup = cand.mu;
        if (polish_active_set(obj, &xp, &mup)) {
            PrimalSolution pol;
            assemble_solution(model, params, true, xp, mup, &pol);
            pol.objective = obj.eval(xp, nullptr, nullptr);
            const KktResidual pres =
                kkt_residual(model, params, pol.x, pol.y, pol.u, pol.mu, pol.nu);
            pol.kkt_residual = pres.max_abs;
            if (pol.kkt_residual < best.kkt_residual) best = pol;
        }
        if (best.kkt_residual < tol) break;
        t *= kBarrierShrink;
    }
    best.iterations = total;
    if (best.kkt_residual >= tol) {
        std::ostringstream os;
        os << "generalized solver: residual " << best.kkt_residual << " > tol " << tol
           << " after " << total << " iterations";
        throw NonConvergence(os.str(), best.kkt_residual);
    }
    return best;
}

PrimalSolution solve_kelly_primal(const NetworkModel& model, const AlgorithmParams& params,
                                  double tol) {
    if (tol <= 0) throw ModelError("solve_kelly_primal: tol must be > 0");
    const Objective obj{model, params, /*blended=*/false};
    std::vector<double> x = feasible_start(model);
    const double m = static_cast<double>(model.link_count() + model.route_count());
    long total = 0;
    double t = 1.0;
    // Stop once the barrier duality gap t*m certifies the value within tol.
    while (t * m >= 0.5 * tol && total < kIterationCap) {
        total += newton_stage(obj, x, t, kIterationCap - total);
        t *= kBarrierShrink;
    }
    if (t * m >= 0.5 * tol) {
        throw NonConvergence("aggregate solver: iteration cap before gap closed", t * m);
    }
    total += newton_stage(obj, x, t, kIterationCap - total);
    PrimalSolution sol;
    recover_duals(model, params, false, x, t, &sol);
    sol.objective = obj.eval(x, nullptr, nullptr);
    sol.kkt_residual = t * m;  // value-gap certificate, not a stationarity norm
    sol.iterations = total;
    return sol;
}

KktResidual kkt_residual(const NetworkModel& model, const AlgorithmParams& params,
                         const std::vector<double>& x, const std::vector<double>& y,
                         const std::vector<double>& u, const std::vector<double>& mu,
                         const std::vector<double>& nu) {
    const double p = params.p;
    const double q = params.q();
    const double gamma = params.gamma;
    KktResidual res;
    res.eta.assign(model.source_count(), 0.0);
    res.route_stationarity.assign(model.route_count(), 0.0);
    res.source_stationarity.assign(model.source_count(), 0.0);
    res.aggregation.assign(model.source_count(), 0.0);
    res.rate_consistency.assign(model.source_count(), 0.0);
    res.complementary_slackness.assign(model.link_count(), 0.0);
    res.primal_violation.assign(model.link_count(), 0.0);

    std::vector<double> lambda(model.route_count(), 0.0);
    for (int r = 0; r < model.route_count(); ++r)
        for (const RouteHop& h : model.route(r).hops) lambda[r] += mu[h.link];

    for (int s = 0; s < model.source_count(); ++s) {
        const Source& src = model.source(s);
        const double ybar = std::pow(u[s], q);
        const double eta_over_q =
            utility_prime(ybar, src.weight, src.alpha) * std::pow(u[s], q - 1.0);
        res.eta[s] = q * eta_over_q;
        const double nu_s = params.gamma_one() ? 0.0 : nu[s];
        double sum_x = 0.0, sum_sq = 0.0;
        for (int r : src.routes) {
            sum_x += x[r];
            sum_sq += std::pow(x[r], 1.0 / q);
            res.route_stationarity[r] =
                gamma * eta_over_q * std::pow(x[r], -1.0 / p) - (lambda[r] - nu_s);
        }
        res.source_stationarity[s] =
            (1.0 - gamma) * eta_over_q * std::pow(y[s], -1.0 / p) - nu_s;
        res.aggregation[s] =
            u[s] - gamma * sum_sq - (1.0 - gamma) * std::pow(y[s], 1.0 / q);
        res.rate_consistency[s] = y[s] - sum_x;
    }

    const std::vector<double> slack = link_slacks(model, x);
    for (int j = 0; j < model.link_count(); ++j) {
        res.complementary_slackness[j] = -mu[j] * slack[j];
        res.primal_violation[j] = std::max(0.0, -slack[j]);
        res.dual_violation.push_back(std::max(0.0, -mu[j]));
    }
    for (int s = 0; s < model.source_count(); ++s)
        res.dual_violation.push_back(std::max(0.0, -nu[s]));

    double m = 0.0;
    for (const auto* v :
         {&res.route_stationarity, &res.source_stationarity, &res.aggregation,
          &res.rate_consistency, &res.complementary_slackness, &res.primal_violation,
          &res.dual_violation})
        for (double a : *v) m = std::max(m, std::abs(a));
    res.max_abs = m;
    return res;
}

double approx_error_factor(double gamma, double p, int route_count) {
    if (gamma < 0.0 || gamma > 1.0) throw ModelError("approx_error_factor: gamma in [0,1]");
    if (!(p > 1.0)) throw ModelError("approx_error_factor: p must be > 1");
    if (route_count < 1) throw ModelError("approx_error_factor: route_count >= 1");
    const double q = p / (p - 1.0);
    const double n = static_cast<double>(route_count);
    return std::pow(1.0 + gamma * (std::pow(n, 1.0 / p) - 1.0), q);
}

SandwichReport verify_sandwich(const NetworkModel& model, const AlgorithmParams& params,
                           double tol) {
    const PrimalSolution kelly = solve_kelly_primal(model, params, tol);
    const PrimalSolution gen = solve_generalized_primal(model, params, tol);

    SandwichReport rep;
    rep.bound.aggregate_optimum = kelly.objective;
    double plain = 0.0, inflated = 0.0;
    for (int s = 0; s < model.source_count(); ++s) {
        const Source& src = model.source(s);
        double ysum = 0.0;
        for (int r : src.routes) ysum += gen.x[r];
        const double e =
            approx_error_factor(params.gamma, params.p, static_cast<int>(src.routes.size()));
        rep.bound.e_gamma.push_back(e);
        plain += utility(ysum, src.weight, src.alpha);
        inflated += utility(e * ysum, src.weight, src.alpha);
    }
    rep.bound.blended_value_in_aggregate = plain;
    rep.bound.inflated_value = inflated;
    rep.lower_slack = rep.bound.aggregate_optimum - plain;
    rep.upper_slack = inflated - rep.bound.aggregate_optimum;
    const double allow = tol * (1.0 + std::abs(rep.bound.aggregate_optimum));
    rep.lower_ok = rep.lower_slack >= -allow;
    rep.upper_ok = rep.upper_slack >= -allow;
    return rep;
}

EquilibriumCertificate certify(const NetworkModel& model, const AlgorithmParams& params,
                               double tol) {
    EquilibriumCertificate cert;
    cert.primal = solve_generalized_primal(model, params, tol);
    cert.kkt = kkt_residual(model, params, cert.primal.x, cert.primal.y, cert.primal.u,
                            cert.primal.mu, cert.primal.nu);
    cert.approx = verify_sandwich(model, params, tol);
    return cert;
}

NetworkModel random_instance(std::mt19937& rng, const RandomInstanceOptions& opt) {
    std::uniform_int_distribution<int> link_count(1, opt.max_links);
    std::uniform_real_distribution<double> cap(opt.min_capacity, opt.max_capacity);
    const int nj = link_count(rng);

    std::vector<Link> links;
    for (int j = 0; j < nj; ++j)
        links.push_back({"L" + std::to_string(j + 1), cap(rng)});

    std::uniform_int_distribution<int> source_count(1, opt.max_sources);
    const int ns = source_count(rng);
    std::uniform_int_distribution<int> route_count(1, opt.max_routes_per_source);
    std::uniform_int_distribution<int> subset_size(1, nj);

    std::vector<Route> routes;
    std::vector<Source> sources;
    for (int s = 0; s < ns; ++s) {
        Source src;
        src.name = "s" + std::to_string(s + 1);
        const int nr = route_count(rng);
        for (int i = 0; i < nr; ++i) {
            std::vector<int> ids(nj);
            for (int j = 0; j < nj; ++j) ids[j] = j;
            std::shuffle(ids.begin(), ids.end(), rng);
            const int k = subset_size(rng);
            Route route;
            route.name = "r" + std::to_string(routes.size() + 1);
            route.source = s;
            route.round_trip = 2.0 * opt.hop_oneway_delay * k;
            for (int h = 0; h < k; ++h) {
                RouteHop hop;
                hop.link = ids[h];
                hop.fwd_delay = opt.hop_oneway_delay * h;
                hop.back_delay = route.round_trip - hop.fwd_delay;
                route.hops.push_back(hop);
            }
            src.routes.push_back(static_cast<int>(routes.size()));
            routes.push_back(route);
        }
        sources.push_back(src);
    }
    return NetworkModel(std::move(links), std::move(routes), std::move(sources));
}

}  // namespace mpdual
