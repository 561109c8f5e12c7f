#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mpdual/delay.hpp"
#include "mpdual/oracle.hpp"
#include "test_instances.hpp"

using namespace mpdual;
using fixtures::Sl1Expected;

namespace {

AlgorithmParams half_gamma() {
    AlgorithmParams p;
    p.p = 2.0;
    p.gamma = 0.5;
    return p;
}

}  // namespace

TEST_CASE("delays must sit on the step grid") {
    const NetworkModel m = fixtures::sl1(0.005);  // 10 ms round trip
    CHECK_NOTHROW(DelaySchedule(m, 0.005));
    CHECK_NOTHROW(DelaySchedule(m, 0.001));
    CHECK_THROWS_AS(DelaySchedule(m, 0.003), DelayGridMismatch);
}

TEST_CASE("history lookups land on stored samples and pre-history is constant") {
    HistoryBuffer h(1, 1, 4);
    h.fill({2.0}, {5.0});
    for (int lag = 0; lag < 6; ++lag) {
        CHECK(h.x_at(0, lag) == 2.0);
        CHECK(h.mu_at(0, lag) == 5.0);
    }
    h.push_x({3.0});
    h.push_mu({6.0});
    CHECK(h.x_at(0, 0) == 3.0);
    CHECK(h.x_at(0, 1) == 2.0);
    CHECK(h.mu_at(0, 0) == 6.0);
    CHECK(h.mu_at(0, 3) == 5.0);
}

TEST_CASE("equilibrium with constant history is a fixed point") {
    const NetworkModel m = fixtures::sl1(0.005);
    const AlgorithmParams params = half_gamma();
    const DelayGains gains = DelayGains::uniform(m, 10.0, 10.0, 40.0);
    DelayedState init;
    init.mu = {Sl1Expected::mu};
    init.nu = {Sl1Expected::nu};
    init.ybar = {Sl1Expected::ybar};
    DelayedTrajectory traj(m, params, gains, init, 0.001);
    for (int k = 0; k < 100; ++k) traj.step();
    CHECK(traj.state().mu[0] == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(traj.state().nu[0] == doctest::Approx(0.5).epsilon(1e-13));
    CHECK(traj.state().ybar[0] == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(traj.current_x()[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero-delay stepping matches an independent Euler loop") {
    const NetworkModel m = fixtures::sl1(0.0);
    const AlgorithmParams params = half_gamma();
    const double kj = 2.0, ks = 2.0, rho = 5.0, dt = 0.005;
    const DelayGains gains = DelayGains::uniform(m, kj, ks, rho);

    DelayedState init;
    init.mu = {0.8};
    init.nu = {0.3};
    DelayedTrajectory traj(m, params, gains, init, dt);

    // Comparator: same laws written out directly, no history machinery.
    // For log utility D inverts the harmonic blend: ybar = 1/L with
    // L = (0.25/(mu-nu) + 0.25/nu)^(-1), i.e. ybar is the blend sum itself.
    const double p = 2.0, q = 2.0, gamma = 0.5;
    double mu = 0.8, nu = 0.3;
    double ybar = 0.25 / (mu - nu) + 0.25 / nu;  // algebraic start
    double x = ybar * std::pow(gamma * (1.0 / ybar) / (mu - nu), p);
    for (int k = 0; k < 2000; ++k) {
        traj.step();
        const double y = ybar * std::pow((1.0 - gamma) * (1.0 / ybar) / nu, p);
        const double mu_next = mu + dt * (kj * mu / p) * (x - 1.0);
        const double nu_next = nu + dt * (ks * nu / p) * (y - x);
        const double ybar_next =
            ybar + dt * (q * rho / p) *
                       (gamma * std::sqrt(x) + (1.0 - gamma) * std::sqrt(y) - std::sqrt(ybar));
        mu = mu_next;
        nu = nu_next;
        ybar = ybar_next;
        x = ybar * std::pow(gamma * (1.0 / ybar) / (mu - nu), p);
        REQUIRE(std::abs(traj.state().mu[0] - mu) < 1e-8);
        REQUIRE(std::abs(traj.state().nu[0] - nu) < 1e-8);
        REQUIRE(std::abs(traj.state().ybar[0] - ybar) < 1e-8);
    }
    CHECK(traj.counters().nu_clamp == 0);
    CHECK(traj.counters().mu_floor == 0);
}

TEST_CASE("zero-delay trajectories land on the undelayed equilibrium") {
    for (int which = 0; which < 2; ++which) {
        const NetworkModel m = which == 0 ? fixtures::sl1(0.0) : fixtures::two_route(0.0);
        const AlgorithmParams params = half_gamma();
        // Large rho pins ybar near its algebraic value.
        const DelayGains gains = DelayGains::uniform(m, 2.0, 2.0, 200.0);
        DelayedState init;
        init.mu.assign(m.link_count(), 0.3);
        init.nu.assign(m.source_count(), 0.12);
        DelayedTrajectory traj(m, params, gains, init, 0.005);
        for (int k = 0; k < 12000; ++k) traj.step();

        const PrimalSolution sol = solve_generalized_primal(m, params, 1e-8);
        const std::vector<double> x = traj.current_x();
        for (int r = 0; r < m.route_count(); ++r)
            CHECK(x[r] == doctest::Approx(sol.x[r]).epsilon(0.01));
    }
}

TEST_CASE("curvature coefficient: direct values and the generic route") {
    AlgorithmParams params = half_gamma();
    Source s1{"s", {0}, 1.0, 1.0, 0.0};
    CHECK(compute_a_s(s1, params, 1.0) == doctest::Approx(0.5));
    Source s2{"s", {0}, 1.0, 2.0, 0.0};
    CHECK(compute_a_s(s2, params, 3.0) == doctest::Approx(0.5));

    for (double alpha : {1.0, 2.0}) {
        for (double ybar : {0.5, 2.0}) {
            Source src{"s", {0}, 1.0, alpha, 0.0};
            CHECK(compute_a_s(src, params, ybar) ==
                  doctest::Approx(compute_a_s_generic(1.0, alpha, params, ybar))
                      .epsilon(1e-12));
        }
    }

    Source weak{"s", {0}, 1.0, 0.5, 0.0};  // alpha p = 1 violates the assumption
    CHECK_THROWS_AS(compute_a_s(weak, params, 1.0), AssumptionHViolated);
}

TEST_CASE("stability margins: direct substitution on the single link") {
    const NetworkModel m = fixtures::sl1(0.005);  // T_r = 10 ms
    const AlgorithmParams params = half_gamma();
    EquilibriumPoint eq;
    eq.x = {1.0};
    eq.y = {1.0};
    eq.ybar = {1.0};
    eq.mu = {1.0};
    eq.nu = {0.5};
    eq.lambda = {1.0};

    DelayGains gains = DelayGains::uniform(m, 10.0, 10.0, 40.0);
    StabilityReport rep = check_stability_conditions(m, params, gains, eq);
    CHECK(rep.link_margin[0] ==
          doctest::Approx(10.0 * 0.01 / (0.5 * std::numbers::pi / 4.0)).epsilon(1e-12));
    CHECK(rep.link_margin[0] == doctest::Approx(0.2546).epsilon(1e-3));
    CHECK(rep.pass);

    gains.kappa_link[0] = 100.0;
    rep = check_stability_conditions(m, params, gains, eq);
    CHECK(rep.link_margin[0] == doctest::Approx(2.546).epsilon(1e-3));
    CHECK_FALSE(rep.pass);
}

TEST_CASE("a zero-price link at full load marks the report as degenerate") {
    const NetworkModel m = fixtures::sl1(0.005);
    const AlgorithmParams params = half_gamma();
    EquilibriumPoint eq;
    eq.x = {1.0};  // z = c with mu = 0
    eq.y = {1.0};
    eq.ybar = {1.0};
    eq.mu = {0.0};
    eq.nu = {0.4};
    eq.lambda = {0.0};
    const DelayGains gains = DelayGains::uniform(m, 1.0, 1.0, 1.0);
    const StabilityReport rep = check_stability_conditions(m, params, gains, eq);
    REQUIRE(rep.almost_saturated.size() == 1);
    CHECK(rep.almost_saturated[0] == 0);
    CHECK_FALSE(rep.pass);
}

TEST_CASE("scalable gains reproduce the worked examples") {
    // kappa_s = gamma kappa / (M Tbar), rho = p kappa / ((alpha p - 1) Tbar),
    // kappa_j = gamma kappa / (c Tbar).
    const AlgorithmParams params = half_gamma();

    const NetworkModel two = fixtures::two_route(0.005);  // T_r = 10 ms, M = 2
    const DelayGains g2 = scalable_gains(two, params, {1.0, 1.0}, 0.4);
    CHECK(g2.kappa_source[0] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(g2.rho_source[0] == doctest::Approx(80.0).epsilon(1e-12));

    std::vector<Link> links{{"L", 100.0}};
    std::vector<Route> routes{{"r", 0, {{0, 0.0, 0.004}}, 0.004}};
    std::vector<Source> sources{{"s", {0}, 1.0, 1.0, 0.0}};
    const NetworkModel big(links, routes, sources);
    const DelayGains gb = scalable_gains(big, params, {50.0}, 0.4);
    CHECK(gb.kappa_link[0] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(scalable_gains(two, params, {1.0, 1.0}, 0.8), ModelError);
    CHECK_THROWS_AS(scalable_gains(two, params, {1.0, 1.0}, 0.0), ModelError);
}

TEST_CASE("scalable gains satisfy the margin conditions at the certified optimum") {
    for (int which = 0; which < 3; ++which) {
        const NetworkModel m = which == 0   ? fixtures::sl1(0.005)
                               : which == 1 ? fixtures::two_route(0.005)
                                            : fixtures::triangle();
        const AlgorithmParams params = half_gamma();
        const PrimalSolution sol = solve_generalized_primal(m, params, 1e-8);
        const DelayGains gains = scalable_gains(m, params, sol.x, 0.4);

        EquilibriumPoint eq;
        eq.x = sol.x;
        eq.y = sol.y;
        eq.mu = sol.mu;
        eq.nu = sol.nu;
        eq.lambda = aggregate_prices(m, sol.mu);
        eq.ybar.resize(m.source_count());
        for (int s = 0; s < m.source_count(); ++s)
            eq.ybar[s] = std::pow(sol.u[s], params.q());

        const StabilityReport rep = check_stability_conditions(m, params, gains, eq);
        INFO("instance ", which);
        CHECK(rep.pass);
        for (double v : rep.link_margin) CHECK(v < 1.0);
        for (double v : rep.source_price_margin) CHECK(v < 1.0);
        for (double v : rep.source_relax_margin) CHECK(v < 1.0);
    }
}

TEST_CASE("identities of the delayed fixed point") {
    // At the delayed equilibrium the per-route power identity holds and
    // 1 + nu/(lambda-nu) + sum_j mu_j/(lambda-nu) stays below 2/gamma.
    const AlgorithmParams params = half_gamma();
    struct Point {
        NetworkModel m;
        std::vector<double> mu, nu;
    };
    const Point points[] = {
        {fixtures::sl1(0.005), {1.0}, {0.5}},
        {fixtures::two_route(0.005), {0.5, 0.5}, {fixtures::TwoRouteExpected::nu}},
    };
    for (const Point& pt : points) {
        const RateVector rv = rates_from_prices(pt.m, params, pt.mu, pt.nu);
        for (int s = 0; s < pt.m.source_count(); ++s) {
            const double uprime = utility_prime(rv.ybar[s], 1.0, 1.0);
            for (int r : pt.m.source(s).routes) {
                const double gap = rv.lambda[r] - pt.nu[s];
                const double lhs = rv.x[r] / (std::sqrt(rv.ybar[s]) * uprime);
                const double rhs = params.gamma * std::sqrt(rv.x[r]) / gap;
                CHECK(std::abs(lhs - rhs) < 1e-8);
                double bound = 1.0 + pt.nu[s] / gap;
                for (const RouteHop& h : pt.m.route(r).hops) bound += pt.mu[h.link] / gap;
                CHECK(bound <= 2.0 / params.gamma + 1e-8);
            }
        }
    }
}

TEST_CASE("nonpositive gains are rejected up front") {
    const NetworkModel m = fixtures::sl1(0.005);
    const AlgorithmParams params = half_gamma();
    DelayGains gains = DelayGains::uniform(m, 10.0, 10.0, 40.0);
    gains.rho_source[0] = 0.0;
    DelayedState init;
    init.mu = {1.0};
    init.nu = {0.5};
    CHECK_THROWS_AS(DelayedTrajectory(m, params, gains, init, 0.005), ModelError);
}

TEST_CASE("compliant delayed run settles; a 100x violation oscillates") {
    const NetworkModel m = fixtures::sl1(0.005);
    const AlgorithmParams params = half_gamma();
    const PrimalSolution sol = solve_generalized_primal(m, params, 1e-8);

    SUBCASE("compliant gains, start 10% off equilibrium") {
        const DelayGains gains = scalable_gains(m, params, sol.x, 0.4);
        DelayedState init;
        init.mu = {0.9 * sol.mu[0]};
        init.nu = {0.9 * sol.nu[0]};
        DelayedTrajectory traj(m, params, gains, init, 0.005);
        for (int k = 0; k < 6000; ++k) traj.step();  // 30 s
        CHECK(traj.current_x()[0] == doctest::Approx(1.0).epsilon(0.01));
        CHECK(traj.state().mu[0] == doctest::Approx(1.0).epsilon(0.01));
    }

    SUBCASE("link gain 100x above the bound") {
        DelayGains gains = scalable_gains(m, params, sol.x, 0.4);
        const double bound = params.gamma * (std::numbers::pi / 4.0) / (1.0 * 0.01);
        gains.kappa_link[0] = 100.0 * bound;
        DelayedState init;
        init.mu = {0.9 * sol.mu[0]};
        init.nu = {0.9 * sol.nu[0]};
        DelayedTrajectory traj(m, params, gains, init, 0.005);
        double lo = 1e300, hi = -1e300;
        const int steps = 4000;  // 20 s
        for (int k = 0; k < steps; ++k) {
            traj.step();
            if (k >= steps - 1000) {  // final 5 s
                const double z = traj.current_z()[0];
                lo = std::min(lo, z);
                hi = std::max(hi, z);
            }
        }
        CHECK(hi - lo > 0.1 * m.link(0).capacity);
    }
}
