#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mpdual/dynamics.hpp"
#include "test_instances.hpp"

using namespace mpdual;
using fixtures::Sl1Expected;
using fixtures::TwoRouteExpected;

namespace {

AlgorithmParams half_gamma() {
    AlgorithmParams p;
    p.p = 2.0;
    p.gamma = 0.5;
    return p;
}

}  // namespace

TEST_CASE("aggregate prices sum link prices along each route") {
    const NetworkModel sl1 = fixtures::sl1();
    CHECK(aggregate_prices(sl1, {1.0})[0] == doctest::Approx(1.0));

    std::vector<Link> links{{"A", 1.0}, {"B", 1.0}};
    std::vector<Route> routes{{"r", 0, {{0, 0.0, 0.0}, {1, 0.0, 0.0}}, 0.0}};
    std::vector<Source> sources{{"s", {0}, 1.0, 1.0, 0.0}};
    const NetworkModel m(links, routes, sources);
    CHECK(aggregate_prices(m, {0.2, 0.3})[0] == doctest::Approx(0.5));
    CHECK(aggregate_prices(m, {0.0, 0.0})[0] == doctest::Approx(0.0));
}

TEST_CASE("relaxed aggregate at the closed-form point") {
    const NetworkModel m = fixtures::sl1();
    const AlgorithmParams params = half_gamma();
    // (0.25/0.5 + 0.25/0.5)^(-1) = 1 and D(1) = 1.
    CHECK(ybar_from_prices({1.0}, 0.5, params, m.source(0)) == doctest::Approx(1.0));
}

TEST_CASE("relaxed aggregate collapses to D(lambda) in the nu-free mode") {
    const NetworkModel m = fixtures::sl1();
    AlgorithmParams params = half_gamma();
    params.gamma = 1.0;
    CHECK(ybar_from_prices({1.0}, 0.0, params, m.source(0)) == doctest::Approx(1.0));
    CHECK(ybar_from_prices({2.0}, 0.0, params, m.source(0)) == doctest::Approx(0.5));
}

TEST_CASE("relaxed aggregate at the symmetric two-route point") {
    const NetworkModel m = fixtures::two_route();
    const AlgorithmParams params = half_gamma();
    const double nu = TwoRouteExpected::nu;
    CHECK(ybar_from_prices({0.5, 0.5}, nu, params, m.source(0)) ==
          doctest::Approx(TwoRouteExpected::ybar).epsilon(1e-3));
}

TEST_CASE("price domain violations throw") {
    const NetworkModel m = fixtures::sl1();
    const AlgorithmParams params = half_gamma();
    CHECK_THROWS_AS(ybar_from_prices({1.0}, 1.0, params, m.source(0)), PriceDomainViolation);
    CHECK_THROWS_AS(ybar_from_prices({1.0}, 0.0, params, m.source(0)), PriceDomainViolation);
    CHECK_THROWS_AS(rates_from_prices(m, params, {0.5}, {0.6}), PriceDomainViolation);
}

TEST_CASE("closed-form rates at the single-link equilibrium") {
    const NetworkModel m = fixtures::sl1();
    const RateVector rv = rates_from_prices(m, half_gamma(), {Sl1Expected::mu},
                                            {Sl1Expected::nu});
    CHECK(rv.x[0] == doctest::Approx(1.0));
    CHECK(rv.y[0] == doctest::Approx(1.0));
    CHECK(rv.z[0] == doctest::Approx(1.0));
    CHECK(rv.ybar[0] == doctest::Approx(1.0));
}

TEST_CASE("closed-form rates at the two-route equilibrium") {
    const NetworkModel m = fixtures::two_route();
    const RateVector rv = rates_from_prices(m, half_gamma(), {0.5, 0.5},
                                            {TwoRouteExpected::nu});
    CHECK(rv.x[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(rv.x[1] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(rv.y[0] == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("nu-free mode rates on the single link") {
    const NetworkModel m = fixtures::sl1();
    AlgorithmParams params = half_gamma();
    params.gamma = 1.0;
    const RateVector rv = rates_from_prices(m, params, {1.0}, {0.0});
    CHECK(rv.x[0] == doctest::Approx(1.0));
    CHECK(rv.y[0] == doctest::Approx(1.0));
}

TEST_CASE("equilibrium is a fixed point of the Euler step") {
    const NetworkModel m = fixtures::sl1();
    const GainConstants gains = GainConstants::uniform(m, 1.0, 1.0);
    PriceState st;
    st.mu = {Sl1Expected::mu};
    st.nu = {Sl1Expected::nu};
    const PriceState next = step_undelayed(m, half_gamma(), gains, st, 0.005);
    CHECK(next.mu[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(next.nu[0] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("overpriced link relaxes its price") {
    const NetworkModel m = fixtures::sl1();
    const GainConstants gains = GainConstants::uniform(m, 1.0, 1.0);
    PriceState st;
    st.mu = {2.0};
    st.nu = {1.0};  // keep nu = lambda/2
    const RateVector rv = rates_from_prices(m, half_gamma(), st.mu, st.nu);
    CHECK(rv.z[0] < m.link(0).capacity);
    const PriceState next = step_undelayed(m, half_gamma(), gains, st, 0.005);
    CHECK(next.mu[0] < st.mu[0]);
}

TEST_CASE("projection pins an unpriced, unsaturated link at zero") {
    std::vector<Link> links{{"wide", 5.0}, {"narrow", 1.0}};
    std::vector<Route> routes{{"r", 0, {{0, 0.0, 0.0}, {1, 0.0, 0.0}}, 0.0}};
    std::vector<Source> sources{{"s", {0}, 1.0, 1.0, 0.0}};
    const NetworkModel m(links, routes, sources);
    const GainConstants gains = GainConstants::uniform(m, 1.0, 1.0);
    PriceState st;
    st.mu = {0.0, 1.0};
    st.nu = {0.5};
    const RateVector rv = rates_from_prices(m, half_gamma(), st.mu, st.nu);
    REQUIRE(rv.z[0] < 5.0);
    const PriceState next = step_undelayed(m, half_gamma(), gains, st, 0.005);
    CHECK(next.mu[0] == 0.0);
}

TEST_CASE("dual objective at and around the closed-form optimum") {
    const NetworkModel m = fixtures::sl1();
    const AlgorithmParams params = half_gamma();
    const double w_star = dual_objective(m, params, {1.0}, {0.5});
    CHECK(w_star == doctest::Approx(Sl1Expected::w).epsilon(1e-12));

    std::mt19937 rng(11);
    std::uniform_real_distribution<double> mu_dist(0.2, 3.0);
    std::uniform_real_distribution<double> frac(0.1, 0.9);
    for (int i = 0; i < 50; ++i) {
        const double mu = mu_dist(rng);
        const double nu = frac(rng) * mu;
        CHECK(dual_objective(m, params, {mu}, {nu}) >= w_star - 1e-12);
    }
}

TEST_CASE("capacity enters the dual objective linearly") {
    const NetworkModel one = fixtures::sl1();
    std::vector<Link> links{{"L1", 2.0}};
    std::vector<Route> routes{{"r1", 0, {{0, 0.0, 0.01}}, 0.01}};
    std::vector<Source> sources{{"s1", {0}, 1.0, 1.0, 0.0}};
    const NetworkModel two(links, routes, sources);
    const AlgorithmParams params = half_gamma();
    for (double mu : {0.4, 1.0, 1.7}) {
        const double w1 = dual_objective(one, params, {mu}, {0.5 * mu});
        const double w2 = dual_objective(two, params, {mu}, {0.5 * mu});
        CHECK(w2 - w1 == doctest::Approx((2.0 - 1.0) * mu).epsilon(1e-12));
    }
}

TEST_CASE("dual gradient vanishes at the optimum and has the right sign off it") {
    const NetworkModel m = fixtures::sl1();
    const AlgorithmParams params = half_gamma();
    const DualGradient at_star = dual_gradient(m, params, {1.0}, {0.5});
    CHECK(at_star.d_mu[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(at_star.d_nu[0] == doctest::Approx(0.0).epsilon(1e-12));

    const DualGradient over = dual_gradient(m, params, {2.0}, {0.5});
    CHECK(over.d_mu[0] > 0.0);
}

TEST_CASE("analytic dual gradient matches central differences") {
    const NetworkModel m = fixtures::two_route();
    const AlgorithmParams params = half_gamma();
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> mu_dist(0.3, 1.5);
    std::uniform_real_distribution<double> frac(0.15, 0.8);
    const double h = 1e-6;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> mu{mu_dist(rng), mu_dist(rng)};
        std::vector<double> nu{frac(rng) * std::min(mu[0], mu[1])};
        const DualGradient g = dual_gradient(m, params, mu, nu);
        for (int j = 0; j < 2; ++j) {
            auto hi = mu, lo = mu;
            hi[j] += h;
            lo[j] -= h;
            const double fd = (dual_objective(m, params, hi, nu) -
                               dual_objective(m, params, lo, nu)) /
                              (2 * h);
            CHECK(std::abs(g.d_mu[j] - fd) / (1.0 + std::abs(g.d_mu[j])) < 1e-4);
        }
        auto hi = nu, lo = nu;
        hi[0] += h;
        lo[0] -= h;
        const double fd = (dual_objective(m, params, mu, hi) -
                           dual_objective(m, params, mu, lo)) /
                          (2 * h);
        CHECK(std::abs(g.d_nu[0] - fd) / (1.0 + std::abs(g.d_nu[0])) < 1e-4);
    }
}

TEST_CASE("rate laws satisfy the per-route power identity") {
    // x / (ybar^(1/p) U') = gamma x^(1/q) / (lambda - nu) at interior prices.
    const NetworkModel m = fixtures::two_route();
    const AlgorithmParams params = half_gamma();
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> mu_dist(0.2, 2.0);
    std::uniform_real_distribution<double> frac(0.1, 0.85);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> mu{mu_dist(rng), mu_dist(rng)};
        std::vector<double> nu{frac(rng) * std::min(mu[0], mu[1])};
        const RateVector rv = rates_from_prices(m, params, mu, nu);
        const double uprime = utility_prime(rv.ybar[0], 1.0, 1.0);
        for (int r = 0; r < 2; ++r) {
            const double lhs = rv.x[r] / (std::pow(rv.ybar[0], 0.5) * uprime);
            const double rhs = params.gamma * std::pow(rv.x[r], 0.5) / (rv.lambda[r] - nu[0]);
            CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
        }
    }
}

TEST_CASE("rate laws satisfy the blending identity at every interior point") {
    // ybar^(1/q) = gamma sum_r x_r^(1/q) + (1-gamma) y^(1/q) pointwise.
    const NetworkModel m = fixtures::two_route();
    const AlgorithmParams params = half_gamma();
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> mu_dist(0.2, 2.0);
    std::uniform_real_distribution<double> frac(0.1, 0.85);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> mu{mu_dist(rng), mu_dist(rng)};
        std::vector<double> nu{frac(rng) * std::min(mu[0], mu[1])};
        const RateVector rv = rates_from_prices(m, params, mu, nu);
        const double u = std::pow(rv.ybar[0], 0.5);
        const double blend = params.gamma * (std::pow(rv.x[0], 0.5) + std::pow(rv.x[1], 0.5)) +
                             (1.0 - params.gamma) * std::pow(rv.y[0], 0.5);
        CHECK(u == doctest::Approx(blend).epsilon(1e-10));
    }
}

TEST_CASE("relaxed aggregate dominates rates wherever the aggregate is consistent") {
    // ybar >= y and ybar >= x_r needs y = sum_r x_r (subadditivity of the
    // 1/q power); it holds at equilibria, not at arbitrary price points.
    const AlgorithmParams params = half_gamma();
    {
        const NetworkModel m = fixtures::sl1();
        const RateVector rv = rates_from_prices(m, params, {1.0}, {0.5});
        CHECK(rv.ybar[0] >= rv.y[0] - 1e-12);
        CHECK(rv.ybar[0] >= rv.x[0] - 1e-12);
    }
    {
        const NetworkModel m = fixtures::two_route();
        const RateVector rv =
            rates_from_prices(m, params, {0.5, 0.5}, {TwoRouteExpected::nu});
        CHECK(rv.y[0] == doctest::Approx(rv.x[0] + rv.x[1]).epsilon(1e-9));
        CHECK(rv.ybar[0] >= rv.y[0] - 1e-12);
        CHECK(rv.ybar[0] >= rv.x[0] - 1e-12);
        CHECK(rv.ybar[0] >= rv.x[1] - 1e-12);
    }
}

TEST_CASE("prices stay inside the domain along a trajectory") {
    const NetworkModel m = fixtures::two_route();
    const AlgorithmParams params = half_gamma();
    const GainConstants gains = GainConstants::uniform(m, 1.0, 1.0);
    PriceState st = default_initial_state(m, params);
    long clamps = 0;
    for (int k = 0; k < 2000; ++k) {
        st = step_undelayed(m, params, gains, st, 0.005, &clamps);
        for (double mu : st.mu) CHECK(mu >= 0.0);
        const std::vector<double> lambda = aggregate_prices(m, st.mu);
        CHECK(st.nu[0] >= kPriceEpsilon);
        CHECK(st.nu[0] < std::min(lambda[0], lambda[1]));
    }
}

TEST_CASE("dual objective is non-increasing along the trajectory") {
    const NetworkModel m = fixtures::sl1();
    const AlgorithmParams params = half_gamma();
    const GainConstants gains = GainConstants::uniform(m, 1.0, 1.0);
    PriceState st;
    st.mu = {0.3};
    st.nu = {0.12};
    double w = dual_objective(m, params, st.mu, st.nu);
    for (int k = 0; k < 4000; ++k) {
        st = step_undelayed(m, params, gains, st, 0.005);
        const double w_next = dual_objective(m, params, st.mu, st.nu);
        CHECK(w_next <= w + 1e-9 * (1.0 + std::abs(w)));
        w = w_next;
    }
    CHECK(st.mu[0] == doctest::Approx(1.0).epsilon(5e-3));
    CHECK(st.nu[0] == doctest::Approx(0.5).epsilon(5e-3));
}

TEST_CASE("the rate law rejects gamma = 0") {
    const NetworkModel m = fixtures::sl1();
    AlgorithmParams params = half_gamma();
    params.gamma = 0.0;
    CHECK_THROWS_AS(rates_from_prices(m, params, {1.0}, {0.5}), ModelError);
}

TEST_CASE("default start matches the documented rule") {
    const NetworkModel m = fixtures::sl1();
    const PriceState st = default_initial_state(m, half_gamma());
    CHECK(st.mu[0] == doctest::Approx(0.01));
    CHECK(st.nu[0] == doctest::Approx(0.005));
}
