#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mpdual/model.hpp"
#include "test_instances.hpp"

using namespace mpdual;

TEST_CASE("utility family: direct evaluations") {
    CHECK(utility(1.0, 1.0, 1.0) == doctest::Approx(0.0));
    CHECK(utility_prime(1.0, 1.0, 1.0) == doctest::Approx(1.0));
    CHECK(utility_prime(4.0, 1.0, 2.0) == doctest::Approx(1.0 / 16.0));
    CHECK(utility(std::exp(1.0), 2.0, 1.0) == doctest::Approx(2.0));
    CHECK(demand(2.0, 1.0, 1.0) == doctest::Approx(0.5));
    CHECK(demand(1.0, 4.0, 2.0) == doctest::Approx(2.0));
    CHECK_THROWS_AS(utility(0.0, 1.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(utility(-1.0, 1.0, 2.0), std::domain_error);
    CHECK_THROWS_AS(demand(0.0, 1.0, 1.0), std::domain_error);
}

TEST_CASE("demand inverts marginal utility") {
    for (double y : {0.5, 1.0, 3.0}) {
        CHECK(demand(utility_prime(y, 1.0, 1.0), 1.0, 1.0) == doctest::Approx(y).epsilon(1e-12));
        CHECK(demand(utility_prime(y, 2.5, 1.7), 2.5, 1.7) == doctest::Approx(y).epsilon(1e-12));
    }
}

TEST_CASE("utility is strictly concave") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(0.05, 5.0);
    for (int i = 0; i < 200; ++i) {
        double y1 = dist(rng), y2 = dist(rng);
        if (y1 == y2) continue;
        const double alpha = (i % 3 == 0) ? 1.0 : (i % 3 == 1) ? 0.5 : 2.0;
        const double mid = utility(0.5 * (y1 + y2), 1.3, alpha);
        const double chord = 0.5 * (utility(y1, 1.3, alpha) + utility(y2, 1.3, alpha));
        CHECK(mid > chord);
    }
}

TEST_CASE("single route over one link gives the identity matrix") {
    const NetworkModel m = fixtures::sl1();
    const auto a = m.routing_matrix();
    REQUIRE(a.size() == 1);
    REQUIRE(a[0].size() == 1);
    CHECK(a[0][0] == 1.0);
    CHECK(m.routing_matrix_rank() == 1);
}

TEST_CASE("two disjoint single-link routes give a 2x2 identity") {
    const NetworkModel m = fixtures::two_route();
    const auto a = m.routing_matrix();
    CHECK(a[0][0] == 1.0);
    CHECK(a[0][1] == 0.0);
    CHECK(a[1][0] == 0.0);
    CHECK(a[1][1] == 1.0);
    CHECK(m.routing_matrix_rank() == 2);
    CHECK(m.warnings().empty());
}

TEST_CASE("triangle topology: rows sum to route counts") {
    const NetworkModel m = fixtures::triangle();
    CHECK(m.link_count() == 5);
    CHECK(m.route_count() == 6);
    const auto a = m.routing_matrix();
    for (int j = 0; j < m.link_count(); ++j) {
        double sum = 0.0;
        for (int r = 0; r < m.route_count(); ++r) sum += a[j][r];
        CHECK(sum == doctest::Approx(static_cast<double>(m.routes_through(j).size())));
    }
}

TEST_CASE("hop delay pairs always reproduce the round trip") {
    const NetworkModel m = fixtures::triangle();
    for (const Route& r : m.routes())
        for (const RouteHop& h : r.hops)
            CHECK(h.fwd_delay + h.back_delay == doctest::Approx(r.round_trip).epsilon(1e-15));
}

TEST_CASE("construction rejects structural violations") {
    std::vector<Link> links{{"L", 1.0}};
    std::vector<Source> sources{{"s", {0}, 1.0, 1.0, 0.0}};

    SUBCASE("empty route") {
        std::vector<Route> routes{{"r", 0, {}, 0.0}};
        CHECK_THROWS_AS(NetworkModel(links, routes, sources), ModelError);
    }
    SUBCASE("dangling link id") {
        std::vector<Route> routes{{"r", 0, {{3, 0.0, 0.0}}, 0.0}};
        CHECK_THROWS_AS(NetworkModel(links, routes, sources), ModelError);
    }
    SUBCASE("inconsistent hop delays") {
        std::vector<Route> routes{{"r", 0, {{0, 0.001, 0.002}}, 0.004}};
        CHECK_THROWS_AS(NetworkModel(links, routes, sources), ModelError);
    }
    SUBCASE("nonpositive capacity") {
        std::vector<Link> bad{{"L", 0.0}};
        std::vector<Route> routes{{"r", 0, {{0, 0.0, 0.0}}, 0.0}};
        CHECK_THROWS_AS(NetworkModel(bad, routes, sources), ModelError);
    }
    SUBCASE("route owned twice") {
        std::vector<Route> routes{{"r", 0, {{0, 0.0, 0.0}}, 0.0}};
        std::vector<Source> two{{"s", {0}, 1.0, 1.0, 0.0}, {"t", {0}, 1.0, 1.0, 0.0}};
        CHECK_THROWS_AS(NetworkModel(links, routes, two), ModelError);
    }
}

TEST_CASE("rank deficiency is a warning, not an error") {
    // Two identical parallel links cannot both be priced independently by
    // a single shared route.
    std::vector<Link> links{{"A", 1.0}, {"B", 1.0}};
    std::vector<Route> routes{{"r", 0, {{0, 0.0, 0.0}, {1, 0.0, 0.0}}, 0.0}};
    std::vector<Source> sources{{"s", {0}, 1.0, 1.0, 0.0}};
    const NetworkModel m(links, routes, sources);
    REQUIRE(m.warnings().size() == 1);
    CHECK(m.routing_matrix_rank() == 1);
}

TEST_CASE("assumption on alpha*p is strict") {
    const NetworkModel m = fixtures::sl1();
    AlgorithmParams params;
    params.p = 2.0;
    CHECK(check_assumption_h(m, params).all());

    std::vector<Link> links{{"L", 1.0}};
    std::vector<Route> routes{{"r", 0, {{0, 0.0, 0.0}}, 0.0}};
    SUBCASE("alpha p < 1 fails") {
        std::vector<Source> sources{{"s", {0}, 1.0, 0.4, 0.0}};
        const NetworkModel weak(links, routes, sources);
        CHECK_FALSE(check_assumption_h(weak, params).all());
    }
    SUBCASE("boundary alpha p = 1 fails") {
        std::vector<Source> sources{{"s", {0}, 1.0, 0.5, 0.0}};
        const NetworkModel boundary(links, routes, sources);
        CHECK_FALSE(check_assumption_h(boundary, params).all());
    }
}

TEST_CASE("default max rate sums per-route bottlenecks") {
    const NetworkModel m = fixtures::two_route();
    CHECK(m.default_max_rate(0) == doctest::Approx(2.0));
    const NetworkModel t = fixtures::triangle();
    CHECK(t.default_max_rate(0) == doctest::Approx(200.0));
}

TEST_CASE("q is derived from p") {
    AlgorithmParams params;
    params.p = 2.0;
    CHECK(params.q() == doctest::Approx(2.0));
    params.p = 3.0;
    CHECK(1.0 / params.p + 1.0 / params.q() == doctest::Approx(1.0).epsilon(1e-15));
    params.p = 0.5;
    CHECK_THROWS_AS(params.validate(), ModelError);
}
