#pragma once

#include <string>
#include <vector>

#include "mpdual/errors.hpp"

namespace mpdual {

// Capacities and rates are in Mb/s, delays in seconds.

struct Link {
    std::string name;
    double capacity = 0.0;  // > 0
};

// One resource on a route's path. fwd_delay is the propagation delay from
// the source to this link, back_delay the delay from this link back to the
// source; they must sum to the route's round trip.
struct RouteHop {
    int link = -1;
    double fwd_delay = 0.0;
    double back_delay = 0.0;
};

struct Route {
    std::string name;
    int source = -1;
    std::vector<RouteHop> hops;  // non-empty, ordered
    double round_trip = 0.0;     // seconds
};

struct Source {
    std::string name;
    std::vector<int> routes;  // non-empty
    double weight = 1.0;      // w > 0
    double alpha = 1.0;       // > 0
    double max_rate = 0.0;    // M_s; 0 means "derive a default"
};

// Immutable after construction; safe to share read-only across threads.
class NetworkModel {
public:
    // Validates referential integrity, per-hop delay consistency
    // (|fwd+back-rtt| <= 1e-12 s), uniqueness of names, positive
    // capacities/weights. Throws ModelError on violation. A routing-matrix
    // rank deficiency is recorded as a warning, not an error.
    NetworkModel(std::vector<Link> links, std::vector<Route> routes,
                 std::vector<Source> sources);

    int link_count() const { return static_cast<int>(links_.size()); }
    int route_count() const { return static_cast<int>(routes_.size()); }
    int source_count() const { return static_cast<int>(sources_.size()); }

    const Link& link(int j) const { return links_[j]; }
    const Route& route(int r) const { return routes_[r]; }
    const Source& source(int s) const { return sources_[s]; }
    const std::vector<Link>& links() const { return links_; }
    const std::vector<Route>& routes() const { return routes_; }
    const std::vector<Source>& sources() const { return sources_; }

    // Routes that traverse link j (the nonzero columns of row j of A).
    const std::vector<int>& routes_through(int j) const { return link_routes_[j]; }
    bool on_route(int j, int r) const;  // A_jr

    // Dense 0-1 routing matrix, J x R.
    std::vector<std::vector<double>> routing_matrix() const;
    // Rank of A over the reals.
    int routing_matrix_rank() const;
    // Rank of the row submatrix of A restricted to the given links.
    int submatrix_rank(const std::vector<int>& link_rows) const;

    // Default maximum available rate for source s: the sum over its routes
    // of each route's bottleneck capacity. Used when Source::max_rate == 0.
    double default_max_rate(int s) const;

    double max_round_trip() const;
    std::vector<double> capacities() const;

    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    std::vector<Link> links_;
    std::vector<Route> routes_;
    std::vector<Source> sources_;
    std::vector<std::vector<int>> link_routes_;  // per link: routes through it
    std::vector<std::string> warnings_;
};

// Weighted alpha-fair utility family and its demand (inverse marginal
// utility):
//   U(y)  = w log y            (alpha == 1)
//   U(y)  = w y^(1-alpha)/(1-alpha)   otherwise
//   U'(y) = w y^(-alpha)
//   D(l)  = (w/l)^(1/alpha)
// All require a strictly positive argument.
double utility(double y, double w, double alpha);
double utility_prime(double y, double w, double alpha);
double utility_second(double y, double w, double alpha);
double demand(double price, double w, double alpha);

// Exponent pair and blend weight of the rate laws. q is always derived
// from p so that 1/p + 1/q = 1.
struct AlgorithmParams {
    double p = 2.0;      // > 1
    double gamma = 0.5;  // in [0,1]; gamma = 1 switches the nu-free mode on

    double q() const { return p / (p - 1.0); }
    void validate() const;
    bool gamma_one() const { return gamma >= 1.0; }
};

struct AssumptionHReport {
    std::vector<bool> holds;  // per source: alpha*p > 1 (strict)
    bool all() const;
};

AssumptionHReport check_assumption_h(const NetworkModel& model,
                                     const AlgorithmParams& params);

}  // namespace mpdual
