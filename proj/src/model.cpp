#include "mpdual/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace mpdual {

namespace {

constexpr double kDelayTolerance = 1e-12;  // seconds
constexpr double kRankPivotTolerance = 1e-9;

int gaussian_rank(std::vector<std::vector<double>> m) {
    if (m.empty()) return 0;
    const int rows = static_cast<int>(m.size());
    const int cols = static_cast<int>(m[0].size());
    int rank = 0;
    for (int col = 0; col < cols && rank < rows; ++col) {
        int pivot = -1;
        double best = kRankPivotTolerance;
        for (int i = rank; i < rows; ++i) {
            if (std::abs(m[i][col]) > best) {
                best = std::abs(m[i][col]);
                pivot = i;
            }
        }
        if (pivot < 0) continue;
        std::swap(m[rank], m[pivot]);
        for (int i = rank + 1; i < rows; ++i) {
            const double f = m[i][col] / m[rank][col];
            for (int k = col; k < cols; ++k) m[i][k] -= f * m[rank][k];
        }
        ++rank;
    }
    return rank;
}

}  // namespace

NetworkModel::NetworkModel(std::vector<Link> links, std::vector<Route> routes,
                           std::vector<Source> sources)
    : links_(std::move(links)), routes_(std::move(routes)), sources_(std::move(sources)) {
    std::set<std::string> seen;
    for (const Link& l : links_) {
        if (l.capacity <= 0)
            throw ModelError("link '" + l.name + "': capacity must be > 0");
        if (!seen.insert(l.name).second)
            throw ModelError("duplicate link name '" + l.name + "'");
    }
    seen.clear();
    for (const Route& r : routes_) {
        if (!seen.insert(r.name).second)
            throw ModelError("duplicate route name '" + r.name + "'");
    }
    seen.clear();
    for (const Source& s : sources_) {
        if (!seen.insert(s.name).second)
            throw ModelError("duplicate source name '" + s.name + "'");
        if (s.weight <= 0 || s.alpha <= 0)
            throw ModelError("source '" + s.name + "': weight and alpha must be > 0");
        if (s.routes.empty())
            throw ModelError("source '" + s.name + "' owns no routes");
    }

    // Route <-> source ownership must be bijective per route.
    std::vector<int> owner(routes_.size(), -1);
    for (int s = 0; s < source_count(); ++s) {
        for (int r : sources_[s].routes) {
            if (r < 0 || r >= route_count())
                throw ModelError("source '" + sources_[s].name + "': dangling route id");
            if (owner[r] != -1)
                throw ModelError("route '" + routes_[r].name + "' owned by two sources");
            owner[r] = s;
        }
    }
    for (int r = 0; r < route_count(); ++r) {
        if (owner[r] == -1)
            throw ModelError("route '" + routes_[r].name + "' has no owning source");
        if (routes_[r].source != owner[r])
            throw ModelError("route '" + routes_[r].name + "': source field disagrees with ownership");
        if (routes_[r].hops.empty())
            throw ModelError("route '" + routes_[r].name + "' has no hops");
        if (routes_[r].round_trip < 0)
            throw ModelError("route '" + routes_[r].name + "': negative round trip");
        for (const RouteHop& h : routes_[r].hops) {
            if (h.link < 0 || h.link >= link_count())
                throw ModelError("route '" + routes_[r].name + "': dangling link id");
            if (h.fwd_delay < 0 || h.back_delay < 0)
                throw ModelError("route '" + routes_[r].name + "': negative hop delay");
            if (std::abs(h.fwd_delay + h.back_delay - routes_[r].round_trip) > kDelayTolerance) {
                std::ostringstream os;
                os << "route '" << routes_[r].name << "', link '" << links_[h.link].name
                   << "': fwd+back delay " << (h.fwd_delay + h.back_delay)
                   << " != round trip " << routes_[r].round_trip;
                throw ModelError(os.str());
            }
        }
    }

    link_routes_.assign(links_.size(), {});
    for (int r = 0; r < route_count(); ++r) {
        std::set<int> links_seen;
        for (const RouteHop& h : routes_[r].hops) {
            if (!links_seen.insert(h.link).second)
                throw ModelError("route '" + routes_[r].name + "' visits a link twice");
            link_routes_[h.link].push_back(r);
        }
    }

    const int rank = routing_matrix_rank();
    if (rank < link_count()) {
        std::ostringstream os;
        os << "routing matrix is row-rank deficient (rank " << rank << " of "
           << link_count() << " links); equilibrium prices may be non-unique "
           << "on bottleneck links";
        warnings_.push_back(os.str());
    }
}

bool NetworkModel::on_route(int j, int r) const {
    const auto& v = link_routes_[j];
    return std::find(v.begin(), v.end(), r) != v.end();
}

std::vector<std::vector<double>> NetworkModel::routing_matrix() const {
    std::vector<std::vector<double>> a(link_count(), std::vector<double>(route_count(), 0.0));
    for (int j = 0; j < link_count(); ++j)
        for (int r : link_routes_[j]) a[j][r] = 1.0;
    return a;
}

int NetworkModel::routing_matrix_rank() const { return gaussian_rank(routing_matrix()); }

int NetworkModel::submatrix_rank(const std::vector<int>& link_rows) const {
    if (link_rows.empty()) return 0;
    const auto a = routing_matrix();
    std::vector<std::vector<double>> sub;
    sub.reserve(link_rows.size());
    for (int j : link_rows) sub.push_back(a[j]);
    return gaussian_rank(std::move(sub));
}

double NetworkModel::default_max_rate(int s) const {
    double m = 0.0;
    for (int r : sources_[s].routes) {
        double bottleneck = std::numeric_limits<double>::infinity();
        for (const RouteHop& h : routes_[r].hops)
            bottleneck = std::min(bottleneck, links_[h.link].capacity);
        m += bottleneck;
    }
    return m;
}

double NetworkModel::max_round_trip() const {
    double t = 0.0;
    for (const Route& r : routes_) t = std::max(t, r.round_trip);
    return t;
}

std::vector<double> NetworkModel::capacities() const {
    std::vector<double> c(links_.size());
    for (int j = 0; j < link_count(); ++j) c[j] = links_[j].capacity;
    return c;
}

double utility(double y, double w, double alpha) {
    if (y <= 0) throw std::domain_error("utility: rate must be > 0");
    if (alpha == 1.0) return w * std::log(y);
    return w * std::pow(y, 1.0 - alpha) / (1.0 - alpha);
}

double utility_prime(double y, double w, double alpha) {
    if (y <= 0) throw std::domain_error("utility_prime: rate must be > 0");
    return w * std::pow(y, -alpha);
}

double utility_second(double y, double w, double alpha) {
    if (y <= 0) throw std::domain_error("utility_second: rate must be > 0");
    return -alpha * w * std::pow(y, -alpha - 1.0);
}

double demand(double price, double w, double alpha) {
    if (price <= 0) throw std::domain_error("demand: price must be > 0");
    return std::pow(w / price, 1.0 / alpha);
}

void AlgorithmParams::validate() const {
    if (!(p > 1.0)) throw ModelError("params: p must be > 1");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ModelError("params: gamma must be in [0,1]");
}

bool AssumptionHReport::all() const {
    return std::all_of(holds.begin(), holds.end(), [](bool b) { return b; });
}

AssumptionHReport check_assumption_h(const NetworkModel& model,
                                     const AlgorithmParams& params) {
    AssumptionHReport rep;
    rep.holds.reserve(model.source_count());
    for (const Source& s : model.sources())
        rep.holds.push_back(s.alpha * params.p > 1.0);
    return rep;
}

}  // namespace mpdual
