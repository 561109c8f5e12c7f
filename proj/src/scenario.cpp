#include "mpdual/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "mpdual/delay.hpp"

namespace mpdual {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string t;
    while (is >> t) out.push_back(t);
    return out;
}

double parse_number(const std::string& v, int line) {
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ScenarioError("line " + std::to_string(line) + ": expected a number, got '" +
                            v + "'");
    }
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& name) {
    Scenario sc;
    sc.name = name;

    std::vector<Link> links;
    std::map<std::string, int> link_id;
    std::vector<double> link_delay;  // one-way, seconds
    std::vector<Source> sources;
    std::map<std::string, int> source_id;
    std::vector<Route> routes;

    bool saw_kappa_link = false, saw_kappa_source = false, saw_rho = false;

    std::istringstream stream(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(stream, raw)) {
        ++line;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string s = trim(raw);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw ScenarioError("line " + std::to_string(line) + ": malformed section");
            section = s.substr(1, s.size() - 2);
            continue;
        }
        if (section == "params" || section == "sim" || section == "gains") {
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ScenarioError("line " + std::to_string(line) + ": expected key = value");
            const std::string key = trim(s.substr(0, eq));
            const std::string val = trim(s.substr(eq + 1));
            if (section == "params") {
                if (key == "p") sc.params.p = parse_number(val, line);
                else if (key == "gamma") sc.params.gamma = parse_number(val, line);
                else throw ScenarioError("line " + std::to_string(line) +
                                         ": unknown [params] key '" + key + "'");
            } else if (section == "sim") {
                if (key == "dt") sc.sim.dt = parse_number(val, line);
                else if (key == "duration") sc.sim.duration = parse_number(val, line);
                else if (key == "mode") {
                    if (val == "delayed") sc.sim.delayed = true;
                    else if (val == "undelayed") sc.sim.delayed = false;
                    else throw ScenarioError("line " + std::to_string(line) +
                                             ": mode must be undelayed or delayed");
                } else if (key == "mu0") sc.sim.mu0 = parse_number(val, line);
                else if (key == "nu0") sc.sim.nu0 = parse_number(val, line);
                else if (key == "init") {
                    if (val == "default") sc.sim.init = SimConfig::Init::defaults;
                    else if (val == "equilibrium") sc.sim.init = SimConfig::Init::equilibrium;
                    else throw ScenarioError("line " + std::to_string(line) +
                                             ": init must be default or equilibrium");
                } else if (key == "init_scale") sc.sim.init_scale = parse_number(val, line);
                else throw ScenarioError("line " + std::to_string(line) +
                                         ": unknown [sim] key '" + key + "'");
            } else {
                if (key == "scalable") {
                    sc.gains.scalable = true;
                    sc.gains.kappa = parse_number(val, line);
                } else if (key == "kappa_link") {
                    sc.gains.kappa_link = parse_number(val, line);
                    saw_kappa_link = true;
                } else if (key == "kappa_source") {
                    sc.gains.kappa_source = parse_number(val, line);
                    saw_kappa_source = true;
                } else if (key == "rho_source") {
                    sc.gains.rho_source = parse_number(val, line);
                    saw_rho = true;
                } else {
                    throw ScenarioError("line " + std::to_string(line) +
                                        ": unknown [gains] key '" + key + "'");
                }
            }
            continue;
        }
        if (section == "links") {
            const auto t = tokens(s);
            if (t.size() != 3)
                throw ScenarioError("line " + std::to_string(line) +
                                    ": links row needs 'name capacity delay_ms'");
            if (link_id.count(t[0]))
                throw ScenarioError("line " + std::to_string(line) + ": duplicate link '" +
                                    t[0] + "'");
            link_id[t[0]] = static_cast<int>(links.size());
            links.push_back({t[0], parse_number(t[1], line)});
            link_delay.push_back(parse_number(t[2], line) * 1e-3);
            continue;
        }
        if (section == "sources") {
            const auto t = tokens(s);
            if (t.empty()) continue;
            Source src;
            src.name = t[0];
            for (size_t i = 1; i < t.size(); ++i) {
                const auto eq = t[i].find('=');
                if (eq == std::string::npos)
                    throw ScenarioError("line " + std::to_string(line) +
                                        ": source option must be key=value");
                const std::string key = t[i].substr(0, eq);
                const double val = parse_number(t[i].substr(eq + 1), line);
                if (key == "alpha") src.alpha = val;
                else if (key == "weight") src.weight = val;
                else if (key == "M") src.max_rate = val;
                else throw ScenarioError("line " + std::to_string(line) +
                                         ": unknown source option '" + key + "'");
            }
            if (source_id.count(src.name))
                throw ScenarioError("line " + std::to_string(line) + ": duplicate source '" +
                                    src.name + "'");
            source_id[src.name] = static_cast<int>(sources.size());
            sources.push_back(src);
            continue;
        }
        if (section == "routes") {
            const auto t = tokens(s);
            if (t.size() < 3)
                throw ScenarioError("line " + std::to_string(line) +
                                    ": routes row needs 'name source link...'");
            const auto sit = source_id.find(t[1]);
            if (sit == source_id.end())
                throw ScenarioError("line " + std::to_string(line) + ": unknown source '" +
                                    t[1] + "'");
            Route route;
            route.name = t[0];
            route.source = sit->second;
            double oneway = 0.0;
            std::vector<int> hop_links;
            for (size_t i = 2; i < t.size(); ++i) {
                const auto lit = link_id.find(t[i]);
                if (lit == link_id.end())
                    throw ScenarioError("line " + std::to_string(line) + ": unknown link '" +
                                        t[i] + "'");
                hop_links.push_back(lit->second);
            }
            for (int j : hop_links) oneway += link_delay[j];
            route.round_trip = 2.0 * oneway;
            double acc = 0.0;
            for (int j : hop_links) {
                route.hops.push_back({j, acc, route.round_trip - acc});
                acc += link_delay[j];
            }
            sources[route.source].routes.push_back(static_cast<int>(routes.size()));
            routes.push_back(route);
            continue;
        }
        throw ScenarioError("line " + std::to_string(line) + ": content outside any section");
    }

    if (links.empty()) throw ScenarioError("scenario has no links");
    if (routes.empty()) throw ScenarioError("scenario has no routes");

    try {
        sc.params.validate();
        sc.model = std::make_shared<NetworkModel>(std::move(links), std::move(routes),
                                                  std::move(sources));
    } catch (const ModelError& e) {
        throw ScenarioError(std::string("model validation: ") + e.what());
    }

    if (sc.sim.dt <= 0) throw ScenarioError("dt must be > 0");
    if (sc.sim.duration < sc.sim.dt) throw ScenarioError("duration must be >= dt");
    if (sc.params.gamma <= 0.0)
        throw ScenarioError("gamma = 0 has no dynamics; use gamma in (0,1]");
    if (sc.sim.init_scale <= 0.0) throw ScenarioError("init_scale must be > 0");
    if (sc.gains.scalable && !(sc.gains.kappa > 0))
        throw ScenarioError("scalable gain kappa must be > 0");
    if (sc.sim.delayed) {
        if (!sc.gains.scalable && !saw_rho)
            throw ScenarioError("delayed mode needs rho_source or scalable gains");
        // Validates that every delay sits on the dt grid; throws
        // DelayGridMismatch otherwise.
        DelaySchedule schedule(*sc.model, sc.sim.dt);
    } else {
        (void)saw_kappa_link;
        (void)saw_kappa_source;
    }
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string name = path;
    const auto slash = name.find_last_of('/');
    if (slash != std::string::npos) name = name.substr(slash + 1);
    const auto dot = name.find_last_of('.');
    if (dot != std::string::npos) name = name.substr(0, dot);
    return parse_scenario(buf.str(), name);
}

}  // namespace mpdual
