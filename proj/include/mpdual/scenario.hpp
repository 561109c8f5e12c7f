#pragma once

#include <memory>
#include <optional>
#include <string>

#include "mpdual/model.hpp"

namespace mpdual {

// Scenario files are plain text: '#' starts a comment, sections are
// [params], [sim], [gains], [links], [sources], [routes].
//
//   [params]   key = value pairs: p, gamma
//   [sim]      dt, duration (seconds), mode (undelayed|delayed),
//              mu0, nu0 (optional), init (default|equilibrium), init_scale
//   [gains]    either uniform constants kappa_link / kappa_source /
//              rho_source, or scalable = <kappa> for the local gain scheme
//   [links]    rows: name capacity_mbps oneway_delay_ms
//   [sources]  rows: name [alpha=A] [weight=W] [M=rate]
//   [routes]   rows: name source link [link ...]
//
// Hop delays are derived from the link one-way delays: the forward delay
// of hop i is the sum of the one-way delays of the hops before it, and the
// round trip is twice the path's one-way total.

struct SimConfig {
    double dt = 0.005;        // seconds
    double duration = 50.0;   // seconds
    bool delayed = false;
    double mu0 = 0.01;
    std::optional<double> nu0;
    enum class Init { defaults, equilibrium } init = Init::defaults;
    double init_scale = 1.0;  // applied to equilibrium prices when init=equilibrium
};

struct GainSpec {
    bool scalable = false;
    double kappa = 0.4;  // scalable-scheme knob, in (0, pi/4)
    double kappa_link = 1.0;
    double kappa_source = 1.0;
    double rho_source = 50.0;
};

struct Scenario {
    std::string name;
    std::shared_ptr<const NetworkModel> model;
    AlgorithmParams params;
    SimConfig sim;
    GainSpec gains;
};

Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& text, const std::string& name);

}  // namespace mpdual
