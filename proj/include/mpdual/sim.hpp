#pragma once

#include <string>
#include <vector>

#include "mpdual/delay.hpp"
#include "mpdual/dynamics.hpp"
#include "mpdual/linear.hpp"
#include "mpdual/oracle.hpp"
#include "mpdual/scenario.hpp"

namespace mpdual {

// Uniformly sampled time series. Columns are
//   t, x.<route>..., y.<source>..., z.<link>..., mu.<link>...,
//   nu.<source>..., ybar.<source>...[, W]
// with W present only for undelayed runs.
struct Trace {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::string to_csv() const;
    int column(const std::string& name) const;  // -1 when absent
};

struct RunSummary {
    std::vector<double> final_x, final_y, final_z;
    // First time after which every route rate stays within 1% of its
    // final-window mean; -1 when the run never settles.
    double convergence_time = -1.0;
    long clamp_events = 0;
    long lyapunov_violations = 0;  // undelayed: steps where W rose beyond tol
    bool nonfinite = false;        // run truncated by a non-finite state
    double nonfinite_t = 0.0;
    double final_w = 0.0;                  // undelayed only
    std::vector<double> peak_to_peak_z;    // per link, over the final quarter
    bool oscillating = false;  // any link's final-quarter swing > 10% of capacity
};

struct RunResult {
    Trace trace;
    RunSummary summary;
};

// Integrates the scenario and collects the trace. Deterministic: identical
// scenarios produce identical traces.
RunResult run(const Scenario& scenario);

// Resolved gains for a scenario (uniform constants, or the scalable scheme
// fed by the reference solver's rates).
DelayGains resolve_gains(const Scenario& scenario);
// Initial delayed/undelayed state per the scenario's init policy.
PriceState initial_price_state(const Scenario& scenario);

struct GammaSweepRow {
    double gamma = 0.0;
    double aggregate_rate = 0.0;     // sum over sources of final y
    double aggregate_utility = 0.0;  // sum_s U_s(sum_r x_r) at the final state
    double kelly_optimum = 0.0;      // optimal value of the aggregate program
    double gap = 0.0;                // kelly_optimum - aggregate_utility
    double convergence_time = -1.0;
    bool ok = false;
    std::string error;
};

struct GammaSweepReport {
    std::vector<GammaSweepRow> rows;
    std::string to_csv() const;
};

GammaSweepReport sweep_gamma(const Scenario& scenario, const std::vector<double>& gammas);

enum class GainAxis { link, source };

struct GainSweepRow {
    double value = 0.0;
    double convergence_time = -1.0;
    double aggregate_rate = 0.0;
    double max_swing = 0.0;  // largest final-quarter peak-to-peak of z / capacity
    bool ok = false;
    std::string error;
};

struct GainSweepReport {
    GainAxis axis = GainAxis::link;
    std::vector<GainSweepRow> rows;
    std::string to_csv() const;
};

GainSweepReport sweep_gains(const Scenario& scenario, GainAxis axis,
                            const std::vector<double>& values);

// Combined margin + frequency-domain verdicts at the certified equilibrium.
struct CheckReport {
    EquilibriumPoint equilibrium;
    StabilityReport stability;
    NyquistResult nyquist;
    int full_rank = 0, saturated_rank = 0, saturated_links = 0;
    bool pass = false;
    std::string render(const Scenario& scenario) const;
};

CheckReport check(const Scenario& scenario, const NyquistGrid& grid = {});

// Loci dump for external plotting: theta, then Re/Im per eigenvalue.
std::string nyquist_csv(const NyquistResult& result);

}  // namespace mpdual
