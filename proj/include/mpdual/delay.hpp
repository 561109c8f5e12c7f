#pragma once

#include <vector>

#include "mpdual/dynamics.hpp"
#include "mpdual/model.hpp"

namespace mpdual {

// State of the delayed system. The relaxed aggregate ybar is a dynamic
// state here, not an algebraic function of prices.
struct DelayedState {
    std::vector<double> mu;
    std::vector<double> nu;
    std::vector<double> ybar;
    double t = 0.0;
};

struct DelayGains {
    std::vector<double> kappa_link;    // per link
    std::vector<double> kappa_source;  // per source
    std::vector<double> rho_source;    // per source

    static DelayGains uniform(const NetworkModel& m, double kj, double ks, double rho);
};

// Propagation delays converted to whole numbers of steps. Construction
// throws DelayGridMismatch when a delay is not an integer multiple of dt.
class DelaySchedule {
public:
    DelaySchedule(const NetworkModel& model, double dt);

    int round_trip_lag(int route) const { return rtt_lag_[route]; }
    // Lag of x_r as seen by hop h of route r (source-to-link delay).
    int forward_lag(int route, int hop) const { return fwd_lag_[route][hop]; }
    // Lag of mu_j as seen by the source of route r (link-to-source delay).
    int backward_lag(int route, int hop) const { return back_lag_[route][hop]; }
    int max_lag() const { return max_lag_; }
    double dt() const { return dt_; }

private:
    double dt_;
    std::vector<int> rtt_lag_;
    std::vector<std::vector<int>> fwd_lag_;
    std::vector<std::vector<int>> back_lag_;
    int max_lag_ = 0;
};

// Fixed-depth ring buffers of past route rates and link prices, sampled
// every dt. Lag 0 is the newest stored sample; lookups beyond the recorded
// past return the oldest (initial) value, which realizes a constant
// pre-history.
class HistoryBuffer {
public:
    HistoryBuffer(int route_count, int link_count, int depth);

    void fill(const std::vector<double>& x0, const std::vector<double>& mu0);
    void push_mu(const std::vector<double>& mu);
    void push_x(const std::vector<double>& x);

    double x_at(int route, int lag) const;
    double mu_at(int link, int lag) const;
    std::vector<double> latest_x() const;
    int depth() const { return depth_; }

private:
    int routes_, links_, depth_;
    int head_x_ = 0, head_mu_ = 0;
    std::vector<double> x_;   // depth x routes
    std::vector<double> mu_;  // depth x links
};

struct DelayClampCounters {
    long mu_floor = 0;    // mu held at the positive floor
    long nu_clamp = 0;    // nu pulled back inside the price domain
    long denom_floor = 0; // lambda - nu floored in a rate evaluation
};

// A link price below this counts as zero when classifying saturation.
inline constexpr double kMuZeroTolerance = 1e-7;
// Relative load tolerance for "exactly at capacity".
inline constexpr double kSaturationRelTol = 1e-6;

// One explicit-Euler step of the delayed system:
//   d mu_j  = (kappa_j mu_j / p) (sum_{j in r} x_r(t - T_rj) - c_j)^+_{mu_j}
//   d nu_s  = (kappa_s nu_s / p) (y_s(t) - sum_{r in s} x_r(t - T_r))
//   d ybar_s = (q rho_s / p) (gamma sum_r x_r(t - T_r)^(1/q)
//                             + (1-gamma) y_s(t)^(1/q) - ybar_s(t)^(1/q))
// with y_s(t) from the instantaneous law and route prices assembled from
// delayed link prices. Advances the history with the new mu and x.
DelayedState step_delayed(const NetworkModel& model, const AlgorithmParams& params,
                          const DelayGains& gains, const DelayedState& state,
                          HistoryBuffer& history, const DelaySchedule& schedule,
                          DelayClampCounters* counters = nullptr);

// Owns state, schedule and history of one delayed run.
class DelayedTrajectory {
public:
    // ybar of the initial state, when left empty, is filled from the
    // algebraic law at the initial prices.
    DelayedTrajectory(const NetworkModel& model, const AlgorithmParams& params,
                      const DelayGains& gains, DelayedState initial, double dt);

    void step();
    const DelayedState& state() const { return state_; }
    std::vector<double> current_x() const { return history_.latest_x(); }
    std::vector<double> current_z() const;
    std::vector<double> current_y() const;
    const DelayClampCounters& counters() const { return counters_; }
    const DelaySchedule& schedule() const { return schedule_; }

private:
    const NetworkModel& model_;
    AlgorithmParams params_;
    DelayGains gains_;
    DelaySchedule schedule_;
    HistoryBuffer history_;
    DelayedState state_;
    DelayClampCounters counters_;
};

// Curvature coefficient of the delayed-relaxation stability condition:
//   a_s = (alpha p - 1) / (p ybar)
// for the alpha-fair family. Throws AssumptionHViolated when <= 0.
double compute_a_s(const Source& source, const AlgorithmParams& params, double ybar);

// Same coefficient from the generic definition -U''/U' - 1/(p ybar);
// agrees with compute_a_s on the alpha-fair family.
double compute_a_s_generic(double weight, double alpha, const AlgorithmParams& params,
                           double ybar);

// Margins of the decentralized delay-stability conditions, normalized so
// that < 1 means the condition holds:
//   link:          kappa_j sum_{j in r} x_r T_r / (gamma pi/4)
//   source price:  kappa_s sum_{r in s} x_r T_r / (gamma pi/4)
//   source relax:  rho_s a_s sum_{r in s} x_r^(1/q) T_r / (pi/4)
struct StabilityReport {
    std::vector<double> link_margin;
    std::vector<double> source_price_margin;
    std::vector<double> source_relax_margin;
    std::vector<int> almost_saturated;  // links with mu ~ 0 and z ~ c
    bool pass = false;
};

StabilityReport check_stability_conditions(const NetworkModel& model,
                                           const AlgorithmParams& params,
                                           const DelayGains& gains,
                                           const EquilibriumPoint& eq);

// Gain selection from local quantities only, for kappa in (0, pi/4):
//   kappa_s = gamma kappa / (M_s Tbar_s)
//   rho_s   = p kappa / ((alpha p - 1) Tbar_s)
//   kappa_j = gamma kappa / (c_j Tbar_j)
// where Tbar are rate-weighted average round-trip times computed from the
// supplied rate estimate. An unloaded link falls back to the largest round
// trip among its routes. M_s comes from Source::max_rate, or the sum of
// per-route bottleneck capacities when unset.
DelayGains scalable_gains(const NetworkModel& model, const AlgorithmParams& params,
                          const std::vector<double>& x_estimate, double kappa);

}  // namespace mpdual
