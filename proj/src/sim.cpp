#include "mpdual/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <numbers>
#include <sstream>

namespace mpdual {

namespace {

constexpr double kConvergenceBand = 0.01;   // +-1% of the final-window mean
constexpr double kFinalWindowFraction = 0.1;
constexpr double kOscillationWindow = 0.25;  // final quarter of the run
constexpr double kOscillationRelSwing = 0.10;
constexpr double kOracleTol = 1e-8;

void append_formatted(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    out += buf;
}

std::vector<std::string> trace_columns(const NetworkModel& m, bool with_w) {
    std::vector<std::string> cols{"t"};
    for (const Route& r : m.routes()) cols.push_back("x." + r.name);
    for (const Source& s : m.sources()) cols.push_back("y." + s.name);
    for (const Link& l : m.links()) cols.push_back("z." + l.name);
    for (const Link& l : m.links()) cols.push_back("mu." + l.name);
    for (const Source& s : m.sources()) cols.push_back("nu." + s.name);
    for (const Source& s : m.sources()) cols.push_back("ybar." + s.name);
    if (with_w) cols.push_back("W");
    return cols;
}

// Convergence detector: mean of each route rate over the final window,
// then the first time after which every route stays inside the band.
double convergence_time(const Trace& trace, int route_count) {
    const int n = static_cast<int>(trace.rows.size());
    if (n < 4) return -1.0;
    const int w0 = std::max(0, n - std::max(2, static_cast<int>(n * kFinalWindowFraction)));
    std::vector<double> mean(route_count, 0.0);
    for (int i = w0; i < n; ++i)
        for (int r = 0; r < route_count; ++r) mean[r] += trace.rows[i][1 + r];
    for (double& m : mean) m /= (n - w0);

    int last_violation = -1;
    for (int i = n - 1; i >= 0; --i) {
        bool inside = true;
        for (int r = 0; r < route_count; ++r) {
            const double band = kConvergenceBand * std::max(std::abs(mean[r]), 1e-12);
            if (std::abs(trace.rows[i][1 + r] - mean[r]) > band) {
                inside = false;
                break;
            }
        }
        if (!inside) {
            last_violation = i;
            break;
        }
    }
    if (last_violation == n - 1) return -1.0;
    return trace.rows[last_violation + 1][0];
}

void finish_summary(const NetworkModel& model, const Trace& trace, RunSummary* summary) {
    if (trace.rows.empty()) return;
    const int n = static_cast<int>(trace.rows.size());
    const int R = model.route_count();
    const int S = model.source_count();
    const int J = model.link_count();
    const auto& last = trace.rows.back();
    summary->final_x.assign(last.begin() + 1, last.begin() + 1 + R);
    summary->final_y.assign(last.begin() + 1 + R, last.begin() + 1 + R + S);
    summary->final_z.assign(last.begin() + 1 + R + S, last.begin() + 1 + R + S + J);
    summary->convergence_time = convergence_time(trace, R);

    const int w0 = std::max(0, n - std::max(2, static_cast<int>(n * kOscillationWindow)));
    summary->peak_to_peak_z.assign(J, 0.0);
    for (int j = 0; j < J; ++j) {
        double lo = trace.rows[w0][1 + R + S + j], hi = lo;
        for (int i = w0; i < n; ++i) {
            lo = std::min(lo, trace.rows[i][1 + R + S + j]);
            hi = std::max(hi, trace.rows[i][1 + R + S + j]);
        }
        summary->peak_to_peak_z[j] = hi - lo;
        if (hi - lo > kOscillationRelSwing * model.link(j).capacity)
            summary->oscillating = true;
    }
}

}  // namespace

std::string Trace::to_csv() const {
    std::string out;
    for (size_t i = 0; i < columns.size(); ++i) {
        if (i) out += ',';
        out += columns[i];
    }
    out += '\n';
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            append_formatted(out, row[i]);
        }
        out += '\n';
    }
    return out;
}

int Trace::column(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    return -1;
}

DelayGains resolve_gains(const Scenario& scenario) {
    const NetworkModel& m = *scenario.model;
    if (scenario.gains.scalable) {
        const PrimalSolution sol =
            solve_generalized_primal(m, scenario.params, kOracleTol);
        return scalable_gains(m, scenario.params, sol.x, scenario.gains.kappa);
    }
    return DelayGains::uniform(m, scenario.gains.kappa_link, scenario.gains.kappa_source,
                               scenario.gains.rho_source);
}

PriceState initial_price_state(const Scenario& scenario) {
    const NetworkModel& m = *scenario.model;
    if (scenario.sim.init == SimConfig::Init::equilibrium) {
        const PrimalSolution sol =
            solve_generalized_primal(m, scenario.params, kOracleTol);
        PriceState st;
        st.mu = sol.mu;
        st.nu = sol.nu;
        for (double& v : st.mu) v *= scenario.sim.init_scale;
        for (double& v : st.nu) v *= scenario.sim.init_scale;
        if (scenario.params.gamma_one()) st.nu.assign(m.source_count(), 0.0);
        return st;
    }
    PriceState st = default_initial_state(m, scenario.params, scenario.sim.mu0);
    if (scenario.sim.nu0 && !scenario.params.gamma_one())
        st.nu.assign(m.source_count(), *scenario.sim.nu0);
    return st;
}

namespace {

RunResult run_undelayed(const Scenario& scenario) {
    const NetworkModel& m = *scenario.model;
    const AlgorithmParams& params = scenario.params;
    const DelayGains dg = resolve_gains(scenario);
    GainConstants gains{dg.kappa_link, dg.kappa_source};

    RunResult out;
    out.trace.columns = trace_columns(m, true);
    PriceState state = initial_price_state(scenario);
    const long steps = std::lround(scenario.sim.duration / scenario.sim.dt);
    double prev_w = 0.0;
    bool have_prev_w = false;

    for (long k = 0; k <= steps; ++k) {
        RateVector rv;
        double w;
        try {
            rv = rates_from_prices(m, params, state.mu, state.nu);
            w = dual_objective(m, params, state.mu, state.nu);
        } catch (const PriceDomainViolation&) {
            out.summary.nonfinite = true;
            out.summary.nonfinite_t = state.t;
            break;
        }
        std::vector<double> row{state.t};
        row.insert(row.end(), rv.x.begin(), rv.x.end());
        row.insert(row.end(), rv.y.begin(), rv.y.end());
        row.insert(row.end(), rv.z.begin(), rv.z.end());
        row.insert(row.end(), state.mu.begin(), state.mu.end());
        row.insert(row.end(), state.nu.begin(), state.nu.end());
        row.insert(row.end(), rv.ybar.begin(), rv.ybar.end());
        row.push_back(w);
        out.trace.rows.push_back(std::move(row));

        if (have_prev_w && w > prev_w + 1e-9 * (1.0 + std::abs(prev_w)))
            ++out.summary.lyapunov_violations;
        prev_w = w;
        have_prev_w = true;
        out.summary.final_w = w;

        if (k == steps) break;
        try {
            state = step_undelayed(m, params, gains, state, scenario.sim.dt,
                                   &out.summary.clamp_events);
        } catch (const NonFiniteState& e) {
            out.summary.nonfinite = true;
            out.summary.nonfinite_t = e.t;
            break;
        } catch (const PriceDomainViolation&) {
            out.summary.nonfinite = true;
            out.summary.nonfinite_t = state.t;
            break;
        }
    }
    finish_summary(m, out.trace, &out.summary);
    return out;
}

RunResult run_delayed(const Scenario& scenario) {
    const NetworkModel& m = *scenario.model;
    const AlgorithmParams& params = scenario.params;
    const DelayGains gains = resolve_gains(scenario);

    DelayedState init;
    const PriceState prices = initial_price_state(scenario);
    init.mu = prices.mu;
    init.nu = prices.nu;

    RunResult out;
    out.trace.columns = trace_columns(m, false);
    try {
        DelayedTrajectory traj(m, params, gains, init, scenario.sim.dt);
        const long steps = std::lround(scenario.sim.duration / scenario.sim.dt);
        for (long k = 0; k <= steps; ++k) {
            const DelayedState& st = traj.state();
            const std::vector<double> x = traj.current_x();
            const std::vector<double> z = traj.current_z();
            std::vector<double> y(m.source_count(), 0.0);
            for (int s = 0; s < m.source_count(); ++s) {
                const Source& src = m.source(s);
                if (params.gamma_one()) {
                    for (int r : src.routes) y[s] += x[r];
                } else {
                    y[s] = st.ybar[s] *
                           std::pow((1.0 - params.gamma) *
                                        utility_prime(st.ybar[s], src.weight, src.alpha) /
                                        st.nu[s],
                                    params.p);
                }
            }
            std::vector<double> row{st.t};
            row.insert(row.end(), x.begin(), x.end());
            row.insert(row.end(), y.begin(), y.end());
            row.insert(row.end(), z.begin(), z.end());
            row.insert(row.end(), st.mu.begin(), st.mu.end());
            row.insert(row.end(), st.nu.begin(), st.nu.end());
            row.insert(row.end(), st.ybar.begin(), st.ybar.end());
            out.trace.rows.push_back(std::move(row));
            if (k == steps) break;
            traj.step();
        }
        out.summary.clamp_events = traj.counters().mu_floor + traj.counters().nu_clamp +
                                   traj.counters().denom_floor;
    } catch (const NonFiniteState& e) {
        out.summary.nonfinite = true;
        out.summary.nonfinite_t = e.t;
    }
    finish_summary(m, out.trace, &out.summary);
    return out;
}

}  // namespace

RunResult run(const Scenario& scenario) {
    return scenario.sim.delayed ? run_delayed(scenario) : run_undelayed(scenario);
}

GammaSweepReport sweep_gamma(const Scenario& scenario, const std::vector<double>& gammas) {
    const NetworkModel& m = *scenario.model;
    const PrimalSolution kelly = solve_kelly_primal(m, scenario.params, 1e-9);

    auto one_point = [&](double gamma) {
        GammaSweepRow row;
        row.gamma = gamma;
        row.kelly_optimum = kelly.objective;
        try {
            if (!(gamma > 0.0 && gamma <= 1.0))
                throw ModelError("sweep point gamma must lie in (0,1]");
            Scenario sc = scenario;
            sc.params.gamma = gamma;
            const RunResult res = run(sc);
            if (res.summary.nonfinite) {
                row.error = "non-finite state at t=" + std::to_string(res.summary.nonfinite_t);
                return row;
            }
            row.convergence_time = res.summary.convergence_time;
            double util = 0.0, rate = 0.0;
            for (int s = 0; s < m.source_count(); ++s) {
                const Source& src = m.source(s);
                double ysum = 0.0;
                for (int r : src.routes) ysum += res.summary.final_x[r];
                util += utility(ysum, src.weight, src.alpha);
                rate += ysum;
            }
            row.aggregate_utility = util;
            row.aggregate_rate = rate;
            row.gap = kelly.objective - util;
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        return row;
    };

    std::vector<std::future<GammaSweepRow>> futures;
    futures.reserve(gammas.size());
    for (double g : gammas)
        futures.push_back(std::async(std::launch::async, one_point, g));
    GammaSweepReport rep;
    for (auto& f : futures) rep.rows.push_back(f.get());
    return rep;
}

std::string GammaSweepReport::to_csv() const {
    std::string out = "gamma,aggregate_rate,aggregate_utility,kelly_optimum,gap,"
                      "convergence_time,ok,error\n";
    for (const auto& r : rows) {
        append_formatted(out, r.gamma);
        out += ',';
        append_formatted(out, r.aggregate_rate);
        out += ',';
        append_formatted(out, r.aggregate_utility);
        out += ',';
        append_formatted(out, r.kelly_optimum);
        out += ',';
        append_formatted(out, r.gap);
        out += ',';
        append_formatted(out, r.convergence_time);
        out += r.ok ? ",1," : ",0,";
        out += r.error;
        out += '\n';
    }
    return out;
}

GainSweepReport sweep_gains(const Scenario& scenario, GainAxis axis,
                            const std::vector<double>& values) {
    auto one_point = [&](double value) {
        GainSweepRow row;
        row.value = value;
        try {
            Scenario sc = scenario;
            sc.gains.scalable = false;
            if (axis == GainAxis::link) sc.gains.kappa_link = value;
            else sc.gains.kappa_source = value;
            const RunResult res = run(sc);
            if (res.summary.nonfinite) {
                row.error = "non-finite state at t=" + std::to_string(res.summary.nonfinite_t);
                return row;
            }
            row.convergence_time = res.summary.convergence_time;
            for (double y : res.summary.final_y) row.aggregate_rate += y;
            for (int j = 0; j < scenario.model->link_count(); ++j)
                row.max_swing = std::max(row.max_swing,
                                         res.summary.peak_to_peak_z[j] /
                                             scenario.model->link(j).capacity);
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        return row;
    };

    std::vector<std::future<GainSweepRow>> futures;
    futures.reserve(values.size());
    for (double v : values)
        futures.push_back(std::async(std::launch::async, one_point, v));
    GainSweepReport rep;
    rep.axis = axis;
    for (auto& f : futures) rep.rows.push_back(f.get());
    return rep;
}

std::string GainSweepReport::to_csv() const {
    std::string out = axis == GainAxis::link ? "kappa_link" : "kappa_source";
    out += ",convergence_time,aggregate_rate,max_swing,ok,error\n";
    for (const auto& r : rows) {
        append_formatted(out, r.value);
        out += ',';
        append_formatted(out, r.convergence_time);
        out += ',';
        append_formatted(out, r.aggregate_rate);
        out += ',';
        append_formatted(out, r.max_swing);
        out += r.ok ? ",1," : ",0,";
        out += r.error;
        out += '\n';
    }
    return out;
}

CheckReport check(const Scenario& scenario, const NyquistGrid& grid) {
    const NetworkModel& m = *scenario.model;
    const PrimalSolution sol = solve_generalized_primal(m, scenario.params, kOracleTol);

    CheckReport rep;
    rep.equilibrium.x = sol.x;
    rep.equilibrium.y = sol.y;
    rep.equilibrium.mu = sol.mu;
    rep.equilibrium.nu = sol.nu;
    rep.equilibrium.ybar.resize(m.source_count());
    for (int s = 0; s < m.source_count(); ++s)
        rep.equilibrium.ybar[s] = std::pow(sol.u[s], scenario.params.q());
    rep.equilibrium.lambda = aggregate_prices(m, sol.mu);

    const DelayGains gains = resolve_gains(scenario);
    rep.stability = check_stability_conditions(m, scenario.params, gains, rep.equilibrium);

    const LinearizedModel lin = linearize(m, scenario.params, gains, rep.equilibrium);
    rep.nyquist = nyquist_check(lin, grid);

    rep.full_rank = m.routing_matrix_rank();
    std::vector<int> saturated;
    for (int j = 0; j < m.link_count(); ++j) {
        double z = 0.0;
        for (int r : m.routes_through(j)) z += sol.x[r];
        if (z >= (1.0 - 1e-6) * m.link(j).capacity) saturated.push_back(j);
    }
    rep.saturated_links = static_cast<int>(saturated.size());
    rep.saturated_rank = m.submatrix_rank(saturated);

    rep.pass = rep.stability.pass && rep.nyquist.verdict == NyquistVerdict::pass;
    return rep;
}

std::string CheckReport::render(const Scenario& scenario) const {
    const NetworkModel& m = *scenario.model;
    std::ostringstream os;
    os << "check: " << scenario.name << "\n";
    os << "  equilibrium rates:";
    for (int r = 0; r < m.route_count(); ++r)
        os << " " << m.route(r).name << "=" << equilibrium.x[r];
    os << "\n  link margins:";
    for (int j = 0; j < m.link_count(); ++j)
        os << " " << m.link(j).name << "=" << stability.link_margin[j];
    os << "\n  source price margins:";
    for (int s = 0; s < m.source_count(); ++s)
        os << " " << m.source(s).name << "=" << stability.source_price_margin[s];
    os << "\n  source relax margins:";
    for (int s = 0; s < m.source_count(); ++s)
        os << " " << m.source(s).name << "=" << stability.source_relax_margin[s];
    os << "\n  almost-saturated links:";
    if (stability.almost_saturated.empty()) os << " none";
    for (int j : stability.almost_saturated) os << " " << m.link(j).name;
    os << "\n  margin verdict: " << (stability.pass ? "pass" : "FAIL") << "\n";
    os << "  nyquist min real-axis crossing: " << nyquist.min_real_crossing << "\n";
    os << "  nyquist K bound: " << nyquist.k_bound << " (pi/2 = " << (std::numbers::pi / 2)
       << ")\n";
    os << "  nyquist verdict: "
       << (nyquist.verdict == NyquistVerdict::pass
               ? "pass"
               : nyquist.verdict == NyquistVerdict::fail ? "FAIL" : "inconclusive")
       << "\n";
    os << "  routing matrix rank: " << full_rank << "/" << m.link_count()
       << ", saturated submatrix rank: " << saturated_rank << "/" << saturated_links << "\n";
    os << "  overall: " << (pass ? "pass" : "FAIL") << "\n";
    return os.str();
}

std::string nyquist_csv(const NyquistResult& result) {
    std::string out = "theta";
    if (!result.eigenvalues.empty()) {
        for (size_t k = 0; k < result.eigenvalues[0].size(); ++k) {
            out += ",re" + std::to_string(k) + ",im" + std::to_string(k);
        }
    }
    out += '\n';
    for (size_t i = 0; i < result.theta.size(); ++i) {
        append_formatted(out, result.theta[i]);
        for (const auto& e : result.eigenvalues[i]) {
            out += ',';
            append_formatted(out, e.real());
            out += ',';
            append_formatted(out, e.imag());
        }
        out += '\n';
    }
    return out;
}

}  // namespace mpdual
