#include "mpdual/delay.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace mpdual {

namespace {

constexpr double kGridTolerance = 1e-9;  // seconds

int lag_steps(double delay, double dt, const std::string& what) {
    const double ratio = delay / dt;
    const int n = static_cast<int>(std::llround(ratio));
    if (n < 0 || std::abs(delay - n * dt) > kGridTolerance) {
        std::ostringstream os;
        os << what << ": delay " << delay << " s is not a multiple of dt " << dt << " s";
        throw DelayGridMismatch(os.str());
    }
    return n;
}

}  // namespace

DelayGains DelayGains::uniform(const NetworkModel& m, double kj, double ks, double rho) {
    DelayGains g;
    g.kappa_link.assign(m.link_count(), kj);
    g.kappa_source.assign(m.source_count(), ks);
    g.rho_source.assign(m.source_count(), rho);
    return g;
}

DelaySchedule::DelaySchedule(const NetworkModel& model, double dt) : dt_(dt) {
    if (dt <= 0) throw ModelError("DelaySchedule: dt must be > 0");
    rtt_lag_.resize(model.route_count());
    fwd_lag_.resize(model.route_count());
    back_lag_.resize(model.route_count());
    for (int r = 0; r < model.route_count(); ++r) {
        const Route& route = model.route(r);
        rtt_lag_[r] = lag_steps(route.round_trip, dt, "route '" + route.name + "' rtt");
        max_lag_ = std::max(max_lag_, rtt_lag_[r]);
        for (const RouteHop& h : route.hops) {
            fwd_lag_[r].push_back(
                lag_steps(h.fwd_delay, dt, "route '" + route.name + "' forward delay"));
            back_lag_[r].push_back(
                lag_steps(h.back_delay, dt, "route '" + route.name + "' backward delay"));
            max_lag_ = std::max({max_lag_, fwd_lag_[r].back(), back_lag_[r].back()});
        }
    }
}

HistoryBuffer::HistoryBuffer(int route_count, int link_count, int depth)
    : routes_(route_count), links_(link_count), depth_(std::max(1, depth)),
      x_(static_cast<size_t>(depth_) * route_count, 0.0),
      mu_(static_cast<size_t>(depth_) * link_count, 0.0) {}

void HistoryBuffer::fill(const std::vector<double>& x0, const std::vector<double>& mu0) {
    for (int k = 0; k < depth_; ++k) {
        for (int r = 0; r < routes_; ++r) x_[static_cast<size_t>(k) * routes_ + r] = x0[r];
        for (int j = 0; j < links_; ++j) mu_[static_cast<size_t>(k) * links_ + j] = mu0[j];
    }
    head_x_ = head_mu_ = 0;
}

void HistoryBuffer::push_mu(const std::vector<double>& mu) {
    head_mu_ = (head_mu_ + 1) % depth_;
    for (int j = 0; j < links_; ++j) mu_[static_cast<size_t>(head_mu_) * links_ + j] = mu[j];
}

void HistoryBuffer::push_x(const std::vector<double>& x) {
    head_x_ = (head_x_ + 1) % depth_;
    for (int r = 0; r < routes_; ++r) x_[static_cast<size_t>(head_x_) * routes_ + r] = x[r];
}

double HistoryBuffer::x_at(int route, int lag) const {
    const int k = (head_x_ - std::min(lag, depth_ - 1) + depth_) % depth_;
    return x_[static_cast<size_t>(k) * routes_ + route];
}

double HistoryBuffer::mu_at(int link, int lag) const {
    const int k = (head_mu_ - std::min(lag, depth_ - 1) + depth_) % depth_;
    return mu_[static_cast<size_t>(k) * links_ + link];
}

std::vector<double> HistoryBuffer::latest_x() const {
    std::vector<double> out(routes_);
    for (int r = 0; r < routes_; ++r)
        out[r] = x_[static_cast<size_t>(head_x_) * routes_ + r];
    return out;
}

namespace {

bool finite_all(const std::vector<double>& v) {
    for (double a : v)
        if (!std::isfinite(a)) return false;
    return true;
}

// x_r(t) and y_s(t) at the instant of the given state, with route prices
// assembled from delayed link prices. The denominator lambda_r - nu_s is
// floored at kPriceEpsilon so an excursion outside the price domain shows
// up as a rate burst instead of an exception; bursts are what the
// instability experiments measure.
void instantaneous_rates(const NetworkModel& model, const AlgorithmParams& params,
                         const DelayedState& state, const HistoryBuffer& history,
                         const DelaySchedule& schedule, std::vector<double>* x,
                         std::vector<double>* y, DelayClampCounters* counters) {
    const double p = params.p;
    const double gamma = params.gamma;
    x->assign(model.route_count(), 0.0);
    y->assign(model.source_count(), 0.0);
    std::vector<double> lambda(model.route_count(), 0.0);
    for (int r = 0; r < model.route_count(); ++r) {
        const Route& route = model.route(r);
        for (size_t h = 0; h < route.hops.size(); ++h)
            lambda[r] += history.mu_at(route.hops[h].link, schedule.backward_lag(r, static_cast<int>(h)));
    }
    for (int s = 0; s < model.source_count(); ++s) {
        const Source& src = model.source(s);
        const double ybar = state.ybar[s];
        const double uprime = utility_prime(ybar, src.weight, src.alpha);
        const double nu_s = params.gamma_one() ? 0.0 : state.nu[s];
        for (int r : src.routes) {
            double denom = lambda[r] - nu_s;
            if (denom < kPriceEpsilon) {
                denom = kPriceEpsilon;
                if (counters) ++counters->denom_floor;
            }
            (*x)[r] = ybar * std::pow(gamma * uprime / denom, p);
        }
        if (params.gamma_one()) {
            for (int r : src.routes) (*y)[s] += (*x)[r];
        } else {
            (*y)[s] = ybar * std::pow((1.0 - gamma) * uprime / nu_s, p);
        }
    }
}

}  // namespace

DelayedState step_delayed(const NetworkModel& model, const AlgorithmParams& params,
                          const DelayGains& gains, const DelayedState& state,
                          HistoryBuffer& history, const DelaySchedule& schedule,
                          DelayClampCounters* counters) {
    const double p = params.p;
    const double q = params.q();
    const double gamma = params.gamma;
    const double dt = schedule.dt();

    // y_s(t); x_r(t) is already the newest history sample.
    std::vector<double> y(model.source_count(), 0.0);
    for (int s = 0; s < model.source_count(); ++s) {
        const Source& src = model.source(s);
        if (params.gamma_one()) {
            for (int r : src.routes) y[s] += history.x_at(r, 0);
        } else {
            y[s] = state.ybar[s] *
                   std::pow((1.0 - gamma) * utility_prime(state.ybar[s], src.weight, src.alpha) /
                                state.nu[s],
                            p);
        }
    }

    DelayedState next = state;
    next.t = state.t + dt;

    // Link prices driven by the delayed loads seen at each resource.
    for (int j = 0; j < model.link_count(); ++j) {
        double load = 0.0;
        for (int r : model.routes_through(j)) {
            const Route& route = model.route(r);
            int hop = -1;
            for (size_t h = 0; h < route.hops.size(); ++h)
                if (route.hops[h].link == j) { hop = static_cast<int>(h); break; }
            load += history.x_at(r, schedule.forward_lag(r, hop));
        }
        const double excess = load - model.link(j).capacity;
        const double rate = state.mu[j] > 0.0 ? excess : std::max(0.0, excess);
        next.mu[j] = state.mu[j] + dt * (gains.kappa_link[j] * state.mu[j] / p) * rate;
        if (next.mu[j] < kPriceEpsilon) {
            next.mu[j] = kPriceEpsilon;
            if (counters && state.mu[j] > kPriceEpsilon) ++counters->mu_floor;
        }
    }

    for (int s = 0; s < model.source_count(); ++s) {
        const Source& src = model.source(s);
        double delayed_sum = 0.0, delayed_pow = 0.0;
        for (int r : src.routes) {
            const double xr = history.x_at(r, schedule.round_trip_lag(r));
            delayed_sum += xr;
            delayed_pow += std::pow(xr, 1.0 / q);
        }
        if (!params.gamma_one()) {
            next.nu[s] = state.nu[s] + dt * (gains.kappa_source[s] * state.nu[s] / p) *
                                           (y[s] - delayed_sum);
        }
        next.ybar[s] =
            state.ybar[s] + dt * (q * gains.rho_source[s] / p) *
                                (gamma * delayed_pow + (1.0 - gamma) * std::pow(y[s], 1.0 / q) -
                                 std::pow(state.ybar[s], 1.0 / q));
    }

    if (!finite_all(next.mu) || !finite_all(next.nu) || !finite_all(next.ybar))
        throw NonFiniteState("delayed step produced a non-finite state", next.t);
    for (double v : next.ybar)
        if (v <= 0.0)
            throw NonFiniteState("delayed step drove ybar out of the positive domain",
                                 next.t);

    // Advance the price history, then bound nu by the route prices the
    // sources will actually see at the new time.
    history.push_mu(next.mu);
    if (!params.gamma_one()) {
        for (int s = 0; s < model.source_count(); ++s) {
            const Source& src = model.source(s);
            double lmin = std::numeric_limits<double>::infinity();
            for (int r : src.routes) {
                const Route& route = model.route(r);
                double lam = 0.0;
                for (size_t h = 0; h < route.hops.size(); ++h)
                    lam += history.mu_at(route.hops[h].link,
                                         schedule.backward_lag(r, static_cast<int>(h)));
                lmin = std::min(lmin, lam);
            }
            const double lo = std::max(kPriceEpsilon, kPriceGuardFraction * lmin);
            const double hi = std::max(lo, (1.0 - kPriceGuardFraction) * lmin);
            const double clamped = std::clamp(next.nu[s], lo, hi);
            if (clamped != next.nu[s]) {
                next.nu[s] = clamped;
                if (counters) ++counters->nu_clamp;
            }
        }
    }

    std::vector<double> x_new, y_new;
    instantaneous_rates(model, params, next, history, schedule, &x_new, &y_new, counters);
    if (!finite_all(x_new))
        throw NonFiniteState("delayed step produced non-finite rates", next.t);
    history.push_x(x_new);
    return next;
}

DelayedTrajectory::DelayedTrajectory(const NetworkModel& model, const AlgorithmParams& params,
                                     const DelayGains& gains, DelayedState initial, double dt)
    : model_(model), params_(params), gains_(gains), schedule_(model, dt),
      history_(model.route_count(), model.link_count(), schedule_.max_lag() + 1),
      state_(std::move(initial)) {
    params_.validate();
    if (params_.gamma <= 0.0)
        throw ModelError("DelayedTrajectory: gamma = 0 has no dynamics");
    for (double g : gains_.kappa_link)
        if (!(g > 0)) throw ModelError("DelayedTrajectory: link gains must be > 0");
    for (double g : gains_.kappa_source)
        if (!(g > 0)) throw ModelError("DelayedTrajectory: source gains must be > 0");
    for (double g : gains_.rho_source)
        if (!(g > 0)) throw ModelError("DelayedTrajectory: relaxation gains must be > 0");
    if (state_.nu.empty()) state_.nu.assign(model.source_count(), 0.0);
    if (state_.ybar.empty()) {
        state_.ybar.resize(model.source_count());
        const std::vector<double> lambda = aggregate_prices(model, state_.mu);
        for (int s = 0; s < model.source_count(); ++s) {
            const Source& src = model.source(s);
            std::vector<double> lam_s;
            for (int r : src.routes) lam_s.push_back(lambda[r]);
            state_.ybar[s] = ybar_from_prices(
                lam_s, params.gamma_one() ? 0.0 : state_.nu[s], params_, src);
        }
    }
    // Constant pre-history at the initial point.
    history_.fill(std::vector<double>(model.route_count(), 0.0), state_.mu);
    std::vector<double> x0, y0;
    instantaneous_rates(model_, params_, state_, history_, schedule_, &x0, &y0, nullptr);
    history_.fill(x0, state_.mu);
}

void DelayedTrajectory::step() {
    state_ = step_delayed(model_, params_, gains_, state_, history_, schedule_, &counters_);
}

std::vector<double> DelayedTrajectory::current_z() const {
    std::vector<double> z(model_.link_count(), 0.0);
    const std::vector<double> x = history_.latest_x();
    for (int j = 0; j < model_.link_count(); ++j)
        for (int r : model_.routes_through(j)) z[j] += x[r];
    return z;
}

std::vector<double> DelayedTrajectory::current_y() const {
    std::vector<double> y(model_.source_count(), 0.0);
    const std::vector<double> x = history_.latest_x();
    for (int s = 0; s < model_.source_count(); ++s)
        for (int r : model_.source(s).routes) y[s] += x[r];
    return y;
}

double compute_a_s(const Source& source, const AlgorithmParams& params, double ybar) {
    if (ybar <= 0) throw ModelError("compute_a_s: ybar must be > 0");
    const double a = (source.alpha * params.p - 1.0) / (params.p * ybar);
    if (a <= 0)
        throw AssumptionHViolated("compute_a_s: alpha*p <= 1 for source '" + source.name +
                                  "'");
    return a;
}

double compute_a_s_generic(double weight, double alpha, const AlgorithmParams& params,
                           double ybar) {
    if (ybar <= 0) throw ModelError("compute_a_s_generic: ybar must be > 0");
    const double a = -utility_second(ybar, weight, alpha) / utility_prime(ybar, weight, alpha) -
                     1.0 / (params.p * ybar);
    if (a <= 0) throw AssumptionHViolated("compute_a_s_generic: coefficient not positive");
    return a;
}

StabilityReport check_stability_conditions(const NetworkModel& model,
                                           const AlgorithmParams& params,
                                           const DelayGains& gains,
                                           const EquilibriumPoint& eq) {
    const double q = params.q();
    const double quarter_pi = std::numbers::pi / 4.0;
    StabilityReport rep;
    rep.link_margin.assign(model.link_count(), 0.0);
    rep.source_price_margin.assign(model.source_count(), 0.0);
    rep.source_relax_margin.assign(model.source_count(), 0.0);

    for (int j = 0; j < model.link_count(); ++j) {
        double acc = 0.0, load = 0.0;
        for (int r : model.routes_through(j)) {
            acc += eq.x[r] * model.route(r).round_trip;
            load += eq.x[r];
        }
        rep.link_margin[j] = gains.kappa_link[j] * acc / (params.gamma * quarter_pi);
        if (eq.mu[j] < kMuZeroTolerance &&
            std::abs(load - model.link(j).capacity) <=
                kSaturationRelTol * model.link(j).capacity)
            rep.almost_saturated.push_back(j);
    }
    for (int s = 0; s < model.source_count(); ++s) {
        const Source& src = model.source(s);
        double acc = 0.0, acc_pow = 0.0;
        for (int r : src.routes) {
            acc += eq.x[r] * model.route(r).round_trip;
            acc_pow += std::pow(eq.x[r], 1.0 / q) * model.route(r).round_trip;
        }
        rep.source_price_margin[s] =
            gains.kappa_source[s] * acc / (params.gamma * quarter_pi);
        const double a = compute_a_s(src, params, eq.ybar[s]);
        rep.source_relax_margin[s] = gains.rho_source[s] * a * acc_pow / quarter_pi;
    }
    rep.pass = rep.almost_saturated.empty();
    for (double m : rep.link_margin) rep.pass = rep.pass && m < 1.0;
    for (double m : rep.source_price_margin) rep.pass = rep.pass && m < 1.0;
    for (double m : rep.source_relax_margin) rep.pass = rep.pass && m < 1.0;
    return rep;
}

DelayGains scalable_gains(const NetworkModel& model, const AlgorithmParams& params,
                          const std::vector<double>& x_estimate, double kappa) {
    const double quarter_pi = std::numbers::pi / 4.0;
    if (!(kappa > 0.0 && kappa < quarter_pi))
        throw ModelError("scalable_gains: kappa must lie in (0, pi/4)");
    DelayGains g;
    g.kappa_link.assign(model.link_count(), 0.0);
    g.kappa_source.assign(model.source_count(), 0.0);
    g.rho_source.assign(model.source_count(), 0.0);

    for (int s = 0; s < model.source_count(); ++s) {
        const Source& src = model.source(s);
        double acc = 0.0, rate = 0.0;
        for (int r : src.routes) {
            acc += x_estimate[r] * model.route(r).round_trip;
            rate += x_estimate[r];
        }
        if (rate <= 0)
            throw ModelError("scalable_gains: zero traffic estimate for source '" + src.name +
                             "'");
        const double tbar = acc / rate;
        const double m = src.max_rate > 0 ? src.max_rate : model.default_max_rate(s);
        const double hcoeff = src.alpha * params.p - 1.0;
        if (hcoeff <= 0)
            throw AssumptionHViolated("scalable_gains: alpha*p <= 1 for source '" + src.name +
                                      "'");
        g.kappa_source[s] = params.gamma * kappa / (m * tbar);
        g.rho_source[s] = params.p * kappa / (hcoeff * tbar);
    }
    for (int j = 0; j < model.link_count(); ++j) {
        double acc = 0.0, load = 0.0;
        for (int r : model.routes_through(j)) {
            acc += x_estimate[r] * model.route(r).round_trip;
            load += x_estimate[r];
        }
        double tbar;
        if (load > 1e-12) {
            tbar = acc / load;
        } else {
            // Unloaded link: take the most conservative (largest) round trip.
            tbar = 0.0;
            for (int r : model.routes_through(j))
                tbar = std::max(tbar, model.route(r).round_trip);
            if (tbar == 0.0) tbar = model.max_round_trip();
        }
        g.kappa_link[j] = params.gamma * kappa / (model.link(j).capacity * tbar);
    }
    return g;
}

}  // namespace mpdual
