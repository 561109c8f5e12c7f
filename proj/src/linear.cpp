// Frequency-domain analysis of the delayed system about an equilibrium.
//
// The perturbation vector stacks (ybar, nu, mu); the loop matrix G(i theta)
// couples them through the delay phases of each route. Local stability is
// read off the eigenvalue loci of G over a frequency sweep: crossings of
// the real axis must stay right of -1. The companion row-sum bound
// ||Q^{-1} R* R Q||_inf < pi/2 is the quantity the decentralized margin
// conditions actually control; with the Cauchy-Schwarz step
// lambda >= -(2/pi) ||R z||^2 it pins every real crossing above -1.

#include "mpdual/linear.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mpdual {

namespace {

using Complex = std::complex<double>;

Complex phase(double theta, double delay) {
    // e^{-i theta T}
    return std::polar(1.0, -theta * delay);
}

}  // namespace

LinearizedModel linearize(const NetworkModel& model, const AlgorithmParams& params,
                          const DelayGains& gains, const EquilibriumPoint& eq) {
    params.validate();
    if (!(params.gamma > 0.0 && params.gamma < 1.0))
        throw ModelError("linearize: gamma must lie strictly inside (0,1)");

    LinearizedModel lin;
    lin.gamma = params.gamma;
    lin.p = params.p;
    lin.q = params.q();
    lin.sources = model.source_count();

    std::vector<int> col(model.link_count(), -1);
    for (int j = 0; j < model.link_count(); ++j) {
        double load = 0.0;
        for (int r : model.routes_through(j)) load += eq.x[r];
        const double cap = model.link(j).capacity;
        if (eq.mu[j] < kMuZeroTolerance) {
            if (std::abs(load - cap) <= kSaturationRelTol * cap)
                throw AlmostSaturatedLink("linearize: link '" + model.link(j).name +
                                          "' has zero price at full load");
            continue;  // unpriced and slack: drop from the linearization
        }
        col[j] = lin.links++;
        lin.link_ids.push_back(j);
        lin.kappa_link.push_back(gains.kappa_link[j]);
        lin.mu.push_back(eq.mu[j]);
    }

    for (int s = 0; s < model.source_count(); ++s) {
        const Source& src = model.source(s);
        lin.a.push_back(compute_a_s(src, params, eq.ybar[s]));
        lin.sigma.push_back(gains.rho_source[s] * std::pow(eq.ybar[s], -1.0 / params.p) /
                            params.p);
        lin.rho.push_back(gains.rho_source[s]);
        lin.kappa_source.push_back(gains.kappa_source[s]);
        lin.nu.push_back(eq.nu[s]);
        lin.y.push_back(eq.y[s]);
        lin.ybar.push_back(eq.ybar[s]);
        lin.uprime.push_back(utility_prime(eq.ybar[s], src.weight, src.alpha));
    }

    for (int r = 0; r < model.route_count(); ++r) {
        const Route& route = model.route(r);
        if (!(route.round_trip > 0.0))
            throw ModelError("linearize: route '" + route.name + "' has zero round trip");
        LinearizedModel::RouteInfo info;
        info.source = route.source;
        info.x = eq.x[r];
        info.lambda = eq.lambda[r];
        info.rtt = route.round_trip;
        for (const RouteHop& h : route.hops)
            if (col[h.link] >= 0) info.hops.push_back({col[h.link], h.fwd_delay, h.back_delay});
        lin.routes.push_back(std::move(info));
    }
    return lin;
}

Eigen::MatrixXcd return_ratio(const LinearizedModel& lin, double theta) {
    if (theta == 0.0) throw ModelError("return_ratio: theta must be nonzero");
    const int S = lin.sources;
    const int n = lin.dim();
    const Complex w(0.0, theta);  // i theta
    Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(n, n);
    const double gamma = lin.gamma;
    const double q = lin.q;

    for (int s = 0; s < S; ++s) {
        const Complex relax = 1.0 / (w + lin.sigma[s]);
        // ybar row: diagonal and nu-column constants.
        g(s, s) += lin.rho[s] * lin.a[s] * relax * (1.0 - gamma) * std::pow(lin.y[s], 1.0 / q);
        g(s, S + s) +=
            lin.rho[s] * relax * (1.0 - gamma) * std::pow(lin.y[s], 1.0 / q) / lin.nu[s];
        // nu row: instantaneous y terms.
        g(S + s, s) += lin.kappa_source[s] * lin.nu[s] * lin.a[s] * lin.y[s] / w;
        g(S + s, S + s) += lin.kappa_source[s] * lin.y[s] / w;
    }

    for (const auto& route : lin.routes) {
        const int s = route.source;
        const Complex relax = 1.0 / (w + lin.sigma[s]);
        const double xr = route.x;
        const double gap = route.lambda - lin.nu[s];
        const double xq = std::pow(xr, 1.0 / q);
        const Complex e_rtt = phase(theta, route.rtt);

        g(s, s) += lin.rho[s] * lin.a[s] * relax * gamma * xq * e_rtt;
        g(s, S + s) -= lin.rho[s] * relax * gamma * xq / gap * e_rtt;
        g(S + s, s) -= lin.kappa_source[s] * lin.nu[s] * lin.a[s] / w * xr * e_rtt;
        g(S + s, S + s) += lin.kappa_source[s] * lin.nu[s] / w * xr / gap * e_rtt;

        for (const auto& hop : route.hops) {
            const int jc = 2 * S + hop.col;
            const double kmu = lin.kappa_link[hop.col] * lin.mu[hop.col];
            // Columns of the mu block: perturbations of mu_j reach the source
            // after t_back and come back into rates after the round trip.
            g(s, jc) += lin.rho[s] * relax * gamma * xq / gap *
                        phase(theta, route.rtt + hop.t_back);
            g(S + s, jc) -= lin.kappa_source[s] * lin.nu[s] / w * xr / gap *
                            phase(theta, route.rtt + hop.t_back);
            // Rows of the mu block: rate perturbations reach link j after t_fwd.
            g(jc, s) += kmu * lin.a[s] / w * xr * phase(theta, hop.t_fwd);
            g(jc, S + s) -= kmu / w * xr / gap * phase(theta, hop.t_fwd);
            for (const auto& hop2 : route.hops) {
                const int jc2 = 2 * S + hop2.col;
                g(jc, jc2) +=
                    kmu / w * xr / gap * phase(theta, hop.t_fwd + hop2.t_back);
            }
        }
    }
    return g;
}

Eigen::MatrixXcd return_ratio_decomposed(const LinearizedModel& lin, double theta) {
    if (theta == 0.0) throw ModelError("return_ratio_decomposed: theta must be nonzero");
    const int S = lin.sources;
    const int n = lin.dim();
    const int nr = static_cast<int>(lin.routes.size());
    const Complex w(0.0, theta);
    const double gamma = lin.gamma;
    const double q = lin.q;
    const double p = lin.p;

    Eigen::MatrixXcd r_pos = Eigen::MatrixXcd::Zero(nr, n);
    Eigen::MatrixXcd r_neg = Eigen::MatrixXcd::Zero(nr, n);
    for (int r = 0; r < nr; ++r) {
        const auto& route = lin.routes[r];
        const int s = route.source;
        const double gap = route.lambda - lin.nu[s];
        r_pos(r, s) = r_neg(r, s) =
            std::sqrt(gamma * std::pow(route.x, 1.0 / q) * route.rtt * lin.rho[s] * lin.a[s]);
        r_pos(r, S + s) = r_neg(r, S + s) =
            -std::sqrt(route.x * route.rtt / gap * lin.kappa_source[s] * lin.nu[s]);
        for (const auto& hop : route.hops) {
            const double mag = std::sqrt(route.x * route.rtt / gap *
                                         lin.kappa_link[hop.col] * lin.mu[hop.col]);
            r_pos(r, 2 * S + hop.col) = mag * phase(theta, hop.t_back);
            r_neg(r, 2 * S + hop.col) = mag * phase(-theta, hop.t_back);
        }
    }

    Eigen::VectorXcd x_diag(nr);
    for (int r = 0; r < nr; ++r)
        x_diag(r) = phase(theta, lin.routes[r].rtt) / (w * lin.routes[r].rtt);

    Eigen::VectorXcd y_diag = Eigen::VectorXcd::Ones(n);
    Eigen::VectorXd p_diag = Eigen::VectorXd::Ones(n);
    for (int s = 0; s < S; ++s) y_diag(s) = w / (w + lin.sigma[s]);
    for (int s = 0; s < S; ++s) {
        p_diag(s) = std::sqrt(lin.rho[s] / (lin.a[s] * std::pow(lin.ybar[s], 1.0 / p) *
                                            lin.uprime[s]));
        p_diag(S + s) = std::sqrt(lin.kappa_source[s] * lin.nu[s]);
    }
    for (int j = 0; j < lin.links; ++j)
        p_diag(2 * S + j) = std::sqrt(lin.kappa_link[j] * lin.mu[j]);

    Eigen::MatrixXcd gbar = Eigen::MatrixXcd::Zero(n, n);
    for (int s = 0; s < S; ++s) {
        const Complex relax = 1.0 / (w + lin.sigma[s]);
        const double yq = std::pow(lin.y[s], 1.0 / q);
        gbar(s, s) = lin.rho[s] * lin.a[s] * relax * (1.0 - gamma) * yq;
        gbar(s, S + s) = lin.rho[s] * relax * (1.0 - gamma) * yq / lin.nu[s];
        gbar(S + s, s) = lin.kappa_source[s] * lin.nu[s] * lin.a[s] * lin.y[s] / w;
        gbar(S + s, S + s) = lin.kappa_source[s] * lin.y[s] / w;
    }

    Eigen::MatrixXcd core = r_neg.transpose() * x_diag.asDiagonal() * r_pos;
    Eigen::VectorXcd left(n);
    for (int i = 0; i < n; ++i) left(i) = p_diag(i) * y_diag(i);
    Eigen::MatrixXcd g = left.asDiagonal() * core;
    g = g * p_diag.cwiseInverse().cast<Complex>().asDiagonal();
    g += gbar;
    return g;
}

namespace {

// R at one frequency (theta = 0 strips the phases, leaving magnitudes).
Eigen::MatrixXcd sensitivity_matrix(const LinearizedModel& lin, double theta) {
    const int S = lin.sources;
    const int n = lin.dim();
    const int nr = static_cast<int>(lin.routes.size());
    Eigen::MatrixXcd r_mat = Eigen::MatrixXcd::Zero(nr, n);
    for (int r = 0; r < nr; ++r) {
        const auto& route = lin.routes[r];
        const int s = route.source;
        const double gap = route.lambda - lin.nu[s];
        r_mat(r, s) = std::sqrt(lin.gamma * std::pow(route.x, 1.0 / lin.q) * route.rtt *
                                lin.rho[s] * lin.a[s]);
        r_mat(r, S + s) =
            -std::sqrt(route.x * route.rtt / gap * lin.kappa_source[s] * lin.nu[s]);
        for (const auto& hop : route.hops)
            r_mat(r, 2 * S + hop.col) = std::sqrt(route.x * route.rtt / gap *
                                                  lin.kappa_link[hop.col] * lin.mu[hop.col]) *
                                        phase(theta, hop.t_back);
    }
    return r_mat;
}

Eigen::VectorXd compensator_diagonal(const LinearizedModel& lin) {
    const int S = lin.sources;
    Eigen::VectorXd q_diag(lin.dim());
    for (int s = 0; s < S; ++s) {
        q_diag(s) = std::sqrt(std::pow(lin.ybar[s], 1.0 / lin.p) * lin.uprime[s] /
                              (lin.rho[s] * lin.a[s]));
        q_diag(S + s) = std::sqrt(lin.nu[s] / lin.kappa_source[s]);
    }
    for (int j = 0; j < lin.links; ++j)
        q_diag(2 * S + j) = std::sqrt(lin.mu[j] / lin.kappa_link[j]);
    return q_diag;
}

double weighted_row_sum_norm(const Eigen::MatrixXcd& m, const Eigen::VectorXd& q_diag) {
    double bound = 0.0;
    for (int i = 0; i < m.rows(); ++i) {
        double row = 0.0;
        for (int k = 0; k < m.cols(); ++k) row += std::abs(m(i, k)) * q_diag(k) / q_diag(i);
        bound = std::max(bound, row);
    }
    return bound;
}

}  // namespace

double k_bound(const LinearizedModel& lin) {
    // Entrywise magnitudes of R*R; the delay phases drop out.
    const Eigen::MatrixXcd r_mat = sensitivity_matrix(lin, 0.0);
    const Eigen::MatrixXcd m = r_mat.cwiseAbs().cast<Complex>().transpose() *
                               r_mat.cwiseAbs().cast<Complex>();
    return weighted_row_sum_norm(m, compensator_diagonal(lin));
}

double k_bound_at(const LinearizedModel& lin, double theta) {
    const Eigen::MatrixXcd r_mat = sensitivity_matrix(lin, theta);
    const Eigen::MatrixXcd m = r_mat.adjoint() * r_mat;
    return weighted_row_sum_norm(m, compensator_diagonal(lin));
}

std::vector<double> make_theta_grid(const NyquistGrid& grid) {
    if (!(grid.theta_min > 0) || !(grid.theta_max > grid.theta_min) ||
        grid.points_per_decade < 2)
        throw ModelError("make_theta_grid: bad grid parameters");
    const double lo = std::log10(grid.theta_min);
    const double hi = std::log10(grid.theta_max);
    const int n = static_cast<int>(std::ceil((hi - lo) * grid.points_per_decade)) + 1;
    std::vector<double> theta(n);
    for (int i = 0; i < n; ++i)
        theta[i] = std::pow(10.0, lo + (hi - lo) * i / (n - 1));
    return theta;
}

namespace {

// Greedy nearest-neighbour matching of the new eigenvalue set to the
// previous one, for locus continuity.
std::vector<Complex> match_order(const std::vector<Complex>& prev,
                                 std::vector<Complex> cur) {
    std::vector<Complex> out(prev.size());
    std::vector<bool> used(cur.size(), false);
    for (size_t i = 0; i < prev.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        size_t pick = 0;
        for (size_t k = 0; k < cur.size(); ++k) {
            if (used[k]) continue;
            const double d = std::abs(cur[k] - prev[i]);
            if (d < best) {
                best = d;
                pick = k;
            }
        }
        used[pick] = true;
        out[i] = cur[pick];
    }
    return out;
}

}  // namespace

NyquistResult nyquist_check(const LinearizedModel& lin, const NyquistGrid& grid) {
    NyquistResult res;
    res.theta = make_theta_grid(grid);
    res.k_bound = k_bound(lin);
    res.min_real_crossing = std::numeric_limits<double>::infinity();

    constexpr double kExactRealTol = 1e-12;
    constexpr double kTangencyTol = 1e-6;

    std::vector<Complex> prev;
    bool touched_minus_one = false;
    for (double theta : res.theta) {
        const Eigen::MatrixXcd g = return_ratio(lin, theta);
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(g, /*computeEigenvectors=*/false);
        std::vector<Complex> eigs(es.eigenvalues().data(),
                                  es.eigenvalues().data() + es.eigenvalues().size());
        if (!prev.empty()) {
            eigs = match_order(prev, std::move(eigs));
            for (size_t k = 0; k < eigs.size(); ++k) {
                const double jump = std::abs(eigs[k] - prev[k]) / (1.0 + std::abs(eigs[k]));
                res.max_locus_jump = std::max(res.max_locus_jump, jump);
                const double i0 = prev[k].imag(), i1 = eigs[k].imag();
                if ((i0 < 0 && i1 > 0) || (i0 > 0 && i1 < 0)) {
                    const double f = i0 / (i0 - i1);
                    const double re = prev[k].real() + f * (eigs[k].real() - prev[k].real());
                    res.min_real_crossing = std::min(res.min_real_crossing, re);
                    if (std::abs(re + 1.0) <= kTangencyTol) touched_minus_one = true;
                }
            }
        }
        for (const Complex& e : eigs) {
            if (std::abs(e.imag()) <= kExactRealTol * (1.0 + std::abs(e.real()))) {
                res.min_real_crossing = std::min(res.min_real_crossing, e.real());
                if (std::abs(e.real() + 1.0) <= kTangencyTol) touched_minus_one = true;
            }
        }
        prev = std::move(eigs);
        res.eigenvalues.push_back(prev);
    }

    // Mirror in the negative branch: G(-i theta) is the entrywise conjugate,
    // so its eigenvalues are the conjugates and every real-axis crossing
    // coincides with one already found.
    {
        const size_t n_pos = res.theta.size();
        std::vector<double> theta_sym;
        std::vector<std::vector<Complex>> eig_sym;
        theta_sym.reserve(2 * n_pos);
        eig_sym.reserve(2 * n_pos);
        for (size_t i = n_pos; i-- > 0;) {
            theta_sym.push_back(-res.theta[i]);
            std::vector<Complex> conj_eigs = res.eigenvalues[i];
            for (Complex& e : conj_eigs) e = std::conj(e);
            eig_sym.push_back(std::move(conj_eigs));
        }
        theta_sym.insert(theta_sym.end(), res.theta.begin(), res.theta.end());
        eig_sym.insert(eig_sym.end(), res.eigenvalues.begin(), res.eigenvalues.end());
        res.theta = std::move(theta_sym);
        res.eigenvalues = std::move(eig_sym);
    }

    if (touched_minus_one)
        res.verdict = NyquistVerdict::inconclusive;
    else if (res.min_real_crossing <= -1.0)
        res.verdict = NyquistVerdict::fail;
    else
        res.verdict = NyquistVerdict::pass;
    return res;
}

double delay_locus_min_crossing(double phi_min, double phi_max, int points_per_decade) {
    NyquistGrid g;
    g.theta_min = phi_min;
    g.theta_max = phi_max;
    g.points_per_decade = points_per_decade;
    const std::vector<double> phis = make_theta_grid(g);
    double min_cross = std::numeric_limits<double>::infinity();
    auto re_of = [](double phi) { return -std::sin(phi) / phi; };
    auto im_of = [](double phi) { return -std::cos(phi) / phi; };
    for (size_t i = 1; i < phis.size(); ++i) {
        const double i0 = im_of(phis[i - 1]), i1 = im_of(phis[i]);
        if ((i0 < 0 && i1 > 0) || (i0 > 0 && i1 < 0)) {
            const double f = i0 / (i0 - i1);
            const double re = re_of(phis[i - 1]) + f * (re_of(phis[i]) - re_of(phis[i - 1]));
            min_cross = std::min(min_cross, re);
        } else if (i1 == 0.0) {
            min_cross = std::min(min_cross, re_of(phis[i]));
        }
    }
    return min_cross;
}

}  // namespace mpdual
