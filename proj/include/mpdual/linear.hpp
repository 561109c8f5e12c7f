#pragma once

#include <complex>
#include <vector>

#include <Eigen/Core>

#include "mpdual/delay.hpp"
#include "mpdual/dynamics.hpp"
#include "mpdual/model.hpp"

namespace mpdual {

// Coefficients of the delayed system linearized about an interior
// equilibrium. Links whose price is (numerically) zero are discarded; they
// must be strictly unsaturated, otherwise the linearization is invalid and
// AlmostSaturatedLink is thrown. Requires 0 < gamma < 1 and positive round
// trips.
struct LinearizedModel {
    int sources = 0;
    int links = 0;                 // kept (priced) links
    std::vector<int> link_ids;     // kept index -> model link id

    // Per source.
    std::vector<double> a;         // curvature coefficient
    std::vector<double> sigma;     // rho ybar^(-1/p) / p
    std::vector<double> rho, kappa_source, nu, y, ybar;
    std::vector<double> uprime;    // U'(ybar)

    // Per kept link.
    std::vector<double> kappa_link, mu;

    struct Hop {
        int col;        // kept link index
        double t_fwd;   // source -> link
        double t_back;  // link -> source
    };
    struct RouteInfo {
        int source;
        double x, lambda, rtt;
        std::vector<Hop> hops;
    };
    std::vector<RouteInfo> routes;

    double gamma = 0.5, p = 2.0, q = 2.0;

    int dim() const { return 2 * sources + links; }
};

LinearizedModel linearize(const NetworkModel& model, const AlgorithmParams& params,
                          const DelayGains& gains, const EquilibriumPoint& eq);

// Frequency-domain loop matrix G(i theta) of the perturbation variables
// (ybar block, nu block, mu block), dimension (2S + J) squared. theta must
// be nonzero.
Eigen::MatrixXcd return_ratio(const LinearizedModel& lin, double theta);

// Same matrix assembled from the diagonal-compensator factorization
// P Y R(-w)^T X R P^{-1} + Gbar; agrees with return_ratio at an exact
// equilibrium. Exposed for cross-validation.
Eigen::MatrixXcd return_ratio_decomposed(const LinearizedModel& lin, double theta);

// Row-sum bound on ||Q^{-1} R* R Q||_inf with delay phases stripped; the
// criterion value that must stay below pi/2 under the stability margins.
double k_bound(const LinearizedModel& lin);

// Same row-sum norm with the actual delay phases at one frequency; never
// exceeds k_bound().
double k_bound_at(const LinearizedModel& lin, double theta);

struct NyquistGrid {
    double theta_min = 1e-4;      // rad/s
    double theta_max = 1e4;       // rad/s
    int points_per_decade = 2000;
};

std::vector<double> make_theta_grid(const NyquistGrid& grid);

enum class NyquistVerdict { pass, fail, inconclusive };

// Eigenvalue loci of G(i theta) over a sign-symmetric grid. Eigensolves run
// on the positive branch; the negative branch is its exact conjugate mirror
// (G(-i theta) is the entrywise conjugate). Real-axis crossings are located
// by sign changes of Im along matched loci; the verdict is pass when every
// crossing lies right of -1, inconclusive when one touches -1 within
// tolerance.
struct NyquistResult {
    std::vector<double> theta;  // ascending, [-max..-min, min..max]
    std::vector<std::vector<std::complex<double>>> eigenvalues;  // per theta
    double min_real_crossing = 0.0;  // +inf when the loci never cross
    double k_bound = 0.0;
    double max_locus_jump = 0.0;     // continuity guard, relative
    NyquistVerdict verdict = NyquistVerdict::pass;
};

NyquistResult nyquist_check(const LinearizedModel& lin, const NyquistGrid& grid = {});

// Smallest real part among real-axis crossings of the scalar delay locus
// e^{-i phi}/(i phi) over a dense log grid of phi in [phi_min, phi_max].
// The locus meets the real axis only at phi = pi/2 + k pi, where its value
// is -sin(phi)/phi; the leftmost crossing is -2/pi.
double delay_locus_min_crossing(double phi_min, double phi_max, int points_per_decade);

}  // namespace mpdual
