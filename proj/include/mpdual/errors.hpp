#pragma once

#include <stdexcept>
#include <string>

namespace mpdual {

// Structural problem in a network description (dangling ids, bad delays, ...).
struct ModelError : std::runtime_error {
    explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

// Prices left the region where the rate laws are defined
// (lambda_r - nu_s <= eps or nu_s <= eps).
struct PriceDomainViolation : std::runtime_error {
    explicit PriceDomainViolation(const std::string& what) : std::runtime_error(what) {}
};

// A state component became NaN/inf (or ybar left the positive domain)
// after an integration step. Carries the simulated time of the step.
struct NonFiniteState : std::runtime_error {
    NonFiniteState(const std::string& what, double when)
        : std::runtime_error(what), t(when) {}
    double t;
};

// A propagation delay is not an integer multiple of the step size.
struct DelayGridMismatch : std::runtime_error {
    explicit DelayGridMismatch(const std::string& what) : std::runtime_error(what) {}
};

// alpha*p <= 1 for some source, or a derived curvature coefficient was
// not positive.
struct AssumptionHViolated : std::runtime_error {
    explicit AssumptionHViolated(const std::string& what) : std::runtime_error(what) {}
};

// A link with zero price carries load exactly equal to its capacity;
// the linearization is not valid there.
struct AlmostSaturatedLink : std::runtime_error {
    explicit AlmostSaturatedLink(const std::string& what) : std::runtime_error(what) {}
};

// Iterative solver hit its iteration cap. Carries the best residual seen.
struct NonConvergence : std::runtime_error {
    NonConvergence(const std::string& what, double residual)
        : std::runtime_error(what), best_residual(residual) {}
    double best_residual;
};

// Scenario file could not be parsed or validated.
struct ScenarioError : std::runtime_error {
    explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mpdual
