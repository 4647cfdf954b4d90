#pragma once

#include <stdexcept>
#include <string>

namespace smi {

// Base class for all library errors.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Requested log p(Y|phi) but no evaluator is registered (e.g. improper
// prior with no closed form).
struct marginal_unavailable : error {
    using error::error;
};

// Adaptive quadrature failed to reach the requested tolerance.
struct quadrature_error : error {
    double achieved_tol;
    quadrature_error(const std::string& msg, double achieved)
        : error(msg + " (achieved tolerance " + std::to_string(achieved) + ")"),
          achieved_tol(achieved) {}
};

// Sampler diagnostics: zero acceptance, too-short chains, bad config.
struct mcmc_error : error {
    using error::error;
};

// Malformed input data (CSV rows, degenerate designs, empty grids).
struct data_error : error {
    using error::error;
};

// Selection-stage failures (non-overlapping utility ranges, < 2 folds).
struct selection_error : error {
    using error::error;
};

}  // namespace smi
