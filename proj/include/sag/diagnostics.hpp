#ifndef SAG_DIAGNOSTICS_HPP
#define SAG_DIAGNOSTICS_HPP

#include <string>
#include <vector>

#include "sag/gradcheck.hpp"

namespace sag {

/// One finite-difference pass over the reference episode.
struct GradCheckPass {
    std::string label;
    GradCheckResult result;
};

/// All passes plus the overall worst entry.
struct GradCheckReport {
    std::vector<GradCheckPass> passes;
    double max_rel_error = 0.0;

    bool within(double tolerance) const { return max_rel_error < tolerance; }
};

/**
 * Check every gradient path of the model on a fixed reference episode:
 * five segments around one reservoir, ten days, synthetic inputs, sparse
 * targets.  Three losses are checked so each parameter family is exercised —
 * the forecast-driven embedding, the data-driven embedding, and the
 * release-blind forecaster mode.  Analytic gradients must match central
 * finite differences entry by entry.
 */
GradCheckReport run_reference_gradcheck(double eps = 1e-5);

}  // namespace sag

#endif  // SAG_DIAGNOSTICS_HPP
