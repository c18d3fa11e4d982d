#ifndef SAG_GRADCHECK_HPP
#define SAG_GRADCHECK_HPP

#include <functional>
#include <span>
#include <string>

#include "sag/tape.hpp"

namespace sag {

/// Outcome of a finite-difference gradient comparison.
struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;     ///< parameter holding the worst entry
    std::size_t worst_index = 0; ///< flat index of that entry
};

/**
 * Compare reverse-mode gradients against central finite differences.
 *
 * `build` records a scalar loss on the tape it is given; it is re-invoked
 * for every probe, so it must be a pure function of the parameter values.
 * The relative error for one entry is |a - n| / max(|a|, |n|, 1e-8), which
 * stays meaningful when both gradients are near zero.
 */
GradCheckResult grad_check(const std::function<Var(Tape&)>& build,
                           std::span<Parameter* const> params,
                           double eps = 1e-5);

}  // namespace sag

#endif  // SAG_GRADCHECK_HPP
