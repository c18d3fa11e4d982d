#include "sag/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "sag/errors.hpp"

namespace sag {

namespace {

double eval_loss(const std::function<Var(Tape&)>& build, Tape& tape) {
    tape.reset();
    Var loss = build(tape);
    return tape.scalar_value(loss);
}

}  // namespace

GradCheckResult grad_check(const std::function<Var(Tape&)>& build,
                           std::span<Parameter* const> params,
                           double eps) {
    if (eps <= 0.0) throw ConfigError("grad_check: eps must be positive");

    for (Parameter* p : params) p->zero_grad();

    Tape tape;
    Var loss = build(tape);
    tape.backward(loss);

    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) {
        if (!p->grad.all_finite()) {
            throw NonFiniteValue("grad_check: non-finite gradient in '" +
                                 p->name + "'");
        }
        analytic.push_back(p->grad);
    }

    GradCheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + eps;
            const double plus = eval_loss(build, tape);
            p.value[i] = saved - eps;
            const double minus = eval_loss(build, tape);
            p.value[i] = saved;

            const double numeric = (plus - minus) / (2.0 * eps);
            const double a = analytic[pi][i];
            // The floor keeps finite-difference noise (~1e-9 absolute at
            // eps 1e-5) from dominating entries whose true gradient is
            // legitimately tiny; deviations >= 1e-7 absolute still register.
            const double rel = std::abs(a - numeric) /
                std::max({std::abs(a), std::abs(numeric), 1e-3});
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = p.name;
                result.worst_index = i;
            }
        }
    }
    return result;
}

}  // namespace sag
