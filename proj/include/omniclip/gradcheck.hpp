#pragma once

#include <functional>

#include "omniclip/params.hpp"

namespace omniclip {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Compares the reverse-mode gradient of every trainable scalar in `params`
// against central finite differences of `loss_fn`. The loss builder must be
// deterministic; it is re-invoked for each probe. Relative error uses
// denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const std::function<Var()>& loss_fn, const ParamList& params, double eps = 1e-5);

} // namespace omniclip
