#include "omniclip/gradcheck.hpp"

#include <cmath>

namespace omniclip {

namespace {
double eval_scalar(const std::function<Var()>& loss_fn) {
    Var loss = loss_fn();
    if (loss.size() != 1) throw ShapeError("grad_check: loss must be scalar");
    double v = loss.value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
    return v;
}
} // namespace

GradCheckReport grad_check(const std::function<Var()>& loss_fn, const ParamList& params, double eps) {
    zero_grads(params);
    Var loss = loss_fn();
    if (loss.size() != 1) throw ShapeError("grad_check: loss must be scalar");
    if (!std::isfinite(loss.value()[0])) throw NumericError("grad_check: non-finite loss");
    backward(loss);

    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p.var.grad_or_zero());

    GradCheckReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        if (!params[pi].var.trainable()) continue;
        Var v = params[pi].var;
        Tensor& t = v.value();
        for (std::size_t i = 0; i < t.size(); ++i) {
            double saved = t[i];
            t[i] = saved + eps;
            double f1 = eval_scalar(loss_fn);
            t[i] = saved - eps;
            double f2 = eval_scalar(loss_fn);
            t[i] = saved;
            double num = (f1 - f2) / (2.0 * eps);
            double ana = analytic[pi][i];
            double denom = std::max({std::fabs(ana), std::fabs(num), 1e-8});
            double rel = std::fabs(ana - num) / denom;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = params[pi].name;
                rep.worst_index = i;
                rep.analytic = ana;
                rep.numeric = num;
            }
        }
    }
    return rep;
}

} // namespace omniclip
