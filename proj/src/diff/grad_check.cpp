#include "carve/diff/grad_check.hpp"

#include <cmath>

namespace carve::diff {

namespace {

double eval_only(const TapeFn& f, const Tensor& point) {
    Tape tape;
    NodeId x = tape.constant(point);
    NodeId loss = f(tape, x);
    if (tape.value(loss).size() != 1) throw ValidationError("grad_check: function is not scalar-valued");
    return tape.value(loss).v[0];
}

}  // namespace

double grad_check(const TapeFn& f, const Tensor& point, double epsilon) {
    if (epsilon <= 0.0) throw ValidationError("grad_check: epsilon must be positive");

    Tape tape;
    NodeId x = tape.variable(point);
    NodeId loss = f(tape, x);
    if (tape.value(loss).size() != 1) throw ValidationError("grad_check: function is not scalar-valued");
    if (!std::isfinite(tape.value(loss).v[0])) throw ValidationError("grad_check: non-finite forward value");
    tape.backward(loss);
    Tensor analytic = tape.grad(x);
    if (analytic.v.empty()) analytic = Tensor::zeros(point.shape);  // constant function

    double worst = 0.0;
    Tensor probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        probe.v[i] = point.v[i] + epsilon;
        double hi = eval_only(f, probe);
        probe.v[i] = point.v[i] - epsilon;
        double lo = eval_only(f, probe);
        probe.v[i] = point.v[i];
        double fd = (hi - lo) / (2.0 * epsilon);
        double err = std::abs(analytic.v[i] - fd) / std::max(1.0, std::abs(analytic.v[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace carve::diff
