#pragma once

#include <functional>

#include "carve/diff/tape.hpp"

namespace carve::diff {

// Builds a scalar loss from a differentiable input leaf.
using TapeFn = std::function<NodeId(Tape&, NodeId)>;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const TapeFn& f, const Tensor& point, double epsilon);

}  // namespace carve::diff
