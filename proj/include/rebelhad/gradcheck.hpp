#pragma once

#include <cstdint>
#include <functional>

#include "rebelhad/params.hpp"

namespace rebelhad {

/// Scalar objective over a ParamTree. When `with_grad` is true it must also
/// accumulate the analytic gradient into the tree's gradient buffers.
using Objective = std::function<double(ParamTree& params, bool with_grad)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  size_t coordinates = 0;
};

// Central differences (f(t+h) - f(t-h)) / 2h on a random subsample of at
// least `min_samples` non-frozen coordinates (all of them when fewer
// exist), compared against the analytic gradient. Relative error uses the
// denominator max(|analytic|, |numeric|, 1e-8). Throws NumericalError if
// f is non-finite at any evaluated point.
GradCheckResult finite_diff_check(const Objective& f, ParamTree& params, double h, uint64_t seed,
                                  size_t min_samples = 64);

}  // namespace rebelhad
