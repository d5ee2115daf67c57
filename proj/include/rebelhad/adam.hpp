#pragma once

#include <vector>

#include "rebelhad/params.hpp"

namespace rebelhad {

struct AdamState {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m;  // first moments, one per ParamTree entry
  std::vector<Tensor> v;  // second moments

  AdamState() = default;
  AdamState(const ParamTree& params, double lr, double beta1, double beta2, double eps = 1e-8);
};

// Bias-corrected Adam update on every non-frozen entry, then zeroes all
// gradients. Frozen entries and their moments are left untouched.
void adam_step(ParamTree& params, AdamState& state);

}  // namespace rebelhad
