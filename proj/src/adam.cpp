#include "rebelhad/adam.hpp"

#include <cmath>

#include "rebelhad/error.hpp"

namespace rebelhad {

AdamState::AdamState(const ParamTree& params, double lr_, double beta1_, double beta2_, double eps_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& e : params.entries()) {
    m.push_back(Tensor::zeros_like(e.value));
    v.push_back(Tensor::zeros_like(e.value));
  }
}

void adam_step(ParamTree& params, AdamState& state) {
  if (state.m.size() != params.size()) throw SpecError("AdamState does not match the ParamTree");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    ParamEntry& e = params.entry(i);
    if (e.frozen) continue;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (size_t k = 0; k < e.value.size(); ++k) {
      const double g = e.grad[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      e.value[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
  params.zero_grad();
}

}  // namespace rebelhad
