#include "rebelhad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "rebelhad/error.hpp"
#include "rebelhad/rng.hpp"

namespace rebelhad {

GradCheckResult finite_diff_check(const Objective& f, ParamTree& params, double h, uint64_t seed,
                                  size_t min_samples) {
  params.zero_grad();
  const double base = f(params, true);
  if (!std::isfinite(base)) throw NumericalError("gradcheck: objective is non-finite");

  std::vector<std::pair<size_t, size_t>> coords;
  for (size_t i = 0; i < params.size(); ++i) {
    if (params.entry(i).frozen) continue;
    for (size_t k = 0; k < params.entry(i).value.size(); ++k) coords.emplace_back(i, k);
  }
  if (coords.size() > min_samples) {
    SplitMix64 rng(seed);
    for (size_t j = 0; j < min_samples; ++j) {
      const size_t pick = j + static_cast<size_t>(rng.below(coords.size() - j));
      std::swap(coords[j], coords[pick]);
    }
    coords.resize(min_samples);
  }

  GradCheckResult result;
  result.coordinates = coords.size();
  for (const auto& [i, k] : coords) {
    double& theta = params.entry(i).value[k];
    const double saved = theta;
    theta = saved + h;
    const double fp = f(params, false);
    theta = saved - h;
    const double fm = f(params, false);
    theta = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("gradcheck: objective is non-finite at a perturbed point");
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = params.entry(i).grad[k];
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    result.max_rel_error = std::max(result.max_rel_error, std::fabs(analytic - numeric) / denom);
  }
  return result;
}

}  // namespace rebelhad
