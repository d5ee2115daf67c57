#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rebelhad {

struct GradSuiteRow {
  std::string name;
  double max_rel_error = 0.0;  // worst over seeds
  size_t coordinates = 0;      // total coordinates checked
  int seeds = 0;
  bool passed = false;
};

struct GradSuiteOptions {
  int seeds = 20;
  uint64_t base_seed = 1;
  double h = 1e-4;          // loss checks
  double network_h = 1e-5;  // network checks: smaller step, fewer ReLU crossings
  double tolerance = 1e-4;
  bool include_networks = true;
};

// Central-difference checks of every training loss with respect to its
// inputs, and (optionally) of both stage objectives with respect to the
// network parameters. Inputs are drawn away from the non-differentiable
// points of |x| and the variance hinge.
std::vector<GradSuiteRow> run_grad_suite(const GradSuiteOptions& options);
std::string grad_suite_csv(std::span<const GradSuiteRow> rows);

}  // namespace rebelhad
