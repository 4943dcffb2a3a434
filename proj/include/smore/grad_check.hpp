#pragma once

#include <functional>
#include <string>
#include <vector>

#include "smore/params.hpp"

namespace smore {

// Result of comparing analytic gradients against central differences.
struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_err = 0.0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
  };
  std::vector<Entry> entries;
  double max_rel_err = 0.0;

  bool ok(double tol) const { return max_rel_err < tol; }
  std::string summary() const;
};

// Checks every element of every parameter in the store. Callers must have
// already filled Parameter::grad with the analytic gradient of the same
// scalar that loss_fn evaluates; loss_fn is re-run with perturbed values and
// must not mutate the store. Relative error per element:
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(ParamStore& store, const std::function<double()>& loss_fn,
                           double h = 1e-5);

}  // namespace smore
