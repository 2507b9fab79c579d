#pragma once

#include <functional>
#include <map>
#include <string>

#include "toat/params.hpp"
#include "toat/tensor.hpp"

namespace toat {

struct GradCheckReport {
  bool pass = false;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::string message;  // set when the check aborted (e.g. non-finite loss)
};

using LossFn = std::function<double(const ParamStore&)>;
using GradFn = std::function<std::map<std::string, Tensor>(const ParamStore&)>;

// Compares tape gradients against central finite differences over every
// trainable tensor. Relative error uses max(|analytic|, |numeric|, floor)
// as denominator so near-zero gradients do not blow up on FD roundoff.
// A non-finite loss at a perturbed point is reported as a failure naming
// the parameter element.
GradCheckReport grad_check(const ParamStore& params, const LossFn& loss, const GradFn& grads,
                           double step = 1e-5, double tol = 1e-4, double denom_floor = 1e-3);

}  // namespace toat
