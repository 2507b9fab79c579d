#include "toat/grad_check.hpp"

#include <cmath>

namespace toat {

GradCheckReport grad_check(const ParamStore& params, const LossFn& loss, const GradFn& grads,
                           double step, double tol, double denom_floor) {
  GradCheckReport report;
  const std::map<std::string, Tensor> analytic = grads(params);

  ParamStore work = params;  // perturbed copy
  for (auto& [name, param] : work.entries()) {
    if (!param.trainable) continue;
    auto it = analytic.find(name);
    if (it == analytic.end()) {
      report.message = "no analytic gradient for trainable parameter '" + name + "'";
      return report;
    }
    const Tensor& g = it->second;
    for (std::size_t i = 0; i < param.value.numel(); ++i) {
      const double saved = param.value.at(i);
      param.value.at(i) = saved + step;
      const double up = loss(work);
      param.value.at(i) = saved - step;
      const double down = loss(work);
      param.value.at(i) = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.message = "non-finite loss at perturbed point " + name + "[" + std::to_string(i) + "]";
        report.worst_param = name;
        report.worst_index = i;
        return report;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double a = g.at(i);
      const double denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

}  // namespace toat
