#include "toat/metrics.hpp"

#include <cmath>

#include "toat/errors.hpp"

namespace toat {

void ConfusionMatrix::count(int prediction, int label) {
  if (label == 1) {
    prediction == 1 ? ++tp : ++fn;
  } else {
    prediction == 1 ? ++fp : ++tn;
  }
}

double percent_1dp(double ratio) { return std::round(ratio * 1000.0) / 10.0; }

double Metrics::accuracy_pct() const { return percent_1dp(accuracy); }
double Metrics::recall_pct() const { return percent_1dp(recall); }
double Metrics::precision_pct() const { return percent_1dp(precision); }
double Metrics::f1_pct() const { return percent_1dp(f1); }

Metrics compute_metrics(const ConfusionMatrix& matrix) {
  if (matrix.total() <= 0) throw InputError("compute_metrics: empty confusion matrix");
  Metrics m;
  m.accuracy = static_cast<double>(matrix.tp + matrix.tn) / static_cast<double>(matrix.total());
  if (matrix.tp + matrix.fn > 0) {
    m.recall = static_cast<double>(matrix.tp) / static_cast<double>(matrix.tp + matrix.fn);
  } else {
    m.recall = 0.0;
    m.recall_defined = false;
  }
  if (matrix.tp + matrix.fp > 0) {
    m.precision = static_cast<double>(matrix.tp) / static_cast<double>(matrix.tp + matrix.fp);
  } else {
    m.precision = 0.0;
    m.precision_defined = false;
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.f1 = 0.0;
    m.f1_defined = false;
  }
  return m;
}

std::vector<std::optional<double>> usage_rates(const std::vector<AttentionDump>& dumps, double alpha) {
  std::size_t n = 0;
  for (const auto& d : dumps) n = std::max(n, d.present.size());
  std::vector<long long> chosen(n, 0), present(n, 0);
  for (const auto& d : dumps) {
    for (std::size_t i = 0; i < d.present.size(); ++i) {
      if (!d.present[i]) continue;
      ++present[i];
      if (d.g_star[i] >= alpha) ++chosen[i];
    }
  }
  std::vector<std::optional<double>> rates(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (present[i] > 0)
      rates[i] = static_cast<double>(chosen[i]) / static_cast<double>(present[i]);
  }
  return rates;
}

}  // namespace toat
