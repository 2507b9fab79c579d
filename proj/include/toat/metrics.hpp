#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace toat {

struct ConfusionMatrix {
  long long tp = 0, tn = 0, fp = 0, fn = 0;
  long long total() const { return tp + tn + fp + fn; }
  void count(int prediction, int label);
};

// Raw ratios plus percent values rounded to one decimal. Zero-denominator
// quotients are reported as 0 with the corresponding flag cleared.
struct Metrics {
  double accuracy = 0.0, recall = 0.0, precision = 0.0, f1 = 0.0;  // raw in [0,1]
  bool recall_defined = true, precision_defined = true, f1_defined = true;

  double accuracy_pct() const;
  double recall_pct() const;
  double precision_pct() const;
  double f1_pct() const;
};

// percent with one decimal, e.g. 0.73913 -> 73.9
double percent_1dp(double ratio);

// throws InputError on an empty matrix
Metrics compute_metrics(const ConfusionMatrix& matrix);

struct AttentionDump {
  std::string participant_id;
  std::vector<double> g_star;
  std::vector<double> g_tilde;
  std::vector<std::uint8_t> present;
};

// rate_i = #(present & g_star_i >= alpha) / #present; topics never present
// come back as nullopt
std::vector<std::optional<double>> usage_rates(const std::vector<AttentionDump>& dumps, double alpha);

}  // namespace toat
