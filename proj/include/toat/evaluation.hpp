#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "toat/metrics.hpp"
#include "toat/model.hpp"

namespace toat {

struct PredictionRecord {
  std::string participant_id;
  int label = 0;
  int prediction = 0;
  double p_positive = 0.0;
};

struct EvalOutcome {
  ConfusionMatrix confusion;
  Metrics metrics;
  std::vector<PredictionRecord> predictions;
  std::vector<AttentionDump> dumps;  // filled when requested and TA is active
};

// Eval-mode pass over a sample set. Prediction rule: argmax of the two
// logits, ties to class 0.
EvalOutcome evaluate(const Model& model, const std::vector<EncodedSample>& samples,
                     bool collect_dumps = false);

int predict_class(const Tensor& logits);
double positive_probability(const Tensor& logits);

nlohmann::json eval_report_json(const EvalOutcome& outcome,
                                const std::vector<std::optional<double>>& rates,
                                const std::string& fingerprint);
std::string eval_report_table(const EvalOutcome& outcome);

void write_attention_dumps(const std::string& path, const std::vector<AttentionDump>& dumps);
std::vector<AttentionDump> read_attention_dumps(const std::string& path);
void write_usage_rates_csv(const std::string& path, const std::vector<std::optional<double>>& rates);

}  // namespace toat
