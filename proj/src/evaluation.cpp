#include "toat/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "toat/errors.hpp"

namespace toat {

using nlohmann::json;

int predict_class(const Tensor& logits) { return logits.at(1) > logits.at(0) ? 1 : 0; }

double positive_probability(const Tensor& logits) {
  const double m = std::max(logits.at(0), logits.at(1));
  const double e0 = std::exp(logits.at(0) - m);
  const double e1 = std::exp(logits.at(1) - m);
  return e1 / (e0 + e1);
}

EvalOutcome evaluate(const Model& model, const std::vector<EncodedSample>& samples, bool collect_dumps) {
  EvalOutcome out;
  for (const auto& sample : samples) {
    ad::Tape tape;
    ParamBinder binder(tape, model.params);
    ForwardNodes nodes = model_forward(binder, model, sample, RunMode::Eval, nullptr);
    const Tensor& logits = tape.value(nodes.logits);
    PredictionRecord rec;
    rec.participant_id = sample.participant_id;
    rec.label = sample.label;
    rec.prediction = predict_class(logits);
    rec.p_positive = positive_probability(logits);
    out.confusion.count(rec.prediction, rec.label);
    out.predictions.push_back(std::move(rec));
    if (collect_dumps && nodes.attention) {
      AttentionDump dump;
      dump.participant_id = sample.participant_id;
      dump.g_star = tape.value(nodes.attention->normalized).values();
      dump.g_tilde = tape.value(nodes.attention->thresholded).values();
      dump.present = nodes.present;
      out.dumps.push_back(std::move(dump));
    }
  }
  out.metrics = compute_metrics(out.confusion);
  return out;
}

json eval_report_json(const EvalOutcome& outcome, const std::vector<std::optional<double>>& rates,
                      const std::string& fingerprint) {
  json j;
  j["confusion"] = {{"tp", outcome.confusion.tp},
                    {"tn", outcome.confusion.tn},
                    {"fp", outcome.confusion.fp},
                    {"fn", outcome.confusion.fn}};
  j["metrics"] = {{"accuracy", outcome.metrics.accuracy_pct()},
                  {"recall", outcome.metrics.recall_pct()},
                  {"precision", outcome.metrics.precision_pct()},
                  {"f1", outcome.metrics.f1_pct()}};
  j["metrics_raw"] = {{"accuracy", outcome.metrics.accuracy},
                      {"recall", outcome.metrics.recall},
                      {"precision", outcome.metrics.precision},
                      {"f1", outcome.metrics.f1}};
  j["flags"] = {{"recall_defined", outcome.metrics.recall_defined},
                {"precision_defined", outcome.metrics.precision_defined},
                {"f1_defined", outcome.metrics.f1_defined}};
  if (!rates.empty()) {
    json r = json::array();
    for (const auto& rate : rates) {
      if (rate) r.push_back(*rate);
      else r.push_back(nullptr);
    }
    j["usage_rates"] = std::move(r);
  }
  j["config_fingerprint"] = fingerprint;
  return j;
}

std::string eval_report_table(const EvalOutcome& outcome) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "  samples   " << outcome.confusion.total() << "\n";
  os << "  confusion TP=" << outcome.confusion.tp << " TN=" << outcome.confusion.tn
     << " FP=" << outcome.confusion.fp << " FN=" << outcome.confusion.fn << "\n";
  os << "  accuracy  " << outcome.metrics.accuracy_pct() << "\n";
  os << "  recall    " << outcome.metrics.recall_pct()
     << (outcome.metrics.recall_defined ? "" : " (zero denominator)") << "\n";
  os << "  precision " << outcome.metrics.precision_pct()
     << (outcome.metrics.precision_defined ? "" : " (zero denominator)") << "\n";
  os << "  f1        " << outcome.metrics.f1_pct()
     << (outcome.metrics.f1_defined ? "" : " (zero denominator)") << "\n";
  return os.str();
}

void write_attention_dumps(const std::string& path, const std::vector<AttentionDump>& dumps) {
  std::ofstream f(path);
  if (!f) throw InputError("write_attention_dumps: cannot open '" + path + "'");
  for (const auto& d : dumps) {
    json j;
    j["participant_id"] = d.participant_id;
    j["g_star"] = d.g_star;
    j["g_tilde"] = d.g_tilde;
    j["present"] = d.present;
    f << j.dump() << '\n';
  }
}

std::vector<AttentionDump> read_attention_dumps(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("read_attention_dumps: cannot open '" + path + "'");
  std::vector<AttentionDump> dumps;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      AttentionDump d;
      d.participant_id = j.at("participant_id").get<std::string>();
      d.g_star = j.at("g_star").get<std::vector<double>>();
      d.g_tilde = j.at("g_tilde").get<std::vector<double>>();
      d.present = j.at("present").get<std::vector<std::uint8_t>>();
      dumps.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw InputError("read_attention_dumps: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return dumps;
}

void write_usage_rates_csv(const std::string& path, const std::vector<std::optional<double>>& rates) {
  std::ofstream f(path);
  if (!f) throw InputError("write_usage_rates_csv: cannot open '" + path + "'");
  f << "topic,usage_rate\n";
  for (std::size_t i = 0; i < rates.size(); ++i) {
    f << (i + 1) << ',';
    if (rates[i]) f << *rates[i];
    f << '\n';
  }
}

}  // namespace toat
