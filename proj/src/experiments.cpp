#include "toat/experiments.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "toat/errors.hpp"

namespace toat {

PipelineResult run_pipeline(const SplitSets& splits, const TopicCatalog& catalog,
                            const std::string& dataset_root, const ModelDims& dims,
                            const TrainingConfig& config,
                            const std::map<std::string, PrecomputedFeatures>* features,
                            bool collect_dumps) {
  std::vector<InterviewSample> train_samples = splits.train;
  if (config.oversample) train_samples = oversample(train_samples, config.seed);
  Vocabulary vocab = build_vocabulary(splits.train);
  Model model = build_model(dims, config, catalog, std::move(vocab), features != nullptr);

  std::vector<EncodedSample> train_enc = encode_samples(train_samples, model, dataset_root);
  std::vector<EncodedSample> val_enc = encode_samples(splits.validation, model, dataset_root);
  std::vector<EncodedSample> test_enc = encode_samples(splits.test, model, dataset_root);
  if (features) {
    attach_precomputed(train_enc, *features);
    attach_precomputed(val_enc, *features);
    attach_precomputed(test_enc, *features);
  }

  PipelineResult result;
  result.training = train(std::move(model), train_enc, val_enc);
  result.test = evaluate(result.training.best.model, test_enc, collect_dumps);
  return result;
}

std::string AblationCell::label() const {
  std::string name = modality_name(modality);
  switch (alpha_mode) {
    case AlphaMode::Off: return name + "_noTA";
    case AlphaMode::DefaultInverseN: return name + "_alpha1overN";
    case AlphaMode::Fixed: {
      std::ostringstream os;
      os << name << "_alpha" << alpha_value;
      return os.str();
    }
  }
  return name;
}

std::vector<AblationCell> default_ablation_grid() {
  std::vector<AblationCell> cells;
  for (double a : {0.1, 0.0, 0.2})
    cells.push_back({Modality::Both, AlphaMode::Fixed, a});
  cells.push_back({Modality::Both, AlphaMode::Off, 0.0});
  for (double a : {0.1, 0.0})
    cells.push_back({Modality::TextOnly, AlphaMode::Fixed, a});
  cells.push_back({Modality::TextOnly, AlphaMode::Off, 0.0});
  cells.push_back({Modality::AudioOnly, AlphaMode::Off, 0.0});
  return cells;
}

AblationCellResult run_ablation_cell(const SplitSets& splits, const TopicCatalog& catalog,
                                     const std::string& dataset_root, const ModelDims& dims,
                                     const TrainingConfig& base, const AblationCell& cell) {
  TrainingConfig config = base;
  config.modality = cell.modality;
  config.alpha_mode = cell.alpha_mode;
  config.alpha_value = cell.alpha_value;
  PipelineResult pipeline = run_pipeline(splits, catalog, dataset_root, dims, config);
  AblationCellResult result;
  result.cell = cell;
  result.confusion = pipeline.test.confusion;
  result.test_metrics = pipeline.test.metrics;
  result.best_epoch = pipeline.training.best_epoch;
  return result;
}

std::vector<AblationCellResult> run_ablation(const SplitSets& splits, const TopicCatalog& catalog,
                                             const std::string& dataset_root, const ModelDims& dims,
                                             const TrainingConfig& base,
                                             const std::vector<AblationCell>& cells) {
  std::vector<AblationCellResult> results;
  results.reserve(cells.size());
  for (const auto& cell : cells)
    results.push_back(run_ablation_cell(splits, catalog, dataset_root, dims, base, cell));
  return results;
}

std::string ablation_table(const std::vector<AblationCellResult>& cells) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "modality  alpha   accuracy  recall  precision  f1\n";
  for (const auto& c : cells) {
    std::string alpha;
    switch (c.cell.alpha_mode) {
      case AlphaMode::Off: alpha = "-"; break;
      case AlphaMode::DefaultInverseN: alpha = "1/N"; break;
      case AlphaMode::Fixed: {
        std::ostringstream a;
        a << c.cell.alpha_value;
        alpha = a.str();
        break;
      }
    }
    os << std::left << std::setw(10) << modality_name(c.cell.modality) << std::setw(8) << alpha
       << std::right << std::setw(8) << c.test_metrics.accuracy_pct() << std::setw(8)
       << c.test_metrics.recall_pct() << std::setw(11) << c.test_metrics.precision_pct() << std::setw(6)
       << c.test_metrics.f1_pct() << "\n";
  }
  return os.str();
}

namespace {

std::vector<InterviewSample> filter_topic_samples(const std::vector<InterviewSample>& samples,
                                                  std::size_t topic_index) {
  std::vector<InterviewSample> out;
  for (const auto& sample : samples) {
    const auto& entry = sample.topics.at(topic_index - 1);
    if (!entry) continue;
    InterviewSample filtered;
    filtered.participant_id = sample.participant_id;
    filtered.label = sample.label;
    filtered.topics.push_back(entry);  // single-topic catalog
    out.push_back(std::move(filtered));
  }
  return out;
}

}  // namespace

SplitSets filter_topic_subset(const SplitSets& splits, std::size_t topic_index) {
  SplitSets out;
  out.train = filter_topic_samples(splits.train, topic_index);
  out.validation = filter_topic_samples(splits.validation, topic_index);
  out.test = filter_topic_samples(splits.test, topic_index);
  return out;
}

std::vector<TopicSubsetResult> run_topic_subsets(const SplitSets& splits, const TopicCatalog& catalog,
                                                 const std::string& dataset_root, const ModelDims& dims,
                                                 const TrainingConfig& base) {
  std::vector<TopicSubsetResult> results;
  for (std::size_t i = 1; i <= catalog.size(); ++i) {
    TopicSubsetResult result;
    result.topic_index = i;
    SplitSets subset = filter_topic_subset(splits, i);
    result.subset_size = subset.train.size() + subset.validation.size() + subset.test.size();
    TopicCatalog single{{catalog.questions[i - 1]}};
    TrainingConfig config = base;
    config.alpha_mode = AlphaMode::Off;  // single topic: no topic attention
    try {
      if (subset.train.empty() || subset.validation.empty() || subset.test.empty())
        throw InputError("empty subset");
      PipelineResult pipeline = run_pipeline(subset, single, dataset_root, dims, config);
      result.confusion = pipeline.test.confusion;
      result.test_metrics = pipeline.test.metrics;
    } catch (const InputError& e) {
      result.skipped = true;
      result.skip_reason = e.what();
    }
    results.push_back(std::move(result));
  }
  return results;
}

void write_topic_analysis_csv(const std::string& path, const std::vector<TopicSubsetResult>& subsets,
                              const std::vector<std::optional<double>>& rates) {
  std::ofstream f(path);
  if (!f) throw InputError("write_topic_analysis_csv: cannot open '" + path + "'");
  f << "topic,subset_size,f1,usage_rate\n";
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    const auto& s = subsets[i];
    f << s.topic_index << ',' << s.subset_size << ',';
    if (!s.skipped) f << s.test_metrics.f1;
    f << ',';
    if (i < rates.size() && rates[i]) f << *rates[i];
    f << '\n';
  }
}

void write_topic_analysis_svg(const std::string& path, const std::vector<TopicSubsetResult>& subsets,
                              const std::vector<std::optional<double>>& rates) {
  const int width = 640, height = 360, margin = 48;
  const std::size_t n = subsets.size();
  if (n == 0) return;
  auto x_of = [&](std::size_t i) {
    return margin + static_cast<double>(i) * (width - 2.0 * margin) / static_cast<double>(n > 1 ? n - 1 : 1);
  };
  auto y_of = [&](double v) { return height - margin - v * (height - 2.0 * margin); };
  std::ostringstream f1_line, rate_line;
  for (std::size_t i = 0; i < n; ++i) {
    if (!subsets[i].skipped)
      f1_line << x_of(i) << ',' << y_of(subsets[i].test_metrics.f1) << ' ';
    if (i < rates.size() && rates[i]) rate_line << x_of(i) << ',' << y_of(*rates[i]) << ' ';
  }
  std::ofstream f(path);
  if (!f) throw InputError("write_topic_analysis_svg: cannot open '" + path + "'");
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height << "'>\n";
  f << "<rect width='100%' height='100%' fill='white'/>\n";
  f << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin << "' y2='"
    << height - margin << "' stroke='black'/>\n";
  f << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='" << height - margin
    << "' stroke='black'/>\n";
  for (std::size_t i = 0; i < n; ++i) {
    f << "<text x='" << x_of(i) << "' y='" << height - margin + 16 << "' font-size='10' text-anchor='middle'>Q"
      << subsets[i].topic_index << "</text>\n";
  }
  f << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='" << f1_line.str() << "'/>\n";
  f << "<polyline fill='none' stroke='darkorange' stroke-width='2' points='" << rate_line.str() << "'/>\n";
  f << "<text x='" << width - margin << "' y='" << margin << "' font-size='11' text-anchor='end' "
    << "fill='steelblue'>per-topic F1</text>\n";
  f << "<text x='" << width - margin << "' y='" << margin + 14 << "' font-size='11' text-anchor='end' "
    << "fill='darkorange'>usage rate</text>\n";
  f << "</svg>\n";
}

}  // namespace toat
