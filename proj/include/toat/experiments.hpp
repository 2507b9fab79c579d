#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toat/trainer.hpp"

namespace toat {

// load -> (oversample) -> encode -> train -> evaluate-on-test, shared by the
// train command, the ablation grid and the topic-subset study.
struct PipelineResult {
  TrainResult training;
  EvalOutcome test;
};

PipelineResult run_pipeline(const SplitSets& splits, const TopicCatalog& catalog,
                            const std::string& dataset_root, const ModelDims& dims,
                            const TrainingConfig& config,
                            const std::map<std::string, PrecomputedFeatures>* features = nullptr,
                            bool collect_dumps = false);

struct AblationCell {
  Modality modality = Modality::Both;
  AlphaMode alpha_mode = AlphaMode::Fixed;
  double alpha_value = 0.1;

  std::string label() const;
};

// The populated rows of the ablation table: multimodal at alpha
// {0.1, 0, 0.2, off}, text-only at {0.1, 0, off}, audio-only (no TA cell).
std::vector<AblationCell> default_ablation_grid();

struct AblationCellResult {
  AblationCell cell;
  ConfusionMatrix confusion;
  Metrics test_metrics;
  int best_epoch = 0;
};

AblationCellResult run_ablation_cell(const SplitSets& splits, const TopicCatalog& catalog,
                                     const std::string& dataset_root, const ModelDims& dims,
                                     const TrainingConfig& base, const AblationCell& cell);

// all cells share the base seed protocol (same seed, same data order)
std::vector<AblationCellResult> run_ablation(const SplitSets& splits, const TopicCatalog& catalog,
                                             const std::string& dataset_root, const ModelDims& dims,
                                             const TrainingConfig& base,
                                             const std::vector<AblationCell>& cells);

std::string ablation_table(const std::vector<AblationCellResult>& cells);

struct TopicSubsetResult {
  std::size_t topic_index = 0;  // 1-based
  std::size_t subset_size = 0;  // samples containing the topic across all splits
  ConfusionMatrix confusion;
  Metrics test_metrics;
  bool skipped = false;
  std::string skip_reason;
};

// keep only samples containing the topic and only that topic's text+audio
SplitSets filter_topic_subset(const SplitSets& splits, std::size_t topic_index);

// one TA-free single-topic model per topic
std::vector<TopicSubsetResult> run_topic_subsets(const SplitSets& splits, const TopicCatalog& catalog,
                                                 const std::string& dataset_root, const ModelDims& dims,
                                                 const TrainingConfig& base);

void write_topic_analysis_csv(const std::string& path, const std::vector<TopicSubsetResult>& subsets,
                              const std::vector<std::optional<double>>& rates);
// topic index vs per-topic F1 and usage rate, two polylines
void write_topic_analysis_svg(const std::string& path, const std::vector<TopicSubsetResult>& subsets,
                              const std::vector<std::optional<double>>& rates);

}  // namespace toat
