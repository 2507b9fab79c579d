#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "toat/data.hpp"
#include "toat/encoders.hpp"
#include "toat/fusion.hpp"
#include "toat/params.hpp"
#include "toat/tokenizer.hpp"
#include "toat/topic_attention.hpp"

namespace toat {

enum class Modality { Both, TextOnly, AudioOnly };

// 'Off' removes the topic attention module entirely (uniform mean over
// present rows); 'DefaultInverseN' resolves to 1/N at model build time.
enum class AlphaMode { DefaultInverseN, Fixed, Off };

struct TrainingConfig {
  double learning_rate = 1e-3;  // toy-scale default; 4e-6 suits pretrained-width runs
  int batch_size = 1;
  int epochs = 50;
  AlphaMode alpha_mode = AlphaMode::DefaultInverseN;
  double alpha_value = 0.0;
  std::uint64_t seed = 0;
  bool oversample = true;
  bool freeze_audio_frontend = true;
  Modality modality = Modality::Both;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  bool uses_text() const { return modality != Modality::AudioOnly; }
  bool uses_audio() const { return modality != Modality::TextOnly; }
  bool uses_topic_attention() const { return uses_text() && alpha_mode != AlphaMode::Off; }
  double resolve_alpha(std::size_t n_topics) const;
};

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& name);
// "off" | "1/N" | numeric string
std::string alpha_name(const TrainingConfig& config);
void set_alpha_from_name(TrainingConfig& config, const std::string& name);

struct Model {
  ModelDims dims;
  TrainingConfig train;
  TopicCatalog catalog;
  Vocabulary vocab;
  ParamStore params;
  bool passthrough = false;  // features supplied externally; encoder params absent

  std::size_t n_topics() const { return catalog.size(); }
  double alpha() const { return train.resolve_alpha(catalog.size()); }
};

// Initializes exactly the parameters the configuration calls for: text-only
// checkpoints carry no audio tensors, TA-free models carry no topic weights.
Model build_model(const ModelDims& dims, const TrainingConfig& train, TopicCatalog catalog,
                  Vocabulary vocab, bool passthrough = false);

// One sample prepared for the branches in use.
struct EncodedSample {
  std::string participant_id;
  int label = 0;
  std::vector<std::uint8_t> topics_present;
  std::vector<std::optional<std::vector<int>>> topic_tokens;  // when text branch runs
  std::vector<double> audio;                                  // concatenated replies, topic order
  std::optional<TopicFeatureMatrix> pre_text;                 // passthrough
  std::optional<std::vector<double>> pre_audio;
};

Vocabulary build_vocabulary(const std::vector<InterviewSample>& train_samples);

std::vector<EncodedSample> encode_samples(const std::vector<InterviewSample>& samples, const Model& model,
                                          const std::string& dataset_root);

void attach_precomputed(std::vector<EncodedSample>& samples,
                        const std::map<std::string, PrecomputedFeatures>& features);

struct ForwardNodes {
  ad::NodeId logits;
  std::optional<TopicAttentionNodes> attention;
  std::vector<std::uint8_t> present;
};

ForwardNodes model_forward(ParamBinder& params, const Model& model, const EncodedSample& sample,
                           RunMode mode, Rng* rng);

// eval-mode logits as plain values
Tensor predict_logits(const Model& model, const EncodedSample& sample);

struct Checkpoint {
  static constexpr int kFormatVersion = 1;
  Model model;
  long long adam_t = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> moments;  // first/second
  std::array<std::uint64_t, 4> rng_state{};
  int epoch = 0;
  int best_epoch = 0;
  double best_val_f1 = 0.0;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
// throws ArtifactError on version or schema mismatch
Checkpoint load_checkpoint(const std::string& path);

// Declarative run configuration (file + flag overrides, persisted verbatim).
struct RunConfig {
  std::string dataset_root;
  std::string dataset_file = "dataset.jsonl";
  std::string catalog_file = "catalog.json";
  std::string split_file = "split.json";
  std::string features_file;  // nonempty selects the passthrough path
  std::string out_dir;
  bool dump_attention = false;
  ModelDims dims;
  TrainingConfig training;
};

RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
std::string config_fingerprint(const RunConfig& config);

}  // namespace toat
