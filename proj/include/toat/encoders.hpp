#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toat/params.hpp"
#include "toat/rng.hpp"
#include "toat/tape.hpp"

namespace toat {

// Architecture dimensions. The defaults train in seconds at desk scale while
// keeping every structural element (CLS readout, relative-position conv,
// projector mean); larger widths are config-selectable for externally
// computed features.
struct ModelDims {
  int d_model = 64;
  int n_heads = 4;
  int n_layers_text = 2;
  int ffn_mult = 4;
  int max_seq_len = 96;
  int max_reply_tokens = 64;

  int frame_dim = 32;
  int d_audio = 32;
  int n_layers_audio = 2;
  int relpos_kernel = 5;  // odd, same-padded
  std::vector<std::array<int, 2>> conv = {{10, 5}, {8, 4}};  // (kernel, stride) pairs
  double max_seconds = 4.0;
  int sample_rate = 16000;

  double ln_eps = 1e-5;
  double dropout = 0.1;
};

// Per-topic text features with presence mask. Rows of absent topics contain
// the mask fill in every column; present rows are finite.
struct TopicFeatureMatrix {
  Tensor features;  // N x D
  std::vector<std::uint8_t> present;

  static TopicFeatureMatrix from_rows(const std::vector<std::optional<std::vector<double>>>& rows,
                                      std::size_t dim);
  std::size_t n_topics() const { return present.size(); }
  void check_invariant() const;  // throws logic_error on violation
};

// Binds ParamStore tensors to tape leaves on first use; trainable parameters
// become gradient-bearing leaves.
class ParamBinder {
 public:
  ParamBinder(ad::Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}
  ad::NodeId operator()(const std::string& name);
  const std::map<std::string, ad::NodeId>& bound() const { return bound_; }
  ad::Tape& tape() { return tape_; }
  const ParamStore& store() const { return store_; }

 private:
  ad::Tape& tape_;
  const ParamStore& store_;
  std::map<std::string, ad::NodeId> bound_;
};

// parameter construction
void init_transformer_params(ParamStore& store, const std::string& prefix, int n_layers, int d,
                             int ffn_mult, Rng& rng);
void init_text_params(ParamStore& store, const ModelDims& dims, int vocab_size, Rng& rng);
void init_audio_params(ParamStore& store, const ModelDims& dims, Rng& rng, bool freeze_frontend);

// post-LN transformer encoder stack over x (L x d)
ad::NodeId transformer_stack(ParamBinder& params, ad::NodeId x, const std::string& prefix, int n_layers,
                             int n_heads, double ln_eps);

// CLS-position output of the text encoder for one topic sequence
ad::NodeId encode_text_topic(ParamBinder& params, const std::vector<int>& token_ids, const ModelDims& dims);

struct TextBranchOut {
  ad::NodeId features;                 // N x D with mask fills
  std::vector<std::uint8_t> present;
};

// per-topic token sequences -> packed topic feature matrix
TextBranchOut encode_text_all(ParamBinder& params,
                              const std::vector<std::optional<std::vector<int>>>& topic_tokens,
                              const ModelDims& dims);

// conv frontend -> relative-position conv -> transformer -> projector ->
// temporal mean; waveform is truncated to max_seconds first
ad::NodeId encode_audio(ParamBinder& params, const std::vector<double>& samples, const ModelDims& dims);

// precomputed-feature records: one per participant
struct PrecomputedFeatures {
  TopicFeatureMatrix text;
  std::vector<double> audio;
};

// JSONL: {participant_id, topic_features: {index: [float...]}, audio_feature: [float...]}
std::map<std::string, PrecomputedFeatures> load_feature_file(const std::string& path, std::size_t n_topics,
                                                             std::size_t d_text, std::size_t d_audio);

}  // namespace toat
