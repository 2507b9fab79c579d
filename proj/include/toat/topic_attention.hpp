#pragma once

#include <cstdint>
#include <vector>

#include "toat/encoders.hpp"
#include "toat/params.hpp"
#include "toat/rng.hpp"
#include "toat/tape.hpp"

namespace toat {

// Topic attention: shared linear scoring with learnable element-wise topic
// weights, masked softmax normalization, hard threshold at alpha, weighted
// aggregation. The threshold backward passes gradients only through
// retained entries; no renormalization happens after thresholding.
struct TopicAttentionNodes {
  ad::NodeId scores;        // g
  ad::NodeId normalized;    // g*
  ad::NodeId thresholded;   // g~
  ad::NodeId aggregated;    // h~_t
};

// w = all ones so the initial model is the pure linear-score model;
// score weights by symmetric uniform fan-in scaling
void init_topic_attention_params(ParamStore& store, int d_model, int n_topics, Rng& rng);

ad::NodeId score_topics(ParamBinder& params, ad::NodeId features);
TopicAttentionNodes apply_topic_attention(ParamBinder& params, ad::NodeId features,
                                          const std::vector<std::uint8_t>& present, double alpha);

// value-level state for dumps and tests
struct AttentionState {
  Tensor scores;       // g
  Tensor normalized;   // g*
  Tensor thresholded;  // g~
  Tensor aggregated;   // h~_t
};

AttentionState run_topic_attention(const TopicFeatureMatrix& features, const ParamStore& store,
                                   double alpha);

}  // namespace toat
