#include "toat/topic_attention.hpp"

#include <cmath>

namespace toat {

using ad::NodeId;

void init_topic_attention_params(ParamStore& store, int d_model, int n_topics, Rng& rng) {
  const auto d = static_cast<std::size_t>(d_model);
  Tensor w({d});
  const double s = std::sqrt(1.0 / static_cast<double>(d));
  for (std::size_t i = 0; i < d; ++i) w.at(i) = rng.uniform(-s, s);
  store.add("ta.score.w", std::move(w));
  store.add("ta.score.b", Tensor::zeros({1}));
  store.add("ta.topic_w", Tensor::full({static_cast<std::size_t>(n_topics)}, 1.0));
}

NodeId score_topics(ParamBinder& params, NodeId features) {
  ad::Tape& t = params.tape();
  NodeId lin = t.affine_rows(features, params("ta.score.w"), params("ta.score.b"));
  return t.mul(params("ta.topic_w"), lin);
}

TopicAttentionNodes apply_topic_attention(ParamBinder& params, NodeId features,
                                          const std::vector<std::uint8_t>& present, double alpha) {
  ad::Tape& t = params.tape();
  TopicAttentionNodes out;
  out.scores = score_topics(params, features);
  out.normalized = t.masked_softmax(out.scores, present);
  out.thresholded = t.threshold(out.normalized, alpha);
  out.aggregated = t.weighted_row_sum(out.thresholded, features, present);
  return out;
}

AttentionState run_topic_attention(const TopicFeatureMatrix& features, const ParamStore& store,
                                   double alpha) {
  ad::Tape tape;
  ParamBinder binder(tape, store);
  NodeId h = tape.leaf(features.features);
  TopicAttentionNodes nodes = apply_topic_attention(binder, h, features.present, alpha);
  AttentionState state;
  state.scores = tape.value(nodes.scores);
  state.normalized = tape.value(nodes.normalized);
  state.thresholded = tape.value(nodes.thresholded);
  state.aggregated = tape.value(nodes.aggregated);
  return state;
}

}  // namespace toat
