#pragma once

#include <optional>

#include "toat/encoders.hpp"
#include "toat/params.hpp"
#include "toat/rng.hpp"
#include "toat/tape.hpp"

namespace toat {

// Late fusion: concat -> layer normalization -> dropout -> linear classifier
// emitting 2 logits. Dropout is active only in train mode (inverted scaling,
// eval is the expectation).
enum class RunMode { Train, Eval };

void init_fusion_params(ParamStore& store, int fused_dim, Rng& rng);

ad::NodeId fuse_and_classify(ParamBinder& params, std::optional<ad::NodeId> text_feature,
                             std::optional<ad::NodeId> audio_feature, double dropout_rate, double ln_eps,
                             RunMode mode, Rng* rng);

// mean two-class cross entropy is a single term at batch size 1; tape op
// handles the log-sum-exp stabilization
inline ad::NodeId cross_entropy(ad::Tape& tape, ad::NodeId logits, int label) {
  return tape.cross_entropy(logits, label);
}

}  // namespace toat
