#include "toat/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace toat {

using ad::NodeId;

void init_fusion_params(ParamStore& store, int fused_dim, Rng& rng) {
  const auto d = static_cast<std::size_t>(fused_dim);
  store.add("fusion.ln.gain", Tensor::full({d}, 1.0));
  store.add("fusion.ln.bias", Tensor::zeros({d}));
  Tensor w({2, d});
  const double s = std::sqrt(1.0 / static_cast<double>(d));
  for (std::size_t i = 0; i < w.numel(); ++i) w.at(i) = rng.uniform(-s, s);
  store.add("fusion.cls.w", std::move(w));
  store.add("fusion.cls.b", Tensor::zeros({2}));
}

NodeId fuse_and_classify(ParamBinder& params, std::optional<NodeId> text_feature,
                         std::optional<NodeId> audio_feature, double dropout_rate, double ln_eps,
                         RunMode mode, Rng* rng) {
  ad::Tape& t = params.tape();
  NodeId fused;
  if (text_feature && audio_feature) {
    fused = t.concat_vec({*text_feature, *audio_feature});
  } else if (text_feature) {
    fused = *text_feature;
  } else if (audio_feature) {
    fused = *audio_feature;
  } else {
    throw std::invalid_argument("fuse_and_classify: at least one modality feature required");
  }
  fused = t.layer_norm(fused, params("fusion.ln.gain"), params("fusion.ln.bias"), ln_eps);
  if (mode == RunMode::Train && dropout_rate > 0.0) {
    if (!rng) throw std::invalid_argument("fuse_and_classify: train-mode dropout needs an rng");
    fused = t.dropout(fused, dropout_rate, *rng, true);
  }
  return t.linear(fused, params("fusion.cls.w"), params("fusion.cls.b"));
}

}  // namespace toat
