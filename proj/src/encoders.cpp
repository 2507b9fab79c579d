#include "toat/encoders.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "toat/errors.hpp"

namespace toat {

using ad::NodeId;
using nlohmann::json;

TopicFeatureMatrix TopicFeatureMatrix::from_rows(
    const std::vector<std::optional<std::vector<double>>>& rows, std::size_t dim) {
  TopicFeatureMatrix out;
  out.features = Tensor({rows.size(), dim});
  out.present.assign(rows.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double* dst = out.features.data() + i * dim;
    if (rows[i]) {
      if (rows[i]->size() != dim)
        throw InputError("TopicFeatureMatrix: row " + std::to_string(i + 1) + " has width " +
                         std::to_string(rows[i]->size()) + ", expected " + std::to_string(dim));
      for (std::size_t j = 0; j < dim; ++j) {
        if (!std::isfinite((*rows[i])[j]))
          throw InputError("TopicFeatureMatrix: non-finite value in present row " + std::to_string(i + 1));
        dst[j] = (*rows[i])[j];
      }
      out.present[i] = 1;
    } else {
      for (std::size_t j = 0; j < dim; ++j) dst[j] = ad::kMaskFill;
    }
  }
  return out;
}

void TopicFeatureMatrix::check_invariant() const {
  const std::size_t n = present.size();
  const std::size_t d = features.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = features.at(i, j);
      if (present[i] && !std::isfinite(v))
        throw std::logic_error("TopicFeatureMatrix: non-finite value in present row " + std::to_string(i));
      if (!present[i] && v != ad::kMaskFill)
        throw std::logic_error("TopicFeatureMatrix: masked row " + std::to_string(i) +
                               " not filled with the mask value");
    }
  }
}

NodeId ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Param& p = store_.at(name);
  NodeId id = tape_.leaf(p.value, p.trainable);
  bound_.emplace(name, id);
  return id;
}

namespace {

Tensor uniform_fanin(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in) {
  Tensor t(std::move(shape));
  const double s = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(-s, s);
  return t;
}

Tensor normal_init(Rng& rng, std::vector<std::size_t> shape, double stddev) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

void init_transformer_params(ParamStore& store, const std::string& prefix, int n_layers, int d,
                             int ffn_mult, Rng& rng) {
  if (d <= 0) throw std::invalid_argument("init_transformer_params: d must be positive");
  const auto du = static_cast<std::size_t>(d);
  const auto f = du * static_cast<std::size_t>(ffn_mult);
  for (int l = 0; l < n_layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    for (const char* name : {"wq", "wk", "wv", "wo"})
      store.add(p + ".attn." + name, uniform_fanin(rng, {du, du}, du));
    for (const char* name : {"bq", "bk", "bv", "bo"}) store.add(p + ".attn." + name, Tensor::zeros({du}));
    store.add(p + ".ln1.gain", Tensor::full({du}, 1.0));
    store.add(p + ".ln1.bias", Tensor::zeros({du}));
    store.add(p + ".ffn.w1", uniform_fanin(rng, {f, du}, du));
    store.add(p + ".ffn.b1", Tensor::zeros({f}));
    store.add(p + ".ffn.w2", uniform_fanin(rng, {du, f}, f));
    store.add(p + ".ffn.b2", Tensor::zeros({du}));
    store.add(p + ".ln2.gain", Tensor::full({du}, 1.0));
    store.add(p + ".ln2.bias", Tensor::zeros({du}));
  }
}

void init_text_params(ParamStore& store, const ModelDims& dims, int vocab_size, Rng& rng) {
  if (vocab_size <= 0) throw std::invalid_argument("init_text_params: vocab_size must be positive");
  if (dims.d_model % dims.n_heads != 0)
    throw std::invalid_argument("init_text_params: d_model " + std::to_string(dims.d_model) +
                                " not divisible by n_heads " + std::to_string(dims.n_heads));
  store.add("text.embed", normal_init(rng, {static_cast<std::size_t>(vocab_size),
                                            static_cast<std::size_t>(dims.d_model)}, 0.02));
  store.add("text.pos", normal_init(rng, {static_cast<std::size_t>(dims.max_seq_len),
                                          static_cast<std::size_t>(dims.d_model)}, 0.02));
  init_transformer_params(store, "text", dims.n_layers_text, dims.d_model, dims.ffn_mult, rng);
}

void init_audio_params(ParamStore& store, const ModelDims& dims, Rng& rng, bool freeze_frontend) {
  if (dims.conv.empty()) throw std::invalid_argument("init_audio_params: conv stack must be nonempty");
  if (dims.relpos_kernel % 2 == 0)
    throw std::invalid_argument("init_audio_params: relpos_kernel must be odd");
  if (dims.frame_dim % dims.n_heads != 0)
    throw std::invalid_argument("init_audio_params: frame_dim " + std::to_string(dims.frame_dim) +
                                " not divisible by n_heads " + std::to_string(dims.n_heads));
  const auto fd = static_cast<std::size_t>(dims.frame_dim);
  for (std::size_t c = 0; c < dims.conv.size(); ++c) {
    const std::size_t cin = c == 0 ? 1 : fd;
    const auto k = static_cast<std::size_t>(dims.conv[c][0]);
    const std::string p = "audio.conv" + std::to_string(c);
    store.add(p + ".w", uniform_fanin(rng, {fd, cin, k}, cin * k), !freeze_frontend);
    store.add(p + ".b", Tensor::zeros({fd}), !freeze_frontend);
  }
  const auto rk = static_cast<std::size_t>(dims.relpos_kernel);
  store.add("audio.relpos.w", uniform_fanin(rng, {fd, fd, rk}, fd * rk));
  store.add("audio.relpos.b", Tensor::zeros({fd}));
  init_transformer_params(store, "audio", dims.n_layers_audio, dims.frame_dim, dims.ffn_mult, rng);
  store.add("audio.proj.w", uniform_fanin(rng, {static_cast<std::size_t>(dims.d_audio), fd}, fd));
  store.add("audio.proj.b", Tensor::zeros({static_cast<std::size_t>(dims.d_audio)}));
}

namespace {

NodeId self_attention(ParamBinder& params, NodeId x, const std::string& p, int n_heads) {
  ad::Tape& t = params.tape();
  const std::size_t d = t.value(x).cols();
  const auto heads = static_cast<std::size_t>(n_heads);
  const std::size_t hd = d / heads;
  NodeId q = t.linear(x, params(p + ".attn.wq"), params(p + ".attn.bq"));
  NodeId k = t.linear(x, params(p + ".attn.wk"), params(p + ".attn.bk"));
  NodeId v = t.linear(x, params(p + ".attn.wv"), params(p + ".attn.bv"));
  std::vector<NodeId> outputs;
  outputs.reserve(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t h = 0; h < heads; ++h) {
    NodeId qh = t.slice_cols(q, h * hd, (h + 1) * hd);
    NodeId kh = t.slice_cols(k, h * hd, (h + 1) * hd);
    NodeId vh = t.slice_cols(v, h * hd, (h + 1) * hd);
    NodeId scores = t.scale(t.matmul_nt(qh, kh), inv_sqrt);
    NodeId attn = t.softmax_rows(scores);
    outputs.push_back(t.matmul(attn, vh));
  }
  NodeId merged = outputs.size() == 1 ? outputs[0] : t.concat_cols(outputs);
  return t.linear(merged, params(p + ".attn.wo"), params(p + ".attn.bo"));
}

}  // namespace

NodeId transformer_stack(ParamBinder& params, NodeId x, const std::string& prefix, int n_layers,
                         int n_heads, double ln_eps) {
  ad::Tape& t = params.tape();
  for (int l = 0; l < n_layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    NodeId attn = self_attention(params, x, p, n_heads);
    x = t.layer_norm(t.add(x, attn), params(p + ".ln1.gain"), params(p + ".ln1.bias"), ln_eps);
    NodeId hidden = t.gelu(t.linear(x, params(p + ".ffn.w1"), params(p + ".ffn.b1")));
    NodeId ff = t.linear(hidden, params(p + ".ffn.w2"), params(p + ".ffn.b2"));
    x = t.layer_norm(t.add(x, ff), params(p + ".ln2.gain"), params(p + ".ln2.bias"), ln_eps);
  }
  return x;
}

NodeId encode_text_topic(ParamBinder& params, const std::vector<int>& token_ids, const ModelDims& dims) {
  if (token_ids.empty()) throw InputError("encode_text_topic: empty token sequence");
  if (static_cast<int>(token_ids.size()) > dims.max_seq_len)
    throw InputError("encode_text_topic: sequence length " + std::to_string(token_ids.size()) +
                     " exceeds max_seq_len " + std::to_string(dims.max_seq_len));
  ad::Tape& t = params.tape();
  NodeId embed = params("text.embed");
  const std::size_t vocab = t.value(embed).rows();
  std::vector<std::size_t> ids;
  ids.reserve(token_ids.size());
  for (int id : token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw InputError("encode_text_topic: token id " + std::to_string(id) +
                       " out of vocabulary range [0," + std::to_string(vocab) + ")");
    ids.push_back(static_cast<std::size_t>(id));
  }
  NodeId tok = t.gather_rows(embed, std::move(ids));
  NodeId pos = t.slice_rows(params("text.pos"), 0, token_ids.size());
  NodeId x = t.add(tok, pos);
  x = transformer_stack(params, x, "text", dims.n_layers_text, dims.n_heads, dims.ln_eps);
  return t.take_row(x, 0);  // CLS position
}

TextBranchOut encode_text_all(ParamBinder& params,
                              const std::vector<std::optional<std::vector<int>>>& topic_tokens,
                              const ModelDims& dims) {
  TextBranchOut out;
  out.present.assign(topic_tokens.size(), 0);
  std::vector<NodeId> rows;
  for (std::size_t i = 0; i < topic_tokens.size(); ++i) {
    if (!topic_tokens[i]) continue;
    out.present[i] = 1;
    rows.push_back(encode_text_topic(params, *topic_tokens[i], dims));
  }
  out.features = params.tape().pack_rows(rows, out.present, static_cast<std::size_t>(dims.d_model));
  return out;
}

NodeId encode_audio(ParamBinder& params, const std::vector<double>& samples, const ModelDims& dims) {
  if (samples.empty()) throw InputError("encode_audio: empty waveform");
  ad::Tape& t = params.tape();
  const auto max_samples = static_cast<std::size_t>(dims.max_seconds * dims.sample_rate);
  const std::size_t len = std::min(samples.size(), max_samples);

  // reject inputs shorter than the conv receptive field before building ops
  std::size_t stage_len = len;
  for (std::size_t c = 0; c < dims.conv.size(); ++c) {
    const auto k = static_cast<std::size_t>(dims.conv[c][0]);
    const auto s = static_cast<std::size_t>(dims.conv[c][1]);
    if (stage_len < k)
      throw InputError("encode_audio: audio too short (" + std::to_string(len) +
                       " samples do not cover the conv receptive field)");
    stage_len = (stage_len - k) / s + 1;
  }

  Tensor wave({len, 1});
  std::copy_n(samples.data(), len, wave.data());
  NodeId x = t.leaf(std::move(wave));
  for (std::size_t c = 0; c < dims.conv.size(); ++c) {
    const std::string p = "audio.conv" + std::to_string(c);
    x = t.gelu(t.conv1d(x, params(p + ".w"), params(p + ".b"),
                        static_cast<std::size_t>(dims.conv[c][1]), 0));
  }
  // relative positional embedding: same-padded conv added to the frames
  NodeId rel = t.gelu(t.conv1d(x, params("audio.relpos.w"), params("audio.relpos.b"), 1,
                               static_cast<std::size_t>(dims.relpos_kernel / 2)));
  x = t.add(x, rel);
  x = transformer_stack(params, x, "audio", dims.n_layers_audio, dims.n_heads, dims.ln_eps);
  NodeId projected = t.linear(x, params("audio.proj.w"), params("audio.proj.b"));
  return t.mean_rows(projected);
}

std::map<std::string, PrecomputedFeatures> load_feature_file(const std::string& path, std::size_t n_topics,
                                                             std::size_t d_text, std::size_t d_audio) {
  std::ifstream f(path);
  if (!f) throw InputError("load_feature_file: cannot open '" + path + "'");
  std::map<std::string, PrecomputedFeatures> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "load_feature_file: line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError(where + ": " + e.what());
    }
    try {
      const auto id = j.at("participant_id").get<std::string>();
      std::vector<std::optional<std::vector<double>>> rows(n_topics);
      for (auto it = j.at("topic_features").begin(); it != j.at("topic_features").end(); ++it) {
        std::size_t idx = 0;
        try {
          idx = static_cast<std::size_t>(std::stoul(it.key()));
        } catch (...) {
          throw InputError(where + ": bad topic index '" + it.key() + "'");
        }
        if (idx < 1 || idx > n_topics)
          throw InputError(where + ": topic index " + std::to_string(idx) + " out of range 1.." +
                           std::to_string(n_topics));
        auto vec = it.value().get<std::vector<double>>();
        if (vec.size() != d_text)
          throw InputError(where + ": topic " + std::to_string(idx) + " feature width " +
                           std::to_string(vec.size()) + ", expected D=" + std::to_string(d_text));
        rows[idx - 1] = std::move(vec);
      }
      PrecomputedFeatures feats;
      feats.text = TopicFeatureMatrix::from_rows(rows, d_text);
      feats.audio = j.at("audio_feature").get<std::vector<double>>();
      if (feats.audio.size() != d_audio)
        throw InputError(where + ": audio feature width " + std::to_string(feats.audio.size()) +
                         ", expected D_a=" + std::to_string(d_audio));
      out[id] = std::move(feats);
    } catch (const json::exception& e) {
      throw InputError(where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace toat
