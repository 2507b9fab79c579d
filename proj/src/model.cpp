#include "toat/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "toat/errors.hpp"

namespace toat {

using ad::NodeId;
using nlohmann::json;

double TrainingConfig::resolve_alpha(std::size_t n_topics) const {
  switch (alpha_mode) {
    case AlphaMode::Off:
      return 0.0;
    case AlphaMode::Fixed:
      return alpha_value;
    case AlphaMode::DefaultInverseN:
      return 1.0 / static_cast<double>(n_topics);
  }
  return 0.0;
}

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::Both: return "both";
    case Modality::TextOnly: return "text";
    case Modality::AudioOnly: return "audio";
  }
  return "both";
}

Modality modality_from_name(const std::string& name) {
  if (name == "both") return Modality::Both;
  if (name == "text") return Modality::TextOnly;
  if (name == "audio") return Modality::AudioOnly;
  throw InputError("config: modality must be one of both|text|audio, got '" + name + "'");
}

std::string alpha_name(const TrainingConfig& config) {
  switch (config.alpha_mode) {
    case AlphaMode::Off: return "off";
    case AlphaMode::DefaultInverseN: return "1/N";
    case AlphaMode::Fixed: {
      std::ostringstream os;
      os << config.alpha_value;
      return os.str();
    }
  }
  return "1/N";
}

void set_alpha_from_name(TrainingConfig& config, const std::string& name) {
  if (name == "off" || name == "-") {
    config.alpha_mode = AlphaMode::Off;
    return;
  }
  if (name == "1/N" || name == "auto") {
    config.alpha_mode = AlphaMode::DefaultInverseN;
    return;
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(name, &used);
    if (used != name.size() || v < 0.0) throw InputError("");
    config.alpha_mode = AlphaMode::Fixed;
    config.alpha_value = v;
  } catch (...) {
    throw InputError("config: alpha must be 'off', '1/N' or a nonnegative number, got '" + name + "'");
  }
}

Model build_model(const ModelDims& dims, const TrainingConfig& train, TopicCatalog catalog,
                  Vocabulary vocab, bool passthrough) {
  Model model;
  model.dims = dims;
  model.train = train;
  model.catalog = std::move(catalog);
  model.vocab = std::move(vocab);
  model.passthrough = passthrough;
  Rng rng(train.seed, /*stream=*/1);
  if (train.uses_text() && !passthrough) init_text_params(model.params, dims, model.vocab.size(), rng);
  if (train.uses_audio() && !passthrough)
    init_audio_params(model.params, dims, rng, train.freeze_audio_frontend);
  if (train.uses_topic_attention())
    init_topic_attention_params(model.params, dims.d_model, static_cast<int>(model.catalog.size()), rng);
  int fused = 0;
  if (train.uses_text()) fused += dims.d_model;
  if (train.uses_audio()) fused += dims.d_audio;
  init_fusion_params(model.params, fused, rng);
  return model;
}

Vocabulary build_vocabulary(const std::vector<InterviewSample>& train_samples) {
  Vocabulary vocab;
  for (const auto& sample : train_samples) {
    for (const auto& topic : sample.topics) {
      if (!topic) continue;
      for (const auto& w : tokenize_words(topic->question)) vocab.add(w);
      for (const auto& w : tokenize_words(topic->reply_text)) vocab.add(w);
    }
  }
  return vocab;
}

std::vector<EncodedSample> encode_samples(const std::vector<InterviewSample>& samples, const Model& model,
                                          const std::string& dataset_root) {
  std::vector<EncodedSample> out;
  out.reserve(samples.size());
  const std::size_t n = model.n_topics();
  for (const auto& sample : samples) {
    if (sample.topics.size() != n)
      throw InputError("encode_samples: sample '" + sample.participant_id + "' has " +
                       std::to_string(sample.topics.size()) + " topic slots, catalog has " +
                       std::to_string(n));
    EncodedSample enc;
    enc.participant_id = sample.participant_id;
    enc.label = sample.label;
    enc.topics_present.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) enc.topics_present[i] = sample.topics[i] ? 1 : 0;
    if (model.train.uses_text() && !model.passthrough) {
      enc.topic_tokens.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (!sample.topics[i]) continue;
        enc.topic_tokens[i] =
            encode_topic_sequence(model.vocab, sample.topics[i]->question, sample.topics[i]->reply_text,
                                  model.dims.max_reply_tokens, model.dims.max_seq_len);
      }
    }
    if (model.train.uses_audio() && !model.passthrough) {
      // concatenate replies in topic order, truncate at encode time
      for (std::size_t i = 0; i < n; ++i) {
        if (!sample.topics[i] || !sample.topics[i]->audio) continue;
        Waveform wave = resolve_audio(*sample.topics[i]->audio, dataset_root);
        if (wave.sample_rate != model.dims.sample_rate)
          throw InputError("encode_samples: sample '" + sample.participant_id + "' topic " +
                           std::to_string(i + 1) + " has sample rate " +
                           std::to_string(wave.sample_rate) + ", expected " +
                           std::to_string(model.dims.sample_rate));
        enc.audio.insert(enc.audio.end(), wave.samples.begin(), wave.samples.end());
      }
      if (enc.audio.empty())
        throw InputError("encode_samples: sample '" + sample.participant_id +
                         "' has no audio but the audio branch is enabled");
    }
    out.push_back(std::move(enc));
  }
  return out;
}

void attach_precomputed(std::vector<EncodedSample>& samples,
                        const std::map<std::string, PrecomputedFeatures>& features) {
  for (auto& sample : samples) {
    auto it = features.find(sample.participant_id);
    if (it == features.end())
      throw InputError("attach_precomputed: no feature record for participant '" + sample.participant_id +
                       "'");
    sample.pre_text = it->second.text;
    sample.pre_audio = it->second.audio;
    sample.topics_present = it->second.text.present;
  }
}

ForwardNodes model_forward(ParamBinder& params, const Model& model, const EncodedSample& sample,
                           RunMode mode, Rng* rng) {
  ad::Tape& tape = params.tape();
  ForwardNodes out;
  std::optional<NodeId> text_feature;
  std::optional<NodeId> audio_feature;

  if (model.train.uses_text()) {
    NodeId features;
    if (model.passthrough) {
      if (!sample.pre_text)
        throw InputError("model_forward: passthrough model but no precomputed text features for '" +
                         sample.participant_id + "'");
      out.present = sample.pre_text->present;
      features = tape.leaf(sample.pre_text->features);
    } else {
      TextBranchOut branch = encode_text_all(params, sample.topic_tokens, model.dims);
      out.present = branch.present;
      features = branch.features;
    }
    if (model.train.uses_topic_attention()) {
      out.attention = apply_topic_attention(params, features, out.present, model.alpha());
      text_feature = out.attention->aggregated;
    } else {
      text_feature = tape.masked_mean_rows(features, out.present);
    }
  } else {
    out.present = sample.topics_present;
  }

  if (model.train.uses_audio()) {
    if (model.passthrough) {
      if (!sample.pre_audio)
        throw InputError("model_forward: passthrough model but no precomputed audio feature for '" +
                         sample.participant_id + "'");
      audio_feature = tape.leaf(Tensor::vector(*sample.pre_audio));
    } else {
      audio_feature = encode_audio(params, sample.audio, model.dims);
    }
  }

  out.logits = fuse_and_classify(params, text_feature, audio_feature, model.dims.dropout,
                                 model.dims.ln_eps, mode, rng);
  return out;
}

Tensor predict_logits(const Model& model, const EncodedSample& sample) {
  ad::Tape tape;
  ParamBinder binder(tape, model.params);
  ForwardNodes nodes = model_forward(binder, model, sample, RunMode::Eval, nullptr);
  return tape.value(nodes.logits);
}

// ---- serialization

namespace {

json tensor_to_json(const Tensor& t) {
  json j;
  j["shape"] = t.shape();
  j["data"] = t.values();
  return j;
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(), j.at("data").get<std::vector<double>>());
}

json dims_to_json(const ModelDims& d) {
  json j;
  j["d_model"] = d.d_model;
  j["n_heads"] = d.n_heads;
  j["n_layers_text"] = d.n_layers_text;
  j["ffn_mult"] = d.ffn_mult;
  j["max_seq_len"] = d.max_seq_len;
  j["max_reply_tokens"] = d.max_reply_tokens;
  j["frame_dim"] = d.frame_dim;
  j["d_audio"] = d.d_audio;
  j["n_layers_audio"] = d.n_layers_audio;
  j["relpos_kernel"] = d.relpos_kernel;
  json conv = json::array();
  for (const auto& c : d.conv) conv.push_back({c[0], c[1]});
  j["conv"] = std::move(conv);
  j["max_seconds"] = d.max_seconds;
  j["sample_rate"] = d.sample_rate;
  j["ln_eps"] = d.ln_eps;
  j["dropout"] = d.dropout;
  return j;
}

ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.d_model = j.value("d_model", d.d_model);
  d.n_heads = j.value("n_heads", d.n_heads);
  d.n_layers_text = j.value("n_layers_text", d.n_layers_text);
  d.ffn_mult = j.value("ffn_mult", d.ffn_mult);
  d.max_seq_len = j.value("max_seq_len", d.max_seq_len);
  d.max_reply_tokens = j.value("max_reply_tokens", d.max_reply_tokens);
  d.frame_dim = j.value("frame_dim", d.frame_dim);
  d.d_audio = j.value("d_audio", d.d_audio);
  d.n_layers_audio = j.value("n_layers_audio", d.n_layers_audio);
  d.relpos_kernel = j.value("relpos_kernel", d.relpos_kernel);
  if (j.contains("conv")) {
    d.conv.clear();
    for (const auto& c : j.at("conv")) d.conv.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
  }
  d.max_seconds = j.value("max_seconds", d.max_seconds);
  d.sample_rate = j.value("sample_rate", d.sample_rate);
  d.ln_eps = j.value("ln_eps", d.ln_eps);
  d.dropout = j.value("dropout", d.dropout);
  return d;
}

json training_to_json(const TrainingConfig& c) {
  json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["alpha"] = alpha_name(c);
  j["seed"] = c.seed;
  j["oversample"] = c.oversample;
  j["freeze_audio_frontend"] = c.freeze_audio_frontend;
  j["modality"] = modality_name(c.modality);
  j["weight_decay"] = c.weight_decay;
  j["betas"] = {c.beta1, c.beta2};
  j["adam_eps"] = c.adam_eps;
  return j;
}

TrainingConfig training_from_json(const json& j) {
  TrainingConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  if (j.contains("alpha")) {
    if (j.at("alpha").is_number()) {
      c.alpha_mode = AlphaMode::Fixed;
      c.alpha_value = j.at("alpha").get<double>();
    } else {
      set_alpha_from_name(c, j.at("alpha").get<std::string>());
    }
  }
  c.seed = j.value("seed", c.seed);
  c.oversample = j.value("oversample", c.oversample);
  c.freeze_audio_frontend = j.value("freeze_audio_frontend", c.freeze_audio_frontend);
  if (j.contains("modality")) c.modality = modality_from_name(j.at("modality").get<std::string>());
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  if (j.contains("betas")) {
    c.beta1 = j.at("betas").at(0).get<double>();
    c.beta2 = j.at("betas").at(1).get<double>();
  }
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  if (c.learning_rate <= 0.0) throw InputError("config: learning_rate must be positive");
  if (c.batch_size < 1) throw InputError("config: batch_size must be >= 1");
  if (c.epochs < 1) throw InputError("config: epochs must be >= 1");
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  json j;
  j["format_version"] = Checkpoint::kFormatVersion;
  j["dims"] = dims_to_json(checkpoint.model.dims);
  j["training"] = training_to_json(checkpoint.model.train);
  j["catalog"] = checkpoint.model.catalog.questions;
  j["vocab"] = checkpoint.model.vocab.words();
  j["passthrough"] = checkpoint.model.passthrough;
  json params = json::object();
  for (const auto& [name, param] : checkpoint.model.params.entries()) {
    json p = tensor_to_json(param.value);
    p["trainable"] = param.trainable;
    params[name] = std::move(p);
  }
  j["params"] = std::move(params);
  json moments = json::object();
  for (const auto& [name, mv] : checkpoint.moments) {
    moments[name] = {{"m", mv.first.values()}, {"v", mv.second.values()}};
  }
  j["opt"] = {{"t", checkpoint.adam_t}, {"moments", std::move(moments)}};
  j["rng_state"] = checkpoint.rng_state;
  j["epoch"] = checkpoint.epoch;
  j["best_epoch"] = checkpoint.best_epoch;
  j["best_val_f1"] = checkpoint.best_val_f1;
  std::ofstream f(path);
  if (!f) throw InputError("save_checkpoint: cannot open '" + path + "'");
  f << j.dump() << '\n';
  if (!f) throw InputError("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("load_checkpoint: cannot open '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ArtifactError("load_checkpoint: '" + path + "' is not valid JSON: " + e.what());
  }
  try {
    const int version = j.value("format_version", -1);
    if (version != Checkpoint::kFormatVersion)
      throw ArtifactError("load_checkpoint: format version " + std::to_string(version) +
                          " unsupported (expected " + std::to_string(Checkpoint::kFormatVersion) + ")");
    Checkpoint ckpt;
    ckpt.model.dims = dims_from_json(j.at("dims"));
    ckpt.model.train = training_from_json(j.at("training"));
    ckpt.model.catalog.questions = j.at("catalog").get<std::vector<std::string>>();
    ckpt.model.vocab = Vocabulary(j.at("vocab").get<std::vector<std::string>>());
    ckpt.model.passthrough = j.value("passthrough", false);
    for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it) {
      ckpt.model.params.add(it.key(), tensor_from_json(it.value()),
                            it.value().value("trainable", true));
    }
    ckpt.adam_t = j.at("opt").at("t").get<long long>();
    for (auto it = j.at("opt").at("moments").begin(); it != j.at("opt").at("moments").end(); ++it) {
      const Tensor& value = ckpt.model.params.at(it.key()).value;
      Tensor m(value.shape(), it.value().at("m").get<std::vector<double>>());
      Tensor v(value.shape(), it.value().at("v").get<std::vector<double>>());
      ckpt.moments.emplace(it.key(), std::make_pair(std::move(m), std::move(v)));
    }
    const auto rng = j.at("rng_state").get<std::vector<std::uint64_t>>();
    if (rng.size() != 4) throw ArtifactError("load_checkpoint: rng_state must have 4 words");
    std::copy_n(rng.begin(), 4, ckpt.rng_state.begin());
    ckpt.epoch = j.value("epoch", 0);
    ckpt.best_epoch = j.value("best_epoch", 0);
    ckpt.best_val_f1 = j.value("best_val_f1", 0.0);
    return ckpt;
  } catch (const json::exception& e) {
    throw ArtifactError("load_checkpoint: '" + path + "' schema mismatch: " + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("load_run_config: cannot open '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw InputError("load_run_config: '" + path + "': " + e.what());
  }
  return run_config_from_json(j);
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  try {
    c.dataset_root = j.value("dataset_root", c.dataset_root);
    c.dataset_file = j.value("dataset", c.dataset_file);
    c.catalog_file = j.value("catalog", c.catalog_file);
    c.split_file = j.value("split", c.split_file);
    c.features_file = j.value("features", c.features_file);
    c.out_dir = j.value("out", c.out_dir);
    c.dump_attention = j.value("dump_attention", c.dump_attention);
    if (j.contains("dims")) c.dims = dims_from_json(j.at("dims"));
    if (j.contains("training")) c.training = training_from_json(j.at("training"));
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

json run_config_to_json(const RunConfig& config) {
  json j;
  j["dataset_root"] = config.dataset_root;
  j["dataset"] = config.dataset_file;
  j["catalog"] = config.catalog_file;
  j["split"] = config.split_file;
  j["features"] = config.features_file;
  j["out"] = config.out_dir;
  j["dump_attention"] = config.dump_attention;
  j["dims"] = dims_to_json(config.dims);
  j["training"] = training_to_json(config.training);
  return j;
}

std::string config_fingerprint(const RunConfig& config) {
  const std::string dump = run_config_to_json(config).dump();
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace toat
