#include "toat/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "toat/errors.hpp"
#include "toat/rng.hpp"

namespace toat {

using nlohmann::json;

TopicCatalog default_catalog() {
  return TopicCatalog{{
      "How are you doing today?",
      "How are you at controlling your temper?",
      "What'd you study at school?",
      "Is there anything you regret?",
      "Have you been diagnosed with depression?",
      "When was the last time you argued with someone and what was it about?",
      "What advice would you give to yourself ten or twenty years ago?",
      "What are you most proud of in your life?",
      "When was the last time you felt really happy?",
      "How easy is it for you to get a good night's sleep?",
  }};
}

TopicCatalog generic_catalog(std::size_t n) {
  if (n == 10) return default_catalog();
  TopicCatalog catalog;
  catalog.questions.reserve(n);
  for (std::size_t i = 1; i <= n; ++i)
    catalog.questions.push_back("Interview question number " + std::to_string(i) + "?");
  return catalog;
}

void SplitManifest::validate() const {
  std::set<std::string> seen;
  auto check = [&seen](const std::vector<std::string>& ids, const char* which) {
    for (const auto& id : ids) {
      if (!seen.insert(id).second)
        throw InputError("split manifest: id '" + id + "' appears in more than one list (" + which + ")");
    }
  };
  check(train, "train");
  check(validation, "validation");
  check(test, "test");
  check(excluded, "excluded");
}

namespace {

json audio_to_json(const AudioRef& ref) {
  json j = json::object();
  if (!ref.path.empty()) {
    j["path"] = ref.path;
  } else if (ref.inline_data) {
    j["samples"] = ref.inline_data->samples;
    j["sample_rate"] = ref.inline_data->sample_rate;
  }
  return j;
}

AudioRef audio_from_json(const json& j, const std::string& where) {
  AudioRef ref;
  if (j.contains("path")) {
    ref.path = j.at("path").get<std::string>();
  } else if (j.contains("samples")) {
    Waveform wave;
    wave.samples = j.at("samples").get<std::vector<double>>();
    wave.sample_rate = j.value("sample_rate", 16000);
    if (wave.sample_rate <= 0) throw InputError(where + ": audio sample_rate must be positive");
    ref.inline_data = std::move(wave);
  } else {
    throw InputError(where + ": audio must have either 'path' or 'samples'");
  }
  return ref;
}

json sample_to_json(const InterviewSample& sample) {
  json topics = json::object();
  for (std::size_t i = 0; i < sample.topics.size(); ++i) {
    if (!sample.topics[i]) continue;
    const TopicEntry& entry = *sample.topics[i];
    json e;
    e["question"] = entry.question;
    e["reply_text"] = entry.reply_text;
    if (entry.audio) e["audio"] = audio_to_json(*entry.audio);
    topics[std::to_string(i + 1)] = std::move(e);
  }
  json j;
  j["participant_id"] = sample.participant_id;
  j["label"] = sample.label;
  j["topics"] = std::move(topics);
  return j;
}

}  // namespace

LoadResult load_dataset(const std::string& path, const TopicCatalog& catalog) {
  std::ifstream f(path);
  if (!f) throw InputError("load_dataset: cannot open '" + path + "'");
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  const std::size_t n_topics = catalog.size();
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError("load_dataset: parse error at line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string where = "load_dataset: line " + std::to_string(line_no);
    try {
      InterviewSample sample;
      sample.participant_id = j.at("participant_id").get<std::string>();
      sample.label = j.at("label").get<int>();
      if (sample.label != 0 && sample.label != 1)
        throw InputError(where + ": label must be 0 or 1, got " + std::to_string(sample.label));
      sample.topics.resize(n_topics);
      const json& topics = j.at("topics");
      if (!topics.is_object()) throw InputError(where + ": 'topics' must be an object");
      for (auto it = topics.begin(); it != topics.end(); ++it) {
        std::size_t idx = 0;
        try {
          idx = static_cast<std::size_t>(std::stoul(it.key()));
        } catch (...) {
          throw InputError(where + ": unknown topic index '" + it.key() + "'");
        }
        if (idx < 1 || idx > n_topics)
          throw InputError(where + ": unknown topic index " + std::to_string(idx) + " (catalog has " +
                           std::to_string(n_topics) + " topics)");
        TopicEntry entry;
        entry.question = it.value().at("question").get<std::string>();
        entry.reply_text = it.value().at("reply_text").get<std::string>();
        if (entry.reply_text.empty())
          throw InputError(where + ": reply_text must be nonempty for topic " + std::to_string(idx));
        if (it.value().contains("audio")) entry.audio = audio_from_json(it.value().at("audio"), where);
        if (entry.question != catalog.questions[idx - 1]) {
          // question text does not match the catalog at this index: drop the entry
          ++result.dropped_topics;
          continue;
        }
        sample.topics[idx - 1] = std::move(entry);
      }
      result.samples.push_back(std::move(sample));
    } catch (const json::exception& e) {
      throw InputError(where + ": " + e.what());
    }
  }
  return result;
}

void save_dataset(const std::string& path, const std::vector<InterviewSample>& samples) {
  std::ofstream f(path);
  if (!f) throw InputError("save_dataset: cannot open '" + path + "'");
  for (const auto& sample : samples) f << sample_to_json(sample).dump() << '\n';
  if (!f) throw InputError("save_dataset: write failed for '" + path + "'");
}

TopicCatalog load_catalog(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("load_catalog: cannot open '" + path + "'");
  json j;
  try {
    f >> j;
    TopicCatalog catalog;
    catalog.questions = j.at("questions").get<std::vector<std::string>>();
    if (catalog.questions.empty()) throw InputError("load_catalog: catalog must have at least one question");
    return catalog;
  } catch (const json::exception& e) {
    throw InputError("load_catalog: '" + path + "': " + e.what());
  }
}

void save_catalog(const std::string& path, const TopicCatalog& catalog) {
  std::ofstream f(path);
  if (!f) throw InputError("save_catalog: cannot open '" + path + "'");
  json j;
  j["questions"] = catalog.questions;
  f << j.dump(2) << '\n';
}

SplitManifest load_split(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("load_split: cannot open '" + path + "'");
  json j;
  try {
    f >> j;
    SplitManifest m;
    m.train = j.at("train").get<std::vector<std::string>>();
    m.validation = j.at("validation").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    if (j.contains("excluded")) m.excluded = j.at("excluded").get<std::vector<std::string>>();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw InputError("load_split: '" + path + "': " + e.what());
  }
}

void save_split(const std::string& path, const SplitManifest& manifest) {
  manifest.validate();
  std::ofstream f(path);
  if (!f) throw InputError("save_split: cannot open '" + path + "'");
  json j;
  j["train"] = manifest.train;
  j["validation"] = manifest.validation;
  j["test"] = manifest.test;
  j["excluded"] = manifest.excluded;
  f << j.dump(2) << '\n';
}

Waveform resolve_audio(const AudioRef& ref, const std::string& dataset_root) {
  if (ref.inline_data) return *ref.inline_data;
  if (ref.path.empty()) throw InputError("resolve_audio: empty audio reference");
  const std::filesystem::path p = std::filesystem::path(dataset_root) / ref.path;
  return read_wav_pcm16(p.string());
}

std::vector<InterviewSample> oversample(const std::vector<InterviewSample>& samples, std::uint64_t seed) {
  std::vector<std::size_t> neg, pos;
  for (std::size_t i = 0; i < samples.size(); ++i) (samples[i].label == 1 ? pos : neg).push_back(i);
  if (neg.empty() || pos.empty()) throw InputError("oversample: cannot balance one class");
  Rng rng(seed, /*stream=*/4);
  std::vector<InterviewSample> out = samples;
  const auto& minority = pos.size() < neg.size() ? pos : neg;
  const std::size_t deficit =
      (pos.size() < neg.size() ? neg.size() - pos.size() : pos.size() - neg.size());
  for (std::size_t i = 0; i < deficit; ++i) {
    const std::size_t pick = minority[static_cast<std::size_t>(rng.below(minority.size()))];
    out.push_back(samples[pick]);
  }
  rng.shuffle(out);
  return out;
}

SplitSets apply_split(const std::vector<InterviewSample>& samples, const SplitManifest& manifest) {
  manifest.validate();
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < samples.size(); ++i) by_id.emplace(samples[i].participant_id, i);
  std::vector<std::string> missing;
  auto pick = [&](const std::vector<std::string>& ids) {
    std::vector<InterviewSample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        missing.push_back(id);
      } else {
        out.push_back(samples[it->second]);
      }
    }
    return out;
  };
  SplitSets sets;
  sets.train = pick(manifest.train);
  sets.validation = pick(manifest.validation);
  sets.test = pick(manifest.test);
  if (!missing.empty()) {
    std::ostringstream os;
    os << "apply_split: manifest ids absent from data:";
    for (const auto& id : missing) os << ' ' << id;
    throw InputError(os.str());
  }
  return sets;
}

SplitManifest make_ratio_manifest(std::vector<std::string> ids, std::uint64_t seed) {
  Rng rng(seed, /*stream=*/6);
  rng.shuffle(ids);
  const auto n = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * 107.0 / 186.0));
  const auto n_val = static_cast<std::size_t>(std::llround(n * 33.0 / 186.0));
  SplitManifest m;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i < n_train) m.train.push_back(ids[i]);
    else if (i < n_train + n_val) m.validation.push_back(ids[i]);
    else m.test.push_back(ids[i]);
  }
  return m;
}

void SynthSpec::validate() const {
  if (n_samples == 0) throw InputError("synth spec: n_samples must be positive");
  if (n_topics == 0) throw InputError("synth spec: n_topics must be positive");
  if (signal_topic_index < 1 || signal_topic_index > n_topics)
    throw InputError("synth spec: signal_topic_index must be in 1.." + std::to_string(n_topics));
  if (signal_strength < 0.0 || signal_strength > 1.0)
    throw InputError("synth spec: signal_strength must be in [0,1]");
  if (missing_rate < 0.0 || missing_rate > 1.0) throw InputError("synth spec: missing_rate must be in [0,1]");
  if (class_ratio < 0.0 || class_ratio > 1.0) throw InputError("synth spec: class_ratio must be in [0,1]");
  if (audio_seconds <= 0.0) throw InputError("synth spec: audio_seconds must be positive");
  if (reply_tokens < 1) throw InputError("synth spec: reply_tokens must be >= 1");
  if (sample_rate <= 0) throw InputError("synth spec: sample_rate must be positive");
}

SynthSpec parse_synth_spec_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("synth spec: cannot open '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw InputError("synth spec: '" + path + "': " + e.what());
  }
  SynthSpec spec;
  try {
    spec.n_samples = j.value("n_samples", spec.n_samples);
    spec.n_topics = j.value("n_topics", spec.n_topics);
    spec.signal_topic_index = j.value("signal_topic_index", spec.signal_topic_index);
    spec.signal_strength = j.value("signal_strength", spec.signal_strength);
    spec.missing_rate = j.value("missing_rate", spec.missing_rate);
    spec.class_ratio = j.value("class_ratio", spec.class_ratio);
    spec.seed = j.value("seed", spec.seed);
    spec.audio_seconds = j.value("audio_seconds", spec.audio_seconds);
    spec.reply_tokens = j.value("reply_tokens", spec.reply_tokens);
    spec.sample_rate = j.value("sample_rate", spec.sample_rate);
    spec.inline_audio = j.value("inline_audio", spec.inline_audio);
  } catch (const json::exception& e) {
    throw InputError("synth spec: '" + path + "': " + e.what());
  }
  spec.validate();
  return spec;
}

namespace {

const std::vector<std::string>& neutral_words() {
  static const std::vector<std::string> words = {
      "well",    "today",  "maybe",   "about",  "usually", "often", "things", "around",
      "people",  "work",   "home",    "time",   "really",  "just",  "like",   "some",
      "little",  "always", "morning", "coffee", "weather", "city",  "music",  "reading",
      "walking", "friend", "family",  "garden", "weekend", "quiet", "normal", "okay",
      "pretty",  "kind",   "sort",    "guess",  "probably", "anyway"};
  return words;
}

const std::vector<std::string>& depressed_markers() {
  static const std::vector<std::string> words = {"weary",    "hollow", "sleepless", "drained",
                                                 "heavy",    "numb",   "bleak",     "restless"};
  return words;
}

const std::vector<std::string>& nondepressed_markers() {
  static const std::vector<std::string> words = {"cheerful", "rested", "sunny",    "upbeat",
                                                 "lively",   "bright", "easygoing", "hopeful"};
  return words;
}

std::string pick_word(const std::vector<std::string>& pool, Rng& rng) {
  return pool[static_cast<std::size_t>(rng.below(pool.size()))];
}

std::string make_reply(int label, bool signal_on, int n_tokens, Rng& rng) {
  std::string reply;
  const auto& markers = label == 1 ? depressed_markers() : nondepressed_markers();
  for (int t = 0; t < n_tokens; ++t) {
    if (!reply.empty()) reply += ' ';
    // on signal, roughly half the tokens come from the class marker pool
    if (signal_on && t % 2 == 0) reply += pick_word(markers, rng);
    else reply += pick_word(neutral_words(), rng);
  }
  return reply;
}

Waveform make_reply_audio(int label, bool signal_on, const SynthSpec& spec, Rng& rng) {
  const double duration = spec.audio_seconds * (0.75 + 0.5 * rng.uniform());
  const double freq = signal_on ? (label == 1 ? 660.0 : 330.0) : rng.uniform(220.0, 880.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  Waveform wave;
  wave.sample_rate = spec.sample_rate;
  const auto n = static_cast<std::size_t>(duration * spec.sample_rate);
  wave.samples.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double x = 0.5 * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) /
                                        static_cast<double>(spec.sample_rate) +
                                    phase);
    wave.samples[t] = x + 0.02 * rng.normal();
  }
  return wave;
}

}  // namespace

std::vector<InterviewSample> synth_generate(const SynthSpec& spec, const TopicCatalog& catalog) {
  spec.validate();
  if (catalog.size() != spec.n_topics)
    throw InputError("synth_generate: catalog size " + std::to_string(catalog.size()) +
                     " does not match n_topics " + std::to_string(spec.n_topics));
  Rng rng(spec.seed, /*stream=*/5);

  // exact class counts: round(class_ratio * n) positives
  std::vector<int> labels(spec.n_samples, 0);
  const auto n_pos = static_cast<std::size_t>(std::llround(spec.class_ratio * static_cast<double>(spec.n_samples)));
  for (std::size_t i = 0; i < n_pos && i < labels.size(); ++i) labels[i] = 1;
  rng.shuffle(labels);

  std::vector<InterviewSample> samples;
  samples.reserve(spec.n_samples);
  for (std::size_t s = 0; s < spec.n_samples; ++s) {
    InterviewSample sample;
    char buf[16];
    std::snprintf(buf, sizeof buf, "p%04zu", s + 1);
    sample.participant_id = buf;
    sample.label = labels[s];
    sample.topics.resize(spec.n_topics);
    for (std::size_t i = 0; i < spec.n_topics; ++i) {
      const bool is_signal_topic = (i + 1 == spec.signal_topic_index);
      const double drop_draw = rng.uniform();
      bool missing = drop_draw < spec.missing_rate;
      if (is_signal_topic && spec.signal_strength >= 1.0) missing = false;
      const bool signal_on = is_signal_topic && rng.uniform() < spec.signal_strength;
      const int n_tokens = spec.reply_tokens + static_cast<int>(rng.below(3));
      TopicEntry entry;
      entry.question = catalog.questions[i];
      entry.reply_text = make_reply(sample.label, signal_on, n_tokens, rng);
      AudioRef audio;
      audio.inline_data = make_reply_audio(sample.label, signal_on, spec, rng);
      entry.audio = std::move(audio);
      // draws above happen unconditionally so the stream stays aligned
      if (!missing) sample.topics[i] = std::move(entry);
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::vector<InterviewSample> write_synth_dataset(const SynthSpec& spec, const std::string& out_dir) {
  const TopicCatalog catalog = generic_catalog(spec.n_topics);
  std::vector<InterviewSample> samples = synth_generate(spec, catalog);

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  if (!spec.inline_audio) {
    fs::create_directories(fs::path(out_dir) / "audio");
    for (auto& sample : samples) {
      for (std::size_t i = 0; i < sample.topics.size(); ++i) {
        if (!sample.topics[i] || !sample.topics[i]->audio) continue;
        AudioRef& ref = *sample.topics[i]->audio;
        char buf[32];
        std::snprintf(buf, sizeof buf, "audio/%s_q%02zu.wav", sample.participant_id.c_str(), i + 1);
        write_wav_pcm16((fs::path(out_dir) / buf).string(), *ref.inline_data);
        ref.path = buf;
        ref.inline_data.reset();
      }
    }
  }

  save_catalog((fs::path(out_dir) / "catalog.json").string(), catalog);
  save_dataset((fs::path(out_dir) / "dataset.jsonl").string(), samples);
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.participant_id);
  save_split((fs::path(out_dir) / "split.json").string(), make_ratio_manifest(std::move(ids), spec.seed));
  return samples;
}

}  // namespace toat
