#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "toat/wav.hpp"

namespace toat {

// Pre-defined interview questions; index i in 1..N addresses entries[i-1].
struct TopicCatalog {
  std::vector<std::string> questions;
  std::size_t size() const { return questions.size(); }
};

// The ten stock interview questions used when no catalog is supplied.
TopicCatalog default_catalog();
// Generic catalog of n placeholder questions (used by the synthesizer for n != 10).
TopicCatalog generic_catalog(std::size_t n);

// Reply audio either referenced by path (relative to the dataset root) or
// held inline.
struct AudioRef {
  std::string path;                      // empty when inline
  std::optional<Waveform> inline_data;
};

struct TopicEntry {
  std::string question;
  std::string reply_text;
  std::optional<AudioRef> audio;
};

struct InterviewSample {
  std::string participant_id;
  int label = 0;  // 0 = non-depressed, 1 = depressed
  std::vector<std::optional<TopicEntry>> topics;  // length = catalog size
};

struct SplitManifest {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::vector<std::string> excluded;

  // throws InputError when lists overlap or excluded ids appear in a split
  void validate() const;
};

struct LoadResult {
  std::vector<InterviewSample> samples;
  std::size_t dropped_topics = 0;  // entries whose question text did not match the catalog
};

// One JSON object per line; topics keyed by 1-based catalog index.
LoadResult load_dataset(const std::string& path, const TopicCatalog& catalog);
void save_dataset(const std::string& path, const std::vector<InterviewSample>& samples);

TopicCatalog load_catalog(const std::string& path);
void save_catalog(const std::string& path, const TopicCatalog& catalog);

SplitManifest load_split(const std::string& path);
void save_split(const std::string& path, const SplitManifest& manifest);

Waveform resolve_audio(const AudioRef& ref, const std::string& dataset_root);

// Duplicates minority-class samples uniformly at random (with replacement)
// until the classes are equal, then shuffles; deterministic per seed.
std::vector<InterviewSample> oversample(const std::vector<InterviewSample>& samples, std::uint64_t seed);

struct SplitSets {
  std::vector<InterviewSample> train;
  std::vector<InterviewSample> validation;
  std::vector<InterviewSample> test;
};

SplitSets apply_split(const std::vector<InterviewSample>& samples, const SplitManifest& manifest);

// train/validation/test id lists in 107/33/46 proportions of the input;
// ids are shuffled by seed first
SplitManifest make_ratio_manifest(std::vector<std::string> ids, std::uint64_t seed);

struct SynthSpec {
  std::size_t n_samples = 200;
  std::size_t n_topics = 10;
  std::size_t signal_topic_index = 3;  // 1-based
  double signal_strength = 1.0;
  double missing_rate = 0.0;
  double class_ratio = 0.3;
  std::uint64_t seed = 0;
  // extras beyond the required fields
  double audio_seconds = 0.05;  // nominal reply duration per topic
  int reply_tokens = 6;
  int sample_rate = 16000;
  bool inline_audio = false;  // keep waveforms inline instead of writing WAVs

  // throws InputError naming the offending field
  void validate() const;
};

SynthSpec parse_synth_spec_file(const std::string& path);

// In-memory generation with inline audio; deterministic per spec.seed.
// The designated topic's reply text and tone differ by class with
// separation controlled by signal_strength; other topics are
// class-independent.
std::vector<InterviewSample> synth_generate(const SynthSpec& spec, const TopicCatalog& catalog);

// Writes dataset.jsonl, catalog.json, split.json and (unless inline_audio)
// audio/*.wav under out_dir. Returns the generated samples.
std::vector<InterviewSample> write_synth_dataset(const SynthSpec& spec, const std::string& out_dir);

}  // namespace toat
