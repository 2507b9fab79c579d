#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "toat/data.hpp"
#include "toat/errors.hpp"
#include "toat/tokenizer.hpp"

using namespace toat;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& tag) {
  static int counter = 0;
  const fs::path dir =
      fs::temp_directory_path() / ("toat_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                                   std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::multiset<std::string> id_multiset(const std::vector<InterviewSample>& samples) {
  std::multiset<std::string> out;
  for (const auto& s : samples) out.insert(s.participant_id);
  return out;
}

InterviewSample tiny_sample(const TopicCatalog& catalog, const std::string& id, int label) {
  InterviewSample s;
  s.participant_id = id;
  s.label = label;
  s.topics.resize(catalog.size());
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    TopicEntry e;
    e.question = catalog.questions[i];
    e.reply_text = "reply for " + id;
    s.topics[i] = e;
  }
  return s;
}

}  // namespace

TEST_CASE("tokenizer lowercases and splits on whitespace and punctuation") {
  const auto words = tokenize_words("What'd you STUDY, at school?");
  CHECK(words == std::vector<std::string>{"what", "d", "you", "study", "at", "school"});

  Vocabulary vocab;
  vocab.add("study");
  vocab.add("school");
  CHECK(vocab.id("study") == Vocabulary::kFirstWord);
  CHECK(vocab.id("never-seen") == Vocabulary::kUnk);
  CHECK(Vocabulary::kCls == 0);
  CHECK(Vocabulary::kSep == 1);
  CHECK(Vocabulary::kPad == 2);

  const auto ids = encode_topic_sequence(vocab, "study school", "study study school", 64, 96);
  CHECK(ids.front() == Vocabulary::kCls);
  CHECK(ids.back() == Vocabulary::kSep);
  CHECK(ids[3] == Vocabulary::kSep);  // question/reply separator

  // reply tail truncation
  const auto truncated = encode_topic_sequence(vocab, "q", "a b c d e f", 3, 96);
  CHECK(truncated.size() == 1 + 1 + 1 + 3 + 1);
}

TEST_CASE("wav roundtrip") {
  const fs::path dir = make_temp_dir("wav");
  Waveform wave;
  wave.sample_rate = 16000;
  for (int i = 0; i < 1000; ++i) wave.samples.push_back(0.25 * std::sin(0.01 * i));
  const std::string path = (dir / "a.wav").string();
  write_wav_pcm16(path, wave);
  const Waveform back = read_wav_pcm16(path);
  REQUIRE(back.samples.size() == wave.samples.size());
  CHECK(back.sample_rate == 16000);
  for (std::size_t i = 0; i < back.samples.size(); ++i)
    CHECK(std::abs(back.samples[i] - wave.samples[i]) <= 1.0 / 32767.0);
  CHECK_THROWS_AS(read_wav_pcm16((dir / "missing.wav").string()), InputError);
  fs::remove_all(dir);
}

TEST_CASE("dataset load/save roundtrip is lossless for schema fields") {
  const fs::path dir = make_temp_dir("roundtrip");
  SynthSpec spec;
  spec.n_samples = 12;
  spec.n_topics = 4;
  spec.signal_topic_index = 2;
  spec.missing_rate = 0.3;
  spec.audio_seconds = 0.01;
  spec.inline_audio = true;
  const TopicCatalog catalog = generic_catalog(4);
  const auto samples = synth_generate(spec, catalog);

  const std::string path = (dir / "ds.jsonl").string();
  save_dataset(path, samples);
  const LoadResult loaded = load_dataset(path, catalog);
  CHECK(loaded.dropped_topics == 0);
  REQUIRE(loaded.samples.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(loaded.samples[i].participant_id == samples[i].participant_id);
    CHECK(loaded.samples[i].label == samples[i].label);
    REQUIRE(loaded.samples[i].topics.size() == samples[i].topics.size());
    for (std::size_t t = 0; t < samples[i].topics.size(); ++t) {
      CHECK(loaded.samples[i].topics[t].has_value() == samples[i].topics[t].has_value());
      if (!samples[i].topics[t]) continue;
      CHECK(loaded.samples[i].topics[t]->question == samples[i].topics[t]->question);
      CHECK(loaded.samples[i].topics[t]->reply_text == samples[i].topics[t]->reply_text);
      REQUIRE(loaded.samples[i].topics[t]->audio.has_value());
      const auto& a = *loaded.samples[i].topics[t]->audio;
      const auto& b = *samples[i].topics[t]->audio;
      REQUIRE(a.inline_data.has_value());
      CHECK(a.inline_data->samples == b.inline_data->samples);
    }
  }

  // save again: byte-identical (serialization is canonical)
  const std::string path2 = (dir / "ds2.jsonl").string();
  save_dataset(path2, loaded.samples);
  CHECK(slurp(path) == slurp(path2));
  fs::remove_all(dir);
}

TEST_CASE("dataset loader edge cases") {
  const fs::path dir = make_temp_dir("loader");
  const TopicCatalog catalog = default_catalog();

  // record with all ten topics, one missing Q5
  {
    std::ofstream f(dir / "ok.jsonl");
    nlohmann::json topics = nlohmann::json::object();
    for (std::size_t i = 1; i <= 10; ++i) {
      if (i == 5) continue;
      topics[std::to_string(i)] = {{"question", catalog.questions[i - 1]}, {"reply_text", "fine"}};
    }
    f << nlohmann::json{{"participant_id", "p1"}, {"label", 0}, {"topics", topics}} << "\n";
  }
  const LoadResult ok = load_dataset((dir / "ok.jsonl").string(), catalog);
  REQUIRE(ok.samples.size() == 1);
  CHECK(std::count_if(ok.samples[0].topics.begin(), ok.samples[0].topics.end(),
                      [](const auto& t) { return t.has_value(); }) == 9);
  CHECK(!ok.samples[0].topics[4].has_value());  // Q5 marked absent

  // empty file -> empty list
  { std::ofstream f(dir / "empty.jsonl"); }
  CHECK(load_dataset((dir / "empty.jsonl").string(), catalog).samples.empty());

  // malformed record names the line
  {
    std::ofstream f(dir / "bad.jsonl");
    f << "{\"participant_id\": \"p1\", \"label\": 0, \"topics\": {}}\n";
    f << "this is not json\n";
  }
  try {
    load_dataset((dir / "bad.jsonl").string(), catalog);
    FAIL("expected parse error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  // unknown topic index
  {
    std::ofstream f(dir / "idx.jsonl");
    nlohmann::json topics = {{"11", {{"question", "?"}, {"reply_text", "x"}}}};
    f << nlohmann::json{{"participant_id", "p1"}, {"label", 0}, {"topics", topics}} << "\n";
  }
  CHECK_THROWS_AS(load_dataset((dir / "idx.jsonl").string(), catalog), InputError);

  // question text mismatch: entry dropped, warning counted
  {
    std::ofstream f(dir / "mismatch.jsonl");
    nlohmann::json topics = {{"1", {{"question", "Some other question?"}, {"reply_text", "x"}}},
                             {"2", {{"question", catalog.questions[1]}, {"reply_text", "y"}}}};
    f << nlohmann::json{{"participant_id", "p1"}, {"label", 1}, {"topics", topics}} << "\n";
  }
  const LoadResult mismatch = load_dataset((dir / "mismatch.jsonl").string(), catalog);
  CHECK(mismatch.dropped_topics == 1);
  CHECK(!mismatch.samples[0].topics[0].has_value());
  CHECK(mismatch.samples[0].topics[1].has_value());
  fs::remove_all(dir);
}

TEST_CASE("oversample balances classes") {
  const TopicCatalog catalog = generic_catalog(2);
  std::vector<InterviewSample> samples;
  for (int i = 0; i < 5; ++i) samples.push_back(tiny_sample(catalog, "n" + std::to_string(i), 0));
  for (int i = 0; i < 2; ++i) samples.push_back(tiny_sample(catalog, "p" + std::to_string(i), 1));

  const auto balanced = oversample(samples, 0);
  std::size_t n0 = 0, n1 = 0;
  for (const auto& s : balanced) (s.label == 1 ? n1 : n0)++;
  CHECK(n0 == 5);
  CHECK(n1 == 5);

  // every output element is a member of the input multiset
  const auto input_ids = id_multiset(samples);
  for (const auto& s : balanced) CHECK(input_ids.count(s.participant_id) > 0);

  // already balanced input: unchanged as a multiset
  std::vector<InterviewSample> even;
  for (int i = 0; i < 3; ++i) even.push_back(tiny_sample(catalog, "n" + std::to_string(i), 0));
  for (int i = 0; i < 3; ++i) even.push_back(tiny_sample(catalog, "p" + std::to_string(i), 1));
  CHECK(id_multiset(oversample(even, 1)) == id_multiset(even));

  // determinism
  const auto again = oversample(samples, 0);
  REQUIRE(again.size() == balanced.size());
  for (std::size_t i = 0; i < again.size(); ++i)
    CHECK(again[i].participant_id == balanced[i].participant_id);

  // single class rejected
  std::vector<InterviewSample> one_class = {tiny_sample(catalog, "a", 0), tiny_sample(catalog, "b", 0)};
  CHECK_THROWS_WITH_AS(oversample(one_class, 0), "oversample: cannot balance one class", InputError);
}

TEST_CASE("synth generator contracts") {
  SynthSpec spec;
  spec.n_samples = 100;
  spec.n_topics = 5;
  spec.signal_topic_index = 2;
  spec.missing_rate = 0.0;
  spec.class_ratio = 0.3;
  spec.audio_seconds = 0.005;
  spec.inline_audio = true;
  const TopicCatalog catalog = generic_catalog(5);
  const auto samples = synth_generate(spec, catalog);
  REQUIRE(samples.size() == 100);

  // missing_rate 0: every topic present
  for (const auto& s : samples)
    for (const auto& t : s.topics) CHECK(t.has_value());

  // positive fraction within 1/n of the requested ratio (counts are exact)
  std::size_t positives = 0;
  for (const auto& s : samples) positives += s.label;
  CHECK(positives == 30);

  // signal topic never dropped at full strength even with heavy missingness
  SynthSpec dropping = spec;
  dropping.missing_rate = 0.9;
  dropping.signal_strength = 1.0;
  for (const auto& s : synth_generate(dropping, catalog))
    CHECK(s.topics[1].has_value());

  // invalid fields name themselves
  SynthSpec bad = spec;
  bad.signal_topic_index = 9;
  try {
    bad.validate();
    FAIL("expected validation error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("signal_topic_index") != std::string::npos);
  }
}

TEST_CASE("synth dataset files are byte-identical across runs") {
  SynthSpec spec;
  spec.n_samples = 8;
  spec.n_topics = 3;
  spec.signal_topic_index = 1;
  spec.audio_seconds = 0.01;
  spec.seed = 42;
  const fs::path a = make_temp_dir("syntha");
  const fs::path b = make_temp_dir("synthb");
  write_synth_dataset(spec, a.string());
  write_synth_dataset(spec, b.string());
  CHECK(slurp(a / "dataset.jsonl") == slurp(b / "dataset.jsonl"));
  CHECK(slurp(a / "split.json") == slurp(b / "split.json"));
  CHECK(slurp(a / "catalog.json") == slurp(b / "catalog.json"));
  CHECK(slurp(a / "audio" / "p0001_q01.wav") == slurp(b / "audio" / "p0001_q01.wav"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("apply_split and manifests") {
  const TopicCatalog catalog = generic_catalog(2);
  std::vector<InterviewSample> samples;
  for (const char* id : {"a", "b", "c", "d"}) samples.push_back(tiny_sample(catalog, id, 0));

  SplitManifest manifest;
  manifest.train = {"a"};
  manifest.validation = {"b"};
  manifest.test = {"c"};
  manifest.excluded = {"d"};
  const SplitSets sets = apply_split(samples, manifest);
  REQUIRE(sets.train.size() == 1);
  CHECK(sets.train[0].participant_id == "a");
  CHECK(sets.validation[0].participant_id == "b");
  CHECK(sets.test[0].participant_id == "c");

  // manifest id absent from data: error listing the ids
  SplitManifest missing = manifest;
  missing.train.push_back("zz");
  try {
    apply_split(samples, missing);
    FAIL("expected error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("zz") != std::string::npos);
  }

  // overlapping lists rejected at validation
  SplitManifest overlap = manifest;
  overlap.test.push_back("a");
  CHECK_THROWS_AS(overlap.validate(), InputError);

  // the stock split proportions reproduce 107/33/46 at 186 ids
  std::vector<std::string> ids;
  for (int i = 0; i < 186; ++i) ids.push_back("p" + std::to_string(i));
  const SplitManifest paper_shaped = make_ratio_manifest(ids, 0);
  CHECK(paper_shaped.train.size() == 107);
  CHECK(paper_shaped.validation.size() == 33);
  CHECK(paper_shaped.test.size() == 46);
  paper_shaped.validate();
}
