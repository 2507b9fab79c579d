#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace toat {

// lowercase, split on whitespace and punctuation
std::vector<std::string> tokenize_words(const std::string& text);

// Word vocabulary with reserved special ids. Built from the training split;
// unseen words map to kUnk.
class Vocabulary {
 public:
  static constexpr int kCls = 0;
  static constexpr int kSep = 1;
  static constexpr int kPad = 2;
  static constexpr int kUnk = 3;
  static constexpr int kFirstWord = 4;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  void add(const std::string& word);
  int id(const std::string& word) const;
  int size() const { return kFirstWord + static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// [CLS] question [SEP] reply [SEP]; the reply is tail-truncated to
// max_reply_tokens and the whole sequence to max_seq_len (final SEP kept)
std::vector<int> encode_topic_sequence(const Vocabulary& vocab, const std::string& question,
                                       const std::string& reply, int max_reply_tokens, int max_seq_len);

}  // namespace toat
