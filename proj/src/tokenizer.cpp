#include "toat/tokenizer.hpp"

#include <cctype>
#include <stdexcept>

namespace toat {

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  for (auto& w : words) add(w);
}

void Vocabulary::add(const std::string& word) {
  if (index_.count(word)) return;
  index_.emplace(word, kFirstWord + static_cast<int>(words_.size()));
  words_.push_back(word);
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> encode_topic_sequence(const Vocabulary& vocab, const std::string& question,
                                       const std::string& reply, int max_reply_tokens, int max_seq_len) {
  if (max_seq_len < 3) throw std::invalid_argument("encode_topic_sequence: max_seq_len must be >= 3");
  std::vector<int> ids;
  ids.push_back(Vocabulary::kCls);
  for (const auto& w : tokenize_words(question)) ids.push_back(vocab.id(w));
  ids.push_back(Vocabulary::kSep);
  auto reply_words = tokenize_words(reply);
  if (static_cast<int>(reply_words.size()) > max_reply_tokens)
    reply_words.resize(static_cast<std::size_t>(max_reply_tokens));
  for (const auto& w : reply_words) ids.push_back(vocab.id(w));
  ids.push_back(Vocabulary::kSep);
  if (static_cast<int>(ids.size()) > max_seq_len) {
    ids.resize(static_cast<std::size_t>(max_seq_len));
    ids.back() = Vocabulary::kSep;
  }
  return ids;
}

}  // namespace toat
