#pragma once

// Task-specific input assembly:
//   subject  : [CLS] x [SEP]
//   object   : [CLS] s [SEP] x [SEP]
//   relation : [CLS] s [SEP] o [SEP] x [SEP]
// where s and o are entity surface strings and x is the sentence. Token
// types are always 0.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "direct/common.hpp"
#include "direct/corpus.hpp"
#include "direct/tokenizer.hpp"

namespace direct {

inline constexpr std::size_t kDefaultMaxLength = 128;

struct AssembledInput {
  Task task = Task::kSubject;
  std::vector<int> ids;
  std::vector<int> word_of;  // sentence token index per position, -1 outside x
  std::size_t sentence_begin = 0;
  std::size_t sentence_end = 0;  // exclusive
  std::size_t sentence_words = 0;  // words of x that survived truncation
  bool truncated = false;

  std::size_t size() const { return ids.size(); }
  std::vector<int> token_types() const { return std::vector<int>(ids.size(), 0); }

  std::vector<bool> sentence_mask() const {
    std::vector<bool> m(ids.size(), false);
    for (std::size_t i = sentence_begin; i < sentence_end; ++i) m[i] = true;
    return m;
  }

  std::optional<std::size_t> first_position(int word) const {
    for (std::size_t i = sentence_begin; i < sentence_end; ++i)
      if (word_of[i] == word) return i;
    return std::nullopt;
  }

  std::optional<std::size_t> last_position(int word) const {
    for (std::size_t i = sentence_end; i > sentence_begin; --i)
      if (word_of[i - 1] == word) return i - 1;
    return std::nullopt;
  }

  bool operator==(const AssembledInput&) const = default;
};

class InputAssembler {
 public:
  InputAssembler() = default;
  explicit InputAssembler(SubwordTokenizer tokenizer, std::size_t max_length = kDefaultMaxLength)
      : tokenizer_(std::move(tokenizer)), max_length_(max_length) {
    if (max_length_ < 8) throw UsageError("max sequence length must be at least 8");
  }

  const SubwordTokenizer& tokenizer() const { return tokenizer_; }
  std::size_t max_length() const { return max_length_; }

  AssembledInput assemble_s(const Sentence& x) const { return assemble(Task::kSubject, {}, x); }

  AssembledInput assemble_o(std::string_view subject, const Sentence& x) const {
    if (split_words(subject).empty()) throw DataError("empty subject string");
    return assemble(Task::kObject, {tokenizer_.text_ids(subject)}, x);
  }

  AssembledInput assemble_r(std::string_view subject, std::string_view object, const Sentence& x) const {
    if (split_words(subject).empty()) throw DataError("empty subject string");
    if (split_words(object).empty()) throw DataError("empty object string");
    return assemble(Task::kRelation, {tokenizer_.text_ids(subject), tokenizer_.text_ids(object)}, x);
  }

 private:
  AssembledInput assemble(Task task, std::vector<std::vector<int>> prefix, const Sentence& x) const {
    if (x.tokens.empty()) throw DataError("cannot assemble input for empty sentence '" + x.id + "'");
    std::vector<std::vector<int>> words;
    words.reserve(x.tokens.size());
    std::size_t sentence_pieces = 0;
    for (auto& t : x.tokens) {
      words.push_back(tokenizer_.word_ids(t.surface));
      sentence_pieces += words.back().size();
    }

    AssembledInput in;
    in.task = task;
    const std::size_t markers = 2 + prefix.size();
    const std::size_t budget = max_length_ - markers;
    auto prefix_len = [&] {
      std::size_t n = 0;
      for (auto& p : prefix) n += p.size();
      return n;
    };

    // Entity segments shrink first (longest first, never below one piece),
    // then the sentence loses words from the right.
    while (prefix_len() + sentence_pieces > budget) {
      auto longest = std::max_element(prefix.begin(), prefix.end(),
                                      [](auto& a, auto& b) { return a.size() < b.size(); });
      if (longest == prefix.end() || longest->size() <= 1) break;
      longest->pop_back();
      in.truncated = true;
    }
    std::size_t keep_words = words.size();
    while (prefix_len() + sentence_pieces > budget && keep_words > 0) {
      sentence_pieces -= words[--keep_words].size();
      in.truncated = true;
    }
    if (keep_words == 0) throw DataError("sentence '" + x.id + "' has no room after truncation");

    auto push = [&](int id, int word) {
      in.ids.push_back(id);
      in.word_of.push_back(word);
    };
    const auto& vocab = tokenizer_.vocab();
    push(vocab.cls_id(), -1);
    for (auto& seg : prefix) {
      for (int id : seg) push(id, -1);
      push(vocab.sep_id(), -1);
    }
    in.sentence_begin = in.ids.size();
    for (std::size_t w = 0; w < keep_words; ++w)
      for (int id : words[w]) push(id, static_cast<int>(w));
    in.sentence_end = in.ids.size();
    in.sentence_words = keep_words;
    push(vocab.sep_id(), -1);
    return in;
  }

  SubwordTokenizer tokenizer_;
  std::size_t max_length_ = kDefaultMaxLength;
};

}  // namespace direct
