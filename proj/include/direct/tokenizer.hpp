#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "direct/common.hpp"
#include "direct/corpus.hpp"

namespace direct {

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";

class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
    for (auto special : {kUnkToken, kClsToken, kSepToken})
      if (!ids_.count(std::string(special)))
        throw DataError("vocabulary lacks special token " + std::string(special));
    unk_ = ids_.at(std::string(kUnkToken));
    cls_ = ids_.at(std::string(kClsToken));
    sep_ = ids_.at(std::string(kSepToken));
  }

  /// Special tokens first, then every distinct corpus token in first-seen order.
  static Vocabulary from_corpus(const Corpus& corpus) {
    std::vector<std::string> tokens{std::string(kPadToken), std::string(kUnkToken), std::string(kClsToken),
                                    std::string(kSepToken)};
    std::unordered_map<std::string, int> seen;
    for (auto& t : tokens) seen.emplace(t, 0);
    auto add = [&](const std::string& w) {
      if (seen.emplace(w, 0).second) tokens.push_back(w);
    };
    for (auto& r : corpus.records) {
      for (auto& t : r.sentence.tokens) add(t.surface);
      for (auto& t : r.triples) {
        for (auto& w : split_words(t.subject.text)) add(w);
        for (auto& w : split_words(t.object.text)) add(w);
      }
    }
    return Vocabulary(std::move(tokens));
  }

  /// One token per line (the BERT vocab.txt layout).
  static Vocabulary parse(std::string_view content) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < content.size()) {
      auto j = content.find('\n', i);
      if (j == std::string_view::npos) j = content.size();
      auto line = content.substr(i, j - i);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      tokens.emplace_back(line);
      i = j + 1;
    }
    while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
    return Vocabulary(std::move(tokens));
  }

  static Vocabulary load(const std::string& path) { return parse(read_file(path)); }

  std::string serialize() const {
    std::string out;
    for (auto& t : tokens_) {
      out += t;
      out += '\n';
    }
    return out;
  }

  int id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? unk_ : it->second;
  }
  bool contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  int unk_id() const { return unk_; }
  int cls_id() const { return cls_; }
  int sep_id() const { return sep_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int unk_ = 0, cls_ = 0, sep_ = 0;
};

enum class TokenizerKind : std::uint8_t { kWholeWord, kWordPiece };

/// Maps one sentence word to encoder token ids. Whole-word mode is the
/// compact backend's tokenizer; word-piece mode follows the cased BERT
/// basic tokenizer (punctuation split, no lower-casing) plus greedy
/// longest-match-first subword segmentation.
class SubwordTokenizer {
 public:
  SubwordTokenizer() = default;
  SubwordTokenizer(Vocabulary vocab, TokenizerKind kind) : vocab_(std::move(vocab)), kind_(kind) {}

  const Vocabulary& vocab() const { return vocab_; }
  TokenizerKind kind() const { return kind_; }

  std::vector<int> word_ids(std::string_view word) const {
    std::vector<int> ids;
    if (kind_ == TokenizerKind::kWholeWord) {
      ids.push_back(vocab_.id(word));
      return ids;
    }
    for (auto& piece : split_punctuation(word)) word_piece(piece, ids);
    if (ids.empty()) ids.push_back(vocab_.unk_id());
    return ids;
  }

  /// Token ids for an entity or sentence string split on whitespace.
  std::vector<int> text_ids(std::string_view text) const {
    std::vector<int> ids;
    for (auto& w : split_words(text)) {
      auto p = word_ids(w);
      ids.insert(ids.end(), p.begin(), p.end());
    }
    return ids;
  }

  static bool is_punctuation(unsigned char c) {
    return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
  }

  static std::vector<std::string> split_punctuation(std::string_view word) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : word) {
      auto c = static_cast<unsigned char>(ch);
      if (is_punctuation(c)) {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
        out.emplace_back(1, ch);
      } else {
        cur += ch;
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }

 private:
  static std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xe) return 3;
    if ((lead >> 3) == 0x1e) return 4;
    return 1;
  }

  void word_piece(std::string_view word, std::vector<int>& out) const {
    // Character boundaries (UTF-8 code points).
    std::vector<std::size_t> bounds{0};
    for (std::size_t i = 0; i < word.size();) {
      i = std::min(word.size(), i + utf8_length(static_cast<unsigned char>(word[i])));
      bounds.push_back(i);
    }
    if (bounds.size() - 1 > 100) {
      out.push_back(vocab_.unk_id());
      return;
    }
    std::vector<int> pieces;
    std::size_t start = 0;
    while (start + 1 < bounds.size()) {
      std::size_t end = bounds.size() - 1;
      int found = -1;
      for (; end > start; --end) {
        std::string candidate(word.substr(bounds[start], bounds[end] - bounds[start]));
        if (start > 0) candidate = "##" + candidate;
        if (vocab_.contains(candidate)) {
          found = vocab_.id(candidate);
          break;
        }
      }
      if (found < 0) {
        out.push_back(vocab_.unk_id());
        return;
      }
      pieces.push_back(found);
      start = end;
    }
    out.insert(out.end(), pieces.begin(), pieces.end());
  }

  Vocabulary vocab_;
  TokenizerKind kind_ = TokenizerKind::kWholeWord;
};

}  // namespace direct
