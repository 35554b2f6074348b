#pragma once

// Triple-annotated corpora: domain types, ingestion of the public NYT/WebNLG
// release format, entity-to-token alignment, overlap classes, statistics and
// the canonical JSON-lines format.

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "direct/common.hpp"

namespace direct {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

struct Token {
  int index = 0;
  std::string surface;
  int char_start = 0;  // [char_start, char_end) into Sentence::text
  int char_end = 0;

  bool operator==(const Token&) const = default;
};

struct Sentence {
  std::string id;
  std::string text;
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }

  // Raw text covering tokens [first, last] inclusive.
  std::string surface(int first, int last) const {
    auto b = static_cast<std::size_t>(tokens.at(static_cast<std::size_t>(first)).char_start);
    auto e = static_cast<std::size_t>(tokens.at(static_cast<std::size_t>(last)).char_end);
    return text.substr(b, e - b);
  }

  bool operator==(const Sentence&) const = default;
};

/// Inclusive token span.
struct TokenSpan {
  int start = 0;
  int end = 0;

  auto operator<=>(const TokenSpan&) const = default;
};

struct Entity {
  std::string text;
  std::vector<TokenSpan> spans;  // every exact match in the sentence; empty if unaligned

  bool aligned() const { return !spans.empty(); }
  bool operator==(const Entity&) const = default;
};

struct RelationalTriplet {
  Entity subject;
  std::string relation;
  Entity object;

  bool operator==(const RelationalTriplet&) const = default;
};

/// Surface-level identity of a triplet: (subject, relation, object).
using TripleKey = std::tuple<std::string, std::string, std::string>;

inline TripleKey key_of(const RelationalTriplet& t) {
  return {t.subject.text, t.relation, t.object.text};
}

class RelationSchema {
 public:
  RelationSchema() = default;

  explicit RelationSchema(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) throw DataError("relation schema must contain at least one label");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (!index_.emplace(labels_[i], i).second)
        throw DataError("duplicate relation label '" + labels_[i] + "'");
    }
  }

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }

  std::optional<std::size_t> index_of(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const RelationSchema& o) const { return labels_ == o.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct OverlapFlags {
  bool normal = false;
  bool epo = false;
  bool seo = false;
  bool empty_input = false;  // warning status: no triplets to classify

  bool operator==(const OverlapFlags&) const = default;
};

struct AnnotatedSentence {
  Sentence sentence;
  std::vector<RelationalTriplet> triples;

  bool operator==(const AnnotatedSentence&) const = default;
};

struct Corpus {
  std::vector<AnnotatedSentence> records;
  std::size_t unaligned_entities = 0;  // entity mentions with no token match
  std::size_t unaligned_triples = 0;   // triplets excluded from training targets

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  bool operator==(const Corpus& o) const { return records == o.records; }
};

// ---------------------------------------------------------------------------
// Tokenization and alignment

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

/// Whitespace tokenizer: the word-level tokenizer that defines Sentence
/// tokens. Subword segmentation happens later in the encoding layer.
inline std::vector<Token> whitespace_tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    out.push_back(Token{static_cast<int>(out.size()), std::string(text.substr(i, j - i)),
                        static_cast<int>(i), static_cast<int>(j)});
    i = j;
  }
  return out;
}

inline Sentence make_sentence(std::string id, std::string text) {
  Sentence s;
  s.id = std::move(id);
  s.tokens = whitespace_tokenize(text);
  s.text = std::move(text);
  return s;
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : whitespace_tokenize(text)) out.push_back(std::move(t.surface));
  return out;
}

/// First whitespace token of an entity string; the partial-match key.
inline std::string head_token(std::string_view entity) {
  auto words = whitespace_tokenize(entity);
  return words.empty() ? std::string() : words.front().surface;
}

/// Every exact token-subsequence match of `entity` in the sentence.
inline std::vector<TokenSpan> align_entity(const Sentence& sentence, std::string_view entity) {
  std::vector<TokenSpan> spans;
  auto words = split_words(entity);
  if (words.empty() || words.size() > sentence.tokens.size()) return spans;
  const std::size_t n = sentence.tokens.size(), m = words.size();
  for (std::size_t i = 0; i + m <= n; ++i) {
    bool match = true;
    for (std::size_t k = 0; k < m && match; ++k) match = sentence.tokens[i + k].surface == words[k];
    if (match) spans.push_back({static_cast<int>(i), static_cast<int>(i + m - 1)});
  }
  return spans;
}

inline RelationalTriplet make_triplet(const Sentence& s, std::string subject, std::string relation,
                                      std::string object) {
  RelationalTriplet t;
  t.subject.spans = align_entity(s, subject);
  t.subject.text = std::move(subject);
  t.relation = std::move(relation);
  t.object.spans = align_entity(s, object);
  t.object.text = std::move(object);
  return t;
}

inline bool trainable(const RelationalTriplet& t) { return t.subject.aligned() && t.object.aligned(); }

// ---------------------------------------------------------------------------
// Schema files

/// Accepts a plain JSON array of labels, {"relations": [...]}, or the
/// two-element [id2rel, rel2id] layout shipped with the public releases.
inline RelationSchema parse_schema(const json& j) {
  std::vector<std::string> labels;
  if (j.is_array() && j.size() == 2 && j[0].is_object() && j[1].is_object()) {
    std::map<long, std::string> by_id;
    for (auto& [k, v] : j[0].items()) by_id.emplace(std::stol(k), v.get<std::string>());
    for (auto& [id, label] : by_id) labels.push_back(label);
  } else if (j.is_array()) {
    for (auto& v : j) labels.push_back(v.get<std::string>());
  } else if (j.is_object() && j.contains("relations")) {
    for (auto& v : j["relations"]) labels.push_back(v.get<std::string>());
  } else {
    throw DataError("unrecognized relation schema layout");
  }
  return RelationSchema(std::move(labels));
}

inline RelationSchema load_schema(const std::string& path) {
  try {
    return parse_schema(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw DataError("schema '" + path + "': " + e.what());
  }
}

inline json schema_to_json(const RelationSchema& s) { return json(s.labels()); }

/// Sorted set of relation labels used in a corpus.
inline RelationSchema schema_from_corpus(const Corpus& c) {
  std::set<std::string> labels;
  for (auto& r : c.records)
    for (auto& t : r.triples) labels.insert(t.relation);
  if (labels.empty()) throw DataError("cannot derive a relation schema from a corpus with no triplets");
  return RelationSchema(std::vector<std::string>(labels.begin(), labels.end()));
}

// ---------------------------------------------------------------------------
// Ingestion of the release format: [{"text": ..., "triple_list": [[s, r, o], ...]}, ...]
// (a JSON array, or one such object per line).

namespace detail {

inline void check_label(const RelationSchema* schema, const std::string& label) {
  if (schema && !schema->index_of(label))
    throw DataError("unknown relation label '" + label + "'");
}

inline AnnotatedSentence parse_release_record(const json& rec, std::size_t index,
                                              const RelationSchema* schema, Corpus& corpus) {
  auto fail = [&](const std::string& why) {
    return DataError("malformed record " + std::to_string(index) + ": " + why);
  };
  if (!rec.is_object()) throw fail("expected an object");
  auto text_it = rec.find("text");
  if (text_it == rec.end() || !text_it->is_string()) throw fail("missing string field 'text'");
  auto list_it = rec.find("triple_list");
  if (list_it == rec.end()) list_it = rec.find("triples");
  if (list_it == rec.end() || !list_it->is_array()) throw fail("missing array field 'triple_list'");

  AnnotatedSentence out;
  std::string id = rec.contains("id") && rec["id"].is_string() ? rec["id"].get<std::string>()
                                                               : std::to_string(index);
  out.sentence = make_sentence(std::move(id), text_it->get<std::string>());
  for (auto& tr : *list_it) {
    if (!tr.is_array() || tr.size() != 3 || !tr[0].is_string() || !tr[1].is_string() || !tr[2].is_string())
      throw fail("triple must be [subject, relation, object] strings");
    auto relation = tr[1].get<std::string>();
    check_label(schema, relation);
    auto t = make_triplet(out.sentence, tr[0].get<std::string>(), std::move(relation), tr[2].get<std::string>());
    corpus.unaligned_entities += !t.subject.aligned();
    corpus.unaligned_entities += !t.object.aligned();
    corpus.unaligned_triples += !trainable(t);
    out.triples.push_back(std::move(t));
  }
  return out;
}

inline bool starts_with_array(std::string_view content) {
  for (char c : content) {
    if (is_space(c)) continue;
    return c == '[';
  }
  return false;
}

}  // namespace detail

/// Loads a release-format file. `schema` may be null, in which case every
/// label is accepted.
inline Corpus parse_release(std::string_view content, const RelationSchema* schema) {
  Corpus corpus;
  if (detail::starts_with_array(content)) {
    json arr;
    try {
      arr = json::parse(content);
    } catch (const json::exception& e) {
      throw DataError(std::string("malformed JSON: ") + e.what());
    }
    for (std::size_t i = 0; i < arr.size(); ++i)
      corpus.records.push_back(detail::parse_release_record(arr[i], i, schema, corpus));
    return corpus;
  }
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (std::all_of(line.begin(), line.end(), is_space)) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("malformed record " + std::to_string(index) + ": " + e.what());
    }
    corpus.records.push_back(detail::parse_release_record(rec, index, schema, corpus));
    ++index;
  }
  return corpus;
}

inline Corpus load_dataset(const std::string& path, const RelationSchema* schema = nullptr) {
  return parse_release(read_file(path), schema);
}

// ---------------------------------------------------------------------------
// Canonical JSON-lines format. One sentence per line:
// {"id", "text", "tokens": [[surface, char_start, char_end], ...],
//  "triples": [{"subject": {"text", "spans": [[s, e], ...]}, "relation", "object": {...}}]}

inline ordered_json entity_to_json(const Entity& e) {
  ordered_json spans = ordered_json::array();
  for (auto& s : e.spans) spans.push_back({s.start, s.end});
  return ordered_json{{"text", e.text}, {"spans", spans}};
}

inline Entity entity_from_json(const json& j) {
  Entity e;
  e.text = j.at("text").get<std::string>();
  for (auto& s : j.at("spans")) e.spans.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
  return e;
}

inline ordered_json record_to_json(const AnnotatedSentence& r) {
  ordered_json tokens = ordered_json::array();
  for (auto& t : r.sentence.tokens) tokens.push_back({t.surface, t.char_start, t.char_end});
  ordered_json triples = ordered_json::array();
  for (auto& t : r.triples)
    triples.push_back(ordered_json{{"subject", entity_to_json(t.subject)},
                                   {"relation", t.relation},
                                   {"object", entity_to_json(t.object)}});
  return ordered_json{{"id", r.sentence.id}, {"text", r.sentence.text}, {"tokens", tokens}, {"triples", triples}};
}

inline AnnotatedSentence record_from_json(const json& j) {
  AnnotatedSentence r;
  r.sentence.id = j.at("id").get<std::string>();
  r.sentence.text = j.at("text").get<std::string>();
  int index = 0;
  for (auto& t : j.at("tokens"))
    r.sentence.tokens.push_back(Token{index++, t.at(0).get<std::string>(), t.at(1).get<int>(), t.at(2).get<int>()});
  for (auto& t : j.at("triples"))
    r.triples.push_back(RelationalTriplet{entity_from_json(t.at("subject")), t.at("relation").get<std::string>(),
                                          entity_from_json(t.at("object"))});
  return r;
}

inline std::string write_canonical(const Corpus& c) {
  std::string out;
  for (auto& r : c.records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline Corpus read_canonical(std::string_view content, const RelationSchema* schema = nullptr) {
  Corpus c;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (std::all_of(line.begin(), line.end(), is_space)) continue;
    try {
      c.records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError("malformed record " + std::to_string(index) + ": " + e.what());
    }
    for (auto& t : c.records.back().triples) {
      detail::check_label(schema, t.relation);
      c.unaligned_entities += !t.subject.aligned();
      c.unaligned_entities += !t.object.aligned();
      c.unaligned_triples += !trainable(t);
    }
    ++index;
  }
  return c;
}

/// Reads either format: canonical JSON lines (records carry "tokens") or the
/// release format.
inline Corpus read_corpus(const std::string& path, const RelationSchema* schema = nullptr) {
  auto content = read_file(path);
  if (!detail::starts_with_array(content)) {
    std::istringstream in(content);
    std::string line;
    while (std::getline(in, line)) {
      if (std::all_of(line.begin(), line.end(), is_space)) continue;
      bool canonical = false;
      try {
        canonical = json::parse(line).contains("tokens");
      } catch (const json::exception&) {
      }
      if (canonical) return read_canonical(content, schema);
      break;
    }
  }
  return parse_release(content, schema);
}

// ---------------------------------------------------------------------------
// Overlap classes

enum class OverlapConvention {
  kUnorderedPairs,  // entity pairs compared as unordered sets over distinct triplets
  kOrderedPairs,    // ordered (subject, object) pairs, duplicates counted, as in the
                    // widely circulated preprocessing scripts
};

inline OverlapFlags classify_overlap(std::span<const RelationalTriplet> triples,
                                     OverlapConvention convention = OverlapConvention::kUnorderedPairs) {
  OverlapFlags f;
  if (triples.empty()) {
    f.empty_input = true;
    return f;
  }
  if (convention == OverlapConvention::kOrderedPairs) {
    std::set<std::string> entities;
    std::vector<std::pair<std::string, std::string>> pairs;
    for (auto& t : triples) {
      entities.insert(t.subject.text);
      entities.insert(t.object.text);
      pairs.emplace_back(t.subject.text, t.object.text);
    }
    if (entities.size() == 2 * triples.size()) {
      f.normal = true;
      return f;
    }
    std::set<std::pair<std::string, std::string>> distinct(pairs.begin(), pairs.end());
    f.epo = distinct.size() != pairs.size();
    std::set<std::string> pair_entities;
    for (auto& [s, o] : distinct) {
      pair_entities.insert(s);
      pair_entities.insert(o);
    }
    f.seo = pair_entities.size() != 2 * distinct.size();
    f.normal = !(f.epo || f.seo);
    return f;
  }

  std::set<TripleKey> seen;
  std::vector<std::set<std::string>> entity_sets;
  for (auto& t : triples) {
    if (!seen.insert(key_of(t)).second) continue;
    entity_sets.push_back({t.subject.text, t.object.text});
  }
  for (std::size_t i = 0; i < entity_sets.size(); ++i) {
    for (std::size_t j = i + 1; j < entity_sets.size(); ++j) {
      const auto& a = entity_sets[i];
      const auto& b = entity_sets[j];
      if (a == b) {
        f.epo = true;
        continue;
      }
      std::size_t shared = 0;
      for (auto& e : a) shared += b.count(e);
      if (shared == 1) f.seo = true;
    }
  }
  f.normal = !(f.epo || f.seo);
  return f;
}

// ---------------------------------------------------------------------------
// Statistics

/// Triplet-count bucket: 0, 1, 2, 3, 4, or 5 for "5 or more".
inline std::size_t count_bucket(std::size_t n) { return std::min<std::size_t>(n, 5); }

inline constexpr std::array<std::string_view, 6> kBucketNames = {"0", "1", "2", "3", "4", ">=5"};

struct CorpusStats {
  std::size_t normal = 0, epo = 0, seo = 0, all = 0;
  std::array<std::size_t, 6> buckets{};  // index = count_bucket(N)
  std::size_t triples = 0;
  std::size_t unaligned_entities = 0;
  std::size_t unaligned_triples = 0;
  std::size_t empty_sentences = 0;
};

inline CorpusStats corpus_stats(const Corpus& c,
                                OverlapConvention convention = OverlapConvention::kUnorderedPairs) {
  CorpusStats s;
  s.unaligned_entities = c.unaligned_entities;
  s.unaligned_triples = c.unaligned_triples;
  for (auto& r : c.records) {
    ++s.all;
    s.triples += r.triples.size();
    ++s.buckets[count_bucket(r.triples.size())];
    auto f = classify_overlap(r.triples, convention);
    s.empty_sentences += f.empty_input;
    s.normal += f.normal;
    s.epo += f.epo;
    s.seo += f.seo;
  }
  return s;
}

inline ordered_json stats_to_json(const CorpusStats& s) {
  ordered_json buckets;
  for (std::size_t i = 0; i < s.buckets.size(); ++i) buckets[std::string(kBucketNames[i])] = s.buckets[i];
  return ordered_json{{"schema_version", 1},
                      {"sentences", {{"normal", s.normal}, {"epo", s.epo}, {"seo", s.seo}, {"all", s.all}}},
                      {"triplet_count_buckets", buckets},
                      {"triples", s.triples},
                      {"unaligned_entities", s.unaligned_entities},
                      {"unaligned_triples", s.unaligned_triples},
                      {"sentences_without_triples", s.empty_sentences}};
}

inline std::string stats_table(const CorpusStats& s) {
  std::ostringstream o;
  o << std::left << std::setw(10) << "Category" << std::right << std::setw(10) << "Count" << '\n';
  auto row = [&](std::string_view name, std::size_t v) {
    o << std::left << std::setw(10) << name << std::right << std::setw(10) << v << '\n';
  };
  row("Normal", s.normal);
  row("EPO", s.epo);
  row("SEO", s.seo);
  row("ALL", s.all);
  o << '\n' << std::left << std::setw(10) << "N";
  for (std::size_t i = 1; i < s.buckets.size(); ++i) o << std::right << std::setw(8) << kBucketNames[i];
  if (s.buckets[0]) o << std::right << std::setw(8) << "0";
  o << '\n' << std::left << std::setw(10) << "Count";
  for (std::size_t i = 1; i < s.buckets.size(); ++i) o << std::right << std::setw(8) << s.buckets[i];
  if (s.buckets[0]) o << std::right << std::setw(8) << s.buckets[0];
  o << '\n';
  if (s.unaligned_entities)
    o << "\nunaligned entity mentions: " << s.unaligned_entities << " (" << s.unaligned_triples
      << " triplets excluded from training targets)\n";
  return o.str();
}

}  // namespace direct
