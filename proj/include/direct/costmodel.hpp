#pragma once

// Predicted-logits count per sentence for four graph representations:
//   edge list (CopyRE)          4kl + kr
//   adjacency matrices (MHS)    l * l * r
//   partial adj. list (CasRel)  2l + 2slr
//   full adj. list (DIRECT)     2l + 2sl + or
// with l tokens, k triples, r relation types, s distinct subjects and o
// distinct (subject, object) pairs.

#include <array>
#include <cstdint>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "direct/corpus.hpp"
#include "direct/tokenizer.hpp"

namespace direct {

struct CostStats {
  std::uint64_t l = 0, k = 0, r = 0, s = 0, o = 0;
};

enum class ModelKind : std::uint8_t { kEdgeListCopyRE, kAdjMatrixMHS, kAdjListCasRel, kAdjListDirect };

inline constexpr std::array<ModelKind, 4> kAllModelKinds = {ModelKind::kEdgeListCopyRE, ModelKind::kAdjMatrixMHS,
                                                            ModelKind::kAdjListCasRel, ModelKind::kAdjListDirect};

inline std::string_view model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kEdgeListCopyRE: return "CopyRE";
    case ModelKind::kAdjMatrixMHS: return "MHS";
    case ModelKind::kAdjListCasRel: return "CasRel";
    case ModelKind::kAdjListDirect: return "DIRECT";
  }
  return "?";
}

inline std::string_view model_kind_category(ModelKind k) {
  switch (k) {
    case ModelKind::kEdgeListCopyRE: return "edge list";
    case ModelKind::kAdjMatrixMHS: return "adjacency matrices";
    case ModelKind::kAdjListCasRel: return "adjacency list (partial)";
    case ModelKind::kAdjListDirect: return "adjacency list (full)";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  for (auto k : kAllModelKinds) {
    std::string name(model_kind_name(k));
    std::string lower;
    for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == name || s == lower) return k;
  }
  throw UsageError("unknown model kind '" + std::string(s) + "' (expected copyre, mhs, casrel or direct)");
}

inline std::uint64_t logits_cost(ModelKind kind, const CostStats& c) {
  switch (kind) {
    case ModelKind::kEdgeListCopyRE: return 4 * c.k * c.l + c.k * c.r;
    case ModelKind::kAdjMatrixMHS: return c.l * c.l * c.r;
    case ModelKind::kAdjListCasRel: return 2 * c.l + 2 * c.s * c.l * c.r;
    case ModelKind::kAdjListDirect: return 2 * c.l + 2 * c.s * c.l + c.o * c.r;
  }
  return 0;
}

enum class LengthUnit : std::uint8_t { kWords, kSubwords };

/// Stats for one gold sentence. `l` is the whitespace word count, or the
/// subword count when a tokenizer is given.
inline CostStats cost_stats(const AnnotatedSentence& rec, std::size_t relation_types,
                            const SubwordTokenizer* tokenizer = nullptr) {
  CostStats c;
  c.r = relation_types;
  if (tokenizer) {
    for (auto& t : rec.sentence.tokens) c.l += tokenizer->word_ids(t.surface).size();
  } else {
    c.l = rec.sentence.tokens.size();
  }
  std::set<TripleKey> triples;
  std::set<std::string> subjects;
  std::set<std::pair<std::string, std::string>> pairs;
  for (auto& t : rec.triples) {
    triples.insert(key_of(t));
    subjects.insert(t.subject.text);
    pairs.emplace(t.subject.text, t.object.text);
  }
  c.k = triples.size();
  c.s = subjects.size();
  c.o = pairs.size();
  return c;
}

/// Mean per-sentence logits cost over the corpus.
inline double dataset_cost(const Corpus& corpus, ModelKind kind, std::size_t relation_types,
                           const SubwordTokenizer* tokenizer = nullptr) {
  if (corpus.empty()) return 0.0;
  long double total = 0;
  for (auto& rec : corpus.records) total += logits_cost(kind, cost_stats(rec, relation_types, tokenizer));
  return static_cast<double>(total / static_cast<long double>(corpus.size()));
}

struct CostReport {
  std::string dataset;
  std::size_t sentences = 0;
  std::size_t relation_types = 0;
  std::array<double, 4> words{};     // indexed like kAllModelKinds
  std::array<double, 4> subwords{};  // only when a tokenizer was supplied
  bool has_subwords = false;
  std::size_t direct_not_above_casrel = 0;  // sentences with DIRECT <= CasRel (word lengths)
};

inline CostReport cost_report(const Corpus& corpus, std::string dataset, std::size_t relation_types,
                              const SubwordTokenizer* tokenizer = nullptr) {
  CostReport rep;
  rep.dataset = std::move(dataset);
  rep.sentences = corpus.size();
  rep.relation_types = relation_types;
  for (std::size_t i = 0; i < kAllModelKinds.size(); ++i) {
    rep.words[i] = dataset_cost(corpus, kAllModelKinds[i], relation_types);
    if (tokenizer) rep.subwords[i] = dataset_cost(corpus, kAllModelKinds[i], relation_types, tokenizer);
  }
  rep.has_subwords = tokenizer != nullptr;
  for (auto& rec : corpus.records) {
    auto c = cost_stats(rec, relation_types);
    rep.direct_not_above_casrel +=
        logits_cost(ModelKind::kAdjListDirect, c) <= logits_cost(ModelKind::kAdjListCasRel, c);
  }
  return rep;
}

inline ordered_json cost_report_to_json(const CostReport& r) {
  ordered_json models = ordered_json::array();
  for (std::size_t i = 0; i < kAllModelKinds.size(); ++i) {
    ordered_json m{{"model", model_kind_name(kAllModelKinds[i])},
                   {"category", model_kind_category(kAllModelKinds[i])},
                   {"mean_logits_words", r.words[i]}};
    if (r.has_subwords) m["mean_logits_subwords"] = r.subwords[i];
    models.push_back(m);
  }
  return ordered_json{{"schema_version", 1},
                      {"dataset", r.dataset},
                      {"sentences", r.sentences},
                      {"relation_types", r.relation_types},
                      {"models", models},
                      {"direct_le_casrel_sentences", r.direct_not_above_casrel}};
}

inline std::string cost_report_table(const CostReport& r) {
  std::ostringstream o;
  o << "dataset: " << r.dataset << ", sentences: " << r.sentences << ", relation types: " << r.relation_types
    << "\n\n";
  o << std::left << std::setw(28) << "Category" << std::setw(10) << "Method" << std::right << std::setw(14)
    << "words";
  if (r.has_subwords) o << std::setw(14) << "subwords";
  o << '\n';
  for (std::size_t i = 0; i < kAllModelKinds.size(); ++i) {
    o << std::left << std::setw(28) << model_kind_category(kAllModelKinds[i]) << std::setw(10)
      << model_kind_name(kAllModelKinds[i]) << std::right << std::fixed << std::setprecision(1) << std::setw(14)
      << r.words[i];
    if (r.has_subwords) o << std::setw(14) << r.subwords[i];
    o << '\n';
  }
  o << "\nDIRECT <= CasRel on " << r.direct_not_above_casrel << " of " << r.sentences << " sentences\n";
  return o.str();
}

}  // namespace direct
