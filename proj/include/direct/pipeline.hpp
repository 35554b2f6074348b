#pragma once

// Cascade inference: subjects from the sentence, objects per distinct
// subject, relations per distinct (subject, object) pair. The result is an
// adjacency list keyed by subject.

#include <algorithm>
#include <concepts>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "direct/corpus.hpp"
#include "direct/encoding.hpp"
#include "direct/heads.hpp"

namespace direct {

/// Anything that can score assembled inputs for the three cascade stages.
template <typename M>
concept CascadeModel = requires(const M& m, const AssembledInput& in, Task t) {
  { m.assembler() } -> std::convertible_to<const InputAssembler&>;
  { m.schema() } -> std::convertible_to<const RelationSchema&>;
  { m.span_probabilities(in, t) } -> std::same_as<SpanProbabilities>;
  { m.relation_probabilities(in) } -> std::same_as<RelationProbabilities>;
};

struct ExtractConfig {
  double extraction_threshold = kDefaultExtractionThreshold;
  double relation_threshold = kDefaultRelationThreshold;
  bool threshold_decode = false;

  void validate() const {
    if (!(extraction_threshold > 0.0 && extraction_threshold < 1.0))
      throw UsageError("extraction threshold must lie in (0, 1)");
    if (!(relation_threshold > 0.0 && relation_threshold < 1.0))
      throw UsageError("relation threshold must lie in (0, 1)");
  }
};

struct AdjacencyEntry {
  std::string object;
  std::set<std::string> relations;

  bool operator==(const AdjacencyEntry&) const = default;
};

struct AdjacencyListOutput {
  std::map<std::string, std::vector<AdjacencyEntry>> entries;

  bool empty() const { return entries.empty(); }

  /// Adds one fact, merging into an existing (subject, object) entry.
  void add(const std::string& subject, const std::string& object, const std::string& relation) {
    auto& list = entries[subject];
    auto it = std::find_if(list.begin(), list.end(), [&](auto& e) { return e.object == object; });
    if (it == list.end()) list.push_back({object, {relation}});
    else it->relations.insert(relation);
  }

  bool operator==(const AdjacencyListOutput&) const = default;
};

/// Set of (subject, relation, object) facts in key order.
inline std::vector<RelationalTriplet> flatten(const AdjacencyListOutput& adj) {
  std::set<TripleKey> keys;
  for (auto& [s, list] : adj.entries)
    for (auto& e : list)
      for (auto& r : e.relations) keys.emplace(s, r, e.object);
  std::vector<RelationalTriplet> out;
  out.reserve(keys.size());
  for (auto& [s, r, o] : keys) out.push_back(RelationalTriplet{Entity{s, {}}, r, Entity{o, {}}});
  return out;
}

inline AdjacencyListOutput to_adjacency(std::span<const RelationalTriplet> triples) {
  AdjacencyListOutput adj;
  for (auto& t : triples) adj.add(t.subject.text, t.object.text, t.relation);
  return adj;
}

// ---------------------------------------------------------------------------
// Stages. Each stage is callable on its own so later stages can be driven
// with stubbed upstream output.

namespace detail {

/// Decodes spans inside the sentence region and maps them back to
/// distinct entity surface strings, in order of first occurrence.
inline std::vector<std::string> decode_entities(const SpanProbabilities& sp, const AssembledInput& in,
                                                const Sentence& sentence, const ExtractConfig& cfg) {
  const auto b = in.sentence_begin, e = in.sentence_end;
  std::span<const double> ps(sp.start.data() + b, e - b), pe(sp.end.data() + b, e - b);
  auto spans = cfg.threshold_decode ? decode_spans_threshold(ps, pe, cfg.extraction_threshold)
                                    : decode_spans(ps, pe, cfg.extraction_threshold);
  std::vector<std::string> out;
  for (auto& s : spans) {
    const int first = in.word_of[b + static_cast<std::size_t>(s.start)];
    const int last = in.word_of[b + static_cast<std::size_t>(s.end)];
    auto surface = sentence.surface(first, std::max(first, last));
    if (std::find(out.begin(), out.end(), surface) == out.end()) out.push_back(std::move(surface));
  }
  return out;
}

}  // namespace detail

template <CascadeModel M>
std::vector<std::string> extract_subjects(const Sentence& x, const M& model, const ExtractConfig& cfg) {
  auto in = model.assembler().assemble_s(x);
  return detail::decode_entities(model.span_probabilities(in, Task::kSubject), in, x, cfg);
}

template <CascadeModel M>
std::vector<std::string> extract_objects(const std::string& subject, const Sentence& x, const M& model,
                                         const ExtractConfig& cfg) {
  auto in = model.assembler().assemble_o(subject, x);
  return detail::decode_entities(model.span_probabilities(in, Task::kObject), in, x, cfg);
}

template <CascadeModel M>
std::set<std::string> classify_relations(const std::string& subject, const std::string& object, const Sentence& x,
                                         const M& model, const ExtractConfig& cfg) {
  auto in = model.assembler().assemble_r(subject, object, x);
  auto rp = model.relation_probabilities(in);
  const auto& schema = model.schema();
  if (rp.p.size() != schema.size())
    throw UsageError("relation head emits " + std::to_string(rp.p.size()) + " labels, schema has " +
                     std::to_string(schema.size()));
  std::set<std::string> out;
  for (auto i : predicted_labels(rp, cfg.relation_threshold)) out.insert(schema.label(i));
  return out;
}

/// Stages 2 and 3 for a given subject list.
template <CascadeModel M>
AdjacencyListOutput extract_from_subjects(const Sentence& x, const std::vector<std::string>& subjects, const M& model,
                                          const ExtractConfig& cfg) {
  cfg.validate();
  AdjacencyListOutput adj;
  std::set<std::string> seen_subjects;
  for (auto& s : subjects) {
    if (!seen_subjects.insert(s).second) continue;
    for (auto& o : extract_objects(s, x, model, cfg)) {
      auto rels = classify_relations(s, o, x, model, cfg);
      for (auto& r : rels) adj.add(s, o, r);
    }
  }
  return adj;
}

template <CascadeModel M>
AdjacencyListOutput extract(const Sentence& x, const M& model, const ExtractConfig& cfg) {
  cfg.validate();
  if (x.tokens.empty()) return {};
  return extract_from_subjects(x, extract_subjects(x, model, cfg), model, cfg);
}

// ---------------------------------------------------------------------------
// Corpus-level prediction and the predictions file.
//
// One JSON object per line, fields in this order:
//   {"id": str,
//    "adjacency": [{"subject": str, "objects": [{"object": str, "relations": [str...]}]}],
//    "triples": [[subject, relation, object], ...]}

struct SentencePrediction {
  std::string id;
  AdjacencyListOutput adjacency;
  std::vector<RelationalTriplet> triples;
};

template <CascadeModel M>
std::vector<SentencePrediction> predict_corpus(const Corpus& corpus, const M& model, const ExtractConfig& cfg) {
  std::vector<SentencePrediction> out;
  out.reserve(corpus.size());
  for (auto& rec : corpus.records) {
    SentencePrediction p;
    p.id = rec.sentence.id;
    p.adjacency = extract(rec.sentence, model, cfg);
    p.triples = flatten(p.adjacency);
    out.push_back(std::move(p));
  }
  return out;
}

inline nlohmann::ordered_json prediction_to_json(const SentencePrediction& p) {
  nlohmann::ordered_json adj = nlohmann::ordered_json::array();
  for (auto& [s, list] : p.adjacency.entries) {
    nlohmann::ordered_json objects = nlohmann::ordered_json::array();
    for (auto& e : list)
      objects.push_back(nlohmann::ordered_json{{"object", e.object},
                                               {"relations", std::vector<std::string>(e.relations.begin(), e.relations.end())}});
    adj.push_back(nlohmann::ordered_json{{"subject", s}, {"objects", objects}});
  }
  nlohmann::ordered_json triples = nlohmann::ordered_json::array();
  for (auto& t : p.triples) triples.push_back({t.subject.text, t.relation, t.object.text});
  return nlohmann::ordered_json{{"id", p.id}, {"adjacency", adj}, {"triples", triples}};
}

inline std::string predictions_to_jsonl(const std::vector<SentencePrediction>& preds) {
  std::string out;
  for (auto& p : preds) {
    out += prediction_to_json(p).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<SentencePrediction> parse_predictions(std::string_view content) {
  std::vector<SentencePrediction> out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (std::all_of(line.begin(), line.end(), is_space)) continue;
    try {
      auto j = nlohmann::json::parse(line);
      SentencePrediction p;
      p.id = j.at("id").get<std::string>();
      for (auto& t : j.at("triples")) {
        if (!t.is_array() || t.size() != 3) throw DataError("triple must have three elements");
        p.triples.push_back(RelationalTriplet{Entity{t[0].get<std::string>(), {}}, t[1].get<std::string>(),
                                              Entity{t[2].get<std::string>(), {}}});
      }
      p.adjacency = to_adjacency(p.triples);
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed prediction record " + std::to_string(index) + ": " + e.what());
    }
    ++index;
  }
  return out;
}

}  // namespace direct
