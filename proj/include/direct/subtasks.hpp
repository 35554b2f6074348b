#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "direct/corpus.hpp"
#include "direct/encoding.hpp"

namespace direct {

/// One training instance of a cascade sub-task. Span tasks carry start/end
/// bit vectors over input positions; the relation task carries one bit per
/// schema label.
struct SubtaskExample {
  Task task = Task::kSubject;
  AssembledInput input;
  std::vector<std::uint8_t> start_target;
  std::vector<std::uint8_t> end_target;
  std::vector<std::uint8_t> relation_target;

  bool operator==(const SubtaskExample&) const = default;
};

namespace detail {

inline void mark_spans(const Entity& e, SubtaskExample& ex) {
  for (auto& span : e.spans) {
    auto b = ex.input.first_position(span.start);
    auto l = ex.input.last_position(span.end);
    if (!b || !l) continue;  // truncated away
    ex.start_target[*b] = 1;
    ex.end_target[*l] = 1;
  }
}

inline SubtaskExample span_example(AssembledInput in) {
  SubtaskExample ex;
  ex.task = in.task;
  ex.start_target.assign(in.size(), 0);
  ex.end_target.assign(in.size(), 0);
  ex.input = std::move(in);
  return ex;
}

}  // namespace detail

/// Derives the cascade training instances of one sentence: one subject
/// example, one object example per distinct subject, one relation example
/// per distinct (subject, object) pair. Triplets with an unaligned entity
/// are left out.
inline std::vector<SubtaskExample> derive_subtask_examples(const AnnotatedSentence& rec,
                                                           const InputAssembler& assembler,
                                                           const RelationSchema& schema) {
  std::vector<const RelationalTriplet*> gold;
  for (auto& t : rec.triples)
    if (trainable(t)) gold.push_back(&t);

  std::vector<SubtaskExample> out;
  out.push_back(detail::span_example(assembler.assemble_s(rec.sentence)));
  std::vector<std::string> subjects;
  std::map<std::string, const Entity*> subject_entity;
  for (auto* t : gold) {
    if (subject_entity.emplace(t->subject.text, &t->subject).second) subjects.push_back(t->subject.text);
    detail::mark_spans(t->subject, out.front());
  }

  for (auto& s : subjects) {
    auto ex = detail::span_example(assembler.assemble_o(s, rec.sentence));
    for (auto* t : gold)
      if (t->subject.text == s) detail::mark_spans(t->object, ex);
    out.push_back(std::move(ex));
  }

  std::vector<std::pair<std::string, std::string>> pairs;
  std::map<std::pair<std::string, std::string>, std::size_t> pair_index;
  for (auto* t : gold) {
    std::pair<std::string, std::string> key{t->subject.text, t->object.text};
    if (!pair_index.count(key)) {
      pair_index.emplace(key, out.size());
      SubtaskExample ex;
      ex.task = Task::kRelation;
      ex.input = assembler.assemble_r(key.first, key.second, rec.sentence);
      ex.relation_target.assign(schema.size(), 0);
      out.push_back(std::move(ex));
    }
    auto label = schema.index_of(t->relation);
    if (!label) throw DataError("unknown relation label '" + t->relation + "'");
    out[pair_index.at(key)].relation_target[*label] = 1;
  }
  return out;
}

/// Per-task example lists for a whole corpus.
struct TaskExamples {
  std::vector<SubtaskExample> subject, object, relation;

  std::vector<SubtaskExample>& of(Task t) {
    return t == Task::kSubject ? subject : t == Task::kObject ? object : relation;
  }
  const std::vector<SubtaskExample>& of(Task t) const {
    return t == Task::kSubject ? subject : t == Task::kObject ? object : relation;
  }
};

inline TaskExamples derive_corpus_examples(const Corpus& corpus, const InputAssembler& assembler,
                                           const RelationSchema& schema, std::size_t* truncated = nullptr) {
  TaskExamples out;
  for (auto& rec : corpus.records) {
    if (rec.sentence.tokens.empty()) continue;
    for (auto& ex : derive_subtask_examples(rec, assembler, schema)) {
      if (truncated && ex.input.truncated) ++*truncated;
      out.of(ex.task).push_back(std::move(ex));
    }
  }
  return out;
}

}  // namespace direct
