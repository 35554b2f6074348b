#include <random>

#include <gtest/gtest.h>

#include "direct/pipeline.hpp"
#include "direct/tokenizer.hpp"

using namespace direct;

namespace {

/// Scores inputs from gold annotations: subject/object spans of the
/// annotated sentence get high start/end probabilities, relation labels of
/// the gold (subject, object) pair get 0.9. Entity strings are recovered
/// from the marker-delimited prefix of the input.
class OracleModel {
 public:
  OracleModel(const Corpus& c, RelationSchema schema)
      : assembler_(SubwordTokenizer(Vocabulary::from_corpus(c), TokenizerKind::kWholeWord)),
        schema_(std::move(schema)),
        corpus_(c) {}

  const InputAssembler& assembler() const { return assembler_; }
  const RelationSchema& schema() const { return schema_; }

  SpanProbabilities span_probabilities(const AssembledInput& in, Task t) const {
    ++calls[task_index(t)];
    const auto& rec = find(in);
    SpanProbabilities sp{std::vector<double>(in.size(), 0.05), std::vector<double>(in.size(), 0.05)};
    auto prefix = segments(in);
    for (auto& tr : rec.triples) {
      if (t == Task::kObject && tr.subject.text != prefix.at(0)) continue;
      const Entity& e = t == Task::kSubject ? tr.subject : tr.object;
      for (auto& span : e.spans) {
        sp.start[*in.first_position(span.start)] = start_confidence(e.text);
        sp.end[*in.last_position(span.end)] = 0.95;
      }
    }
    return sp;
  }

  RelationProbabilities relation_probabilities(const AssembledInput& in) const {
    ++calls[2];
    const auto& rec = find(in);
    auto prefix = segments(in);
    RelationProbabilities rp{std::vector<double>(schema_.size(), 0.1)};
    for (auto& tr : rec.triples)
      if (tr.subject.text == prefix.at(0) && tr.object.text == prefix.at(1)) rp.p[*schema_.index_of(tr.relation)] = 0.9;
    return rp;
  }

  /// Per-entity start confidence; defaults to 0.99.
  std::map<std::string, double> confidence;
  mutable std::array<int, 3> calls{};

 private:
  double start_confidence(const std::string& e) const {
    auto it = confidence.find(e);
    return it == confidence.end() ? 0.99 : it->second;
  }

  std::vector<std::string> segments(const AssembledInput& in) const {
    std::vector<std::string> out;
    std::string cur;
    const auto& v = assembler_.tokenizer().vocab();
    for (std::size_t i = 1; i < in.sentence_begin; ++i) {
      if (in.ids[i] == v.sep_id()) {
        out.push_back(cur);
        cur.clear();
      } else {
        if (!cur.empty()) cur += ' ';
        cur += v.token(in.ids[i]);
      }
    }
    return out;
  }

  const AnnotatedSentence& find(const AssembledInput& in) const {
    const auto& v = assembler_.tokenizer().vocab();
    std::string text;
    for (std::size_t i = in.sentence_begin; i < in.sentence_end; ++i) {
      if (!text.empty()) text += ' ';
      text += v.token(in.ids[i]);
    }
    for (auto& r : corpus_.records) {
      std::string joined;
      for (auto& tok : r.sentence.tokens) joined += (joined.empty() ? "" : " ") + tok.surface;
      if (joined == text) return r;
    }
    static const AnnotatedSentence none;
    return none;
  }

  InputAssembler assembler_;
  RelationSchema schema_;
  Corpus corpus_;
};

std::set<TripleKey> keys(const std::vector<RelationalTriplet>& ts) {
  std::set<TripleKey> out;
  for (auto& t : ts) out.insert(key_of(t));
  return out;
}

RelationalTriplet triple(std::string s, std::string r, std::string o) {
  return RelationalTriplet{Entity{std::move(s), {}}, std::move(r), Entity{std::move(o), {}}};
}

Corpus figure_one() {
  return parse_release(
      R"([{"text": "Obama was born in Honolulu , a city in the USA , and became president of the USA .",
           "triple_list": [["Obama", "nationality", "USA"], ["Obama", "president_of", "USA"],
                           ["Obama", "born_in", "Honolulu"], ["Honolulu", "located_in", "USA"]]}])",
      nullptr);
}

const RelationSchema kFigSchema({"born_in", "located_in", "nationality", "president_of"});

}  // namespace

TEST(Extract, FigureOneUnderOracleModel) {
  auto c = figure_one();
  OracleModel m(c, kFigSchema);
  auto adj = extract(c.records[0].sentence, m, ExtractConfig{});
  AdjacencyListOutput want;
  want.entries["Obama"] = {{"USA", {"nationality", "president_of"}}, {"Honolulu", {"born_in"}}};
  want.entries["Honolulu"] = {{"USA", {"located_in"}}};
  auto sort_lists = [](AdjacencyListOutput a) {
    for (auto& [s, l] : a.entries) std::sort(l.begin(), l.end(), [](auto& x, auto& y) { return x.object < y.object; });
    return a;
  };
  EXPECT_EQ(sort_lists(adj), sort_lists(want));
  EXPECT_EQ(flatten(adj).size(), 4u);
  // USA occurs twice but the (Obama, USA) pair is classified once
  EXPECT_EQ(m.calls[0], 1);
  EXPECT_EQ(m.calls[1], 2);
  EXPECT_EQ(m.calls[2], 3);
}

TEST(Extract, TwoSubjectHandEnumeratedCascade) {
  // stage 1: subjects {Ann, Bob}; stage 2: Ann -> {Paris}, Bob -> {Acme, Rome};
  // stage 3: (Ann, Paris) -> lives_in, (Bob, Acme) -> works_for, (Bob, Rome) -> lives_in
  auto c = parse_release(R"([{"text": "Ann lives in Paris while Bob works for Acme in Rome",
                              "triple_list": [["Ann", "lives_in", "Paris"], ["Bob", "works_for", "Acme"],
                                              ["Bob", "lives_in", "Rome"]]}])",
                         nullptr);
  OracleModel m(c, RelationSchema({"lives_in", "works_for"}));
  auto triples = flatten(extract(c.records[0].sentence, m, ExtractConfig{}));
  std::vector<RelationalTriplet> want{triple("Ann", "lives_in", "Paris"), triple("Bob", "lives_in", "Rome"),
                                      triple("Bob", "works_for", "Acme")};
  EXPECT_EQ(triples, want);
}

TEST(Extract, RecoversFixtureGoldUnderOracleModel) {
  auto schema = load_schema(std::string(DIRECT_TEST_DATA) + "/fixture_relations.json");
  auto c = read_corpus(std::string(DIRECT_TEST_DATA) + "/fixture.json", &schema);
  OracleModel m(c, schema);
  auto preds = predict_corpus(c, m, ExtractConfig{});
  ASSERT_EQ(preds.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(preds[i].id, c.records[i].sentence.id);
    EXPECT_EQ(keys(preds[i].triples), keys(c.records[i].triples)) << c.records[i].sentence.text;
  }
}

TEST(Extract, NothingAboveThresholdGivesEmpty) {
  auto c = parse_release(R"([{"text": "quiet sentence here", "triple_list": []}])", nullptr);
  OracleModel m(c, RelationSchema({"r"}));
  EXPECT_TRUE(extract(c.records[0].sentence, m, ExtractConfig{}).empty());
  EXPECT_EQ(m.calls[1], 0);
  EXPECT_TRUE(extract(make_sentence("e", ""), m, ExtractConfig{}).empty());
}

TEST(Extract, RaisingAlphaNeverAddsTriples) {
  auto c = figure_one();
  OracleModel m(c, kFigSchema);
  m.confidence = {{"Obama", 0.93}, {"Honolulu", 0.97}, {"USA", 0.91}};
  std::set<TripleKey> prev = keys(flatten(extract(c.records[0].sentence, m, ExtractConfig{0.5, 0.5, false})));
  for (double a : {0.6, 0.7, 0.8, 0.9, 0.92, 0.95, 0.96, 0.98, 0.99}) {
    auto cur = keys(flatten(extract(c.records[0].sentence, m, ExtractConfig{a, 0.5, false})));
    for (auto& k : cur) EXPECT_TRUE(prev.count(k)) << a;
    prev = cur;
  }
  EXPECT_TRUE(prev.empty());
}

TEST(Extract, StageIsolationWithStubbedSubjects) {
  auto c = figure_one();
  OracleModel m(c, kFigSchema);
  const auto& x = c.records[0].sentence;
  auto adj = extract_from_subjects(x, {"Honolulu", "Honolulu"}, m, ExtractConfig{});
  EXPECT_EQ(m.calls[0], 0);
  EXPECT_EQ(flatten(adj), (std::vector<RelationalTriplet>{triple("Honolulu", "located_in", "USA")}));
  EXPECT_EQ(extract_objects("Obama", x, m, ExtractConfig{}), (std::vector<std::string>{"Honolulu", "USA"}));
  EXPECT_EQ(classify_relations("Obama", "USA", x, m, ExtractConfig{}),
            (std::set<std::string>{"nationality", "president_of"}));
  // a subject the model knows nothing about yields nothing
  EXPECT_TRUE(extract_from_subjects(x, {"Hawaii"}, m, ExtractConfig{}).empty());
}

TEST(Extract, SchemaMismatchAndBadThresholds) {
  auto c = figure_one();
  OracleModel m(c, kFigSchema);
  OracleModel small(c, RelationSchema({"born_in"}));
  // relation probabilities sized by the model's schema: force a mismatch via a wrapper
  struct Wrong : OracleModel {
    using OracleModel::OracleModel;
    RelationProbabilities relation_probabilities(const AssembledInput&) const { return {{0.9, 0.9}}; }
  };
  Wrong w(c, kFigSchema);
  EXPECT_THROW(classify_relations("Obama", "USA", c.records[0].sentence, w, ExtractConfig{}), UsageError);
  EXPECT_THROW(extract(c.records[0].sentence, m, ExtractConfig{1.0, 0.5, false}), UsageError);
  EXPECT_THROW(extract(c.records[0].sentence, m, ExtractConfig{0.9, 0.0, false}), UsageError);
  (void)small;
}

TEST(Adjacency, FlattenAndDedup) {
  AdjacencyListOutput adj;
  EXPECT_TRUE(flatten(adj).empty());
  adj.add("Obama", "USA", "nationality");
  adj.add("Obama", "USA", "president_of");
  adj.add("Obama", "USA", "nationality");
  adj.add("Obama", "Honolulu", "born_in");
  adj.add("Honolulu", "USA", "located_in");
  EXPECT_EQ(adj.entries.at("Obama").size(), 2u);
  EXPECT_EQ(flatten(adj).size(), 4u);
}

TEST(Adjacency, FlattenOfAssembledRandomTriplesIsIdentity) {
  std::mt19937_64 rng(31);
  const std::vector<std::string> ents{"a", "b", "c", "d", "e"}, rels{"r1", "r2", "r3"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<RelationalTriplet> ts;
    const std::size_t n = rng() % 12;
    for (std::size_t i = 0; i < n; ++i)
      ts.push_back(triple(ents[rng() % 5], rels[rng() % 3], ents[rng() % 5]));
    auto adj = to_adjacency(ts);
    auto flat = flatten(adj);
    EXPECT_EQ(keys(flat), keys(ts));
    EXPECT_EQ(keys(flat).size(), flat.size());
    for (auto& [s, list] : adj.entries) {
      std::set<std::string> objects;
      for (auto& e : list) {
        EXPECT_TRUE(objects.insert(e.object).second);
        EXPECT_FALSE(e.relations.empty());
      }
    }
  }
}

TEST(PredictionsFile, RoundTripAndEmpty) {
  auto c = figure_one();
  OracleModel m(c, kFigSchema);
  auto preds = predict_corpus(c, m, ExtractConfig{});
  auto text = predictions_to_jsonl(preds);
  auto j = nlohmann::json::parse(text.substr(0, text.find('\n')));
  std::vector<std::string> fields;
  auto first = nlohmann::ordered_json::parse(text.substr(0, text.find('\n')));
  for (auto& [k, v] : first.items()) fields.push_back(k);
  EXPECT_EQ(fields, (std::vector<std::string>{"id", "adjacency", "triples"}));
  EXPECT_EQ(j.at("triples").size(), 4u);
  auto back = parse_predictions(text);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].id, preds[0].id);
  EXPECT_EQ(back[0].triples, preds[0].triples);
  EXPECT_EQ(predictions_to_jsonl(back), text);

  EXPECT_EQ(predictions_to_jsonl(predict_corpus(Corpus{}, m, ExtractConfig{})), "");
  EXPECT_TRUE(parse_predictions("").empty());
  EXPECT_THROW(parse_predictions("{\"id\": 1}\n"), DataError);
  EXPECT_THROW(parse_predictions("{\"id\": \"x\", \"triples\": [[\"a\", \"b\"]]}\n"), DataError);
}
