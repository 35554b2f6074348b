#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "direct/model.hpp"
#include "direct/npy.hpp"

using namespace direct;
namespace fs = std::filesystem;

namespace {

Corpus small_corpus() {
  return parse_release(R"([{"text": "Ann lives in Paris", "triple_list": [["Ann", "lives_in", "Paris"]]},
                           {"text": "Bob works for Acme in Rome", "triple_list": [["Bob", "works_for", "Acme"]]}])",
                       nullptr);
}

DirectModel small_model(bool shared = false) {
  EncoderConfig shape;
  shape.hidden = 16;
  shape.layers = 1;
  shape.heads = 2;
  shape.ffn = 24;
  return DirectModel::compact(small_corpus(), RelationSchema({"lives_in", "works_for"}), shape, shared, 11);
}

std::string npy_bytes(const std::string& descr, const std::string& shape, const std::string& payload) {
  std::string header = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " + shape + ", }";
  while ((10 + header.size() + 1) % 64 != 0) header += ' ';
  header += '\n';
  std::string out = "\x93NUMPY";
  out += '\x01';
  out += '\x00';
  out += static_cast<char>(header.size() & 0xff);
  out += static_cast<char>(header.size() >> 8);
  return out + header + payload;
}

}  // namespace

TEST(Checkpoint, RoundTripGivesIdenticalPredictions) {
  auto m = small_model();
  auto c = small_corpus();
  auto bytes = m.serialize();
  auto back = DirectModel::deserialize(bytes);
  EXPECT_EQ(back.serialize(), bytes);
  for (auto& rec : c.records) {
    auto in = m.assembler().assemble_s(rec.sentence);
    auto a = m.span_probabilities(in, Task::kSubject);
    auto b = back.span_probabilities(back.assembler().assemble_s(rec.sentence), Task::kSubject);
    EXPECT_EQ(a.start, b.start);
    EXPECT_EQ(a.end, b.end);
    auto r = m.assembler().assemble_r("Ann", "Paris", rec.sentence);
    EXPECT_EQ(m.relation_probabilities(r).p, back.relation_probabilities(r).p);
  }
  EXPECT_EQ(back.schema().labels(), m.schema().labels());
  EXPECT_EQ(back.vocab().tokens(), m.vocab().tokens());
}

TEST(Checkpoint, SharedFlagSurvives) {
  auto m = small_model(true);
  auto back = DirectModel::deserialize(m.serialize());
  EXPECT_TRUE(back.heads().shared());
  EXPECT_EQ(back.parameters().size(), m.parameters().size());
}

TEST(Checkpoint, CorruptArchivesRejected) {
  auto m = small_model();
  auto bytes = m.serialize();
  EXPECT_THROW(DirectModel::deserialize("garbage"), DataError);
  EXPECT_THROW(DirectModel::deserialize(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(DirectModel::deserialize(bytes + "x"), DataError);
  auto bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(DirectModel::deserialize(bad_version), DataError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(DirectModel::deserialize(bad_magic), DataError);
}

TEST(Checkpoint, MismatchedParameterTableRejected) {
  auto m = small_model();
  auto bytes = m.serialize();
  // rename the first parameter inside the JSON header
  auto pos = bytes.find("embeddings.word_embeddings.weight");
  ASSERT_NE(pos, std::string::npos);
  bytes[pos] = 'E';
  EXPECT_THROW(DirectModel::deserialize(bytes), DataError);
}

TEST(Checkpoint, MissingFileIsDataError) {
  EXPECT_THROW(DirectModel::load("/nonexistent/model.ckpt"), DataError);
}

TEST(Npy, ParsesFloat32AndFloat64) {
  float f[6] = {1, 2, 3, 4, 5, 6};
  std::string payload(reinterpret_cast<char*>(f), sizeof f);
  auto m = parse_npy(npy_bytes("<f4", "(2, 3)", payload));
  ASSERT_EQ(m.rows(), 2);
  ASSERT_EQ(m.cols(), 3);
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_EQ(m(0, 2), 3.0);

  double d[3] = {0.5, -1.5, 2.25};
  auto v = parse_npy(npy_bytes("<f8", "(3,)", std::string(reinterpret_cast<char*>(d), sizeof d)));
  ASSERT_EQ(v.rows(), 1);
  EXPECT_EQ(v(0, 1), -1.5);
}

TEST(Npy, RejectsUnsupported) {
  EXPECT_THROW(parse_npy("not numpy"), DataError);
  EXPECT_THROW(parse_npy(npy_bytes("<i4", "(2,)", std::string(8, '\0'))), DataError);
  EXPECT_THROW(parse_npy(npy_bytes("<f4", "(4,)", std::string(8, '\0'))), DataError);
  EXPECT_THROW(parse_npy(npy_bytes("<f4", "(1, 1, 1)", std::string(4, '\0'))), DataError);
}

TEST(Pretrained, TinyBertMatchesReference) {
  const std::string dir = std::string(DIRECT_TEST_DATA) + "/bert_tiny";
  auto m = DirectModel::from_pretrained(dir, RelationSchema({"born_in"}), false, 1, 64);
  auto ref = nlohmann::json::parse(read_file(dir + "/reference.json"));
  ASSERT_EQ(ref.size(), 4u);
  for (auto& r : ref) {
    auto sentence = make_sentence("ref", r.at("text").get<std::string>());
    auto in = m.assembler().assemble_s(sentence);
    ASSERT_EQ(in.ids, r.at("ids").get<std::vector<int>>()) << r.at("text");
    auto out = m.encode(in);
    auto& hidden = r.at("hidden");
    ASSERT_EQ(static_cast<std::size_t>(out.length()), hidden.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      ASSERT_EQ(static_cast<std::size_t>(out.width()), hidden[i].size());
      for (std::size_t k = 0; k < hidden[i].size(); ++k)
        worst = std::max(worst, std::abs(out.hidden(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) -
                                         hidden[i][k].get<double>()));
    }
    EXPECT_LT(worst, 1e-4) << r.at("text");
  }
}

TEST(Pretrained, MissingFilesReported) {
  auto tmp = fs::temp_directory_path() / "direct_model_missing";
  fs::create_directories(tmp);
  EXPECT_ANY_THROW(DirectModel::from_pretrained(tmp.string(), RelationSchema({"r"}), false, 1));
  fs::remove_all(tmp);
}

TEST(Pretrained, LengthBeyondPositionsRejected) {
  const std::string dir = std::string(DIRECT_TEST_DATA) + "/bert_tiny";
  EXPECT_THROW(DirectModel::from_pretrained(dir, RelationSchema({"r"}), false, 1, 128), UsageError);
}
