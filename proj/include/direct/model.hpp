#pragma once

// The extraction model: shared encoder, task heads, tokenizer and schema,
// plus the single-file checkpoint archive.
//
// Checkpoint layout (little-endian):
//   8 bytes   magic "DIRECTCK"
//   u32       format version
//   u64       header length
//   header    JSON: model config, schema, vocabulary, parameter table
//   payload   f64 values of each parameter in table order, column-major

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "direct/common.hpp"
#include "direct/corpus.hpp"
#include "direct/encoder.hpp"
#include "direct/encoding.hpp"
#include "direct/heads.hpp"
#include "direct/npy.hpp"
#include "direct/tokenizer.hpp"

namespace direct {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'D', 'I', 'R', 'E', 'C', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class Backend : std::uint8_t { kCompact, kPretrained };

inline std::string_view backend_name(Backend b) { return b == Backend::kCompact ? "toy" : "pretrained"; }

inline Backend parse_backend(std::string_view s) {
  if (s == "toy" || s == "compact") return Backend::kCompact;
  if (s == "pretrained" || s == "bert") return Backend::kPretrained;
  throw UsageError("unknown backend '" + std::string(s) + "' (expected toy or pretrained)");
}

struct ModelConfig {
  Backend backend = Backend::kCompact;
  EncoderConfig encoder;
  std::size_t max_length = kDefaultMaxLength;
  bool shared_heads = false;

  nlohmann::ordered_json to_json() const {
    return {{"backend", backend_name(backend)},
            {"encoder", encoder.to_json()},
            {"max_length", max_length},
            {"shared_heads", shared_heads}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.backend = parse_backend(j.at("backend").get<std::string>());
    c.encoder = EncoderConfig::from_json(j.at("encoder"));
    c.max_length = j.value("max_length", kDefaultMaxLength);
    c.shared_heads = j.value("shared_heads", false);
    return c;
  }
};

class DirectModel {
 public:
  DirectModel(ModelConfig config, Vocabulary vocab, RelationSchema schema, std::uint64_t seed)
      : config_(std::move(config)), schema_(std::move(schema)) {
    if (schema_.empty()) throw UsageError("model requires a non-empty relation schema");
    config_.encoder.vocab_size = static_cast<int>(vocab.size());
    if (config_.max_length > static_cast<std::size_t>(config_.encoder.max_positions))
      throw UsageError("max sequence length exceeds the encoder's position limit");
    auto kind = config_.backend == Backend::kCompact ? TokenizerKind::kWholeWord : TokenizerKind::kWordPiece;
    assembler_ = InputAssembler(SubwordTokenizer(std::move(vocab), kind), config_.max_length);
    encoder_ = std::make_unique<TransformerEncoder>(config_.encoder, seed);
    heads_ = std::make_unique<HeadParameters>(config_.encoder.hidden, schema_.size(), config_.shared_heads,
                                              seed ^ 0x9e3779b97f4a7c15ull);
  }

  /// Compact trainable encoder with a vocabulary built from `corpus`.
  static DirectModel compact(const Corpus& corpus, RelationSchema schema, const EncoderConfig& shape,
                             bool shared_heads, std::uint64_t seed, std::size_t max_length = kDefaultMaxLength) {
    ModelConfig c;
    c.backend = Backend::kCompact;
    c.encoder = shape;
    c.encoder.position = PositionKind::kSinusoidal;
    c.encoder.type_vocab = 0;
    c.encoder.max_positions = std::max(c.encoder.max_positions, static_cast<int>(max_length));
    c.max_length = max_length;
    c.shared_heads = shared_heads;
    return DirectModel(c, Vocabulary::from_corpus(corpus), std::move(schema), seed);
  }

  /// Pretrained encoder exported as a directory holding config.json
  /// (BERT field names), vocab.txt and one <parameter>.npy per tensor.
  static DirectModel from_pretrained(const std::string& dir, RelationSchema schema, bool shared_heads,
                                     std::uint64_t seed, std::size_t max_length = kDefaultMaxLength) {
    namespace fs = std::filesystem;
    nlohmann::json cfg;
    try {
      cfg = nlohmann::json::parse(read_file((fs::path(dir) / "config.json").string()));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("pretrained config: " + std::string(e.what()));
    }
    ModelConfig c;
    c.backend = Backend::kPretrained;
    c.encoder.vocab_size = cfg.at("vocab_size").get<int>();
    c.encoder.hidden = cfg.at("hidden_size").get<int>();
    c.encoder.layers = cfg.at("num_hidden_layers").get<int>();
    c.encoder.heads = cfg.at("num_attention_heads").get<int>();
    c.encoder.ffn = cfg.at("intermediate_size").get<int>();
    c.encoder.max_positions = cfg.at("max_position_embeddings").get<int>();
    c.encoder.type_vocab = cfg.value("type_vocab_size", 2);
    c.encoder.layer_norm_eps = cfg.value("layer_norm_eps", 1e-12);
    c.encoder.position = PositionKind::kLearned;
    c.encoder.init_std = cfg.value("initializer_range", 0.02);
    c.max_length = max_length;
    c.shared_heads = shared_heads;
    auto vocab = Vocabulary::load((fs::path(dir) / "vocab.txt").string());
    if (static_cast<int>(vocab.size()) != c.encoder.vocab_size)
      throw DataError("vocab.txt size differs from config vocab_size");
    DirectModel m(c, std::move(vocab), std::move(schema), seed);
    for (auto* p : m.encoder_->parameters()) {
      auto file = (fs::path(dir) / (p->name + ".npy")).string();
      ag::Matrix v = load_npy(file);
      const bool is_linear = p->name.find("embeddings") == std::string::npos &&
                             p->name.find("LayerNorm") == std::string::npos && p->name.ends_with(".weight");
      if (is_linear) v.transposeInPlace();  // stored as (out, in)
      if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
        throw DataError("shape mismatch for " + p->name);
      p->value = std::move(v);
    }
    return m;
  }

  const ModelConfig& config() const { return config_; }
  const InputAssembler& assembler() const { return assembler_; }
  const RelationSchema& schema() const { return schema_; }
  const Vocabulary& vocab() const { return assembler_.tokenizer().vocab(); }

  TransformerEncoder& encoder() { return *encoder_; }
  const TransformerEncoder& encoder() const { return *encoder_; }
  HeadParameters& heads() { return *heads_; }
  const HeadParameters& heads() const { return *heads_; }

  EncoderOutput encode(const AssembledInput& in) const { return encoder_->encode(in); }

  SpanProbabilities span_probabilities(const AssembledInput& in, Task t) const {
    return direct::span_probabilities(encode(in), heads_->span(t), in.sentence_mask());
  }

  RelationProbabilities relation_probabilities(const AssembledInput& in) const {
    return direct::relation_probabilities(encode(in), heads_->relation());
  }

  std::vector<ag::Parameter*> parameters() {
    auto out = encoder_->parameters();
    for (auto* p : heads_->parameters()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  // ---- checkpoint -------------------------------------------------------

  std::string serialize() {
    nlohmann::ordered_json header;
    header["config"] = config_.to_json();
    header["schema"] = schema_.labels();
    header["vocab"] = vocab().tokens();
    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    auto params = parameters();
    for (auto* p : params) table.push_back({p->name, p->value.rows(), p->value.cols()});
    header["parameters"] = table;
    const std::string h = header.dump();

    std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
    append_pod(out, kCheckpointVersion);
    append_pod(out, static_cast<std::uint64_t>(h.size()));
    out += h;
    for (auto* p : params)
      out.append(reinterpret_cast<const char*>(p->value.data()), static_cast<std::size_t>(p->value.size()) * sizeof(double));
    return out;
  }

  void save(const std::string& path) { write_file(path, serialize()); }

  static DirectModel deserialize(std::string_view bytes) {
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
      throw DataError("not a checkpoint archive");
    std::size_t off = 8;
    auto version = read_pod<std::uint32_t>(bytes, off);
    if (version != kCheckpointVersion)
      throw DataError("unsupported checkpoint version " + std::to_string(version));
    auto hlen = read_pod<std::uint64_t>(bytes, off);
    if (off + hlen > bytes.size()) throw DataError("truncated checkpoint header");
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(bytes.substr(off, hlen));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("corrupt checkpoint header: ") + e.what());
    }
    off += hlen;
    DirectModel m(ModelConfig::from_json(header.at("config")),
                  Vocabulary(header.at("vocab").get<std::vector<std::string>>()),
                  RelationSchema(header.at("schema").get<std::vector<std::string>>()), 0);
    auto params = m.parameters();
    auto& table = header.at("parameters");
    if (table.size() != params.size()) throw DataError("checkpoint parameter table does not match model");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto* p = params[i];
      if (table[i].at(0).get<std::string>() != p->name || table[i].at(1).get<Eigen::Index>() != p->value.rows() ||
          table[i].at(2).get<Eigen::Index>() != p->value.cols())
        throw DataError("checkpoint parameter mismatch at " + p->name);
      const std::size_t n = static_cast<std::size_t>(p->value.size()) * sizeof(double);
      if (off + n > bytes.size()) throw DataError("truncated checkpoint payload");
      std::memcpy(p->value.data(), bytes.data() + off, n);
      off += n;
    }
    if (off != bytes.size()) throw DataError("trailing bytes in checkpoint");
    return m;
  }

  static DirectModel load(const std::string& path) { return deserialize(read_file(path)); }

 private:
  template <typename T>
  static void append_pod(std::string& out, T v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
  }

  template <typename T>
  static T read_pod(std::string_view bytes, std::size_t& off) {
    if (off + sizeof(T) > bytes.size()) throw DataError("truncated checkpoint");
    T v;
    std::memcpy(&v, bytes.data() + off, sizeof v);
    off += sizeof v;
    return v;
  }

  ModelConfig config_;
  RelationSchema schema_;
  InputAssembler assembler_;
  std::unique_ptr<TransformerEncoder> encoder_;
  std::unique_ptr<HeadParameters> heads_;
};

}  // namespace direct
