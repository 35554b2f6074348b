#pragma once

// Shared contextual encoder: a post-norm transformer encoder that covers both
// backends. The compact backend uses sinusoidal positions and a small
// configuration; the pretrained backend mirrors BERT (learned positions,
// token-type embeddings, erf GELU) and loads weights exported from it.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "direct/autograd.hpp"
#include "direct/common.hpp"
#include "direct/encoding.hpp"

namespace direct {

enum class PositionKind : std::uint8_t { kLearned, kSinusoidal };

struct EncoderConfig {
  int vocab_size = 0;
  int hidden = 128;
  int layers = 2;
  int heads = 4;
  int ffn = 256;
  int max_positions = static_cast<int>(kDefaultMaxLength);
  int type_vocab = 0;  // 0: no token-type embeddings
  PositionKind position = PositionKind::kSinusoidal;
  double layer_norm_eps = 1e-5;
  double init_std = 0.0;  // 0 selects Xavier-normal for dense layers

  static EncoderConfig compact(int vocab_size) {
    EncoderConfig c;
    c.vocab_size = vocab_size;
    return c;
  }

  static EncoderConfig bert_base(int vocab_size) {
    EncoderConfig c;
    c.vocab_size = vocab_size;
    c.hidden = 768;
    c.layers = 12;
    c.heads = 12;
    c.ffn = 3072;
    c.max_positions = 512;
    c.type_vocab = 2;
    c.position = PositionKind::kLearned;
    c.layer_norm_eps = 1e-12;
    c.init_std = 0.02;
    return c;
  }

  void validate() const {
    if (vocab_size <= 0) throw UsageError("encoder vocab_size must be positive");
    if (hidden <= 0 || layers <= 0 || heads <= 0 || ffn <= 0 || max_positions <= 0)
      throw UsageError("encoder dimensions must be positive");
    if (hidden % heads != 0) throw UsageError("encoder hidden size must be divisible by the head count");
  }

  nlohmann::ordered_json to_json() const {
    return {{"vocab_size", vocab_size},
            {"hidden", hidden},
            {"layers", layers},
            {"heads", heads},
            {"ffn", ffn},
            {"max_positions", max_positions},
            {"type_vocab", type_vocab},
            {"position", position == PositionKind::kLearned ? "learned" : "sinusoidal"},
            {"layer_norm_eps", layer_norm_eps},
            {"init_std", init_std}};
  }

  static EncoderConfig from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.hidden = j.value("hidden", c.hidden);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.ffn = j.value("ffn", c.ffn);
    c.max_positions = j.value("max_positions", c.max_positions);
    c.type_vocab = j.value("type_vocab", c.type_vocab);
    c.position = j.value("position", std::string("sinusoidal")) == "learned" ? PositionKind::kLearned
                                                                            : PositionKind::kSinusoidal;
    c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
    c.init_std = j.value("init_std", c.init_std);
    return c;
  }
};

struct EncoderOutput {
  ag::Matrix hidden;  // one row per input position

  Eigen::Index length() const { return hidden.rows(); }
  Eigen::Index width() const { return hidden.cols(); }
  ag::RowVector cls_vector() const { return hidden.row(0); }
};

inline ag::Matrix sinusoidal_positions(Eigen::Index length, Eigen::Index width) {
  ag::Matrix pe(length, width);
  for (Eigen::Index p = 0; p < length; ++p) {
    for (Eigen::Index i = 0; i < width; ++i) {
      double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      pe(p, i) = (i % 2 == 0) ? std::sin(static_cast<double>(p) * rate) : std::cos(static_cast<double>(p) * rate);
    }
  }
  return pe;
}

class TransformerEncoder {
 public:
  TransformerEncoder() = default;

  TransformerEncoder(EncoderConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    build(rng);
  }

  const EncoderConfig& config() const { return config_; }
  int hidden_size() const { return config_.hidden; }

  std::vector<ag::Parameter*> parameters() {
    std::vector<ag::Parameter*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  ag::Parameter& parameter(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw DataError("encoder has no parameter '" + name + "'");
    return *it->second;
  }

  bool has_parameter(const std::string& name) const { return by_name_.count(name) > 0; }

  /// Records the forward pass into `g` and returns the hidden states.
  ag::Var forward(ag::Graph& g, const AssembledInput& in) {
    const auto length = static_cast<Eigen::Index>(in.size());
    if (length == 0) throw DataError("cannot encode an empty input");
    if (length > config_.max_positions)
      throw DataError("input of " + std::to_string(length) + " positions exceeds encoder maximum " +
                      std::to_string(config_.max_positions));
    for (int id : in.ids)
      if (id < 0 || id >= config_.vocab_size) throw DataError("token id out of vocabulary range");

    ag::Var x = g.gather_rows(g.param(parameter("embeddings.word_embeddings.weight")), in.ids);
    if (config_.position == PositionKind::kLearned) {
      std::vector<int> pos(static_cast<std::size_t>(length));
      for (int i = 0; i < length; ++i) pos[static_cast<std::size_t>(i)] = i;
      x = g.add(x, g.gather_rows(g.param(parameter("embeddings.position_embeddings.weight")), pos));
    } else {
      x = g.add(x, g.constant(sinusoidal_positions(length, config_.hidden)));
    }
    if (config_.type_vocab > 0)
      x = g.add(x, g.gather_rows(g.param(parameter("embeddings.token_type_embeddings.weight")), in.token_types()));
    x = g.layer_norm(x, g.param(parameter("embeddings.LayerNorm.weight")),
                     g.param(parameter("embeddings.LayerNorm.bias")), config_.layer_norm_eps);

    for (int l = 0; l < config_.layers; ++l) x = layer(g, x, l);
    return x;
  }

  /// Inference-mode encoding (no gradient recording).
  EncoderOutput encode(const AssembledInput& in) const {
    ag::Graph g(false);
    auto& self = const_cast<TransformerEncoder&>(*this);  // forward() only reads parameters here
    ag::Var h = self.forward(g, in);
    return EncoderOutput{h.value()};
  }

 private:
  ag::Var linear(ag::Graph& g, ag::Var x, const std::string& prefix) {
    return g.add_row(g.matmul(x, g.param(parameter(prefix + ".weight"))), g.param(parameter(prefix + ".bias")));
  }

  ag::Var layer(ag::Graph& g, ag::Var x, int l) {
    const std::string p = "encoder.layer." + std::to_string(l) + ".";
    ag::Var q = linear(g, x, p + "attention.self.query");
    ag::Var k = linear(g, x, p + "attention.self.key");
    ag::Var v = linear(g, x, p + "attention.self.value");
    const int dh = config_.hidden / config_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto length = x.rows();
    std::vector<ag::Var> heads;
    heads.reserve(static_cast<std::size_t>(config_.heads));
    for (int h = 0; h < config_.heads; ++h) {
      ag::Var qh = g.block(q, 0, h * dh, length, dh);
      ag::Var kh = g.block(k, 0, h * dh, length, dh);
      ag::Var vh = g.block(v, 0, h * dh, length, dh);
      ag::Var att = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), scale));
      heads.push_back(g.matmul(att, vh));
    }
    ag::Var ctx = config_.heads == 1 ? heads.front() : g.concat_cols(heads);
    ag::Var attn = linear(g, ctx, p + "attention.output.dense");
    x = g.layer_norm(g.add(attn, x), g.param(parameter(p + "attention.output.LayerNorm.weight")),
                     g.param(parameter(p + "attention.output.LayerNorm.bias")), config_.layer_norm_eps);
    ag::Var f = g.gelu(linear(g, x, p + "intermediate.dense"));
    f = linear(g, f, p + "output.dense");
    return g.layer_norm(g.add(f, x), g.param(parameter(p + "output.LayerNorm.weight")),
                        g.param(parameter(p + "output.LayerNorm.bias")), config_.layer_norm_eps);
  }

  void add(const std::string& name, ag::Matrix value) {
    params_.push_back(std::make_unique<ag::Parameter>(name, std::move(value)));
    by_name_[name] = params_.back().get();
  }

  ag::Matrix normal(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double std) {
    std::normal_distribution<double> dist(0.0, std);
    ag::Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
    return m;
  }

  ag::Matrix dense(std::mt19937_64& rng, Eigen::Index in, Eigen::Index out) {
    double std = config_.init_std > 0 ? config_.init_std : std::sqrt(2.0 / static_cast<double>(in + out));
    return normal(rng, in, out, std);
  }

  void build(std::mt19937_64& rng) {
    const int h = config_.hidden;
    const double emb_std = config_.position == PositionKind::kSinusoidal ? 1.0
                           : config_.init_std > 0                        ? config_.init_std
                                                                         : 0.02;
    add("embeddings.word_embeddings.weight", normal(rng, config_.vocab_size, h, emb_std));
    if (config_.position == PositionKind::kLearned)
      add("embeddings.position_embeddings.weight", normal(rng, config_.max_positions, h, emb_std));
    if (config_.type_vocab > 0)
      add("embeddings.token_type_embeddings.weight", normal(rng, config_.type_vocab, h, emb_std));
    add("embeddings.LayerNorm.weight", ag::Matrix::Ones(1, h));
    add("embeddings.LayerNorm.bias", ag::Matrix::Zero(1, h));
    for (int l = 0; l < config_.layers; ++l) {
      const std::string p = "encoder.layer." + std::to_string(l) + ".";
      for (const char* name : {"attention.self.query", "attention.self.key", "attention.self.value",
                               "attention.output.dense"}) {
        add(p + name + ".weight", dense(rng, h, h));
        add(p + name + ".bias", ag::Matrix::Zero(1, h));
      }
      add(p + "attention.output.LayerNorm.weight", ag::Matrix::Ones(1, h));
      add(p + "attention.output.LayerNorm.bias", ag::Matrix::Zero(1, h));
      add(p + "intermediate.dense.weight", dense(rng, h, config_.ffn));
      add(p + "intermediate.dense.bias", ag::Matrix::Zero(1, config_.ffn));
      add(p + "output.dense.weight", dense(rng, config_.ffn, h));
      add(p + "output.dense.bias", ag::Matrix::Zero(1, h));
      add(p + "output.LayerNorm.weight", ag::Matrix::Ones(1, h));
      add(p + "output.LayerNorm.bias", ag::Matrix::Zero(1, h));
    }
  }

  EncoderConfig config_;
  std::vector<std::unique_ptr<ag::Parameter>> params_;
  std::map<std::string, ag::Parameter*> by_name_;
};

}  // namespace direct
