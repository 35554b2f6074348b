#pragma once

// Task-specific output layers. Span heads score every position
// independently, p = sigmoid(w . h_i + b), once for span starts and once
// for span ends; the relation head is a multi-label sigmoid layer over the
// classification-marker vector.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "direct/autograd.hpp"
#include "direct/corpus.hpp"
#include "direct/encoder.hpp"
#include "direct/subtasks.hpp"

namespace direct {

inline constexpr double kDefaultExtractionThreshold = 0.9;
inline constexpr double kDefaultRelationThreshold = 0.5;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct SpanHead {
  ag::Parameter start_weight;  // h x 1
  ag::Parameter start_bias;    // 1 x 1
  ag::Parameter end_weight;
  ag::Parameter end_bias;

  std::vector<ag::Parameter*> parameters() { return {&start_weight, &start_bias, &end_weight, &end_bias}; }
};

struct RelationHead {
  ag::Parameter weight;  // h x c
  ag::Parameter bias;    // 1 x c

  std::vector<ag::Parameter*> parameters() { return {&weight, &bias}; }
};

/// Output-layer parameters for the three sub-tasks. With `shared` set the
/// object task reads and trains the subject head.
class HeadParameters {
 public:
  HeadParameters() = default;

  HeadParameters(int hidden, std::size_t relations, bool shared, std::uint64_t seed) : shared_(shared) {
    if (hidden <= 0 || relations == 0) throw UsageError("head dimensions must be positive");
    std::mt19937_64 rng(seed);
    const auto h = static_cast<Eigen::Index>(hidden);
    const auto c = static_cast<Eigen::Index>(relations);
    const double std = 0.02;
    auto normal = [&](Eigen::Index r, Eigen::Index cols) {
      std::normal_distribution<double> d(0.0, std);
      ag::Matrix m(r, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = d(rng);
      return m;
    };
    for (std::size_t t = 0; t < 2; ++t) {
      const std::string p = std::string("heads.") + std::string(task_name(static_cast<Task>(t))) + ".";
      span_[t].start_weight = ag::Parameter(p + "start.weight", normal(h, 1));
      span_[t].start_bias = ag::Parameter(p + "start.bias", ag::Matrix::Zero(1, 1));
      span_[t].end_weight = ag::Parameter(p + "end.weight", normal(h, 1));
      span_[t].end_bias = ag::Parameter(p + "end.bias", ag::Matrix::Zero(1, 1));
    }
    relation_.weight = ag::Parameter("heads.r.weight", normal(h, c));
    relation_.bias = ag::Parameter("heads.r.bias", ag::Matrix::Zero(1, c));
  }

  bool shared() const { return shared_; }
  Eigen::Index hidden() const { return relation_.weight.value.rows(); }
  std::size_t relations() const { return static_cast<std::size_t>(relation_.weight.value.cols()); }

  SpanHead& span(Task t) { return span_[span_slot(t)]; }
  const SpanHead& span(Task t) const { return span_[span_slot(t)]; }
  RelationHead& relation() { return relation_; }
  const RelationHead& relation() const { return relation_; }

  /// Parameters owned by one task's output layer.
  std::vector<ag::Parameter*> task_parameters(Task t) {
    if (t == Task::kRelation) return relation_.parameters();
    return span(t).parameters();
  }

  /// Every distinct head parameter (the object head is omitted when shared).
  std::vector<ag::Parameter*> parameters() {
    std::vector<ag::Parameter*> out = span_[0].parameters();
    if (!shared_)
      for (auto* p : span_[1].parameters()) out.push_back(p);
    for (auto* p : relation_.parameters()) out.push_back(p);
    return out;
  }

 private:
  std::size_t span_slot(Task t) const {
    if (t == Task::kRelation) throw UsageError("relation task has no span head");
    return (shared_ || t == Task::kSubject) ? 0 : 1;
  }

  std::array<SpanHead, 2> span_;
  RelationHead relation_;
  bool shared_ = false;
};

struct SpanProbabilities {
  std::vector<double> start;
  std::vector<double> end;
};

struct RelationProbabilities {
  std::vector<double> p;
};

// ---------------------------------------------------------------------------
// Inference

/// Per-position start/end probabilities; positions where `mask` is false
/// are set to exactly 0.
inline SpanProbabilities span_probabilities(const EncoderOutput& enc, const SpanHead& head,
                                            const std::vector<bool>& mask) {
  if (head.start_weight.value.rows() != enc.width() || head.end_weight.value.rows() != enc.width())
    throw UsageError("span head expects hidden size " + std::to_string(head.start_weight.value.rows()) +
                     ", encoder produced " + std::to_string(enc.width()));
  if (mask.size() != static_cast<std::size_t>(enc.length()))
    throw UsageError("span mask length differs from encoder output length");
  Eigen::VectorXd zs = enc.hidden * head.start_weight.value.col(0);
  Eigen::VectorXd ze = enc.hidden * head.end_weight.value.col(0);
  SpanProbabilities out;
  out.start.resize(mask.size());
  out.end.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.start[i] = mask[i] ? sigmoid(zs(r) + head.start_bias.value(0, 0)) : 0.0;
    out.end[i] = mask[i] ? sigmoid(ze(r) + head.end_bias.value(0, 0)) : 0.0;
  }
  return out;
}

inline RelationProbabilities relation_probabilities(const EncoderOutput& enc, const RelationHead& head) {
  if (head.weight.value.rows() != enc.width())
    throw UsageError("relation head expects hidden size " + std::to_string(head.weight.value.rows()));
  ag::RowVector z = enc.cls_vector() * head.weight.value + head.bias.value.row(0);
  RelationProbabilities out;
  out.p.resize(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) out.p[static_cast<std::size_t>(i)] = sigmoid(z(i));
  return out;
}

inline std::vector<std::size_t> predicted_labels(const RelationProbabilities& rp,
                                                 double threshold = kDefaultRelationThreshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rp.p.size(); ++i)
    if (rp.p[i] > threshold) out.push_back(i);
  return out;
}

/// Pointer decoding: every position with p_start > alpha opens a span; its
/// end is the argmax of p_end from that start up to (excluding) the next
/// start, or to the end of the vector for the last start. Ties go to the
/// smallest index.
inline std::vector<TokenSpan> decode_spans(std::span<const double> p_start, std::span<const double> p_end,
                                           double alpha = kDefaultExtractionThreshold) {
  if (p_start.size() != p_end.size()) throw UsageError("start/end probability vectors differ in length");
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < p_start.size(); ++i)
    if (p_start[i] > alpha) starts.push_back(i);
  std::vector<TokenSpan> spans;
  spans.reserve(starts.size());
  for (std::size_t j = 0; j < starts.size(); ++j) {
    const std::size_t limit = j + 1 < starts.size() ? starts[j + 1] : p_end.size();
    std::size_t best = starts[j];
    for (std::size_t i = starts[j] + 1; i < limit; ++i)
      if (p_end[i] > p_end[best]) best = i;
    spans.push_back({static_cast<int>(starts[j]), static_cast<int>(best)});
  }
  return spans;
}

/// Threshold decoding: starts and ends are both positions above alpha; each
/// start is paired with the nearest end at or after it. Starts without such
/// an end are dropped.
inline std::vector<TokenSpan> decode_spans_threshold(std::span<const double> p_start, std::span<const double> p_end,
                                                     double alpha = kDefaultExtractionThreshold) {
  if (p_start.size() != p_end.size()) throw UsageError("start/end probability vectors differ in length");
  std::vector<TokenSpan> spans;
  std::size_t next_end = 0;
  for (std::size_t i = 0; i < p_start.size(); ++i) {
    if (!(p_start[i] > alpha)) continue;
    next_end = std::max(next_end, i);
    while (next_end < p_end.size() && !(p_end[next_end] > alpha)) ++next_end;
    if (next_end == p_end.size()) break;
    spans.push_back({static_cast<int>(i), static_cast<int>(next_end)});
  }
  return spans;
}

struct BceResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d prediction
};

/// Mean binary cross entropy over positions where `mask` is set (all
/// positions when `mask` is empty). Predictions are clamped away from 0/1.
inline BceResult bce_loss(std::span<const double> predictions, std::span<const std::uint8_t> targets,
                          const std::vector<bool>& mask = {}) {
  if (predictions.size() != targets.size()) throw UsageError("bce: predictions and targets differ in length");
  if (!mask.empty() && mask.size() != predictions.size()) throw UsageError("bce: mask length mismatch");
  constexpr double kClamp = 1e-12;
  BceResult r;
  r.grad.assign(predictions.size(), 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) n += mask.empty() || mask[i];
  if (n == 0) return r;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double p = std::clamp(predictions[i], kClamp, 1.0 - kClamp);
    const double y = targets[i];
    if (y != 0.0 && y != 1.0) throw UsageError("bce: targets must be 0 or 1");
    r.loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    r.grad[i] = (p - y) / (p * (1.0 - p)) / static_cast<double>(n);
  }
  r.loss /= static_cast<double>(n);
  return r;
}

// ---------------------------------------------------------------------------
// Training graph pieces

/// Loss of one example given the encoder's hidden states: mean start BCE
/// plus mean end BCE over the sentence segment for span tasks, mean BCE over
/// labels for the relation task.
inline ag::Var example_loss(ag::Graph& g, ag::Var hidden, HeadParameters& heads, const SubtaskExample& ex) {
  if (ex.task == Task::kRelation) {
    ag::Var cls = g.block(hidden, 0, 0, 1, hidden.cols());
    ag::Var z = g.add_row(g.matmul(cls, g.param(heads.relation().weight)), g.param(heads.relation().bias));
    ag::Matrix y(1, static_cast<Eigen::Index>(ex.relation_target.size()));
    for (std::size_t i = 0; i < ex.relation_target.size(); ++i)
      y(0, static_cast<Eigen::Index>(i)) = ex.relation_target[i];
    return g.bce_with_logits_mean(z, std::move(y));
  }
  SpanHead& head = heads.span(ex.task);
  const auto b = static_cast<Eigen::Index>(ex.input.sentence_begin);
  const auto n = static_cast<Eigen::Index>(ex.input.sentence_end - ex.input.sentence_begin);
  ag::Var region = g.block(hidden, b, 0, n, hidden.cols());
  ag::Var zs = g.add_row(g.matmul(region, g.param(head.start_weight)), g.param(head.start_bias));
  ag::Var ze = g.add_row(g.matmul(region, g.param(head.end_weight)), g.param(head.end_bias));
  ag::Matrix ys(n, 1), ye(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    ys(i, 0) = ex.start_target[static_cast<std::size_t>(b + i)];
    ye(i, 0) = ex.end_target[static_cast<std::size_t>(b + i)];
  }
  return g.add(g.bce_with_logits_mean(zs, std::move(ys)), g.bce_with_logits_mean(ze, std::move(ye)));
}

}  // namespace direct
