#pragma once

// Multi-task training loop. Each epoch packs every task's examples into
// mini-batches, shuffles the merged list, and for each batch
//   1. computes per-example losses of the batch's task,
//   2. folds their sum into that task's EMA,
//   3. weighs the batch by w_t and steps on grad(w_t * mean loss),
// touching only the encoder and the current task's head.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "direct/evaluation.hpp"
#include "direct/model.hpp"
#include "direct/mtl.hpp"
#include "direct/optimizer.hpp"
#include "direct/pipeline.hpp"
#include "direct/subtasks.hpp"

namespace direct {

struct Ablations {
  bool shared_heads = false;
  bool equal_weights = false;
  bool threshold_decode = false;
  bool plain_optimizer = false;

  /// Accepts shared, equal, threshold and plain-optim.
  void enable(std::string_view name) {
    if (name == "shared") shared_heads = true;
    else if (name == "equal") equal_weights = true;
    else if (name == "threshold") threshold_decode = true;
    else if (name == "plain-optim" || name == "adam") plain_optimizer = true;
    else throw UsageError("unknown ablation '" + std::string(name) + "' (expected shared, equal, threshold or plain-optim)");
  }
};

struct TrainConfig {
  std::string train_path;
  std::string valid_path;   // empty: validate on the training set
  std::string schema_path;  // empty: labels collected from the training set
  std::string output_dir;
  Backend backend = Backend::kCompact;
  std::string pretrained_dir;

  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double learning_rate = 8e-5;
  std::uint64_t seed = 42;
  double ema_decay = kDefaultEmaDecay;
  double extraction_threshold = kDefaultExtractionThreshold;
  double relation_threshold = kDefaultRelationThreshold;
  double warmup_fraction = 0.1;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  std::size_t max_length = kDefaultMaxLength;
  Ablations ablations;
  std::optional<OptimizerKind> optimizer;  // overrides the ablation-derived choice

  // compact encoder shape
  int hidden = 128, layers = 2, heads = 4, ffn = 256;

  std::size_t eval_every = 1;
  std::optional<double> stop_at_f1;  // stop once validation F1 reaches this

  OptimizerKind optimizer_kind() const {
    if (optimizer) return *optimizer;
    return ablations.plain_optimizer ? OptimizerKind::kAdam : OptimizerKind::kLazyAdam;
  }

  ExtractConfig extract_config() const {
    return ExtractConfig{extraction_threshold, relation_threshold, ablations.threshold_decode};
  }

  EncoderConfig encoder_shape() const {
    EncoderConfig e;
    e.hidden = hidden;
    e.layers = layers;
    e.heads = heads;
    e.ffn = ffn;
    e.max_positions = static_cast<int>(max_length);
    return e;
  }

  void validate() const {
    if (epochs < 1) throw UsageError("epochs must be at least 1");
    if (batch_size < 1) throw UsageError("batch_size must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning_rate must be positive");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw UsageError("ema_decay must lie in (0, 1)");
    if (!(grad_clip >= 0.0)) throw UsageError("grad_clip must be non-negative");
    if (eval_every < 1) throw UsageError("eval_every must be at least 1");
    if (backend == Backend::kPretrained && pretrained_dir.empty())
      throw UsageError("backend pretrained needs pretrained_dir");
    extract_config().validate();
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw UsageError("training config must be a JSON object");
    for (const char* key : {"train_path", "output_dir", "backend", "epochs", "batch_size", "learning_rate"})
      if (!j.contains(key)) throw UsageError(std::string("training config is missing required key '") + key + "'");
    TrainConfig c;
    try {
      c.train_path = j.at("train_path").get<std::string>();
      c.output_dir = j.at("output_dir").get<std::string>();
      c.backend = parse_backend(j.at("backend").get<std::string>());
      const auto epochs = j.at("epochs").get<std::int64_t>();
      if (epochs < 1) throw UsageError("epochs must be at least 1");
      c.epochs = static_cast<std::size_t>(epochs);
      c.batch_size = j.at("batch_size").get<std::size_t>();
      c.learning_rate = j.at("learning_rate").get<double>();
      c.valid_path = j.value("valid_path", "");
      c.schema_path = j.value("schema_path", "");
      c.pretrained_dir = j.value("pretrained_dir", "");
      c.seed = j.value("seed", c.seed);
      c.ema_decay = j.value("ema_decay", c.ema_decay);
      c.extraction_threshold = j.value("extraction_threshold", c.extraction_threshold);
      c.relation_threshold = j.value("relation_threshold", c.relation_threshold);
      c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
      c.grad_clip = j.value("grad_clip", c.grad_clip);
      c.max_length = j.value("max_length", c.max_length);
      if (j.contains("ablations"))
        for (auto& a : j.at("ablations")) c.ablations.enable(a.get<std::string>());
      if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
      if (j.contains("encoder")) {
        auto& e = j.at("encoder");
        c.hidden = e.value("hidden", c.hidden);
        c.layers = e.value("layers", c.layers);
        c.heads = e.value("heads", c.heads);
        c.ffn = e.value("ffn", c.ffn);
      }
      c.eval_every = j.value("eval_every", c.eval_every);
      if (j.contains("stop_at_f1")) c.stop_at_f1 = j.at("stop_at_f1").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("bad training config: ") + e.what());
    }
    c.validate();
    return c;
  }

  nlohmann::ordered_json to_json() const {
    std::vector<std::string> abl;
    if (ablations.shared_heads) abl.push_back("shared");
    if (ablations.equal_weights) abl.push_back("equal");
    if (ablations.threshold_decode) abl.push_back("threshold");
    if (ablations.plain_optimizer) abl.push_back("plain-optim");
    nlohmann::ordered_json j{{"train_path", train_path},
                             {"valid_path", valid_path},
                             {"schema_path", schema_path},
                             {"output_dir", output_dir},
                             {"backend", backend_name(backend)},
                             {"pretrained_dir", pretrained_dir},
                             {"epochs", epochs},
                             {"batch_size", batch_size},
                             {"learning_rate", learning_rate},
                             {"seed", seed},
                             {"ema_decay", ema_decay},
                             {"extraction_threshold", extraction_threshold},
                             {"relation_threshold", relation_threshold},
                             {"warmup_fraction", warmup_fraction},
                             {"grad_clip", grad_clip},
                             {"max_length", max_length},
                             {"ablations", abl},
                             {"optimizer", optimizer_name(optimizer_kind())},
                             {"encoder", {{"hidden", hidden}, {"layers", layers}, {"heads", heads}, {"ffn", ffn}}},
                             {"eval_every", eval_every}};
    if (stop_at_f1) j["stop_at_f1"] = *stop_at_f1;
    return j;
  }
};

/// Builds the model a config asks for.
inline DirectModel make_model(const TrainConfig& cfg, const Corpus& train, RelationSchema schema) {
  if (cfg.backend == Backend::kPretrained)
    return DirectModel::from_pretrained(cfg.pretrained_dir, std::move(schema), cfg.ablations.shared_heads, cfg.seed,
                                        cfg.max_length);
  return DirectModel::compact(train, std::move(schema), cfg.encoder_shape(), cfg.ablations.shared_heads, cfg.seed,
                              cfg.max_length);
}

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  Task task = Task::kSubject;
  double loss_sum = 0.0;
  double loss_mean = 0.0;
  double weight = 1.0;
  double lr = 0.0;

  nlohmann::ordered_json to_json() const {
    return {{"step", step},           {"epoch", epoch},  {"task", task_name(task)}, {"loss_sum", loss_sum},
            {"loss_mean", loss_mean}, {"weight", weight}, {"lr", lr}};
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> valid_f1;
  double seconds = 0.0;  // wall clock; kept out of to_json so logs replay bit-for-bit

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j{{"epoch", epoch}, {"mean_loss", mean_loss}};
    j["valid_f1"] = valid_f1 ? nlohmann::ordered_json(*valid_f1) : nlohmann::ordered_json(nullptr);
    return j;
  }
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  double best_f1 = -1.0;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
};

class Trainer {
 public:
  Trainer(DirectModel& model, const Corpus& train, TrainConfig config)
      : model_(model),
        config_(std::move(config)),
        examples_(derive_corpus_examples(train, model.assembler(), model.schema(), &truncated_)),
        optimizer_(config_.optimizer_kind(), model.parameters()) {
    config_.validate();
  }

  const TaskExamples& examples() const { return examples_; }
  std::size_t truncated_inputs() const { return truncated_; }
  const TrainConfig& config() const { return config_; }

  std::array<std::size_t, 3> example_counts() const {
    return {examples_.subject.size(), examples_.object.size(), examples_.relation.size()};
  }

  /// Parameters a step on `task` may change: encoder plus that task's head.
  std::vector<ag::Parameter*> active_parameters(Task task) {
    auto out = model_.encoder().parameters();
    for (auto* p : model_.heads().task_parameters(task)) out.push_back(p);
    return out;
  }

  /// One optimisation step on `batch`. Updates `ema` in place.
  StepLog train_step(const Batch& batch, EmaState& ema, double lr, std::size_t step = 0, std::size_t epoch = 0) {
    if (batch.examples.empty()) throw UsageError("empty batch");
    const auto& pool = examples_.of(batch.task);
    model_.zero_grad();
    const double inv_b = 1.0 / static_cast<double>(batch.examples.size());
    double loss_sum = 0.0;
    for (auto idx : batch.examples) {
      const SubtaskExample& ex = pool.at(idx);
      ag::Graph g;
      ag::Var h = model_.encoder().forward(g, ex.input);
      ag::Var loss = example_loss(g, h, model_.heads(), ex);
      loss_sum += loss.value()(0, 0);
      g.backward(loss, inv_b);
    }

    if (!std::isfinite(loss_sum))
      throw NumericError("non-finite loss in batch " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                         ", task " + std::string(task_name(batch.task)) + ")");
    ema = update_ema(ema, batch.task, loss_sum);
    const double w = task_weight(ema, batch.task, config_.ablations.equal_weights);

    auto active = active_parameters(batch.task);
    double norm2 = 0.0;
    for (auto* p : active) {
      p->grad *= w;
      norm2 += p->grad.squaredNorm();
    }
    if (!std::isfinite(norm2))
      throw NumericError("non-finite gradient in batch " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                         ", task " + std::string(task_name(batch.task)) + ")");
    if (config_.grad_clip > 0.0) {
      const double norm = std::sqrt(norm2);
      if (norm > config_.grad_clip)
        for (auto* p : active) p->grad *= config_.grad_clip / norm;
    }
    optimizer_.step(active, lr);

    StepLog log;
    log.step = step;
    log.epoch = epoch;
    log.task = batch.task;
    log.loss_sum = loss_sum;
    log.loss_mean = loss_sum * inv_b;
    log.weight = w;
    log.lr = lr;
    return log;
  }

  /// Triple-level partial-match F1 of the current model on `corpus`.
  double evaluate_f1(const Corpus& corpus, MatchMode mode = MatchMode::kPartial) const {
    auto preds = predict_corpus(corpus, model_, config_.extract_config());
    return score(preds, corpus, mode).overall.f1();
  }

  /// Runs the configured epochs; the model ends up holding the parameters
  /// of the epoch with the best validation F1.
  TrainResult train(const Corpus& valid, const TrainHooks& hooks = {}) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    TrainResult result;
    const auto counts = example_counts();
    const std::size_t per_epoch = build_schedule(counts, config_.batch_size, config_.seed).size();
    TriangularSchedule lr(config_.learning_rate, per_epoch * config_.epochs, config_.warmup_fraction);
    std::string best;
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
      const auto te = clock::now();
      auto schedule = build_schedule(counts, config_.batch_size, config_.seed + epoch);
      EmaState ema = EmaState::initial(schedule.per_task, config_.ema_decay);
      double loss_total = 0.0;
      for (auto& batch : schedule.batches) {
        auto log = train_step(batch, ema, lr.at(step), step, epoch);
        loss_total += log.loss_mean;
        if (hooks.on_step) hooks.on_step(log);
        result.steps.push_back(log);
        ++step;
      }

      EpochLog el;
      el.epoch = epoch;
      el.mean_loss = loss_total / static_cast<double>(schedule.size());
      const bool last = epoch + 1 == config_.epochs;
      if ((epoch + 1) % config_.eval_every == 0 || last) {
        el.valid_f1 = evaluate_f1(valid);
        if (*el.valid_f1 > result.best_f1) {
          result.best_f1 = *el.valid_f1;
          result.best_epoch = epoch;
          best = model_.serialize();
        }
      }
      el.seconds = std::chrono::duration<double>(clock::now() - te).count();
      if (hooks.on_epoch) hooks.on_epoch(el);
      result.epochs.push_back(el);
      if (config_.stop_at_f1 && el.valid_f1 && *el.valid_f1 >= *config_.stop_at_f1) break;
    }

    if (!best.empty()) restore(best);
    result.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    return result;
  }

 private:
  void restore(const std::string& bytes) {
    auto saved = DirectModel::deserialize(bytes);
    auto dst = model_.parameters();
    auto src = saved.parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
  }

  DirectModel& model_;
  TrainConfig config_;
  std::size_t truncated_ = 0;
  TaskExamples examples_;
  Optimizer optimizer_;
};

}  // namespace direct
