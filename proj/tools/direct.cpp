// Command-line entry point: ingest, stats, train, predict, evaluate, cost.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime or numeric
// failure. DIRECT_HOME, when set, is where relative training output
// directories and the run manifest live.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "direct/direct.hpp"

namespace fs = std::filesystem;
using namespace direct;

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<fs::path> direct_home() {
  if (const char* h = std::getenv("DIRECT_HOME"); h && *h) return fs::path(h);
  return std::nullopt;
}

std::string checksum(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

/// Appends one line to the manifest log ($DIRECT_HOME/manifests.jsonl, or
/// next to the command's main output).
void append_manifest(const fs::path& output_dir, nlohmann::ordered_json manifest) {
  fs::path file = direct_home().value_or(output_dir.empty() ? fs::path(".") : output_dir) / "manifests.jsonl";
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot append manifest to " + file.string());
  out << manifest.dump() << '\n';
}

void write_text(const std::string& path, std::string_view content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file(path, content);
}

Corpus read_any_corpus(const std::string& path, const std::string& schema_path) {
  if (schema_path.empty()) return read_corpus(path);
  auto schema = load_schema(schema_path);
  return read_corpus(path, &schema);
}

// ---------------------------------------------------------------------------

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode = "partial";
  std::string backend;
  std::vector<std::string> ablations;
  std::string convention = "unordered";

  OverlapConvention overlap() const {
    if (convention == "unordered") return OverlapConvention::kUnorderedPairs;
    if (convention == "ordered") return OverlapConvention::kOrderedPairs;
    throw UsageError("unknown overlap convention '" + convention + "' (expected unordered or ordered)");
  }
};

int cmd_ingest(const std::string& raw, const std::string& schema_path, const Common& c) {
  if (c.out.empty()) throw UsageError("ingest needs --out");
  auto corpus = read_any_corpus(raw, schema_path);
  write_text(c.out, write_canonical(corpus));
  std::cerr << "ingested " << corpus.size() << " sentences";
  if (corpus.unaligned_entities)
    std::cerr << " (" << corpus.unaligned_entities << " unaligned entity mentions, " << corpus.unaligned_triples
              << " triplets kept for evaluation only)";
  std::cerr << " -> " << c.out << '\n';
  return 0;
}

int cmd_stats(const std::string& path, const std::string& schema_path, const Common& c) {
  auto stats = corpus_stats(read_any_corpus(path, schema_path), c.overlap());
  std::cout << stats_table(stats);
  if (!c.out.empty()) write_text(c.out, stats_to_json(stats).dump(2) + "\n");
  return 0;
}

int cmd_train(const std::string& config_path, const Common& c) {
  const auto started = utc_now();
  nlohmann::json raw;
  try {
    raw = nlohmann::json::parse(read_file(config_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config " + config_path + " is not valid JSON: " + e.what());
  }
  auto cfg = TrainConfig::from_json(raw);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.backend.empty()) cfg.backend = parse_backend(c.backend);
  for (auto& a : c.ablations) cfg.ablations.enable(a);

  // Input paths are relative to the config file; the output directory to
  // DIRECT_HOME (or the working directory).
  const fs::path base = fs::path(config_path).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(cfg.train_path);
  resolve(cfg.valid_path);
  resolve(cfg.schema_path);
  resolve(cfg.pretrained_dir);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (auto home = direct_home(); home && fs::path(cfg.output_dir).is_relative())
    cfg.output_dir = (*home / cfg.output_dir).string();
  cfg.validate();

  std::optional<RelationSchema> schema;
  if (!cfg.schema_path.empty()) schema = load_schema(cfg.schema_path);
  auto train = read_corpus(cfg.train_path, schema ? &*schema : nullptr);
  if (!schema) schema = schema_from_corpus(train);
  Corpus valid = cfg.valid_path.empty() ? train : read_corpus(cfg.valid_path, &*schema);

  fs::create_directories(cfg.output_dir);
  const fs::path out_dir(cfg.output_dir);
  auto model = make_model(cfg, train, *schema);
  Trainer trainer(model, train, cfg);
  if (trainer.truncated_inputs())
    std::cerr << trainer.truncated_inputs() << " training inputs truncated to " << cfg.max_length << " positions\n";

  const auto log_path = (out_dir / "train_log.jsonl").string();
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw Error("cannot write " + log_path);
  TrainHooks hooks;
  hooks.on_step = [&](const StepLog& s) {
    auto j = s.to_json();
    j["kind"] = "step";
    log << j.dump() << '\n';
  };
  hooks.on_epoch = [&](const EpochLog& e) {
    auto j = e.to_json();
    j["kind"] = "epoch";
    log << j.dump() << '\n';
    log.flush();
    std::cerr << "epoch " << e.epoch + 1 << "/" << cfg.epochs << "  loss " << e.mean_loss;
    if (e.valid_f1) std::cerr << "  valid F1 " << *e.valid_f1;
    std::cerr << "  (" << e.seconds << " s)\n";
  };
  auto result = trainer.train(valid, hooks);
  log.close();

  const auto ckpt = (out_dir / "model.ckpt").string();
  model.save(ckpt);
  std::cerr << "best valid F1 " << result.best_f1 << " at epoch " << result.best_epoch + 1 << "; checkpoint " << ckpt
            << '\n';

  nlohmann::ordered_json inputs{{cfg.train_path, checksum(cfg.train_path)}};
  if (!cfg.valid_path.empty()) inputs[cfg.valid_path] = checksum(cfg.valid_path);
  if (!cfg.schema_path.empty()) inputs[cfg.schema_path] = checksum(cfg.schema_path);
  append_manifest(out_dir, {{"command", "train"},
                            {"started", started},
                            {"finished", utc_now()},
                            {"config", cfg.to_json()},
                            {"seed", cfg.seed},
                            {"inputs", inputs},
                            {"checkpoint", ckpt},
                            {"checkpoint_checksum", checksum(ckpt)},
                            {"log", log_path},
                            {"best_valid_f1", result.best_f1},
                            {"best_epoch", result.best_epoch}});
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& corpus_path, double alpha, double rel_threshold,
                const Common& c) {
  const auto started = utc_now();
  if (c.out.empty()) throw UsageError("predict needs --out");
  fs::path ckpt(checkpoint);
  if (auto home = direct_home(); home && ckpt.is_relative() && !fs::exists(ckpt) && fs::exists(*home / ckpt))
    ckpt = *home / ckpt;
  if (!fs::exists(ckpt)) throw DataError("checkpoint not found: " + ckpt.string());
  auto model = DirectModel::load(ckpt.string());
  auto schema = model.schema();
  auto corpus = read_corpus(corpus_path, &schema);
  Ablations abl;
  for (auto& a : c.ablations) abl.enable(a);
  ExtractConfig cfg{alpha, rel_threshold, abl.threshold_decode};
  cfg.validate();
  auto preds = predict_corpus(corpus, model, cfg);
  write_text(c.out, predictions_to_jsonl(preds));
  std::size_t triples = 0;
  for (auto& p : preds) triples += p.triples.size();
  std::cerr << "predicted " << triples << " triples for " << preds.size() << " sentences -> " << c.out << '\n';

  append_manifest(fs::path(c.out).parent_path(),
                  {{"command", "predict"},
                   {"started", started},
                   {"finished", utc_now()},
                   {"config",
                    {{"extraction_threshold", alpha},
                     {"relation_threshold", rel_threshold},
                     {"threshold_decode", abl.threshold_decode}}},
                   {"seed", nullptr},
                   {"inputs", {{corpus_path, checksum(corpus_path)}}},
                   {"checkpoint", ckpt.string()},
                   {"checkpoint_checksum", checksum(ckpt.string())},
                   {"output", c.out}});
  return 0;
}

int cmd_evaluate(const std::string& predictions, const std::string& gold_path, const std::string& csv,
                 const Common& c) {
  auto preds = parse_predictions(read_file(predictions));
  auto gold = read_corpus(gold_path);
  auto report = score(preds, gold, parse_match_mode(c.mode), c.overlap());
  std::cout << report_table(report);
  if (!c.out.empty()) write_text(c.out, report_to_json(report).dump(2) + "\n");
  if (!csv.empty()) write_text(csv, report_by_count_csv(report));
  return 0;
}

int cmd_cost(const std::string& corpus_path, const std::string& schema_path, const std::string& vocab_path,
             std::vector<std::string> kinds, const Common& c) {
  auto corpus = read_any_corpus(corpus_path, schema_path);
  const std::size_t r = schema_path.empty() ? schema_from_corpus(corpus).size() : load_schema(schema_path).size();
  std::optional<SubwordTokenizer> tok;
  if (!vocab_path.empty()) tok = SubwordTokenizer(Vocabulary::load(vocab_path), TokenizerKind::kWordPiece);
  auto report = cost_report(corpus, fs::path(corpus_path).stem().string(), r, tok ? &*tok : nullptr);
  if (!kinds.empty()) {
    std::vector<ModelKind> selected;
    for (auto& k : kinds) selected.push_back(parse_model_kind(k));
    for (auto k : selected) {
      std::cout << model_kind_name(k) << '\t' << dataset_cost(corpus, k, r);
      if (tok) std::cout << '\t' << dataset_cost(corpus, k, r, &*tok);
      std::cout << '\n';
    }
  } else {
    std::cout << cost_report_table(report);
  }
  if (!c.out.empty()) write_text(c.out, cost_report_to_json(report).dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relational triple extraction: cascade subject -> object -> relation."};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", common.out, "Output path");
    sub->add_option("--overlap-convention", common.convention, "unordered (default) or ordered")
        ->check(CLI::IsMember({"unordered", "ordered"}));
  };

  std::string raw, schema_path, corpus_path, config_path, checkpoint, predictions, gold, csv, vocab;
  double alpha = kDefaultExtractionThreshold, rel_threshold = kDefaultRelationThreshold;
  std::vector<std::string> kinds;

  auto* ingest = app.add_subcommand("ingest", "Convert a released split into the canonical corpus file");
  ingest->add_option("raw", raw, "Release file (JSON array or JSON lines)")->required();
  ingest->add_option("--schema", schema_path, "Relation label file (rel2id)");
  add_common(ingest);

  auto* stats = app.add_subcommand("stats", "Overlap-pattern and triplet-count statistics");
  stats->add_option("corpus", corpus_path, "Corpus file")->required();
  stats->add_option("--schema", schema_path, "Relation label file");
  add_common(stats);

  auto* train = app.add_subcommand("train", "Train a model from a JSON config");
  train->add_option("--config", config_path, "Training config")->required();
  train->add_option("--seed", common.seed, "Override the config seed");
  train->add_option("--backend", common.backend, "pretrained or toy")
      ->check(CLI::IsMember({"pretrained", "toy"}));
  train->add_option("--ablation", common.ablations, "shared, equal, threshold or plain-optim (repeatable)")
      ->check(CLI::IsMember({"shared", "equal", "threshold", "plain-optim"}));
  add_common(train);

  auto* predict = app.add_subcommand("predict", "Extract triples with a trained checkpoint");
  predict->add_option("--checkpoint", checkpoint, "Checkpoint archive")->required();
  predict->add_option("corpus", corpus_path, "Corpus to annotate")->required();
  predict->add_option("--extraction-threshold", alpha, "Span start threshold");
  predict->add_option("--relation-threshold", rel_threshold, "Relation label threshold");
  predict->add_option("--ablation", common.ablations, "threshold selects threshold decoding")
      ->check(CLI::IsMember({"shared", "equal", "threshold", "plain-optim"}));
  add_common(predict);

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold");
  evaluate->add_option("predictions", predictions, "Predictions file")->required();
  evaluate->add_option("gold", gold, "Gold corpus")->required();
  evaluate->add_option("--mode", common.mode, "partial or exact")->check(CLI::IsMember({"partial", "exact"}));
  evaluate->add_option("--csv", csv, "Write the per-N breakdown as CSV");
  add_common(evaluate);

  auto* cost = app.add_subcommand("cost", "Predicted-logits cost of each graph representation");
  cost->add_option("corpus", corpus_path, "Corpus file")->required();
  cost->add_option("--schema", schema_path, "Relation label file (sets r)");
  cost->add_option("--vocab", vocab, "WordPiece vocab.txt for subword lengths");
  cost->add_option("--kinds", kinds, "Subset of copyre, mhs, casrel, direct")->delimiter(',');
  add_common(cost);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*ingest) return cmd_ingest(raw, schema_path, common);
    if (*stats) return cmd_stats(corpus_path, schema_path, common);
    if (*train) return cmd_train(config_path, common);
    if (*predict) return cmd_predict(checkpoint, corpus_path, alpha, rel_threshold, common);
    if (*evaluate) return cmd_evaluate(predictions, gold, csv, common);
    if (*cost) return cmd_cost(corpus_path, schema_path, vocab, kinds, common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
