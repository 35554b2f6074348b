#pragma once

// Micro precision/recall/F1 of predicted triples against gold, with
// element-level, overlap-pattern and triplet-count breakdowns.
//
// Both sides are reduced to sets of distinct triples before scoring. A
// triple's match key is (subject, relation, object) in exact mode and
// (subject head, relation, object head) in partial mode, where the head is
// the first whitespace token. Matched = sum over keys of min(#pred, #gold),
// so each gold triple is matched at most once.

#include <array>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "direct/corpus.hpp"
#include "direct/pipeline.hpp"

namespace direct {

enum class MatchMode : std::uint8_t { kPartial, kExact };

inline MatchMode parse_match_mode(std::string_view s) {
  if (s == "partial") return MatchMode::kPartial;
  if (s == "exact") return MatchMode::kExact;
  throw UsageError("unknown match mode '" + std::string(s) + "' (expected partial or exact)");
}

inline std::string_view match_mode_name(MatchMode m) { return m == MatchMode::kPartial ? "partial" : "exact"; }

inline TripleKey match_key(const RelationalTriplet& t, MatchMode mode) {
  if (mode == MatchMode::kExact) return key_of(t);
  return {head_token(t.subject.text), t.relation, head_token(t.object.text)};
}

inline bool match_partial(const RelationalTriplet& pred, const RelationalTriplet& gold) {
  return match_key(pred, MatchMode::kPartial) == match_key(gold, MatchMode::kPartial);
}

inline bool match_exact(const RelationalTriplet& pred, const RelationalTriplet& gold) {
  return key_of(pred) == key_of(gold);
}

struct Prf {
  std::size_t matched = 0, predicted = 0, gold = 0;

  double precision() const { return predicted ? static_cast<double>(matched) / static_cast<double>(predicted) : 0.0; }
  double recall() const { return gold ? static_cast<double>(matched) / static_cast<double>(gold) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }

  Prf& operator+=(const Prf& o) {
    matched += o.matched;
    predicted += o.predicted;
    gold += o.gold;
    return *this;
  }
};

struct EvalReport {
  MatchMode mode = MatchMode::kPartial;
  Prf overall;
  Prf subject, object, relation;  // element level
  Prf normal, epo, seo;           // by gold overlap pattern
  std::array<Prf, 6> by_count{};  // index = count_bucket(#gold triples)
  std::size_t sentences = 0;
};

namespace detail {

/// Sum over keys of min(count in a, count in b).
template <typename Key>
std::size_t multiset_overlap(const std::vector<Key>& a, const std::vector<Key>& b) {
  std::map<Key, std::size_t> ca;
  for (auto& k : a) ++ca[k];
  std::size_t n = 0;
  for (auto& k : b) {
    auto it = ca.find(k);
    if (it != ca.end() && it->second > 0) {
      --it->second;
      ++n;
    }
  }
  return n;
}

inline std::vector<RelationalTriplet> distinct_triples(std::span<const RelationalTriplet> ts) {
  std::set<TripleKey> seen;
  std::vector<RelationalTriplet> out;
  for (auto& t : ts)
    if (seen.insert(key_of(t)).second) out.push_back(t);
  return out;
}

template <typename Key>
Prf prf_of(const std::vector<Key>& pred, const std::vector<Key>& gold) {
  return Prf{multiset_overlap(pred, gold), pred.size(), gold.size()};
}

}  // namespace detail

/// Scores one sentence's triples (both sides deduplicated first).
inline Prf score_sentence(std::span<const RelationalTriplet> pred, std::span<const RelationalTriplet> gold,
                          MatchMode mode) {
  std::vector<TripleKey> pk, gk;
  for (auto& t : detail::distinct_triples(pred)) pk.push_back(match_key(t, mode));
  for (auto& t : detail::distinct_triples(gold)) gk.push_back(match_key(t, mode));
  return detail::prf_of(pk, gk);
}

/// Element-level counts over distinct subject heads, object heads and
/// (subject head, object head, relation) tuples.
inline std::array<Prf, 3> score_elements(std::span<const RelationalTriplet> pred,
                                         std::span<const RelationalTriplet> gold) {
  auto collect = [](std::span<const RelationalTriplet> ts) {
    std::set<std::string> s, o;
    std::set<TripleKey> r;
    for (auto& t : ts) {
      auto sh = head_token(t.subject.text), oh = head_token(t.object.text);
      s.insert(sh);
      o.insert(oh);
      r.emplace(sh, oh, t.relation);
    }
    return std::tuple{std::vector<std::string>(s.begin(), s.end()), std::vector<std::string>(o.begin(), o.end()),
                      std::vector<TripleKey>(r.begin(), r.end())};
  };
  auto [ps, po, pr] = collect(pred);
  auto [gs, go, gr] = collect(gold);
  return {detail::prf_of(ps, gs), detail::prf_of(po, go), detail::prf_of(pr, gr)};
}

/// Scores predictions keyed by sentence id against the gold corpus. Every
/// gold id needs a prediction and vice versa.
inline EvalReport score(const std::vector<SentencePrediction>& predictions, const Corpus& gold, MatchMode mode,
                        OverlapConvention convention = OverlapConvention::kUnorderedPairs) {
  std::unordered_map<std::string, const SentencePrediction*> by_id;
  for (auto& p : predictions)
    if (!by_id.emplace(p.id, &p).second) throw DataError("duplicate prediction id '" + p.id + "'");

  std::vector<std::string> missing;
  std::set<std::string> gold_ids;
  for (auto& rec : gold.records) {
    gold_ids.insert(rec.sentence.id);
    if (!by_id.count(rec.sentence.id)) missing.push_back(rec.sentence.id);
  }
  std::vector<std::string> extra;
  for (auto& p : predictions)
    if (!gold_ids.count(p.id)) extra.push_back(p.id);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "prediction and gold ids differ;";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + ids[i];
      if (ids.size() > 20) msg += " ... (" + std::to_string(ids.size()) + " total)";
    };
    list("missing predictions", missing);
    list("unknown ids", extra);
    throw DataError(msg);
  }

  EvalReport rep;
  rep.mode = mode;
  for (auto& rec : gold.records) {
    const auto& pred = by_id.at(rec.sentence.id)->triples;
    const Prf s = score_sentence(pred, rec.triples, mode);
    rep.overall += s;
    auto el = score_elements(pred, rec.triples);
    rep.subject += el[0];
    rep.object += el[1];
    rep.relation += el[2];
    auto flags = classify_overlap(rec.triples, convention);
    if (flags.normal) rep.normal += s;
    if (flags.epo) rep.epo += s;
    if (flags.seo) rep.seo += s;
    rep.by_count[count_bucket(detail::distinct_triples(rec.triples).size())] += s;
    ++rep.sentences;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Report output

inline ordered_json prf_to_json(const Prf& p) {
  return ordered_json{{"precision", p.precision()}, {"recall", p.recall()}, {"f1", p.f1()},
                      {"matched", p.matched},       {"predicted", p.predicted}, {"gold", p.gold}};
}

inline ordered_json report_to_json(const EvalReport& r) {
  ordered_json by_n;
  for (std::size_t i = 0; i < r.by_count.size(); ++i) by_n[std::string(kBucketNames[i])] = prf_to_json(r.by_count[i]);
  return ordered_json{{"schema_version", 1},
                      {"mode", match_mode_name(r.mode)},
                      {"sentences", r.sentences},
                      {"overall", prf_to_json(r.overall)},
                      {"elements", {{"s", prf_to_json(r.subject)}, {"o", prf_to_json(r.object)}, {"r", prf_to_json(r.relation)}}},
                      {"patterns", {{"normal", prf_to_json(r.normal)}, {"epo", prf_to_json(r.epo)}, {"seo", prf_to_json(r.seo)}}},
                      {"by_triplet_count", by_n}};
}

inline std::string report_table(const EvalReport& r) {
  std::ostringstream o;
  o << "mode: " << match_mode_name(r.mode) << ", sentences: " << r.sentences << "\n\n";
  o << std::left << std::setw(10) << "" << std::right << std::setw(8) << "Prec." << std::setw(8) << "Rec."
    << std::setw(8) << "F1" << std::setw(10) << "matched" << std::setw(10) << "pred" << std::setw(10) << "gold"
    << '\n';
  auto row = [&](std::string_view name, const Prf& p) {
    o << std::left << std::setw(10) << name << std::right << std::fixed << std::setprecision(4) << std::setw(8)
      << p.precision() << std::setw(8) << p.recall() << std::setw(8) << p.f1() << std::setw(10) << p.matched
      << std::setw(10) << p.predicted << std::setw(10) << p.gold << '\n';
  };
  row("ALL", r.overall);
  o << '\n';
  row("s", r.subject);
  row("o", r.object);
  row("r", r.relation);
  o << '\n';
  row("Normal", r.normal);
  row("EPO", r.epo);
  row("SEO", r.seo);
  o << '\n';
  for (std::size_t i = 0; i < r.by_count.size(); ++i) {
    if (i == 0 && r.by_count[0].gold == 0 && r.by_count[0].predicted == 0) continue;
    row("N=" + std::string(kBucketNames[i]), r.by_count[i]);
  }
  return o.str();
}

/// Per-N F1 as CSV, one column per bucket.
inline std::string report_by_count_csv(const EvalReport& r) {
  std::ostringstream o;
  o << "metric";
  for (std::size_t i = 1; i < r.by_count.size(); ++i) o << ",N=" << kBucketNames[i];
  o << "\n";
  auto line = [&](std::string_view name, auto get) {
    o << name;
    for (std::size_t i = 1; i < r.by_count.size(); ++i) o << ',' << std::setprecision(6) << get(r.by_count[i]);
    o << '\n';
  };
  line("precision", [](const Prf& p) { return p.precision(); });
  line("recall", [](const Prf& p) { return p.recall(); });
  line("f1", [](const Prf& p) { return p.f1(); });
  line("gold", [](const Prf& p) { return p.gold; });
  return o.str();
}

}  // namespace direct
