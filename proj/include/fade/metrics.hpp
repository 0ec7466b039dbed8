#pragma once

// Utterance- and token-level detection metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fade/bilou.hpp"
#include "fade/error.hpp"

namespace fade {

inline constexpr double kDefaultThreshold = 0.5;

/// Undefined values (e.g. AUC with a single class) are empty optionals.
using Metric = std::optional<double>;

struct PredictionRecord {
  std::string dialogue_id;
  std::size_t turn_idx = 0;
  double utt_score = 0.0;
  int utt_pred = 0;
  std::optional<std::vector<TokenLabel>> labels_pred;
};

inline PredictionRecord make_prediction(const LabeledExample& row, double threshold = kDefaultThreshold) {
  PredictionRecord p;
  p.dialogue_id = row.dialogue_id;
  p.turn_idx = row.turn_idx;
  p.utt_score = row.utt_score.value_or(static_cast<double>(row.utt_label));
  p.utt_pred = p.utt_score >= threshold ? 1 : 0;
  if (!row.labels.empty()) p.labels_pred = row.labels;
  return p;
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

inline Confusion confusion(std::span<const int> golds, std::span<const int> preds) {
  if (golds.size() != preds.size()) throw Error(ErrorKind::LengthMismatch, "gold and prediction counts differ");
  Confusion c;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const bool g = golds[i] != 0, p = preds[i] != 0;
    if (g && p) ++c.tp;
    else if (!g && p) ++c.fp;
    else if (!g && !p) ++c.tn;
    else ++c.fn;
  }
  return c;
}

/// Zero when the denominator vanishes.
inline double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline double f1_of(double p, double r) { return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

/// Area under the ROC curve via the Mann-Whitney rank statistic, ties sharing
/// their average rank.
inline Metric roc_auc(std::span<const int> golds, std::span<const double> scores) {
  if (golds.size() != scores.size()) throw Error(ErrorKind::LengthMismatch, "gold and score counts differ");
  const auto n = golds.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (auto k = i; k <= j; ++k) rank[idx[k]] = avg;
    i = j + 1;
  }
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (golds[i] != 0) {
      pos += 1.0;
      rank_sum += rank[i];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

/// sqrt(sensitivity * specificity).
inline Metric g_mean(std::span<const int> golds, std::span<const int> preds) {
  const auto c = confusion(golds, preds);
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) return std::nullopt;
  const double tpr = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double tnr = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return std::sqrt(tpr * tnr);
}

struct BrierScores {
  double brier = 0.0;
  Metric bss;  // 1 - brier / brier of the constant base-rate predictor
};

inline BrierScores brier_and_bss(std::span<const int> golds, std::span<const double> scores) {
  if (golds.size() != scores.size()) throw Error(ErrorKind::LengthMismatch, "gold and score counts differ");
  if (golds.empty()) return {0.0, std::nullopt};
  const double n = static_cast<double>(golds.size());
  double base = 0.0;
  for (int g : golds) base += g != 0 ? 1.0 : 0.0;
  base /= n;
  double brier = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (scores[i] < 0.0 || scores[i] > 1.0) throw Error(ErrorKind::InvalidArgument, "scores must lie in [0, 1]");
    const double y = golds[i] != 0 ? 1.0 : 0.0;
    brier += (scores[i] - y) * (scores[i] - y);
    ref += (base - y) * (base - y);
  }
  brier /= n;
  ref /= n;
  BrierScores out{brier, std::nullopt};
  if (ref > 0.0) out.bss = 1.0 - brier / ref;
  return out;
}

struct MetricReport {
  Metric precision, recall, f1, accuracy, auc, g_mean, brier, bss;
  // Token level only: tag-level micro figures over non-O positions.
  Metric tag_precision, tag_recall, tag_f1;
  std::size_t support = 0;
};

inline MetricReport utterance_metrics(std::span<const int> golds, std::span<const PredictionRecord> preds) {
  if (golds.size() != preds.size()) throw Error(ErrorKind::LengthMismatch, "gold and prediction counts differ");
  std::vector<int> hard;
  std::vector<double> scores;
  for (const auto& p : preds) {
    hard.push_back(p.utt_pred);
    scores.push_back(p.utt_score);
  }
  const auto c = confusion(golds, hard);
  MetricReport r;
  r.support = golds.size();
  const double p = safe_ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  const double rec = safe_ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  r.precision = p;
  r.recall = rec;
  r.f1 = f1_of(p, rec);
  r.accuracy = safe_ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
  r.auc = roc_auc(golds, scores);
  r.g_mean = g_mean(golds, hard);
  const auto b = brier_and_bss(golds, scores);
  r.brier = b.brier;
  r.bss = b.bss;
  return r;
}

struct LabelPair {
  std::string key;
  std::span<const TokenLabel> gold;
  std::span<const TokenLabel> pred;
};

/// Exact-span P/R/F1 as the primary figures, with tag-level micro P/R/F1
/// (a position counts when both sides mark it non-O) alongside.
inline MetricReport token_metrics(std::span<const LabelPair> pairs) {
  std::size_t gold_spans = 0, pred_spans = 0, matched = 0;
  std::size_t tag_tp = 0, tag_fp = 0, tag_fn = 0, tag_tn = 0;
  std::vector<int> gold_bits, pred_bits;
  for (const auto& pr : pairs) {
    if (pr.gold.size() != pr.pred.size())
      throw Error(ErrorKind::LengthMismatch, "label length mismatch in example " + pr.key);
    const auto g = decode_token_ranges(pr.gold);
    const auto p = decode_token_ranges(pr.pred);
    gold_spans += g.size();
    pred_spans += p.size();
    for (const auto& s : p)
      if (std::binary_search(g.begin(), g.end(), s)) ++matched;
    for (std::size_t i = 0; i < pr.gold.size(); ++i) {
      const bool gi = pr.gold[i] != TokenLabel::O, pi = pr.pred[i] != TokenLabel::O;
      gold_bits.push_back(gi ? 1 : 0);
      pred_bits.push_back(pi ? 1 : 0);
      if (gi && pi) ++tag_tp;
      else if (pi) ++tag_fp;
      else if (gi) ++tag_fn;
      else ++tag_tn;
    }
  }
  MetricReport r;
  r.support = gold_spans;
  const double p = safe_ratio(static_cast<double>(matched), static_cast<double>(pred_spans));
  const double rec = safe_ratio(static_cast<double>(matched), static_cast<double>(gold_spans));
  r.precision = p;
  r.recall = rec;
  r.f1 = f1_of(p, rec);
  const double tp = safe_ratio(static_cast<double>(tag_tp), static_cast<double>(tag_tp + tag_fp));
  const double tr = safe_ratio(static_cast<double>(tag_tp), static_cast<double>(tag_tp + tag_fn));
  r.tag_precision = tp;
  r.tag_recall = tr;
  r.tag_f1 = f1_of(tp, tr);
  r.accuracy = safe_ratio(static_cast<double>(tag_tp + tag_tn), static_cast<double>(gold_bits.size()));
  r.g_mean = g_mean(gold_bits, pred_bits);
  return r;
}

inline nlohmann::json to_json(const MetricReport& r) {
  auto v = [](const Metric& m) { return m ? nlohmann::json(*m) : nlohmann::json(nullptr); };
  return {{"precision", v(r.precision)}, {"recall", v(r.recall)},   {"f1", v(r.f1)},
          {"accuracy", v(r.accuracy)},   {"auc", v(r.auc)},         {"g_mean", v(r.g_mean)},
          {"brier", v(r.brier)},         {"bss", v(r.bss)},         {"tag_precision", v(r.tag_precision)},
          {"tag_recall", v(r.tag_recall)}, {"tag_f1", v(r.tag_f1)}, {"support", r.support}};
}

struct EvaluationReport {
  MetricReport utterance;
  std::optional<MetricReport> token;
  double threshold = kDefaultThreshold;
};

/// Joins gold rows and prediction rows on (dialogue_id, turn_idx).
inline EvaluationReport evaluate(std::span<const LabeledExample> gold, std::span<const LabeledExample> predicted,
                                 double threshold = kDefaultThreshold) {
  std::map<std::pair<std::string, std::size_t>, const LabeledExample*> by_key;
  for (const auto& p : predicted) by_key[{p.dialogue_id, p.turn_idx}] = &p;
  std::vector<int> golds;
  std::vector<PredictionRecord> preds;
  std::vector<LabelPair> pairs;
  bool all_have_labels = true;
  for (const auto& g : gold) {
    auto it = by_key.find({g.dialogue_id, g.turn_idx});
    const auto key = g.dialogue_id + "#" + std::to_string(g.turn_idx);
    if (it == by_key.end()) throw Error(ErrorKind::LengthMismatch, "no prediction for example " + key);
    golds.push_back(g.utt_label);
    preds.push_back(make_prediction(*it->second, threshold));
    if (it->second->labels.empty()) all_have_labels = false;
    else pairs.push_back({key, g.labels, it->second->labels});
  }
  EvaluationReport rep;
  rep.threshold = threshold;
  rep.utterance = utterance_metrics(golds, preds);
  if (all_have_labels && !pairs.empty()) rep.token = token_metrics(pairs);
  return rep;
}

inline nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json j = {{"threshold", r.threshold}, {"utterance", to_json(r.utterance)}};
  j["token"] = r.token ? to_json(*r.token) : nlohmann::json(nullptr);
  return j;
}

inline std::string to_text(const EvaluationReport& r) {
  std::ostringstream os;
  auto cell = [&](const Metric& m) {
    if (m) os << std::setw(12) << std::fixed << std::setprecision(4) << *m;
    else os << std::setw(12) << "n/a";
  };
  os << std::left << std::setw(12) << "level" << std::right;
  for (const char* h : {"precision", "recall", "f1", "accuracy", "auc", "g_mean", "brier", "bss"}) os << std::setw(12) << h;
  os << '\n';
  auto row = [&](const char* name, const MetricReport& m) {
    os << std::left << std::setw(12) << name << std::right;
    for (const auto* x : {&m.precision, &m.recall, &m.f1, &m.accuracy, &m.auc, &m.g_mean, &m.brier, &m.bss}) cell(*x);
    os << '\n';
  };
  row("utterance", r.utterance);
  if (r.token) {
    row("token-span", *r.token);
    os << std::left << std::setw(12) << "token-tag" << std::right;
    cell(r.token->tag_precision);
    cell(r.token->tag_recall);
    cell(r.token->tag_f1);
    os << '\n';
  }
  return os.str();
}

}  // namespace fade
