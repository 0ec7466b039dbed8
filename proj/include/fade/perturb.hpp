#pragma once

// Entity-level perturbation strategies: extrinsic (soft/hard/grouped),
// intrinsic (soft/hard/repetitive) and history corruption.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "fade/bm25.hpp"
#include "fade/error.hpp"
#include "fade/hybrid.hpp"
#include "fade/kg.hpp"
#include "fade/tokenize.hpp"

namespace fade {

enum class Category { ExtSoft, ExtHard, ExtGrouped, IntSoft, IntHard, IntRepetitive, HistExt, HistInt };

inline constexpr std::array<Category, 8> kAllCategories = {
    Category::ExtSoft, Category::ExtHard,       Category::ExtGrouped, Category::IntSoft,
    Category::IntHard, Category::IntRepetitive, Category::HistExt,    Category::HistInt};

inline const char* to_string(Category c) {
  switch (c) {
    case Category::ExtSoft: return "ext-soft";
    case Category::ExtHard: return "ext-hard";
    case Category::ExtGrouped: return "ext-grouped";
    case Category::IntSoft: return "int-soft";
    case Category::IntHard: return "int-hard";
    case Category::IntRepetitive: return "int-repetitive";
    case Category::HistExt: return "hist-ext";
    case Category::HistInt: return "hist-int";
  }
  return "?";
}

inline std::optional<Category> parse_category(std::string_view s) {
  for (auto c : kAllCategories)
    if (s == to_string(c)) return c;
  return std::nullopt;
}

inline bool is_extrinsic(Category c) {
  return c == Category::ExtSoft || c == Category::ExtHard || c == Category::ExtGrouped || c == Category::HistExt;
}

inline bool is_intrinsic(Category c) { return !is_extrinsic(c); }

struct EntityGroup {
  int id;
  std::array<std::string_view, 3> types;
};

inline constexpr std::array<EntityGroup, 3> kEntityGroups = {{
    {1, {"PERSON", "ORG", "NORP"}},
    {2, {"LOC", "GPE", "FAC"}},
    {3, {"PRODUCT", "WORK_OF_ART", "LAW"}},
}};

inline const EntityGroup* group_of(std::string_view etype) {
  for (const auto& g : kEntityGroups)
    if (std::find(g.types.begin(), g.types.end(), etype) != g.types.end()) return &g;
  return nullptr;
}

struct PerturbationRecord {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  Category category = Category::ExtSoft;
  EntityId original;
  Span original_span;        // in the source text
  std::string original_text; // exact source bytes under original_span
  EntityId replacement;
  Span replacement_span;     // in the perturbed text
  double score = 0.0;
  std::size_t candidates_rejected = 0;
  std::optional<KGTriple> triple_used;
};

struct PerturbedTurn {
  std::string text;
  std::vector<PerturbationRecord> records;

  bool perturbed() const { return !records.empty(); }
};

/// Undo every substitution; yields the source text byte for byte.
inline std::string restore_text(const PerturbedTurn& pt) {
  std::string out = pt.text;
  auto recs = pt.records;
  std::sort(recs.begin(), recs.end(),
            [](const auto& a, const auto& b) { return a.replacement_span.start > b.replacement_span.start; });
  for (const auto& r : recs)
    out.replace(r.replacement_span.start, r.replacement_span.end - r.replacement_span.start, r.original_text);
  return out;
}

enum class ExtrinsicMode { Soft, Hard, Grouped };
enum class IntrinsicMode { Soft, Hard, Repetitive };
enum class FilterMode { Extrinsic, Intrinsic, Repetitive };

/// Lowercased prior turn texts for surface lookups.
class HistoryView {
 public:
  HistoryView() = default;
  explicit HistoryView(std::span<const Turn> turns) {
    for (const auto& t : turns) texts_.push_back(to_lower(t.text));
  }
  explicit HistoryView(const std::vector<std::string>& texts) {
    for (const auto& t : texts) texts_.push_back(to_lower(t));
  }

  bool contains(std::string_view surface) const {
    const auto needle = to_lower(surface);
    return std::any_of(texts_.begin(), texts_.end(),
                       [&](const auto& t) { return find_surface(t, needle) != std::string_view::npos; });
  }

 private:
  std::vector<std::string> texts_;
};

/// Candidate filter. Rejects the original itself; then, by mode:
/// extrinsic rejects anything seen in history or inside the original's 1-hop
/// subgraph; intrinsic rejects anything seen in history; repetitive requires
/// the candidate to have been seen in history.
inline bool filter_candidate(const KnowledgeGraph& g, const EntityId& cand, const EntityId& original,
                             const HistoryView& history, const KnowledgeGraph& sub1hop, FilterMode mode) {
  if (cand == original) return false;
  const auto* e = g.find(cand);
  if (e == nullptr || tokenize(e->surface).empty()) return false;
  const bool seen = history.contains(e->surface);
  switch (mode) {
    case FilterMode::Extrinsic: return !seen && !in_subgraph(sub1hop, cand);
    case FilterMode::Intrinsic: return !seen;
    case FilterMode::Repetitive: return seen;
  }
  return false;
}

inline bool filter_candidate(const KnowledgeGraph& g, const EntityId& cand, const EntityId& original,
                             std::span<const Turn> history, const KnowledgeGraph& sub1hop, FilterMode mode) {
  return filter_candidate(g, cand, original, HistoryView(history), sub1hop, mode);
}

/// A chosen replacement for one mention.
struct Decision {
  EntityMention mention;
  EntityId replacement;
  double score = 0.0;
  std::size_t rejected = 0;
  std::optional<KGTriple> triple_used;
};

/// Read-only resources shared by all perturbations, plus memoised subgraphs
/// and ranking prefixes. Lookups are serialised by an internal mutex.
class PerturbationContext {
 public:
  PerturbationContext(const KnowledgeGraph& g, const EntityIndexes& indexes, const VectorStore& store,
                      const UnigramModel& unigrams, HybridParams hybrid = {})
      : graph_(g), indexes_(indexes), store_(store), unigrams_(unigrams), hybrid_(hybrid) {}

  const KnowledgeGraph& graph() const { return graph_; }
  const EntityIndexes& indexes() const { return indexes_; }
  const VectorStore& store() const { return store_; }
  const UnigramModel& unigrams() const { return unigrams_; }
  const HybridParams& hybrid() const { return hybrid_; }

  std::shared_ptr<const KnowledgeGraph> one_hop(const EntityId& e) const {
    std::lock_guard lock(mu_);
    auto it = one_hop_.find(e);
    if (it != one_hop_.end()) return it->second;
    auto sub = std::make_shared<const KnowledgeGraph>(khop_subgraph(graph_, e, 1));
    one_hop_.emplace(e, sub);
    return sub;
  }

  std::shared_ptr<const std::vector<ScoredTriple>> ranked_triples(const EntityId& e, const KGTriple& query) const {
    const auto key = std::make_pair(e, query);
    {
      std::lock_guard lock(mu_);
      auto it = ranked_.find(key);
      if (it != ranked_.end()) return it->second;
    }
    auto sub = one_hop(e);
    auto ranked =
        std::make_shared<const std::vector<ScoredTriple>>(score_subgraph_triples(query, *sub, store_, unigrams_, hybrid_));
    std::lock_guard lock(mu_);
    ranked_.emplace(key, ranked);
    return ranked;
  }

  /// Extrinsic candidates of `original` in the index of `etype`, ordered for
  /// the requested direction. Only the first `limit` entries are guaranteed
  /// to be sorted; pass SIZE_MAX for a fully sorted list.
  std::shared_ptr<const std::vector<Candidate>> ranked_candidates(const EntityId& original, const std::string& etype,
                                                                  bool descending, std::size_t limit) const {
    const auto key = std::make_tuple(original, etype, descending);
    {
      std::lock_guard lock(mu_);
      auto it = candidates_.find(key);
      if (it != candidates_.end() && it->second.first >= limit) return it->second.second;
    }
    const auto& index = indexes_.at(etype);
    auto all = scored_candidates(index, original, graph_);
    const auto less = [descending](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return descending ? a.score > b.score : a.score < b.score;
      return a.entity < b.entity;
    };
    const auto n = std::min(limit, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), less);
    auto ptr = std::make_shared<const std::vector<Candidate>>(std::move(all));
    std::lock_guard lock(mu_);
    candidates_[key] = {n, ptr};
    return ptr;
  }

 private:
  const KnowledgeGraph& graph_;
  const EntityIndexes& indexes_;
  const VectorStore& store_;
  const UnigramModel& unigrams_;
  HybridParams hybrid_;

  mutable std::mutex mu_;
  mutable std::map<EntityId, std::shared_ptr<const KnowledgeGraph>> one_hop_;
  mutable std::map<std::pair<EntityId, KGTriple>, std::shared_ptr<const std::vector<ScoredTriple>>> ranked_;
  mutable std::map<std::tuple<EntityId, std::string, bool>, std::pair<std::size_t, std::shared_ptr<const std::vector<Candidate>>>>
      candidates_;
};

using Rng = std::mt19937_64;

inline std::size_t pick_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// Replacement type for grouped mode: one of the other two types of the
/// original's group, chosen uniformly. Empty when the type has no group.
inline std::optional<std::string> grouped_target_type(std::string_view etype, Rng& rng) {
  const auto* group = group_of(etype);
  if (group == nullptr) return std::nullopt;
  std::vector<std::string_view> others;
  for (auto t : group->types)
    if (t != etype) others.push_back(t);
  return std::string(others[pick_index(rng, others.size())]);
}

/// Chooses the extrinsic replacement for one mention, or nothing when no
/// candidate survives the filters.
inline std::optional<Decision> decide_extrinsic(const PerturbationContext& ctx, const EntityMention& mention,
                                                const HistoryView& history, ExtrinsicMode mode, Rng& rng) {
  const auto& g = ctx.graph();
  const auto* orig = g.find(mention.entity);
  if (orig == nullptr || !g.has_incident(orig->id)) return std::nullopt;

  std::string target = orig->etype;
  if (mode == ExtrinsicMode::Grouped) {
    auto t = grouped_target_type(orig->etype, rng);
    if (!t) return std::nullopt;
    target = *t;
  } else if (orig->etype == kUnknownType) {
    return std::nullopt;
  }
  if (ctx.indexes().count(target) == 0) return std::nullopt;

  const bool descending = mode != ExtrinsicMode::Hard;
  const auto sub = ctx.one_hop(orig->id);
  Decision d{mention, {}, 0.0, 0, std::nullopt};
  std::size_t limit = 64;
  std::size_t pos = 0;
  while (true) {
    const auto ranked = ctx.ranked_candidates(orig->id, target, descending, limit);
    const auto sorted_end = std::min(limit, ranked->size());
    for (; pos < sorted_end; ++pos) {
      const auto& c = (*ranked)[pos];
      if (filter_candidate(g, c.entity, orig->id, history, *sub, FilterMode::Extrinsic)) {
        d.replacement = c.entity;
        d.score = c.score;
        return d;
      }
      ++d.rejected;
    }
    if (sorted_end >= ranked->size()) return std::nullopt;
    limit = limit >= ranked->size() / 8 ? SIZE_MAX : limit * 8;
  }
}

/// Grounding triple that anchors the intrinsic query for `e`: the first
/// grounding triple of the turn touching it, else its first document triple.
inline std::optional<KGTriple> anchor_triple(const KnowledgeGraph& g, const Turn& turn, const EntityId& e) {
  for (const auto& t : turn.grounding)
    if (t.subject == e || t.object == e) return t;
  auto doc = document_triples(g, e);
  if (doc.empty()) return std::nullopt;
  return doc.front();
}

inline std::optional<Decision> decide_intrinsic(const PerturbationContext& ctx, const Turn& turn,
                                                const EntityMention& mention, const HistoryView& history,
                                                IntrinsicMode mode) {
  const auto& g = ctx.graph();
  if (!g.contains_entity(mention.entity) || !g.has_incident(mention.entity)) return std::nullopt;
  const auto query = anchor_triple(g, turn, mention.entity);
  if (!query) return std::nullopt;
  const auto ranked = ctx.ranked_triples(mention.entity, *query);
  const auto sub = ctx.one_hop(mention.entity);
  const auto filter = mode == IntrinsicMode::Repetitive ? FilterMode::Repetitive : FilterMode::Intrinsic;

  Decision d{mention, {}, 0.0, 0, std::nullopt};
  auto consider = [&](const ScoredTriple& st) {
    const auto& t = st.triple;
    const EntityId* cand = nullptr;
    if (t.subject != mention.entity) cand = &t.subject;
    else if (t.object != mention.entity) cand = &t.object;
    if (cand == nullptr) return false;
    if (!filter_candidate(g, *cand, mention.entity, history, *sub, filter)) {
      ++d.rejected;
      return false;
    }
    d.replacement = *cand;
    d.score = st.score;
    d.triple_used = t;
    return true;
  };
  if (mode == IntrinsicMode::Hard) {
    for (auto it = ranked->rbegin(); it != ranked->rend(); ++it)
      if (consider(*it)) return d;
  } else {
    for (const auto& st : *ranked)
      if (consider(st)) return d;
  }
  return std::nullopt;
}

/// Substitutes every decision into the turn text and emits provenance records.
inline PerturbedTurn apply_decisions(const Turn& turn, std::vector<Decision> decisions, const KnowledgeGraph& g,
                                     Category category, const std::string& dialogue_id, std::size_t turn_index) {
  std::sort(decisions.begin(), decisions.end(),
            [](const Decision& a, const Decision& b) { return a.mention.start < b.mention.start; });
  PerturbedTurn out;
  std::size_t cursor = 0;
  for (const auto& d : decisions) {
    if (d.mention.start < cursor) throw Error(ErrorKind::InvalidArgument, "overlapping mentions in one turn");
    out.text.append(turn.text, cursor, d.mention.start - cursor);
    const auto& surface = g.entity(d.replacement).surface;
    PerturbationRecord r;
    r.dialogue_id = dialogue_id;
    r.turn_index = turn_index;
    r.category = category;
    r.original = d.mention.entity;
    r.original_span = {d.mention.start, d.mention.end};
    r.original_text = turn.text.substr(d.mention.start, d.mention.end - d.mention.start);
    r.replacement = d.replacement;
    r.replacement_span = {out.text.size(), out.text.size() + surface.size()};
    r.score = d.score;
    r.candidates_rejected = d.rejected;
    r.triple_used = d.triple_used;
    out.text += surface;
    out.records.push_back(std::move(r));
    cursor = d.mention.end;
  }
  out.text.append(turn.text, cursor, std::string::npos);
  return out;
}

/// Rewrites a turn in place after substitution, keeping mention offsets valid.
inline void commit(Turn& turn, const PerturbedTurn& pt) {
  for (auto& m : turn.mentions) {
    auto hit = std::find_if(pt.records.begin(), pt.records.end(), [&](const PerturbationRecord& r) {
      return r.original_span.start == m.start && r.original_span.end == m.end;
    });
    if (hit != pt.records.end()) {
      m = {hit->replacement, hit->replacement_span.start, hit->replacement_span.end};
      continue;
    }
    std::ptrdiff_t shift = 0;
    for (const auto& r : pt.records)
      if (r.original_span.end <= m.start)
        shift += static_cast<std::ptrdiff_t>(r.replacement_span.end - r.replacement_span.start) -
                 static_cast<std::ptrdiff_t>(r.original_span.end - r.original_span.start);
    m.start = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(m.start) + shift);
    m.end = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(m.end) + shift);
  }
  turn.text = pt.text;
}

/// Identifies the turn being perturbed inside its dialogue.
struct TurnRef {
  std::string dialogue_id;
  std::size_t turn_index = 0;
};

inline PerturbedTurn perturb_extrinsic(const PerturbationContext& ctx, const Turn& turn, const EntityMention& mention,
                                       const HistoryView& history, ExtrinsicMode mode, Rng& rng, const TurnRef& ref = {}) {
  static constexpr Category kCat[] = {Category::ExtSoft, Category::ExtHard, Category::ExtGrouped};
  std::vector<Decision> ds;
  if (auto d = decide_extrinsic(ctx, mention, history, mode, rng)) ds.push_back(*d);
  return apply_decisions(turn, ds, ctx.graph(), kCat[static_cast<int>(mode)], ref.dialogue_id, ref.turn_index);
}

inline PerturbedTurn perturb_intrinsic(const PerturbationContext& ctx, const Turn& turn, const EntityMention& mention,
                                       const HistoryView& history, IntrinsicMode mode, const TurnRef& ref = {}) {
  static constexpr Category kCat[] = {Category::IntSoft, Category::IntHard, Category::IntRepetitive};
  std::vector<Decision> ds;
  if (auto d = decide_intrinsic(ctx, turn, mention, history, mode)) ds.push_back(*d);
  return apply_decisions(turn, ds, ctx.graph(), kCat[static_cast<int>(mode)], ref.dialogue_id, ref.turn_index);
}

struct TurnOutcome {
  PerturbedTurn perturbed;
  std::size_t attempted = 0;
  std::size_t failed = 0;
};

/// Attempts every mention of the turn independently with a non-history category.
inline TurnOutcome perturb_turn(const PerturbationContext& ctx, const Turn& turn, const HistoryView& history,
                                Category category, Rng& rng, const TurnRef& ref = {}) {
  TurnOutcome out;
  std::vector<Decision> ds;
  for (const auto& m : turn.mentions) {
    ++out.attempted;
    std::optional<Decision> d;
    switch (category) {
      case Category::ExtSoft: d = decide_extrinsic(ctx, m, history, ExtrinsicMode::Soft, rng); break;
      case Category::ExtHard: d = decide_extrinsic(ctx, m, history, ExtrinsicMode::Hard, rng); break;
      case Category::ExtGrouped: d = decide_extrinsic(ctx, m, history, ExtrinsicMode::Grouped, rng); break;
      case Category::IntSoft: d = decide_intrinsic(ctx, turn, m, history, IntrinsicMode::Soft); break;
      case Category::IntHard: d = decide_intrinsic(ctx, turn, m, history, IntrinsicMode::Hard); break;
      case Category::IntRepetitive: d = decide_intrinsic(ctx, turn, m, history, IntrinsicMode::Repetitive); break;
      case Category::HistExt:
      case Category::HistInt:
        throw Error(ErrorKind::InvalidArgument, "history categories go through corrupt_history");
    }
    if (d) ds.push_back(*d);
    else ++out.failed;
  }
  out.perturbed = apply_decisions(turn, std::move(ds), ctx.graph(), category, ref.dialogue_id, ref.turn_index);
  return out;
}

enum class CorruptionStrategy { Extrinsic, Intrinsic };

struct HistoryCorruption {
  std::vector<Turn> prefix;                  // turns [0, upto_turn) after corruption
  std::vector<std::size_t> corrupted_turns;  // ascending indices into prefix
  std::vector<PerturbationRecord> history_records;
  std::size_t window = 0;                    // min(k, perturbable turns before upto_turn)
  PerturbedTurn current;                     // the perturbed turn at upto_turn
};

inline std::size_t required_corrupted(std::size_t window) { return (window + 1) / 2; }

/// Corrupts randomly chosen mentions in the last k prior turns that have
/// mentions (fewer if the dialogue has fewer) until at least half of them
/// carry a perturbation, then perturbs the turn at `upto_turn` with the
/// matching soft strategy. Returns nothing when either step cannot be
/// satisfied.
inline std::optional<HistoryCorruption> corrupt_history(const PerturbationContext& ctx, const Dialogue& dialogue,
                                                        std::size_t upto_turn, std::size_t k,
                                                        CorruptionStrategy strategy, Rng& rng) {
  if (upto_turn < 1 || upto_turn >= dialogue.turns.size())
    throw Error(ErrorKind::InvalidArgument, "history corruption needs 1 <= upto_turn < number of turns");
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "history window must be >= 1");

  const Category category = strategy == CorruptionStrategy::Extrinsic ? Category::HistExt : Category::HistInt;
  HistoryCorruption hc;
  hc.prefix.assign(dialogue.turns.begin(), dialogue.turns.begin() + static_cast<std::ptrdiff_t>(upto_turn));
  std::vector<std::size_t> order;
  for (std::size_t ti = upto_turn; ti-- > 0 && order.size() < k;)
    if (!dialogue.turns[ti].mentions.empty()) order.push_back(ti);
  if (order.empty()) return std::nullopt;
  hc.window = order.size();
  const auto need = required_corrupted(hc.window);
  std::sort(order.begin(), order.end());
  std::shuffle(order.begin(), order.end(), rng);

  for (auto ti : order) {
    if (hc.corrupted_turns.size() >= need) break;
    auto& turn = hc.prefix[ti];
    std::vector<std::size_t> mentions(turn.mentions.size());
    std::iota(mentions.begin(), mentions.end(), 0);
    std::shuffle(mentions.begin(), mentions.end(), rng);
    const HistoryView history(std::span<const Turn>(hc.prefix.data(), ti));
    for (auto mi : mentions) {
      const auto& m = turn.mentions[mi];
      auto d = strategy == CorruptionStrategy::Extrinsic
                   ? decide_extrinsic(ctx, m, history, ExtrinsicMode::Soft, rng)
                   : decide_intrinsic(ctx, turn, m, history, IntrinsicMode::Soft);
      if (!d) continue;
      auto pt = apply_decisions(turn, {*d}, ctx.graph(), category, dialogue.id, ti);
      for (const auto& r : pt.records) hc.history_records.push_back(r);
      commit(turn, pt);
      hc.corrupted_turns.push_back(ti);
      break;
    }
  }
  if (hc.corrupted_turns.size() < need) return std::nullopt;
  std::sort(hc.corrupted_turns.begin(), hc.corrupted_turns.end());

  const auto& current = dialogue.turns[upto_turn];
  const HistoryView history(hc.prefix);
  std::vector<Decision> ds;
  for (const auto& m : current.mentions) {
    auto d = strategy == CorruptionStrategy::Extrinsic ? decide_extrinsic(ctx, m, history, ExtrinsicMode::Soft, rng)
                                                       : decide_intrinsic(ctx, current, m, history, IntrinsicMode::Soft);
    if (d) ds.push_back(*d);
  }
  if (ds.empty()) return std::nullopt;
  hc.current = apply_decisions(current, std::move(ds), ctx.graph(), category, dialogue.id, upto_turn);
  return hc;
}

/// One assistant turn of a component dataset, perturbed or not.
struct TurnSample {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  std::vector<std::string> history;  // all prior turn texts, corrupted when applicable
  std::vector<KGTriple> grounding;
  std::string original_text;
  PerturbedTurn perturbed;           // text equals original_text when untouched
  std::vector<PerturbationRecord> history_records;
  std::vector<std::size_t> corrupted_history_turns;
  std::size_t history_window = 0;
};

struct ComponentCounts {
  std::size_t samples = 0;
  std::size_t perturbed = 0;
  std::size_t non_perturbed = 0;
  std::size_t more_than_two = 0;
  std::size_t eligible_turns = 0;
  std::size_t records = 0;
  std::size_t unperturbable = 0;
};

struct ComponentDataset {
  Category category = Category::ExtSoft;
  std::vector<TurnSample> samples;
  ComponentCounts counts;
};

struct EngineConfig {
  std::size_t history_k = 4;
  std::uint64_t seed = 0;
};

/// Per-dialogue generator derived from the run seed, so results do not depend
/// on processing order.
inline Rng dialogue_rng(std::uint64_t seed, std::size_t dialogue_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(dialogue_index), static_cast<std::uint32_t>(dialogue_index >> 32)};
  return Rng(seq);
}

/// Applies `category` to every assistant turn of the corpus. A turn is
/// eligible when it has at least one located mention.
inline ComponentDataset run_component_dataset(const PerturbationContext& ctx, const std::vector<Dialogue>& dialogues,
                                              Category category, const EngineConfig& cfg) {
  ComponentDataset out;
  out.category = category;
  for (std::size_t di = 0; di < dialogues.size(); ++di) {
    const auto& d = dialogues[di];
    auto rng = dialogue_rng(cfg.seed, di);
    for (std::size_t ti = 0; ti < d.turns.size(); ++ti) {
      const auto& turn = d.turns[ti];
      if (turn.speaker != Speaker::Assistant) continue;
      TurnSample s;
      s.dialogue_id = d.id;
      s.turn_index = ti;
      s.grounding = turn.grounding;
      s.original_text = turn.text;
      s.perturbed.text = turn.text;
      for (std::size_t h = 0; h < ti; ++h) s.history.push_back(d.turns[h].text);

      const bool eligible = !turn.mentions.empty();
      if (eligible) {
        ++out.counts.eligible_turns;
        if (category == Category::HistExt || category == Category::HistInt) {
          std::optional<HistoryCorruption> hc;
          if (ti >= 1)
            hc = corrupt_history(ctx, d, ti, cfg.history_k,
                                 category == Category::HistExt ? CorruptionStrategy::Extrinsic
                                                               : CorruptionStrategy::Intrinsic,
                                 rng);
          if (hc) {
            s.history.clear();
            for (const auto& t : hc->prefix) s.history.push_back(t.text);
            s.perturbed = std::move(hc->current);
            s.history_records = std::move(hc->history_records);
            s.corrupted_history_turns = std::move(hc->corrupted_turns);
            s.history_window = hc->window;
          } else {
            ++out.counts.unperturbable;
          }
        } else {
          auto outcome = perturb_turn(ctx, turn, HistoryView(std::span<const Turn>(d.turns.data(), ti)), category, rng,
                                      {d.id, ti});
          out.counts.unperturbable += outcome.failed;
          s.perturbed = std::move(outcome.perturbed);
        }
      }
      ++out.counts.samples;
      if (s.perturbed.perturbed()) {
        ++out.counts.perturbed;
        out.counts.records += s.perturbed.records.size();
        if (s.perturbed.records.size() > 2) ++out.counts.more_than_two;
      } else {
        ++out.counts.non_perturbed;
      }
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace fade
