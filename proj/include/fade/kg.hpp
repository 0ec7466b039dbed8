#pragma once

// Knowledge graph, dialogue corpus model, loaders and k-hop subgraph extraction.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <deque>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fade/error.hpp"
#include "fade/tokenize.hpp"

namespace fade {

using EntityId = std::string;

inline constexpr std::string_view kUnknownType = "UNKNOWN";

struct Entity {
  EntityId id;
  std::string surface;
  std::string etype{kUnknownType};

  friend bool operator==(const Entity&, const Entity&) = default;
};

struct KGTriple {
  EntityId subject;
  std::string predicate;
  EntityId object;

  friend auto operator<=>(const KGTriple&, const KGTriple&) = default;
  friend bool operator==(const KGTriple&, const KGTriple&) = default;
};

class KnowledgeGraph {
 public:
  /// Inserts the entity if its id is new. Returns false (and leaves the graph
  /// untouched) when the id already exists.
  bool add_entity(Entity e) {
    if (e.id.empty()) throw Error(ErrorKind::InvalidArgument, "entity id must be nonempty");
    if (e.surface.empty()) e.surface = e.id;
    if (e.etype.empty()) e.etype = std::string(kUnknownType);
    auto id = e.id;
    return entities_.emplace(std::move(id), std::move(e)).second;
  }

  void set_type(const EntityId& id, std::string etype) {
    auto it = entities_.find(id);
    if (it == entities_.end()) throw Error(ErrorKind::UnknownEntity, "unknown entity id: " + id);
    it->second.etype = etype.empty() ? std::string(kUnknownType) : std::move(etype);
  }

  /// Adds a triple whose endpoints already exist. Returns false for duplicates.
  bool add_triple(KGTriple t) {
    if (t.subject.empty() || t.predicate.empty() || t.object.empty())
      throw Error(ErrorKind::InvalidArgument, "triple fields must be nonempty");
    if (!contains_entity(t.subject)) throw Error(ErrorKind::DanglingEntity, "dangling entity: " + t.subject);
    if (!contains_entity(t.object)) throw Error(ErrorKind::DanglingEntity, "dangling entity: " + t.object);
    if (!triple_set_.insert(t).second) return false;
    const auto idx = triples_.size();
    outgoing_[t.subject].push_back(idx);
    incoming_[t.object].push_back(idx);
    triples_.push_back(std::move(t));
    return true;
  }

  bool contains_entity(const EntityId& id) const { return entities_.count(id) != 0; }
  bool contains_triple(const KGTriple& t) const { return triple_set_.count(t) != 0; }

  const Entity* find(const EntityId& id) const {
    auto it = entities_.find(id);
    return it == entities_.end() ? nullptr : &it->second;
  }

  const Entity& entity(const EntityId& id) const {
    if (const auto* e = find(id)) return *e;
    throw Error(ErrorKind::UnknownEntity, "unknown entity id: " + id);
  }

  const std::map<EntityId, Entity>& entities() const { return entities_; }
  const std::vector<KGTriple>& triples() const { return triples_; }
  std::size_t size() const { return triples_.size(); }

  const std::vector<std::size_t>& outgoing(const EntityId& id) const { return lookup(outgoing_, id); }
  const std::vector<std::size_t>& incoming(const EntityId& id) const { return lookup(incoming_, id); }

  /// Indices of every triple touching `id`, ascending, self-loops listed once.
  std::vector<std::size_t> incident(const EntityId& id) const {
    std::vector<std::size_t> out = outgoing(id);
    const auto& in = incoming(id);
    out.insert(out.end(), in.begin(), in.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  std::vector<KGTriple> incident_triples(const EntityId& id) const {
    std::vector<KGTriple> out;
    for (auto i : incident(id)) out.push_back(triples_[i]);
    return out;
  }

  bool has_incident(const EntityId& id) const {
    return !outgoing(id).empty() || !incoming(id).empty();
  }

 private:
  static const std::vector<std::size_t>& lookup(
      const std::unordered_map<EntityId, std::vector<std::size_t>>& m, const EntityId& id) {
    static const std::vector<std::size_t> empty;
    auto it = m.find(id);
    return it == m.end() ? empty : it->second;
  }

  std::map<EntityId, Entity> entities_;
  std::vector<KGTriple> triples_;
  std::set<KGTriple> triple_set_;
  std::unordered_map<EntityId, std::vector<std::size_t>> outgoing_;
  std::unordered_map<EntityId, std::vector<std::size_t>> incoming_;
};

enum class Speaker { User, Assistant };

inline const char* to_string(Speaker s) { return s == Speaker::User ? "user" : "assistant"; }

struct EntityMention {
  EntityId entity;
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const EntityMention&, const EntityMention&) = default;
};

struct Turn {
  Speaker speaker = Speaker::User;
  std::string text;
  std::vector<KGTriple> grounding;
  std::vector<EntityMention> mentions;
  /// Grounded entities whose surface could not be found in the text.
  std::vector<EntityId> unlocatable;

  friend bool operator==(const Turn&, const Turn&) = default;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;

  friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

struct LoadReport {
  std::size_t duplicate_triples = 0;
  std::size_t grounding_triples_added = 0;
  std::size_t unlocatable_mentions = 0;
  std::size_t typed_entities = 0;
  std::size_t type_rows_ignored = 0;
};

struct Corpus {
  std::vector<Dialogue> dialogues;
  KnowledgeGraph graph;
  LoadReport report;
};

/// "SBJ PRE OBJ" using entity surface forms.
inline std::string render_triple(const KGTriple& t, const KnowledgeGraph& g) {
  const auto* s = g.find(t.subject);
  const auto* o = g.find(t.object);
  if (s == nullptr || o == nullptr)
    throw Error(ErrorKind::UnknownEntity,
                "cannot render triple with unresolved endpoint: " + (s == nullptr ? t.subject : t.object));
  std::string out;
  out.reserve(s->surface.size() + t.predicate.size() + o->surface.size() + 2);
  out.append(s->surface).append(" ").append(t.predicate).append(" ").append(o->surface);
  return out;
}

/// Triples on undirected paths of length <= k from `center`.
inline KnowledgeGraph khop_subgraph(const KnowledgeGraph& g, const EntityId& center, int k) {
  if (k < 0) throw Error(ErrorKind::InvalidArgument, "hop count must be >= 0");
  KnowledgeGraph sub;
  sub.add_entity(g.entity(center));
  if (k == 0) return sub;

  std::unordered_map<EntityId, int> depth{{center, 0}};
  std::deque<EntityId> frontier{center};
  std::set<std::size_t> picked;
  while (!frontier.empty()) {
    auto node = std::move(frontier.front());
    frontier.pop_front();
    const int d = depth.at(node);
    if (d >= k) continue;
    for (auto idx : g.incident(node)) {
      picked.insert(idx);
      const auto& t = g.triples()[idx];
      const auto& other = t.subject == node ? t.object : t.subject;
      if (depth.emplace(other, d + 1).second) frontier.push_back(other);
    }
  }
  for (auto idx : picked) {
    const auto& t = g.triples()[idx];
    sub.add_entity(g.entity(t.subject));
    sub.add_entity(g.entity(t.object));
    sub.add_triple(t);
  }
  return sub;
}

inline bool in_subgraph(const KnowledgeGraph& sub, const EntityId& e) { return sub.has_incident(e); }

namespace detail {

inline std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    fields.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

inline void chomp(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline bool skippable(const std::string& line) { return line.empty() || line.front() == '#'; }

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return in;
}

inline void ensure_entity(KnowledgeGraph& g, const EntityId& id) {
  g.add_entity(Entity{id, id, std::string(kUnknownType)});
}

inline Speaker parse_speaker(const std::string& s, std::size_t line_no) {
  if (s == "user") return Speaker::User;
  if (s == "assistant") return Speaker::Assistant;
  throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": unknown speaker '" + s + "'");
}

}  // namespace detail

/// KG TSV: subject \t predicate \t object. Duplicates are dropped and counted.
inline void read_kg_tsv(std::istream& in, KnowledgeGraph& g, LoadReport& report) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp(line);
    if (detail::skippable(line)) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
      throw Error(ErrorKind::Parse, "kg line " + std::to_string(line_no) + ": expected 3 nonempty tab-separated fields");
    detail::ensure_entity(g, fields[0]);
    detail::ensure_entity(g, fields[2]);
    if (!g.add_triple({fields[0], fields[1], fields[2]})) ++report.duplicate_triples;
  }
}

/// Types TSV: entity_id \t type. Rows for ids absent from the graph are ignored.
inline void read_types_tsv(std::istream& in, KnowledgeGraph& g, LoadReport& report) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp(line);
    if (detail::skippable(line)) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
      throw Error(ErrorKind::Parse, "types line " + std::to_string(line_no) + ": expected entity_id \\t type");
    if (!g.contains_entity(fields[0])) {
      ++report.type_rows_ignored;
      continue;
    }
    g.set_type(fields[0], fields[1]);
    ++report.typed_entities;
  }
}

/// Finds grounded entities in the turn text: case-insensitive, longest surface
/// first, non-overlapping. Entities without any hit are recorded as unlocatable.
inline void locate_mentions(Turn& turn, const KnowledgeGraph& g) {
  std::vector<const Entity*> grounded;
  std::set<EntityId> seen;
  for (const auto& t : turn.grounding) {
    for (const auto* id : {&t.subject, &t.object}) {
      if (seen.insert(*id).second) grounded.push_back(&g.entity(*id));
    }
  }
  std::stable_sort(grounded.begin(), grounded.end(), [](const Entity* a, const Entity* b) {
    if (a->surface.size() != b->surface.size()) return a->surface.size() > b->surface.size();
    return a->id < b->id;
  });

  const auto text_lower = to_lower(turn.text);
  std::vector<std::pair<std::size_t, std::size_t>> claimed;
  auto overlaps = [&](std::size_t s, std::size_t e) {
    return std::any_of(claimed.begin(), claimed.end(), [&](auto& c) { return s < c.second && c.first < e; });
  };

  turn.mentions.clear();
  turn.unlocatable.clear();
  for (const auto* ent : grounded) {
    const auto needle = to_lower(ent->surface);
    bool found = false;
    std::size_t from = 0;
    while (true) {
      const auto pos = find_surface(text_lower, needle, from);
      if (pos == std::string_view::npos) break;
      const auto end = pos + needle.size();
      if (!overlaps(pos, end)) {
        claimed.emplace_back(pos, end);
        turn.mentions.push_back({ent->id, pos, end});
        found = true;
      }
      from = pos + 1;
    }
    if (!found) turn.unlocatable.push_back(ent->id);
  }
  std::sort(turn.mentions.begin(), turn.mentions.end(),
            [](const auto& a, const auto& b) { return a.start < b.start; });
  std::sort(turn.unlocatable.begin(), turn.unlocatable.end());
}

inline void validate_mention(const Turn& turn, const EntityMention& m, const KnowledgeGraph& g,
                             std::size_t line_no) {
  const auto where = "line " + std::to_string(line_no) + ": ";
  if (!(m.start < m.end && m.end <= turn.text.size()))
    throw Error(ErrorKind::Parse, where + "mention span out of bounds");
  const auto* e = g.find(m.entity);
  if (e == nullptr) throw Error(ErrorKind::DanglingEntity, where + "mention of unknown entity " + m.entity);
  if (to_lower(std::string_view(turn.text).substr(m.start, m.end - m.start)) != to_lower(e->surface))
    throw Error(ErrorKind::Parse, where + "mention span does not match surface of " + m.entity);
}

/// Corpus JSONL: {id, turns:[{speaker, text, triples:[[s,p,o],...], mentions?, unlocatable?}]}.
/// Grounding triples with known endpoints but missing from the KG are merged in;
/// unknown endpoints raise a dangling-entity error listing every unresolved id.
inline std::vector<Dialogue> read_corpus_jsonl(std::istream& in, KnowledgeGraph& g, LoadReport& report) {
  using nlohmann::json;
  std::vector<Dialogue> dialogues;
  std::set<EntityId> dangling;
  struct Pending {
    std::size_t line_no;
    std::size_t dialogue;
    std::size_t turn;
    bool explicit_mentions;
  };
  std::vector<Pending> pending;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp(line);
    if (line.empty()) continue;
    const auto where = "corpus line " + std::to_string(line_no) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::Parse, where + e.what());
    }
    try {
      Dialogue d;
      d.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      for (const auto& jt : j.at("turns")) {
        Turn turn;
        turn.speaker = detail::parse_speaker(jt.at("speaker").get<std::string>(), line_no);
        turn.text = jt.at("text").get<std::string>();
        for (const auto& jtr : jt.value("triples", json::array())) {
          if (!jtr.is_array() || jtr.size() != 3)
            throw Error(ErrorKind::Parse, where + "triple must be [subject, predicate, object]");
          KGTriple t{jtr[0].get<std::string>(), jtr[1].get<std::string>(), jtr[2].get<std::string>()};
          if (t.subject.empty() || t.predicate.empty() || t.object.empty())
            throw Error(ErrorKind::Parse, where + "triple fields must be nonempty");
          turn.grounding.push_back(std::move(t));
        }
        const bool explicit_mentions = jt.contains("mentions");
        if (explicit_mentions) {
          for (const auto& jm : jt.at("mentions"))
            turn.mentions.push_back({jm.at("entity").get<std::string>(), jm.at("start").get<std::size_t>(),
                                     jm.at("end").get<std::size_t>()});
          for (const auto& ju : jt.value("unlocatable", json::array())) turn.unlocatable.push_back(ju.get<std::string>());
        }
        pending.push_back({line_no, dialogues.size(), d.turns.size(), explicit_mentions});
        d.turns.push_back(std::move(turn));
      }
      if (d.turns.empty()) throw Error(ErrorKind::Parse, where + "dialogue has no turns");
      dialogues.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Parse, where + e.what());
    }
  }

  for (const auto& d : dialogues)
    for (const auto& t : d.turns)
      for (const auto& tr : t.grounding)
        for (const auto* id : {&tr.subject, &tr.object})
          if (!g.contains_entity(*id)) dangling.insert(*id);
  if (!dangling.empty()) {
    std::string msg = "dangling entity ids in corpus grounding:";
    for (const auto& id : dangling) msg += " " + id;
    throw Error(ErrorKind::DanglingEntity, msg);
  }

  for (const auto& d : dialogues)
    for (const auto& t : d.turns)
      for (const auto& tr : t.grounding)
        if (g.add_triple(tr)) ++report.grounding_triples_added;

  for (const auto& p : pending) {
    auto& turn = dialogues[p.dialogue].turns[p.turn];
    if (p.explicit_mentions) {
      for (const auto& m : turn.mentions) validate_mention(turn, m, g, p.line_no);
    } else {
      locate_mentions(turn, g);
    }
    report.unlocatable_mentions += turn.unlocatable.size();
  }
  return dialogues;
}

inline Corpus load_corpus(std::istream& corpus, std::istream& kg, std::istream* types) {
  Corpus c;
  read_kg_tsv(kg, c.graph, c.report);
  if (types != nullptr) read_types_tsv(*types, c.graph, c.report);
  c.dialogues = read_corpus_jsonl(corpus, c.graph, c.report);
  return c;
}

/// Loads corpus, KG and entity types. An empty `types_path` leaves every entity UNKNOWN.
inline Corpus load_corpus(const std::string& corpus_path, const std::string& kg_path,
                          const std::string& types_path) {
  auto corpus = detail::open_input(corpus_path);
  auto kg = detail::open_input(kg_path);
  if (types_path.empty()) return load_corpus(corpus, kg, nullptr);
  auto types = detail::open_input(types_path);
  return load_corpus(corpus, kg, &types);
}

inline nlohmann::json to_json(const Turn& t) {
  nlohmann::json triples = nlohmann::json::array();
  for (const auto& tr : t.grounding) triples.push_back({tr.subject, tr.predicate, tr.object});
  nlohmann::json mentions = nlohmann::json::array();
  for (const auto& m : t.mentions) mentions.push_back({{"entity", m.entity}, {"start", m.start}, {"end", m.end}});
  return {{"speaker", to_string(t.speaker)},
          {"text", t.text},
          {"triples", triples},
          {"mentions", mentions},
          {"unlocatable", t.unlocatable}};
}

inline void write_corpus_jsonl(std::ostream& out, const std::vector<Dialogue>& dialogues) {
  for (const auto& d : dialogues) {
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : d.turns) turns.push_back(to_json(t));
    out << nlohmann::json{{"id", d.id}, {"turns", turns}}.dump() << '\n';
  }
}

inline void write_kg_tsv(std::ostream& out, const KnowledgeGraph& g) {
  for (const auto& t : g.triples()) out << t.subject << '\t' << t.predicate << '\t' << t.object << '\n';
}

inline void write_types_tsv(std::ostream& out, const KnowledgeGraph& g) {
  for (const auto& [id, e] : g.entities())
    if (e.etype != kUnknownType) out << id << '\t' << e.etype << '\n';
}

}  // namespace fade
