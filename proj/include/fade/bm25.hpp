#pragma once

// Okapi BM25 inverted index and the per-entity-type document indexes used for
// extrinsic candidate retrieval.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fade/error.hpp"
#include "fade/kg.hpp"
#include "fade/tokenize.hpp"

namespace fade {

inline constexpr std::string_view kIndexMagic = "FADEIDX1";

struct Bm25Params {
  double k1 = 1.6;
  double b = 0.9;

  void validate() const {
    if (!(k1 > 0.0)) throw Error(ErrorKind::InvalidArgument, "bm25 k1 must be > 0");
    if (!(b >= 0.0 && b <= 1.0)) throw Error(ErrorKind::InvalidArgument, "bm25 b must lie in [0, 1]");
  }
};

struct Posting {
  std::uint32_t doc = 0;
  std::uint32_t tf = 0;

  friend bool operator==(const Posting&, const Posting&) = default;
};

class BM25Index {
 public:
  explicit BM25Index(Bm25Params params = {}) : params_(params) { params_.validate(); }

  /// Appends a document and returns its dense index. Keys must be unique.
  std::uint32_t add_document(std::string key, const std::vector<std::string>& tokens) {
    if (by_key_.count(key) != 0) throw Error(ErrorKind::InvalidArgument, "duplicate document key: " + key);
    const auto doc = static_cast<std::uint32_t>(keys_.size());
    std::map<std::string, std::uint32_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (auto& [term, count] : tf) postings_[term].push_back({doc, count});
    by_key_.emplace(key, doc);
    keys_.push_back(std::move(key));
    lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
    total_length_ += tokens.size();
    return doc;
  }

  const Bm25Params& params() const { return params_; }
  std::size_t size() const { return keys_.size(); }
  double avg_doc_len() const { return keys_.empty() ? 0.0 : static_cast<double>(total_length_) / keys_.size(); }
  const std::string& key(std::uint32_t doc) const { return keys_.at(doc); }
  std::uint32_t doc_length(std::uint32_t doc) const { return lengths_.at(doc); }
  const std::map<std::string, std::vector<Posting>>& postings() const { return postings_; }

  std::optional<std::uint32_t> find(const std::string& key) const {
    auto it = by_key_.find(key);
    if (it == by_key_.end()) return std::nullopt;
    return it->second;
  }

  std::uint32_t doc_of(const std::string& key) const {
    if (auto d = find(key)) return *d;
    throw Error(ErrorKind::UnknownEntity, "document not in index: " + key);
  }

  std::size_t document_frequency(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
  }

  std::uint32_t term_frequency(const std::string& term, std::uint32_t doc) const {
    auto it = postings_.find(term);
    if (it == postings_.end()) return 0;
    const auto& list = it->second;
    auto p = std::lower_bound(list.begin(), list.end(), doc, [](const Posting& x, std::uint32_t d) { return x.doc < d; });
    return (p != list.end() && p->doc == doc) ? p->tf : 0;
  }

  /// ln((N - df + 0.5) / (df + 0.5) + 1), never negative.
  double idf(const std::string& term) const {
    const auto n = static_cast<double>(size());
    const auto df = static_cast<double>(document_frequency(term));
    return std::max(0.0, std::log((n - df + 0.5) / (df + 0.5) + 1.0));
  }

  double term_weight(double tf, std::uint32_t doc) const {
    if (tf == 0.0) return 0.0;
    const double avg = avg_doc_len();
    const double norm_len = avg > 0.0 ? lengths_[doc] / avg : 1.0;
    return tf * (params_.k1 + 1.0) / (tf + params_.k1 * (1.0 - params_.b + params_.b * norm_len));
  }

  double score(const std::vector<std::string>& query, std::uint32_t doc) const {
    if (doc >= size()) throw Error(ErrorKind::UnknownEntity, "document index out of range");
    double s = 0.0;
    for (const auto& term : query) s += idf(term) * term_weight(term_frequency(term, doc), doc);
    return s;
  }

  double score(const std::vector<std::string>& query, const std::string& key) const {
    return score(query, doc_of(key));
  }

  /// Scores every document against a bag of query terms (term -> multiplicity)
  /// in a single pass over the postings.
  std::vector<double> score_all(const std::map<std::string, double>& weighted_terms) const {
    std::vector<double> scores(size(), 0.0);
    for (const auto& [term, weight] : weighted_terms) {
      auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      const double w = weight * idf(term);
      for (const auto& p : it->second) scores[p.doc] += w * term_weight(p.tf, p.doc);
    }
    return scores;
  }

  std::vector<double> score_all(const std::vector<std::string>& query) const {
    std::map<std::string, double> bag;
    for (const auto& t : query) bag[t] += 1.0;
    return score_all(bag);
  }

  void save(std::ostream& out) const {
    nlohmann::json docs = nlohmann::json::array();
    for (std::size_t i = 0; i < keys_.size(); ++i) docs.push_back({keys_[i], lengths_[i]});
    nlohmann::json post = nlohmann::json::object();
    for (const auto& [term, list] : postings_) {
      auto& arr = post[term] = nlohmann::json::array();
      for (const auto& p : list) arr.push_back({p.doc, p.tf});
    }
    out << kIndexMagic << '\n'
        << nlohmann::json{{"k1", params_.k1}, {"b", params_.b}, {"docs", docs}, {"postings", post}}.dump() << '\n';
  }

  static BM25Index load(std::istream& in) {
    std::string magic;
    std::getline(in, magic);
    if (magic != kIndexMagic) throw Error(ErrorKind::Parse, "not a FADEIDX1 index file");
    nlohmann::json j;
    try {
      in >> j;
      BM25Index index({j.at("k1").get<double>(), j.at("b").get<double>()});
      for (const auto& d : j.at("docs")) {
        index.by_key_.emplace(d[0].get<std::string>(), static_cast<std::uint32_t>(index.keys_.size()));
        index.keys_.push_back(d[0].get<std::string>());
        index.lengths_.push_back(d[1].get<std::uint32_t>());
        index.total_length_ += index.lengths_.back();
      }
      for (const auto& [term, arr] : j.at("postings").items()) {
        auto& list = index.postings_[term];
        for (const auto& p : arr) list.push_back({p[0].get<std::uint32_t>(), p[1].get<std::uint32_t>()});
      }
      return index;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Parse, std::string("malformed index: ") + e.what());
    }
  }

 private:
  Bm25Params params_;
  std::vector<std::string> keys_;
  std::vector<std::uint32_t> lengths_;
  std::unordered_map<std::string, std::uint32_t> by_key_;
  std::map<std::string, std::vector<Posting>> postings_;
  std::size_t total_length_ = 0;
};

struct EntityDocument {
  EntityId entity;
  std::string text;
  std::vector<std::string> tokens;
};

/// Incident triples in document order: sorted by (predicate, object, subject).
inline std::vector<KGTriple> document_triples(const KnowledgeGraph& g, const EntityId& e) {
  auto triples = g.incident_triples(e);
  std::sort(triples.begin(), triples.end(), [](const KGTriple& a, const KGTriple& b) {
    return std::tie(a.predicate, a.object, a.subject) < std::tie(b.predicate, b.object, b.subject);
  });
  return triples;
}

inline EntityDocument make_entity_document(const KnowledgeGraph& g, const EntityId& e) {
  EntityDocument doc{e, {}, {}};
  for (const auto& t : document_triples(g, e)) {
    if (!doc.text.empty()) doc.text += ' ';
    doc.text += render_triple(t, g);
  }
  doc.tokens = tokenize(doc.text);
  return doc;
}

using EntityIndexes = std::map<std::string, BM25Index>;

/// One index per entity type; entities without triples are left out.
inline EntityIndexes build_entity_indexes(const KnowledgeGraph& g, Bm25Params params = {}) {
  EntityIndexes indexes;
  for (const auto& [id, entity] : g.entities()) {
    if (!g.has_incident(id)) continue;
    auto doc = make_entity_document(g, id);
    auto it = indexes.try_emplace(entity.etype, params).first;
    it->second.add_document(id, doc.tokens);
  }
  return indexes;
}

struct Candidate {
  EntityId entity;
  double score = 0.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// The three rotations (s p o), (p o s), (o s p) of every incident triple.
inline std::vector<std::vector<std::string>> extrinsic_queries(const KnowledgeGraph& g, const EntityId& original) {
  std::vector<std::vector<std::string>> queries;
  for (const auto& t : document_triples(g, original)) {
    const std::string parts[3] = {g.entity(t.subject).surface, t.predicate, g.entity(t.object).surface};
    for (int r = 0; r < 3; ++r)
      queries.push_back(tokenize(parts[r] + " " + parts[(r + 1) % 3] + " " + parts[(r + 2) % 3]));
  }
  return queries;
}

/// Mean BM25 of every document over all queries, as parallel vectors indexed by doc.
inline std::vector<double> mean_query_scores(const BM25Index& index,
                                             const std::vector<std::vector<std::string>>& queries) {
  std::map<std::string, double> bag;
  for (const auto& q : queries)
    for (const auto& t : q) bag[t] += 1.0;
  auto scores = index.score_all(bag);
  for (auto& s : scores) s /= static_cast<double>(queries.size());
  return scores;
}

/// Descending by score, ties by ascending entity id.
inline void sort_candidates_desc(std::vector<Candidate>& c) {
  std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entity < b.entity;
  });
}

/// Ascending by score, ties by ascending entity id.
inline void sort_candidates_asc(std::vector<Candidate>& c) {
  std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.entity < b.entity;
  });
}

inline std::vector<Candidate> scored_candidates(const BM25Index& index, const EntityId& original,
                                                const KnowledgeGraph& g) {
  if (!g.contains_entity(original)) throw Error(ErrorKind::UnknownEntity, "unknown entity id: " + original);
  auto queries = extrinsic_queries(g, original);
  if (queries.empty()) throw Error(ErrorKind::EmptyGrounding, "entity has no triples: " + original);
  const auto scores = mean_query_scores(index, queries);
  std::vector<Candidate> out;
  out.reserve(scores.size());
  for (std::uint32_t d = 0; d < scores.size(); ++d)
    if (index.key(d) != original) out.push_back({index.key(d), scores[d]});
  return out;
}

/// Documents of `index` ranked by their mean BM25 score against the rotated
/// triple queries of `original`. The original itself is never returned.
inline std::vector<Candidate> extrinsic_candidates(const BM25Index& index, const EntityId& original,
                                                   const KnowledgeGraph& g) {
  auto out = scored_candidates(index, original, g);
  sort_candidates_desc(out);
  return out;
}

}  // namespace fade
