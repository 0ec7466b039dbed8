#pragma once

// Brute-force reference implementations. Deliberately share no code with the
// library beyond its plain data types.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fade/kg.hpp"

namespace oracle {

inline bool word_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

inline std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (word_char(c)) {
      cur.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::string lower(std::string s) {
  for (auto& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
  return s;
}

/// Case-insensitive occurrence not glued to word characters on either side.
inline bool mentions(const std::string& text, const std::string& surface) {
  const auto t = lower(text), s = lower(surface);
  if (s.empty()) return false;
  for (std::size_t i = 0; i + s.size() <= t.size(); ++i) {
    if (t.compare(i, s.size(), s) != 0) continue;
    const bool left = i == 0 || !word_char(static_cast<unsigned char>(t[i - 1]));
    const bool right = i + s.size() == t.size() || !word_char(static_cast<unsigned char>(t[i + s.size()]));
    if (left && right) return true;
  }
  return false;
}

inline bool in_history(const std::vector<std::string>& history, const std::string& surface) {
  for (const auto& h : history)
    if (mentions(h, surface)) return true;
  return false;
}

/// Okapi BM25 straight from the formula, recounting everything per call.
inline double bm25(const std::vector<std::vector<std::string>>& docs, const std::vector<std::string>& query,
                   std::size_t doc, double k1, double b) {
  const double n = static_cast<double>(docs.size());
  double total = 0.0;
  for (const auto& d : docs) total += static_cast<double>(d.size());
  const double avg = total / n;
  double score = 0.0;
  for (const auto& q : query) {
    double df = 0.0;
    for (const auto& d : docs)
      if (std::find(d.begin(), d.end(), q) != d.end()) df += 1.0;
    double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    if (idf < 0.0) idf = 0.0;
    const double tf = static_cast<double>(std::count(docs[doc].begin(), docs[doc].end(), q));
    const double len = static_cast<double>(docs[doc].size());
    const double denom = tf + k1 * (1.0 - b + b * (avg > 0.0 ? len / avg : 1.0));
    if (tf > 0.0) score += idf * tf * (k1 + 1.0) / denom;
  }
  return score;
}

/// Shortest undirected hop distance from `center`, by repeated edge relaxation.
inline std::map<std::string, int> distances(const fade::KnowledgeGraph& g, const std::string& center) {
  std::map<std::string, int> dist{{center, 0}};
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& t : g.triples()) {
      for (int dir = 0; dir < 2; ++dir) {
        const auto& a = dir == 0 ? t.subject : t.object;
        const auto& b = dir == 0 ? t.object : t.subject;
        auto ia = dist.find(a);
        if (ia == dist.end()) continue;
        auto ib = dist.find(b);
        if (ib == dist.end() || ib->second > ia->second + 1) {
          dist[b] = ia->second + 1;
          changed = true;
        }
      }
    }
  }
  return dist;
}

/// A triple lies on an undirected path of length <= k from `center` exactly
/// when one of its endpoints is within k - 1 hops.
inline std::set<fade::KGTriple> khop(const fade::KnowledgeGraph& g, const std::string& center, int k) {
  const auto dist = distances(g, center);
  std::set<fade::KGTriple> out;
  for (const auto& t : g.triples()) {
    int best = 1 << 30;
    for (const auto* e : {&t.subject, &t.object}) {
      auto it = dist.find(*e);
      if (it != dist.end()) best = std::min(best, it->second);
    }
    if (best <= k - 1) out.insert(t);
  }
  return out;
}

inline std::set<std::string> neighbours(const fade::KnowledgeGraph& g, const std::string& e) {
  std::set<std::string> out;
  for (const auto& t : g.triples())
    if (t.subject == e || t.object == e) {
      out.insert(t.subject);
      out.insert(t.object);
    }
  return out;
}

inline std::string render(const fade::KnowledgeGraph& g, const fade::KGTriple& t) {
  return g.entity(t.subject).surface + " " + t.predicate + " " + g.entity(t.object).surface;
}

/// Tokens of an entity's document: every rendered triple touching it.
inline std::vector<std::string> entity_doc(const fade::KnowledgeGraph& g, const std::string& e) {
  std::vector<std::string> out;
  for (const auto& t : g.triples())
    if (t.subject == e || t.object == e)
      for (auto& w : words(render(g, t))) out.push_back(w);
  return out;
}

/// Mean BM25 of `candidate` over the three rotated queries of every triple of `original`.
inline double extrinsic_score(const fade::KnowledgeGraph& g, const std::string& original, const std::string& candidate,
                              double k1, double b) {
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> docs;
  const auto& etype = g.entity(candidate).etype;
  std::size_t cand_doc = 0;
  for (const auto& [id, ent] : g.entities()) {
    if (ent.etype != etype) continue;
    auto d = entity_doc(g, id);
    if (d.empty()) continue;
    if (id == candidate) cand_doc = docs.size();
    ids.push_back(id);
    docs.push_back(d);
  }
  double sum = 0.0;
  int n = 0;
  for (const auto& t : g.triples()) {
    if (t.subject != original && t.object != original) continue;
    const std::string s = g.entity(t.subject).surface, p = t.predicate, o = g.entity(t.object).surface;
    for (const auto& q : {s + " " + p + " " + o, p + " " + o + " " + s, o + " " + s + " " + p}) {
      sum += bm25(docs, words(q), cand_doc, k1, b);
      ++n;
    }
  }
  return sum / n;
}

// --- hybrid scoring -------------------------------------------------------

inline double unigram_p(const std::map<std::string, double>& counts, double total, const std::string& term) {
  const auto ws = words(term);
  if (ws.empty() || total == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& w : ws) {
    auto it = counts.find(w);
    s += it == counts.end() ? 0.0 : it->second / total;
  }
  return s / static_cast<double>(ws.size());
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace oracle
