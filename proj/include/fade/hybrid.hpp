#pragma once

// Frequency-weighted triple embeddings, cosine similarity and the hybrid
// embedding/BM25 score used to rank triples of a 1-hop subgraph.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fade/bm25.hpp"
#include "fade/error.hpp"
#include "fade/kg.hpp"
#include "fade/tokenize.hpp"

namespace fade {

using Vector = std::vector<double>;

inline constexpr double kDefaultEps = 2e-4;
inline constexpr double kDefaultBeta = 0.5;

namespace detail {

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Term -> embedding. Terms are canonical surface forms, looked up case-sensitively.
class VectorStore {
 public:
  explicit VectorStore(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw Error(ErrorKind::InvalidArgument, "vector store dimension must be > 0");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  bool contains(const std::string& term) const { return vectors_.count(term) != 0; }
  const std::map<std::string, Vector>& vectors() const { return vectors_; }

  void insert(std::string term, Vector v) {
    if (v.size() != dim_)
      throw Error(ErrorKind::InvalidArgument, "vector for '" + term + "' has width " + std::to_string(v.size()) +
                                                  ", expected " + std::to_string(dim_));
    vectors_[std::move(term)] = std::move(v);
  }

  /// Stored vector, or a unit vector derived deterministically from the term bytes.
  Vector lookup(const std::string& term) const {
    auto it = vectors_.find(term);
    if (it != vectors_.end()) return it->second;
    return fallback(term);
  }

  Vector fallback(const std::string& term) const {
    std::uint64_t state = detail::fnv1a(term);
    Vector v(dim_);
    double norm = 0.0;
    for (auto& x : v) {
      x = static_cast<double>(detail::splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
      norm += x * x;
    }
    if (norm == 0.0) {
      v[0] = 1.0;
      return v;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
  }

  /// Vector TSV: "#dim=<d>" header, then term \t v1 \t ... \t vd per line.
  static VectorStore load(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
      ++line_no;
      detail::chomp(line);
      if (line.empty()) continue;
      if (line.rfind("#dim=", 0) != 0) throw Error(ErrorKind::Parse, "vector file must start with #dim=<d>");
      try {
        dim = std::stoul(line.substr(5));
      } catch (const std::exception&) {
        throw Error(ErrorKind::Parse, "vector line " + std::to_string(line_no) + ": bad dimension header");
      }
      break;
    }
    if (dim == 0) throw Error(ErrorKind::Parse, "vector file has no valid #dim header");
    VectorStore store(dim);
    while (std::getline(in, line)) {
      ++line_no;
      detail::chomp(line);
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos || tab == 0)
        throw Error(ErrorKind::Parse, "vector line " + std::to_string(line_no) + ": expected term \\t floats");
      std::istringstream values(line.substr(tab + 1));
      Vector v;
      std::string field;
      while (values >> field) {
        try {
          std::size_t used = 0;
          v.push_back(std::stod(field, &used));
          if (used != field.size()) throw std::invalid_argument(field);
        } catch (const std::exception&) {
          throw Error(ErrorKind::Parse, "vector line " + std::to_string(line_no) + ": bad number '" + field + "'");
        }
      }
      if (v.size() != dim)
        throw Error(ErrorKind::Parse, "vector line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                                          " values, got " + std::to_string(v.size()));
      store.insert(line.substr(0, tab), std::move(v));
    }
    return store;
  }

  void save(std::ostream& out) const {
    out << "#dim=" << dim_ << '\n';
    std::ostringstream num;
    num.precision(17);
    for (const auto& [term, v] : vectors_) {
      out << term;
      for (double x : v) {
        num.str({});
        num << x;
        out << '\t' << num.str();
      }
      out << '\n';
    }
  }

 private:
  std::size_t dim_;
  std::map<std::string, Vector> vectors_;
};

/// Token unigram distribution over the rendered triples of a graph.
class UnigramModel {
 public:
  UnigramModel() = default;

  static UnigramModel from_graph(const KnowledgeGraph& g) {
    UnigramModel m;
    for (const auto& t : g.triples()) m.add_text(render_triple(t, g));
    return m;
  }

  void add_text(std::string_view text) {
    for (auto& tok : tokenize(text)) {
      ++counts_[tok];
      ++total_;
    }
  }

  std::size_t total() const { return total_; }
  std::size_t count(const std::string& token) const {
    auto it = counts_.find(token);
    return it == counts_.end() ? 0 : it->second;
  }

  double token_probability(const std::string& token) const {
    return total_ == 0 ? 0.0 : static_cast<double>(count(token)) / static_cast<double>(total_);
  }

  /// Multi-word terms take the mean probability of their tokens.
  double probability(std::string_view term) const {
    const auto toks = tokenize(term);
    if (toks.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& t : toks) sum += token_probability(t);
    return sum / static_cast<double>(toks.size());
  }

 private:
  std::unordered_map<std::string, std::size_t> counts_;
  std::size_t total_ = 0;
};

/// Surface forms of a triple's three slots.
struct TripleTerms {
  std::string subject;
  std::string predicate;
  std::string object;
};

inline TripleTerms terms_of(const KGTriple& t, const KnowledgeGraph& g) {
  return {g.entity(t.subject).surface, t.predicate, g.entity(t.object).surface};
}

/// eps / (p + eps): rare terms get weight close to 1, frequent terms close to 0.
inline double smooth_inverse_weight(double p, double eps) { return eps / (p + eps); }

namespace detail {

inline void check_eps(double eps) {
  if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "eps must be > 0");
}

inline void axpy(double a, const Vector& x, Vector& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace detail

inline Vector weighted_query_embedding(const TripleTerms& t, const VectorStore& store, const UnigramModel& uni,
                                       double eps = kDefaultEps) {
  detail::check_eps(eps);
  Vector q(store.dim(), 0.0);
  for (const auto* term : {&t.subject, &t.predicate, &t.object})
    detail::axpy(smooth_inverse_weight(uni.probability(*term), eps), store.lookup(*term), q);
  return q;
}

/// Like the query embedding, but the relation slot is weighted by its relative
/// frequency `rel_freq` inside the subgraph instead of its unigram probability.
inline Vector triple_embedding(const TripleTerms& t, const VectorStore& store, const UnigramModel& uni,
                               double rel_freq, double eps = kDefaultEps) {
  detail::check_eps(eps);
  if (!(rel_freq >= 0.0 && rel_freq <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "relation frequency must lie in [0, 1]");
  Vector n(store.dim(), 0.0);
  detail::axpy(smooth_inverse_weight(uni.probability(t.subject), eps), store.lookup(t.subject), n);
  detail::axpy(smooth_inverse_weight(rel_freq, eps), store.lookup(t.predicate), n);
  detail::axpy(smooth_inverse_weight(uni.probability(t.object), eps), store.lookup(t.object), n);
  return n;
}

/// Cosine similarity; 0 when either vector is zero.
inline double entity_similarity(std::span<const double> q, std::span<const double> n) {
  if (q.size() != n.size()) throw Error(ErrorKind::InvalidArgument, "cosine of vectors with different widths");
  double dot = 0.0, qq = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    dot += q[i] * n[i];
    qq += q[i] * q[i];
    nn += n[i] * n[i];
  }
  if (qq == 0.0 || nn == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(qq) * std::sqrt(nn)), -1.0, 1.0);
}

inline double hybrid_score(double sim, double bm25_norm, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw Error(ErrorKind::InvalidArgument, "beta must lie in (0, 1)");
  return beta * sim + (1.0 - beta) * bm25_norm;
}

/// Min-max normalisation into [0, 1]. A degenerate set maps to 1.0.
inline std::vector<double> min_max_normalize(std::span<const double> xs) {
  std::vector<double> out(xs.begin(), xs.end());
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double min = *lo, max = *hi;
  for (auto& x : out) x = (max > min) ? (x - min) / (max - min) : 1.0;
  return out;
}

/// Dynamic BM25 index over the triples of one subgraph (one document per
/// triple, keyed by position) plus the relative frequency of each predicate.
struct SubgraphTripleIndex {
  BM25Index index;
  std::map<std::string, double> relation_freq;

  static SubgraphTripleIndex build(const KnowledgeGraph& sub, Bm25Params params) {
    SubgraphTripleIndex s{BM25Index(params), {}};
    const auto& triples = sub.triples();
    for (std::size_t i = 0; i < triples.size(); ++i) {
      s.index.add_document(std::to_string(i), tokenize(render_triple(triples[i], sub)));
      s.relation_freq[triples[i].predicate] += 1.0;
    }
    for (auto& [rel, f] : s.relation_freq) f /= static_cast<double>(triples.size());
    return s;
  }
};

struct ScoredTriple {
  KGTriple triple;
  double similarity = 0.0;
  double bm25 = 0.0;
  double bm25_norm = 0.0;
  double score = 0.0;
};

struct HybridParams {
  double eps = kDefaultEps;
  double beta = kDefaultBeta;
  /// The dynamic per-subgraph index uses the stock rank_bm25 settings.
  Bm25Params bm25{1.5, 0.75};
};

/// Scores every triple of `sub` against `query_triple` and returns them sorted
/// by descending hybrid score (ties by ascending triple).
inline std::vector<ScoredTriple> score_subgraph_triples(const KGTriple& query_triple, const KnowledgeGraph& sub,
                                                        const VectorStore& store, const UnigramModel& uni,
                                                        const HybridParams& params = {}) {
  if (sub.size() == 0) throw Error(ErrorKind::EmptyGrounding, "cannot score an empty subgraph");
  detail::check_eps(params.eps);
  hybrid_score(0.0, 0.0, params.beta);

  const auto tindex = SubgraphTripleIndex::build(sub, params.bm25);
  const auto query_terms = TripleTerms{sub.find(query_triple.subject) ? sub.entity(query_triple.subject).surface
                                                                       : query_triple.subject,
                                       query_triple.predicate,
                                       sub.find(query_triple.object) ? sub.entity(query_triple.object).surface
                                                                     : query_triple.object};
  const auto query_tokens = tokenize(query_terms.subject + " " + query_terms.predicate + " " + query_terms.object);
  const auto q = weighted_query_embedding(query_terms, store, uni, params.eps);
  const auto raw = tindex.index.score_all(query_tokens);
  const auto norm = min_max_normalize(raw);

  std::vector<ScoredTriple> out;
  out.reserve(sub.size());
  for (std::size_t i = 0; i < sub.size(); ++i) {
    const auto& t = sub.triples()[i];
    const auto n = triple_embedding(terms_of(t, sub), store, uni, tindex.relation_freq.at(t.predicate), params.eps);
    const double sim = entity_similarity(q, n);
    out.push_back({t, sim, raw[i], norm[i], hybrid_score(sim, norm[i], params.beta)});
  }
  std::sort(out.begin(), out.end(), [](const ScoredTriple& a, const ScoredTriple& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.triple < b.triple;
  });
  return out;
}

/// Convenience overload: builds the 1-hop subgraph of `center` first.
inline std::vector<ScoredTriple> score_subgraph_triples(const EntityId& center, const KGTriple& query_triple,
                                                        const KnowledgeGraph& g, const VectorStore& store,
                                                        const UnigramModel& uni, const HybridParams& params = {}) {
  return score_subgraph_triples(query_triple, khop_subgraph(g, center, 1), store, uni, params);
}

}  // namespace fade
