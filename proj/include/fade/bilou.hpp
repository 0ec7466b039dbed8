#pragma once

// BILOU span encoding and the labeled example rows built from perturbed turns.

#include <algorithm>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fade/error.hpp"
#include "fade/kg.hpp"
#include "fade/perturb.hpp"
#include "fade/tokenize.hpp"

namespace fade {

enum class TokenLabel { B, I, L, O, U };

inline const char* to_string(TokenLabel l) {
  switch (l) {
    case TokenLabel::B: return "B";
    case TokenLabel::I: return "I";
    case TokenLabel::L: return "L";
    case TokenLabel::O: return "O";
    case TokenLabel::U: return "U";
  }
  return "O";
}

inline TokenLabel parse_label(std::string_view s) {
  if (s == "B") return TokenLabel::B;
  if (s == "I") return TokenLabel::I;
  if (s == "L") return TokenLabel::L;
  if (s == "O") return TokenLabel::O;
  if (s == "U") return TokenLabel::U;
  throw Error(ErrorKind::Parse, "unknown BILOU label '" + std::string(s) + "'");
}

/// Inclusive token index range [first, last].
struct TokenRange {
  std::size_t first = 0;
  std::size_t last = 0;

  friend auto operator<=>(const TokenRange&, const TokenRange&) = default;
};

/// B -> I|L, I -> I|L, anything else may follow O, U or L.
inline bool is_valid_bilou(std::span<const TokenLabel> labels) {
  bool open = false;
  for (auto l : labels) {
    switch (l) {
      case TokenLabel::B:
      case TokenLabel::O:
      case TokenLabel::U:
        if (open) return false;
        open = l == TokenLabel::B;
        break;
      case TokenLabel::I:
        if (!open) return false;
        break;
      case TokenLabel::L:
        if (!open) return false;
        open = false;
        break;
    }
  }
  return !open;
}

inline std::vector<TokenLabel> encode_token_ranges(std::size_t n_tokens, std::span<const TokenRange> ranges) {
  std::vector<TokenLabel> labels(n_tokens, TokenLabel::O);
  for (const auto& r : ranges) {
    if (r.first == r.last) {
      labels[r.first] = TokenLabel::U;
      continue;
    }
    labels[r.first] = TokenLabel::B;
    for (auto i = r.first + 1; i < r.last; ++i) labels[i] = TokenLabel::I;
    labels[r.last] = TokenLabel::L;
  }
  return labels;
}

/// Tag every token overlapping a span. Spans that cover no token leave no trace.
inline std::vector<TokenLabel> encode_bilou(std::span<const Token> tokens, std::vector<Span> spans) {
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i)
    if (spans[i].start < spans[i - 1].end) throw Error(ErrorKind::InvalidArgument, "overlapping spans");
  std::vector<TokenRange> ranges;
  std::size_t ti = 0;
  for (const auto& s : spans) {
    while (ti < tokens.size() && tokens[ti].end <= s.start) ++ti;
    std::size_t last = ti;
    bool any = false;
    while (last < tokens.size() && tokens[last].start < s.end) {
      any = true;
      ++last;
    }
    if (!any) continue;
    if (!ranges.empty() && ranges.back().last >= ti)
      throw Error(ErrorKind::InvalidArgument, "spans share a token");
    ranges.push_back({ti, last - 1});
  }
  return encode_token_ranges(tokens.size(), ranges);
}

/// Maximal spans from a label sequence. Malformed input is repaired: an
/// orphan I or L becomes a unit span, and a B with no closing L ends at the
/// last contiguous I.
inline std::vector<TokenRange> decode_token_ranges(std::span<const TokenLabel> labels) {
  std::vector<TokenRange> out;
  std::optional<std::size_t> open;
  std::size_t last = 0;
  auto close = [&] {
    if (open) out.push_back({*open, last});
    open.reset();
  };
  for (std::size_t i = 0; i < labels.size(); ++i) {
    switch (labels[i]) {
      case TokenLabel::O: close(); break;
      case TokenLabel::B:
        close();
        open = i;
        last = i;
        break;
      case TokenLabel::I:
        if (open) last = i;
        else out.push_back({i, i});
        break;
      case TokenLabel::L:
        if (open) {
          last = i;
          close();
        } else {
          out.push_back({i, i});
        }
        break;
      case TokenLabel::U:
        close();
        out.push_back({i, i});
        break;
    }
  }
  close();
  return out;
}

inline std::vector<Span> decode_bilou(std::span<const TokenLabel> labels, std::span<const Token> tokens) {
  if (labels.size() != tokens.size())
    throw Error(ErrorKind::LengthMismatch, "label and token sequences differ in length");
  std::vector<Span> spans;
  for (const auto& r : decode_token_ranges(labels)) spans.push_back({tokens[r.first].start, tokens[r.last].end});
  return spans;
}

/// Summary of one perturbation carried alongside a labeled example.
struct PerturbationInfo {
  Category category = Category::ExtSoft;
  EntityId original;
  EntityId replacement;
  std::string replacement_type;
  Span span;
  std::optional<std::string> predicate;
};

struct LabeledExample {
  std::string dialogue_id;
  std::size_t turn_idx = 0;
  std::vector<std::string> history;
  std::vector<std::string> kg;
  std::string utterance;
  std::vector<Token> tokens;
  std::vector<TokenLabel> labels;
  int utt_label = 0;
  std::vector<Category> categories;
  std::vector<PerturbationInfo> perturbations;
  std::optional<double> utt_score;  // present in prediction files
};

inline constexpr std::size_t kDefaultHistoryLength = 4;

inline LabeledExample label_sample(const TurnSample& s, const KnowledgeGraph& g, std::size_t h) {
  LabeledExample ex;
  ex.dialogue_id = s.dialogue_id;
  ex.turn_idx = s.turn_index;
  const auto keep = std::min(h, s.history.size());
  ex.history.assign(s.history.end() - static_cast<std::ptrdiff_t>(keep), s.history.end());
  for (const auto& t : s.grounding) ex.kg.push_back(render_triple(t, g));
  ex.utterance = s.perturbed.text;
  ex.tokens = tokenize_with_offsets(ex.utterance);
  std::vector<Span> spans;
  for (const auto& r : s.perturbed.records) {
    spans.push_back(r.replacement_span);
    if (std::find(ex.categories.begin(), ex.categories.end(), r.category) == ex.categories.end())
      ex.categories.push_back(r.category);
    PerturbationInfo info{r.category, r.original, r.replacement, g.entity(r.replacement).etype, r.replacement_span,
                          std::nullopt};
    if (r.triple_used) info.predicate = r.triple_used->predicate;
    ex.perturbations.push_back(std::move(info));
  }
  ex.labels = encode_bilou(ex.tokens, spans);
  ex.utt_label = std::any_of(ex.labels.begin(), ex.labels.end(), [](auto l) { return l != TokenLabel::O; }) ? 1 : 0;
  return ex;
}

/// One example per sample; history truncated to the last `h` turns.
inline std::vector<LabeledExample> build_examples(std::span<const TurnSample> samples, const KnowledgeGraph& g,
                                                  std::size_t h = kDefaultHistoryLength) {
  std::vector<LabeledExample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(label_sample(s, g, h));
  return out;
}

inline nlohmann::json to_json(const LabeledExample& ex) {
  using nlohmann::json;
  json tokens = json::array();
  for (const auto& t : ex.tokens) tokens.push_back({{"text", t.text}, {"start", t.start}, {"end", t.end}});
  json labels = json::array();
  for (auto l : ex.labels) labels.push_back(to_string(l));
  json cats = json::array();
  for (auto c : ex.categories) cats.push_back(to_string(c));
  json perts = json::array();
  for (const auto& p : ex.perturbations) {
    json jp = {{"category", to_string(p.category)},
               {"original", p.original},
               {"replacement", p.replacement},
               {"replacement_type", p.replacement_type},
               {"start", p.span.start},
               {"end", p.span.end}};
    if (p.predicate) jp["predicate"] = *p.predicate;
    perts.push_back(std::move(jp));
  }
  json j = {{"dialogue_id", ex.dialogue_id}, {"turn_idx", ex.turn_idx}, {"history", ex.history},
            {"kg", ex.kg},                   {"utterance", ex.utterance}, {"tokens", tokens},
            {"labels", labels},              {"utt_label", ex.utt_label}, {"categories", cats},
            {"perturbations", perts}};
  if (ex.utt_score) j["utt_score"] = *ex.utt_score;
  return j;
}

inline Category parse_category_or_throw(const std::string& s) {
  if (auto c = parse_category(s)) return *c;
  throw Error(ErrorKind::Parse, "unknown category '" + s + "'");
}

/// Parses an example or prediction row. Missing tokens are recomputed from the
/// utterance; missing labels default to all-O.
inline LabeledExample example_from_json(const nlohmann::json& j) {
  using nlohmann::json;
  LabeledExample ex;
  try {
    ex.dialogue_id = j.at("dialogue_id").is_string() ? j.at("dialogue_id").get<std::string>() : j.at("dialogue_id").dump();
    ex.turn_idx = j.at("turn_idx").get<std::size_t>();
    ex.history = j.value("history", std::vector<std::string>{});
    ex.kg = j.value("kg", std::vector<std::string>{});
    ex.utterance = j.value("utterance", std::string{});
    if (j.contains("tokens")) {
      for (const auto& t : j.at("tokens"))
        ex.tokens.push_back({t.at("text").get<std::string>(), t.at("start").get<std::size_t>(), t.at("end").get<std::size_t>()});
    } else {
      ex.tokens = tokenize_with_offsets(ex.utterance);
    }
    if (j.contains("labels")) {
      for (const auto& l : j.at("labels")) ex.labels.push_back(parse_label(l.get<std::string>()));
    }
    for (const auto& c : j.value("categories", json::array())) ex.categories.push_back(parse_category_or_throw(c.get<std::string>()));
    for (const auto& p : j.value("perturbations", json::array())) {
      PerturbationInfo info;
      info.category = parse_category_or_throw(p.at("category").get<std::string>());
      info.original = p.at("original").get<std::string>();
      info.replacement = p.at("replacement").get<std::string>();
      info.replacement_type = p.value("replacement_type", std::string(kUnknownType));
      info.span = {p.at("start").get<std::size_t>(), p.at("end").get<std::size_t>()};
      if (p.contains("predicate")) info.predicate = p.at("predicate").get<std::string>();
      ex.perturbations.push_back(std::move(info));
    }
    ex.utt_label = j.value("utt_label", 0);
    if (j.contains("utt_score")) ex.utt_score = j.at("utt_score").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("malformed example: ") + e.what());
  }
  return ex;
}

inline void write_examples_jsonl(std::ostream& out, std::span<const LabeledExample> examples) {
  for (const auto& ex : examples) out << to_json(ex).dump() << '\n';
}

inline std::vector<LabeledExample> read_examples_jsonl(std::istream& in) {
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp(line);
    if (line.empty()) continue;
    try {
      out.push_back(example_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace fade
