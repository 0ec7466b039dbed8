#pragma once

// Run configuration: defaults, JSON config files and FADE_<KEY> environment overrides.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <type_traits>

#include <json.hpp>

#include "fade/bm25.hpp"
#include "fade/error.hpp"
#include "fade/hybrid.hpp"

namespace fade {

struct RunConfig {
  std::string corpus;
  std::string kg;
  std::string types;
  std::string vectors;
  double k1 = 1.6;   // BM25 saturation, grid-search optimum
  double b = 0.9;    // BM25 length normalisation, grid-search optimum
  double subgraph_k1 = 1.5;
  double subgraph_b = 0.75;
  double eps = kDefaultEps;
  double beta = kDefaultBeta;
  std::size_t history_k = 4;
  std::size_t history_len = 4;
  double split_fraction = 0.25;
  std::string mix = "balanced";
  std::uint64_t seed = 13;
  std::string output_dir = "out";

  Bm25Params bm25() const { return {k1, b}; }
  HybridParams hybrid() const { return {eps, beta, {subgraph_k1, subgraph_b}}; }
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"corpus", c.corpus},       {"kg", c.kg},
          {"types", c.types},         {"vectors", c.vectors},
          {"k1", c.k1},               {"b", c.b},
          {"subgraph_k1", c.subgraph_k1}, {"subgraph_b", c.subgraph_b},
          {"eps", c.eps},             {"beta", c.beta},
          {"history_k", c.history_k}, {"history_len", c.history_len},
          {"split_fraction", c.split_fraction}, {"mix", c.mix},
          {"seed", c.seed},           {"output_dir", c.output_dir}};
}

namespace detail {

template <typename T>
void assign_from_string(T& field, const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    if constexpr (std::is_same_v<T, std::string>) {
      field = text;
      return;
    } else if constexpr (std::is_same_v<T, double>) {
      field = std::stod(text, &used);
    } else {
      field = static_cast<T>(std::stoull(text, &used));
    }
    if (used != text.size()) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidArgument, "bad value for " + key + ": '" + text + "'");
  }
}

template <typename F>
void for_each_field(RunConfig& c, F&& f) {
  f("corpus", c.corpus);
  f("kg", c.kg);
  f("types", c.types);
  f("vectors", c.vectors);
  f("k1", c.k1);
  f("b", c.b);
  f("subgraph_k1", c.subgraph_k1);
  f("subgraph_b", c.subgraph_b);
  f("eps", c.eps);
  f("beta", c.beta);
  f("history_k", c.history_k);
  f("history_len", c.history_len);
  f("split_fraction", c.split_fraction);
  f("mix", c.mix);
  f("seed", c.seed);
  f("output_dir", c.output_dir);
}

}  // namespace detail

/// Overlays keys present in `j` onto `c`. Unknown keys are rejected.
inline void merge_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Parse, "config must be a JSON object");
  const auto known = to_json(c);
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw Error(ErrorKind::Parse, "unknown config key: " + key);
  try {
    detail::for_each_field(c, [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    });
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("bad config value: ") + e.what());
  }
}

inline void merge_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path);
  try {
    merge_json(c, nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Parse, "config " + path + ": " + e.what());
  }
}

/// FADE_<UPPERCASE_KEY> environment variables override file values.
template <typename Getenv>
void merge_env(RunConfig& c, Getenv&& getenv_fn) {
  detail::for_each_field(c, [&](const char* key, auto& field) {
    std::string name = "FADE_";
    for (const char* p = key; *p != '\0'; ++p) name += static_cast<char>(std::toupper(static_cast<unsigned char>(*p)));
    if (const char* v = getenv_fn(name.c_str())) detail::assign_from_string(field, key, v);
  });
}

inline void merge_env(RunConfig& c) {
  merge_env(c, [](const char* n) { return std::getenv(n); });
}

inline void validate(const RunConfig& c) {
  c.bm25().validate();
  Bm25Params{c.subgraph_k1, c.subgraph_b}.validate();
  if (!(c.eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "eps must be > 0");
  if (!(c.beta > 0.0 && c.beta < 1.0)) throw Error(ErrorKind::InvalidArgument, "beta must lie in (0, 1)");
  if (c.history_k < 1) throw Error(ErrorKind::InvalidArgument, "history_k must be >= 1");
}

/// FNV-1a of the canonical JSON form, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
  const auto h = detail::fnv1a(to_json(c).dump());
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace fade
