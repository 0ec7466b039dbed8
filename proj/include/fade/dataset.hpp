#pragma once

// Mixing component datasets, sequential splits and corpus statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fade/bilou.hpp"
#include "fade/error.hpp"
#include "fade/perturb.hpp"

namespace fade {

/// Eight hallucination categories followed by the non-hallucinated share.
inline constexpr std::size_t kMixSlots = 9;
inline constexpr std::size_t kCleanSlot = 8;

inline std::string slot_name(std::size_t slot) {
  return slot == kCleanSlot ? std::string("non-hallucinated") : std::string(to_string(kAllCategories[slot]));
}

enum class Recipe { Observed, Balanced, ExtrinsicPlus, IntrinsicPlus, Custom };

inline const char* to_string(Recipe r) {
  switch (r) {
    case Recipe::Observed: return "observed";
    case Recipe::Balanced: return "balanced";
    case Recipe::ExtrinsicPlus: return "extrinsic+";
    case Recipe::IntrinsicPlus: return "intrinsic+";
    case Recipe::Custom: return "custom";
  }
  return "custom";
}

inline std::optional<Recipe> parse_recipe(std::string_view s) {
  for (auto r : {Recipe::Observed, Recipe::Balanced, Recipe::ExtrinsicPlus, Recipe::IntrinsicPlus, Recipe::Custom})
    if (s == to_string(r)) return r;
  if (s == "extrinsic-plus") return Recipe::ExtrinsicPlus;
  if (s == "intrinsic-plus") return Recipe::IntrinsicPlus;
  return std::nullopt;
}

using MixRatios = std::array<double, kMixSlots>;

struct MixConfig {
  Recipe name = Recipe::Balanced;
  MixRatios ratios{};
  std::uint64_t seed = 0;

  void validate() const {
    double sum = 0.0;
    for (double r : ratios) {
      if (r < 0.0) throw Error(ErrorKind::InvalidArgument, "mixing percentages must be >= 0");
      sum += r;
    }
    if (std::abs(sum - 100.0) > 0.01)
      throw Error(ErrorKind::InvalidArgument, "mixing percentages sum to " + std::to_string(sum) + ", expected 100");
  }
};

/// Percentages per slot for the named recipes, in the order ext-soft, ext-hard,
/// ext-grouped, int-soft, int-hard, int-repetitive, hist-ext, hist-int, clean.
inline MixRatios recipe_ratios(Recipe r) {
  switch (r) {
    case Recipe::Observed: return {12.495, 6.4425, 1.04, 0.92, 1.025, 1.7, 2.4575, 1.4575, 72.4625};
    case Recipe::Balanced: return {6.25, 6.25, 6.25, 6.25, 6.25, 6.25, 6.25, 6.25, 50};
    case Recipe::ExtrinsicPlus: return {12.5, 9.375, 9.375, 6.25, 6.25, 6.25, 6.25, 6.25, 37.5};
    case Recipe::IntrinsicPlus: return {6.25, 6.25, 6.25, 9.375, 9.375, 9.375, 6.25, 6.25, 40.625};
    case Recipe::Custom: break;
  }
  throw Error(ErrorKind::InvalidArgument, "custom recipes need explicit ratios");
}

inline MixConfig make_mix_config(Recipe r, std::uint64_t seed = 0) { return {r, recipe_ratios(r), seed}; }

/// Largest-remainder apportionment of `n` over the percentages. Ties in the
/// fractional part go to the earlier slot.
inline std::array<std::size_t, kMixSlots> allocate_counts(const MixRatios& ratios, std::size_t n) {
  std::array<std::size_t, kMixSlots> counts{};
  std::array<double, kMixSlots> frac{};
  const double total = std::accumulate(ratios.begin(), ratios.end(), 0.0);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < kMixSlots; ++i) {
    const double exact = ratios[i] / total * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[i] = std::round(std::max(0.0, exact - static_cast<double>(counts[i])) * 1e9) / 1e9;
    assigned += counts[i];
  }
  std::array<std::size_t, kMixSlots> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % kMixSlots, ++assigned) ++counts[order[k]];
  return counts;
}

/// Source pools per slot.
struct ComponentPools {
  std::array<std::vector<LabeledExample>, kMixSlots> slots;
};

/// Hallucinated rows go to the pool of their first category; clean rows go to
/// the clean pool once per (dialogue_id, turn_idx).
inline void add_to_pools(ComponentPools& pools, std::span<const LabeledExample> examples) {
  std::set<std::pair<std::string, std::size_t>> clean_keys;
  for (const auto& ex : pools.slots[kCleanSlot]) clean_keys.emplace(ex.dialogue_id, ex.turn_idx);
  for (const auto& ex : examples) {
    if (ex.utt_label == 1 && !ex.categories.empty()) {
      const auto pos = std::find(kAllCategories.begin(), kAllCategories.end(), ex.categories.front());
      pools.slots[static_cast<std::size_t>(pos - kAllCategories.begin())].push_back(ex);
    } else if (ex.utt_label == 0 && clean_keys.emplace(ex.dialogue_id, ex.turn_idx).second) {
      pools.slots[kCleanSlot].push_back(ex);
    }
  }
}

struct MixResult {
  std::vector<LabeledExample> examples;
  std::array<std::size_t, kMixSlots> counts{};
};

/// Draws without replacement from each pool to match the ratios, then shuffles.
inline MixResult mix(const ComponentPools& pools, const MixConfig& cfg, std::size_t n_target) {
  cfg.validate();
  MixResult out;
  out.counts = allocate_counts(cfg.ratios, n_target);
  for (std::size_t slot = 0; slot < kMixSlots; ++slot) {
    const auto want = out.counts[slot];
    const auto& pool = pools.slots[slot];
    if (want > pool.size())
      throw Error(ErrorKind::Shortfall, "category " + slot_name(slot) + " needs " + std::to_string(want) +
                                            " examples but only " + std::to_string(pool.size()) + " are available");
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(slot)};
    std::mt19937_64 rng(seq);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < want; ++i) out.examples.push_back(pool[idx[i]]);
  }
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(kMixSlots)};
  std::mt19937_64 rng(seq);
  std::shuffle(out.examples.begin(), out.examples.end(), rng);
  return out;
}

struct SplitConfig {
  double train_fraction = 0.25;

  void validate() const {
    if (!(train_fraction >= 0.10 - 1e-12 && train_fraction <= 0.30 + 1e-12))
      throw Error(ErrorKind::InvalidArgument, "train fraction must lie in [0.10, 0.30]");
  }
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// floor(f * N) to train; the rest halved, validation taking the odd one.
inline SplitSizes split_sizes(std::size_t n, const SplitConfig& cfg) {
  cfg.validate();
  SplitSizes s;
  s.train = static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(n) + 1e-9));
  const auto rest = n - s.train;
  s.test = rest / 2;
  s.validation = rest - s.test;
  return s;
}

template <typename T>
struct Splits {
  std::vector<T> train;
  std::vector<T> validation;
  std::vector<T> test;
};

/// Sequential split: the leading examples form the training set.
template <typename T>
Splits<T> split(const std::vector<T>& dataset, const SplitConfig& cfg) {
  if (dataset.empty()) throw Error(ErrorKind::InvalidArgument, "cannot split an empty dataset");
  const auto sz = split_sizes(dataset.size(), cfg);
  const auto a = dataset.begin() + static_cast<std::ptrdiff_t>(sz.train);
  const auto b = a + static_cast<std::ptrdiff_t>(sz.validation);
  return {{dataset.begin(), a}, {a, b}, {b, dataset.end()}};
}

struct StatsReport {
  std::size_t total = 0;
  std::size_t perturbed = 0;
  std::size_t non_perturbed = 0;
  std::size_t more_than_two = 0;
  std::map<std::string, std::size_t> category_histogram;  // first category, or "none"
  std::map<std::string, std::size_t> perturbed_by_category;
  std::vector<std::pair<std::string, std::size_t>> replacement_types;  // top 10
  std::vector<std::pair<std::string, std::size_t>> top_predicates;     // top 10, intrinsic only
};

/// Top `k` by descending count, ties by ascending key.
inline std::vector<std::pair<std::string, std::size_t>> top_k(const std::map<std::string, std::size_t>& counts,
                                                              std::size_t k) {
  std::vector<std::pair<std::string, std::size_t>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (v.size() > k) v.resize(k);
  return v;
}

inline StatsReport stats_report(std::span<const LabeledExample> dataset) {
  StatsReport r;
  std::map<std::string, std::size_t> types, predicates;
  for (const auto& ex : dataset) {
    ++r.total;
    if (ex.utt_label == 1) ++r.perturbed;
    else ++r.non_perturbed;
    if (ex.perturbations.size() > 2) ++r.more_than_two;
    ++r.category_histogram[ex.categories.empty() ? "none" : to_string(ex.categories.front())];
    for (auto c : ex.categories) ++r.perturbed_by_category[to_string(c)];
    for (const auto& p : ex.perturbations) {
      ++types[p.replacement_type];
      if (is_intrinsic(p.category) && p.predicate) ++predicates[*p.predicate];
    }
  }
  r.replacement_types = top_k(types, 10);
  r.top_predicates = top_k(predicates, 10);
  return r;
}

inline nlohmann::json to_json(const StatsReport& r) {
  auto pairs = [](const auto& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [k, n] : v) a.push_back({{"name", k}, {"count", n}});
    return a;
  };
  return {{"total", r.total},
          {"perturbed", r.perturbed},
          {"non_perturbed", r.non_perturbed},
          {"turns_with_more_than_2_perturbations", r.more_than_two},
          {"category_histogram", r.category_histogram},
          {"perturbed_by_category", r.perturbed_by_category},
          {"replacement_types_top10", pairs(r.replacement_types)},
          {"intrinsic_predicates_top10", pairs(r.top_predicates)}};
}

inline std::string to_text(const StatsReport& r) {
  std::ostringstream os;
  auto row = [&](const std::string& k, std::size_t v) { os << std::left << std::setw(40) << k << std::right << std::setw(10) << v << '\n'; };
  row("total", r.total);
  row("perturbed", r.perturbed);
  row("non-perturbed", r.non_perturbed);
  row("turns with >2 perturbations", r.more_than_two);
  os << "\ncategory histogram\n";
  for (const auto& [k, v] : r.category_histogram) row("  " + k, v);
  os << "\nreplacement entity types (top 10)\n";
  for (const auto& [k, v] : r.replacement_types) row("  " + k, v);
  os << "\nintrinsic predicates (top 10)\n";
  for (const auto& [k, v] : r.top_predicates) row("  " + k, v);
  return os.str();
}

}  // namespace fade
