// fade: build entity-level hallucination datasets from a KG-grounded dialogue
// corpus and score detectors against them.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fade/fade.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kFallbackDim = 64;

struct Options {
  std::string config_path;
  fade::RunConfig flags;
  std::vector<std::pair<std::string, CLI::Option*>> bound;
};

void add_config_flags(CLI::App& cmd, Options& opts) {
  cmd.add_option("--config", opts.config_path, "JSON config file (keys as below, snake_case)");
  auto& f = opts.flags;
  auto bind = [&](const std::string& key, auto& field, const std::string& help) {
    std::string flag = "--" + key;
    for (auto& c : flag)
      if (c == '_') c = '-';
    opts.bound.emplace_back(key, cmd.add_option(flag, field, help));
  };
  bind("corpus", f.corpus, "dialogue corpus JSONL");
  bind("kg", f.kg, "knowledge graph TSV (subject, predicate, object)");
  bind("types", f.types, "entity type TSV (entity_id, type)");
  bind("vectors", f.vectors, "term vector TSV; missing terms use deterministic fallback vectors");
  bind("k1", f.k1, "BM25 k1 for entity indexes (default 1.6)");
  bind("b", f.b, "BM25 b for entity indexes (default 0.9)");
  bind("subgraph_k1", f.subgraph_k1, "BM25 k1 for per-subgraph triple indexes (default 1.5)");
  bind("subgraph_b", f.subgraph_b, "BM25 b for per-subgraph triple indexes (default 0.75)");
  bind("eps", f.eps, "free term weight (default 2e-4)");
  bind("beta", f.beta, "embedding/BM25 interpolation in (0,1) (default 0.5)");
  bind("history_k", f.history_k, "earlier turns with mentions considered for history corruption (default 4)");
  bind("history_len", f.history_len, "history turns kept per example (default 4)");
  bind("split_fraction", f.split_fraction, "train fraction in [0.10, 0.30] (default 0.25)");
  bind("mix", f.mix, "mixing recipe: observed, balanced, extrinsic+, intrinsic+, custom (default balanced)");
  bind("seed", f.seed, "run seed (default 13)");
  bind("output_dir", f.output_dir, "output directory (default out)");
}

/// defaults < config file < FADE_* environment < command-line flags
fade::RunConfig resolve(const Options& opts) {
  fade::RunConfig cfg;
  if (!opts.config_path.empty()) fade::merge_file(cfg, opts.config_path);
  fade::merge_env(cfg);
  const auto flag_values = fade::to_json(opts.flags);
  json overrides = json::object();
  for (const auto& [key, opt] : opts.bound)
    if (opt->count() > 0) overrides[key] = flag_values.at(key);
  fade::merge_json(cfg, overrides);
  fade::validate(cfg);
  return cfg;
}

void require(const std::string& value, const char* name) {
  if (value.empty()) throw fade::Error(fade::ErrorKind::InvalidArgument, std::string("missing required setting: ") + name);
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fade::Error(fade::ErrorKind::Io, "cannot write " + path.string());
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fade::Error(fade::ErrorKind::Io, "cannot open " + path);
  return in;
}

json manifest_base(const std::string& command, const fade::RunConfig& cfg) {
  return {{"command", command}, {"config", fade::to_json(cfg)}, {"config_hash", fade::config_hash(cfg)}, {"seed", cfg.seed}};
}

void write_json(const fs::path& path, const json& j) { open_output(path) << j.dump(2) << '\n'; }

fade::Corpus load(const fade::RunConfig& cfg) {
  require(cfg.corpus, "corpus");
  require(cfg.kg, "kg");
  auto corpus = fade::load_corpus(cfg.corpus, cfg.kg, cfg.types);
  const auto& r = corpus.report;
  if (r.duplicate_triples > 0) std::cerr << "fade: dropped " << r.duplicate_triples << " duplicate triples\n";
  if (r.unlocatable_mentions > 0)
    std::cerr << "fade: " << r.unlocatable_mentions << " grounded entities could not be located in their turn\n";
  return corpus;
}

json load_report_json(const fade::Corpus& c) {
  std::size_t turns = 0, mentions = 0;
  for (const auto& d : c.dialogues) {
    turns += d.turns.size();
    for (const auto& t : d.turns) mentions += t.mentions.size();
  }
  return {{"dialogues", c.dialogues.size()},
          {"turns", turns},
          {"mentions", mentions},
          {"entities", c.graph.entities().size()},
          {"triples", c.graph.size()},
          {"duplicate_triples", c.report.duplicate_triples},
          {"grounding_triples_added", c.report.grounding_triples_added},
          {"unlocatable_mentions", c.report.unlocatable_mentions},
          {"typed_entities", c.report.typed_entities}};
}

int cmd_ingest(const Options& opts) {
  const auto cfg = resolve(opts);
  const auto corpus = load(cfg);
  const fs::path dir = cfg.output_dir;
  {
    auto out = open_output(dir / "corpus.jsonl");
    fade::write_corpus_jsonl(out, corpus.dialogues);
  }
  {
    auto out = open_output(dir / "kg.tsv");
    fade::write_kg_tsv(out, corpus.graph);
  }
  {
    auto out = open_output(dir / "types.tsv");
    fade::write_types_tsv(out, corpus.graph);
  }
  auto m = manifest_base("ingest", cfg);
  m["counts"] = load_report_json(corpus);
  write_json(dir / "ingest.manifest.json", m);
  std::cout << m["counts"].dump(2) << '\n';
  return 0;
}

fade::KnowledgeGraph load_graph(const fade::RunConfig& cfg) {
  require(cfg.kg, "kg");
  fade::KnowledgeGraph g;
  fade::LoadReport report;
  auto kg = open_input(cfg.kg);
  fade::read_kg_tsv(kg, g, report);
  if (!cfg.types.empty()) {
    auto types = open_input(cfg.types);
    fade::read_types_tsv(types, g, report);
  }
  return g;
}

int cmd_index(const Options& opts) {
  const auto cfg = resolve(opts);
  const auto g = load_graph(cfg);
  const auto indexes = fade::build_entity_indexes(g, cfg.bm25());
  const fs::path dir = fs::path(cfg.output_dir) / "index";
  json docs = json::object();
  for (const auto& [etype, index] : indexes) {
    auto out = open_output(dir / (etype + ".fadeidx"));
    index.save(out);
    docs[etype] = {{"documents", index.size()}, {"avg_doc_len", index.avg_doc_len()}};
  }
  auto m = manifest_base("index", cfg);
  m["indexes"] = docs;
  write_json(fs::path(cfg.output_dir) / "index.manifest.json", m);
  std::cout << docs.dump(2) << '\n';
  return 0;
}

fade::VectorStore load_vectors(const fade::RunConfig& cfg) {
  if (cfg.vectors.empty()) return fade::VectorStore(kFallbackDim);
  auto in = open_input(cfg.vectors);
  return fade::VectorStore::load(in);
}

json counts_json(const fade::ComponentCounts& c) {
  return {{"samples", c.samples},
          {"perturbed", c.perturbed},
          {"non_perturbed", c.non_perturbed},
          {"turns_with_more_than_2_perturbations", c.more_than_two},
          {"eligible_turns", c.eligible_turns},
          {"records", c.records},
          {"unperturbable", c.unperturbable}};
}

int cmd_perturb(const Options& opts, const std::vector<std::string>& categories) {
  const auto cfg = resolve(opts);
  const auto corpus = load(cfg);
  const auto indexes = fade::build_entity_indexes(corpus.graph, cfg.bm25());
  const auto store = load_vectors(cfg);
  const auto unigrams = fade::UnigramModel::from_graph(corpus.graph);
  const fade::PerturbationContext ctx(corpus.graph, indexes, store, unigrams, cfg.hybrid());
  const fs::path dir = cfg.output_dir;

  std::vector<fade::Category> wanted;
  for (const auto& name : categories) {
    if (name == "all") {
      wanted.assign(fade::kAllCategories.begin(), fade::kAllCategories.end());
      continue;
    }
    auto c = fade::parse_category(name);
    if (!c) throw fade::Error(fade::ErrorKind::InvalidArgument, "unknown category: " + name);
    wanted.push_back(*c);
  }

  auto m = manifest_base("perturb", cfg);
  m["vector_fallback_only"] = cfg.vectors.empty();
  json per = json::object();
  for (auto category : wanted) {
    const auto data = fade::run_component_dataset(ctx, corpus.dialogues, category, {cfg.history_k, cfg.seed});
    const auto examples = fade::build_examples(data.samples, corpus.graph, cfg.history_len);
    auto out = open_output(dir / (std::string(fade::to_string(category)) + ".jsonl"));
    fade::write_examples_jsonl(out, examples);
    per[fade::to_string(category)] = counts_json(data.counts);
    std::cerr << "fade: " << fade::to_string(category) << ": " << data.counts.perturbed << " perturbed, "
              << data.counts.non_perturbed << " untouched\n";
  }
  m["categories"] = per;
  write_json(dir / "perturb.manifest.json", m);
  std::cout << per.dump(2) << '\n';
  return 0;
}

fade::MixRatios parse_ratios(const std::string& text) {
  fade::MixRatios r{};
  std::stringstream ss(text);
  std::string field;
  std::size_t i = 0;
  while (std::getline(ss, field, ',')) {
    if (i >= fade::kMixSlots) break;
    try {
      r[i++] = std::stod(field);
    } catch (const std::exception&) {
      throw fade::Error(fade::ErrorKind::InvalidArgument, "bad ratio: " + field);
    }
  }
  if (i != fade::kMixSlots || std::getline(ss, field, ','))
    throw fade::Error(fade::ErrorKind::InvalidArgument, "custom ratios need exactly 9 comma-separated percentages");
  return r;
}

std::vector<fade::LabeledExample> read_examples(const std::string& path) {
  auto in = open_input(path);
  return fade::read_examples_jsonl(in);
}

int cmd_mix(const Options& opts, const std::vector<std::string>& inputs, std::size_t n, const std::string& ratios) {
  const auto cfg = resolve(opts);
  auto recipe = fade::parse_recipe(cfg.mix);
  if (!recipe) throw fade::Error(fade::ErrorKind::InvalidArgument, "unknown recipe: " + cfg.mix);
  fade::MixConfig mc{*recipe, {}, cfg.seed};
  mc.ratios = *recipe == fade::Recipe::Custom ? parse_ratios(ratios) : fade::recipe_ratios(*recipe);

  fade::ComponentPools pools;
  for (const auto& path : inputs) fade::add_to_pools(pools, read_examples(path));
  const auto mixed = fade::mix(pools, mc, n);
  const auto splits = fade::split(mixed.examples, {cfg.split_fraction});

  const fs::path dir = cfg.output_dir;
  const std::string stem = std::string("mix-") + fade::to_string(*recipe);
  auto write = [&](const std::string& suffix, const std::vector<fade::LabeledExample>& rows) {
    auto out = open_output(dir / (stem + suffix + ".jsonl"));
    fade::write_examples_jsonl(out, rows);
  };
  write("", mixed.examples);
  write(".train", splits.train);
  write(".validation", splits.validation);
  write(".test", splits.test);

  json counts = json::object();
  for (std::size_t s = 0; s < fade::kMixSlots; ++s) counts[fade::slot_name(s)] = mixed.counts[s];
  auto m = manifest_base("mix", cfg);
  m["recipe"] = fade::to_string(*recipe);
  m["ratios"] = mc.ratios;
  m["n_target"] = n;
  m["inputs"] = inputs;
  m["realized_counts"] = counts;
  m["splits"] = {{"train", splits.train.size()}, {"validation", splits.validation.size()}, {"test", splits.test.size()}};
  write_json(dir / (stem + ".manifest.json"), m);
  std::cout << m["realized_counts"].dump(2) << '\n';
  return 0;
}

int cmd_stats(const Options& opts, const std::string& input) {
  const auto cfg = resolve(opts);
  const auto rows = read_examples(input);
  const auto report = fade::stats_report(rows);
  const fs::path dir = cfg.output_dir;
  const auto stem = fs::path(input).stem().string();
  write_json(dir / (stem + ".stats.json"), fade::to_json(report));
  open_output(dir / (stem + ".stats.txt")) << fade::to_text(report);
  std::cout << fade::to_text(report);
  return 0;
}

int cmd_evaluate(const Options& opts, const std::string& gold, const std::string& pred, double threshold) {
  const auto cfg = resolve(opts);
  const auto report = fade::evaluate(read_examples(gold), read_examples(pred), threshold);
  const fs::path dir = cfg.output_dir;
  write_json(dir / "report.json", fade::to_json(report));
  open_output(dir / "report.txt") << fade::to_text(report);
  std::cout << fade::to_text(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fade: synthesize and evaluate entity-level hallucination datasets"};
  app.require_subcommand(1);

  Options ingest_opts, index_opts, perturb_opts, mix_opts, stats_opts, eval_opts;

  auto* ingest = app.add_subcommand("ingest", "validate corpus, KG and types; write normalised copies with located mentions");
  add_config_flags(*ingest, ingest_opts);

  auto* index = app.add_subcommand("index", "build one BM25 index per entity type");
  add_config_flags(*index, index_opts);

  std::vector<std::string> categories;
  auto* perturb = app.add_subcommand("perturb", "generate component datasets");
  add_config_flags(*perturb, perturb_opts);
  perturb->add_option("--category", categories,
                      "ext-soft, ext-hard, ext-grouped, int-soft, int-hard, int-repetitive, hist-ext, hist-int or all")
      ->required();

  std::vector<std::string> inputs;
  std::size_t n_target = 0;
  std::string ratios;
  auto* mix = app.add_subcommand("mix", "mix component datasets by recipe and split them");
  add_config_flags(*mix, mix_opts);
  mix->add_option("--inputs", inputs, "component dataset JSONL files")->required();
  mix->add_option("--n", n_target, "number of examples in the mixed dataset")->required();
  mix->add_option("--recipe", mix_opts.flags.mix, "alias of --mix");
  mix->add_option("--ratios", ratios, "9 comma-separated percentages for --mix custom");

  std::string stats_input;
  auto* stats = app.add_subcommand("stats", "statistics report for a dataset JSONL");
  add_config_flags(*stats, stats_opts);
  stats->add_option("--input", stats_input, "dataset JSONL")->required();

  std::string gold, pred;
  double threshold = fade::kDefaultThreshold;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against gold labels");
  add_config_flags(*evaluate, eval_opts);
  evaluate->add_option("--gold", gold, "gold dataset JSONL")->required();
  evaluate->add_option("--pred", pred, "prediction JSONL (dataset schema plus utt_score)")->required();
  evaluate->add_option("--threshold", threshold, "utterance decision threshold (default 0.5)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*ingest) return cmd_ingest(ingest_opts);
    if (*index) return cmd_index(index_opts);
    if (*perturb) return cmd_perturb(perturb_opts, categories);
    if (*mix) {
      if (auto* r = mix->get_option("--recipe"); r->count() > 0) mix_opts.bound.emplace_back("mix", r);
      return cmd_mix(mix_opts, inputs, n_target, ratios);
    }
    if (*stats) return cmd_stats(stats_opts, stats_input);
    if (*evaluate) return cmd_evaluate(eval_opts, gold, pred, threshold);
  } catch (const fade::Error& e) {
    std::cerr << "fade: " << fade::to_string(e.kind()) << " error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "fade: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
