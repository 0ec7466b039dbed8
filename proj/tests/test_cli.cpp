#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "fade/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kFixtures = FADE_FIXTURES;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("fade_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  /// Runs the CLI with `args`, returns its exit status.
  int run(const std::string& args) const {
    const auto cmd = std::string(FADE_CLI) + " " + args + " >" + (dir_ / "stdout.log").string() + " 2>" +
                     (dir_ / "stderr.log").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string fixture_flags() const {
    return "--corpus " + kFixtures + "/corpus.jsonl --kg " + kFixtures + "/kg.tsv --types " + kFixtures +
           "/types.tsv --vectors " + kFixtures + "/vectors.tsv";
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += line.empty() ? 0 : 1;
    return n;
  }

  fs::path dir_;
};

fade::LabeledExample pool_row(const std::string& id, std::size_t turn, std::optional<fade::Category> cat) {
  fade::LabeledExample ex;
  ex.dialogue_id = id;
  ex.turn_idx = turn;
  ex.utterance = "Inception was directed by Nolan";
  ex.tokens = fade::tokenize_with_offsets(ex.utterance);
  ex.labels.assign(ex.tokens.size(), fade::TokenLabel::O);
  if (cat) {
    ex.labels[0] = fade::TokenLabel::U;
    ex.utt_label = 1;
    ex.categories = {*cat};
    ex.perturbations.push_back({*cat, "a", "b", "WORK_OF_ART", {0, 9}, std::nullopt});
  }
  return ex;
}

}  // namespace

TEST_F(Cli, PerturbWritesJsonlAndManifest) {
  const auto out = dir_ / "out";
  ASSERT_EQ(run("perturb --category ext-soft " + fixture_flags() + " --output-dir " + out.string()), 0)
      << slurp(dir_ / "stderr.log");
  ASSERT_TRUE(fs::exists(out / "ext-soft.jsonl"));
  const auto manifest = json::parse(slurp(out / "perturb.manifest.json"));
  const auto& counts = manifest.at("categories").at("ext-soft");
  EXPECT_EQ(counts.at("samples").get<std::size_t>(), line_count(out / "ext-soft.jsonl"));
  EXPECT_GT(counts.at("perturbed").get<std::size_t>(), 0u);
  EXPECT_EQ(counts.at("perturbed").get<std::size_t>() + counts.at("non_perturbed").get<std::size_t>(),
            counts.at("samples").get<std::size_t>());
  EXPECT_TRUE(manifest.contains("config_hash"));
  EXPECT_EQ(manifest.at("seed"), manifest.at("config").at("seed"));

  std::ifstream in(out / "ext-soft.jsonl");
  std::size_t positives = 0;
  for (const auto& ex : fade::read_examples_jsonl(in)) positives += ex.utt_label == 1 ? 1 : 0;
  EXPECT_EQ(positives, counts.at("perturbed").get<std::size_t>());
}

TEST_F(Cli, RerunIsByteIdentical) {
  const auto a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run("perturb --category all --seed 5 " + fixture_flags() + " --output-dir " + a.string()), 0);
  ASSERT_EQ(run("perturb --category all --seed 5 " + fixture_flags() + " --output-dir " + b.string()), 0);
  for (const auto* name : {"ext-soft", "ext-hard", "ext-grouped", "int-soft", "int-hard", "int-repetitive",
                           "hist-ext", "hist-int"}) {
    const auto file = std::string(name) + ".jsonl";
    EXPECT_EQ(slurp(a / file), slurp(b / file)) << name;
  }
}

TEST_F(Cli, IngestAndIndexWriteManifests) {
  const auto out = dir_ / "ing";
  ASSERT_EQ(run("ingest " + fixture_flags() + " --output-dir " + out.string()), 0) << slurp(dir_ / "stderr.log");
  EXPECT_EQ(line_count(out / "corpus.jsonl"), 10u);
  EXPECT_EQ(line_count(out / "kg.tsv"), 44u);
  ASSERT_EQ(run("index " + fixture_flags() + " --output-dir " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "index" / "PERSON.fadeidx"));
  EXPECT_TRUE(fs::exists(out / "index.manifest.json"));
}

TEST_F(Cli, MixBalancedGivesHundredPerCategory) {
  std::vector<std::string> inputs;
  for (std::size_t s = 0; s < fade::kMixSlots; ++s) {
    std::vector<fade::LabeledExample> rows;
    for (std::size_t i = 0; i < 850; ++i)
      rows.push_back(pool_row("pool" + std::to_string(s), i,
                              s == fade::kCleanSlot ? std::nullopt
                                                    : std::optional<fade::Category>(fade::kAllCategories[s])));
    const auto path = dir_ / ("pool" + std::to_string(s) + ".jsonl");
    std::ofstream out(path);
    fade::write_examples_jsonl(out, rows);
    inputs.push_back(path.string());
  }
  std::string joined;
  for (const auto& p : inputs) joined += " " + p;
  const auto out = dir_ / "mix";
  ASSERT_EQ(run("mix --recipe balanced --n 1600 --inputs" + joined + " --output-dir " + out.string()), 0)
      << slurp(dir_ / "stderr.log");
  const auto manifest = json::parse(slurp(out / "mix-balanced.manifest.json"));
  const auto& counts = manifest.at("realized_counts");
  for (const auto* c : {"ext-soft", "ext-hard", "ext-grouped", "int-soft", "int-hard", "int-repetitive", "hist-ext",
                        "hist-int"})
    EXPECT_EQ(counts.at(c).get<int>(), 100) << c;
  EXPECT_EQ(counts.at("non-hallucinated").get<int>(), 800);
  EXPECT_EQ(line_count(out / "mix-balanced.jsonl"), 1600u);
  EXPECT_EQ(manifest.at("splits").at("train").get<int>(), 400);
  EXPECT_EQ(line_count(out / "mix-balanced.train.jsonl") + line_count(out / "mix-balanced.validation.jsonl") +
                line_count(out / "mix-balanced.test.jsonl"),
            1600u);

  // Too few rows for the requested size is a shortfall.
  EXPECT_EQ(run("mix --recipe balanced --n 20000 --inputs" + joined + " --output-dir " + out.string()), 7);
}

TEST_F(Cli, StatsAndEvaluateOnOwnOutput) {
  const auto out = dir_ / "o";
  ASSERT_EQ(run("perturb --category int-soft " + fixture_flags() + " --output-dir " + out.string()), 0);
  const auto data = (out / "int-soft.jsonl").string();
  ASSERT_EQ(run("stats --input " + data + " --output-dir " + out.string()), 0);
  const auto stats = json::parse(slurp(out / "int-soft.stats.json"));
  EXPECT_EQ(stats.at("total").get<std::size_t>(), line_count(data));

  ASSERT_EQ(run("evaluate --gold " + data + " --pred " + data + " --output-dir " + out.string()), 0)
      << slurp(dir_ / "stderr.log");
  const auto report = json::parse(slurp(out / "report.json"));
  for (const auto* level : {"utterance", "token"})
    for (const auto* m : {"precision", "recall", "f1", "accuracy", "g_mean"})
      EXPECT_DOUBLE_EQ(report.at(level).at(m).get<double>(), 1.0) << level << " " << m;
  EXPECT_DOUBLE_EQ(report.at("utterance").at("auc").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(report.at("utterance").at("brier").get<double>(), 0.0);
  EXPECT_DOUBLE_EQ(report.at("utterance").at("bss").get<double>(), 1.0);
}

TEST_F(Cli, ExitCodesPerErrorClass) {
  EXPECT_EQ(run("ingest --corpus /nonexistent.jsonl --kg " + kFixtures + "/kg.tsv --output-dir " + dir_.string()), 3);

  const auto corpus = dir_ / "dangling.jsonl";
  std::ofstream(corpus) << R"({"id":"x","turns":[{"speaker":"assistant","text":"Tenet","triples":[["Tenet","directed_by","Christopher Nolan"]]}]})"
                        << "\n";
  EXPECT_EQ(run("ingest --corpus " + corpus.string() + " --kg " + kFixtures + "/kg.tsv --output-dir " + dir_.string()), 5);

  EXPECT_EQ(run("perturb --category ext-soft --beta 1.5 " + fixture_flags() + " --output-dir " + dir_.string()), 6);
  EXPECT_EQ(run("perturb --category nonsense " + fixture_flags() + " --output-dir " + dir_.string()), 6);

  const auto broken = dir_ / "broken.jsonl";
  std::ofstream(broken) << "{oops\n";
  EXPECT_EQ(run("stats --input " + broken.string() + " --output-dir " + dir_.string()), 4);
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  const auto cfg = dir_ / "cfg.json";
  std::ofstream(cfg) << R"({"seed": 21, "beta": 0.3})";
  const auto out = dir_ / "c";
  ASSERT_EQ(run("perturb --category int-hard --config " + cfg.string() + " --beta 0.4 " + fixture_flags() +
                " --output-dir " + out.string()),
            0)
      << slurp(dir_ / "stderr.log");
  const auto manifest = json::parse(slurp(out / "perturb.manifest.json"));
  EXPECT_EQ(manifest.at("config").at("seed").get<int>(), 21);
  EXPECT_DOUBLE_EQ(manifest.at("config").at("beta").get<double>(), 0.4);

  std::ofstream(cfg) << R"({"sneed": 21})";
  EXPECT_EQ(run("perturb --category int-hard --config " + cfg.string() + " " + fixture_flags() + " --output-dir " +
                out.string()),
            4);
}
