#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "fade/kg.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace fade;

namespace {

Corpus load_strings(const std::string& corpus, const std::string& kg, const std::string& types = "") {
  std::istringstream c(corpus), k(kg), t(types);
  return load_corpus(c, k, types.empty() ? nullptr : &t);
}

const char* kTwoDialogues =
    R"({"id":"a","turns":[{"speaker":"user","text":"Seen Inception?","triples":[]},)"
    R"({"speaker":"assistant","text":"Inception was directed by Christopher Nolan.","triples":[["Inception","directed_by","Christopher Nolan"]]}]})"
    "\n"
    R"({"id":"b","turns":[{"speaker":"assistant","text":"Christopher Nolan is British.","triples":[["Christopher Nolan","nationality","British"]]}]})"
    "\n";

const char* kThreeTriples =
    "Inception\tdirected_by\tChristopher Nolan\n"
    "Christopher Nolan\tnationality\tBritish\n"
    "Inception\trelease year\t2010\n";

/// Ten nodes, a chain with a branch and a cycle.
KnowledgeGraph ten_node_graph() {
  KnowledgeGraph g;
  for (int i = 0; i < 10; ++i) g.add_entity({"n" + std::to_string(i), "N" + std::to_string(i), "PERSON"});
  const std::pair<int, int> edges[] = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {1, 5}, {5, 6}, {6, 0}, {7, 8}, {4, 9}, {9, 3}};
  for (auto [a, b] : edges) g.add_triple({"n" + std::to_string(a), "rel", "n" + std::to_string(b)});
  return g;
}

}  // namespace

TEST(LoadCorpus, PreservesCounts) {
  const auto c = load_strings(kTwoDialogues, kThreeTriples);
  EXPECT_EQ(c.dialogues.size(), 2u);
  EXPECT_EQ(c.graph.size(), 3u);
  EXPECT_EQ(c.report.grounding_triples_added, 0u);
}

TEST(LoadCorpus, UnknownEntityInGroundingIsDangling) {
  const std::string corpus =
      R"({"id":"x","turns":[{"speaker":"assistant","text":"Tenet","triples":[["Tenet","directed_by","Christopher Nolan"]]}]})";
  try {
    load_strings(corpus, kThreeTriples);
    FAIL() << "expected a dangling-entity error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DanglingEntity);
    EXPECT_NE(std::string(e.what()).find("Tenet"), std::string::npos);
  }
}

TEST(LoadCorpus, GroundingTriplesBetweenKnownEntitiesJoinTheGraph) {
  const std::string corpus =
      R"({"id":"x","turns":[{"speaker":"assistant","text":"British films like Inception","triples":[["British","made","Inception"]]}]})";
  const auto c = load_strings(corpus, kThreeTriples);
  EXPECT_TRUE(c.graph.contains_triple({"British", "made", "Inception"}));
  EXPECT_EQ(c.report.grounding_triples_added, 1u);
}

TEST(LoadCorpus, MissingTypesBecomeUnknown) {
  const auto c = load_strings(kTwoDialogues, kThreeTriples, "Inception\tWORK_OF_ART\nGhost\tPERSON\n");
  EXPECT_EQ(c.graph.entity("Inception").etype, "WORK_OF_ART");
  EXPECT_EQ(c.graph.entity("British").etype, kUnknownType);
  EXPECT_EQ(c.report.type_rows_ignored, 1u);
}

TEST(LoadCorpus, ParseErrorsCarryLineNumbers) {
  try {
    load_strings(kTwoDialogues, "a\tb\tc\nbroken line\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  try {
    load_strings(std::string(kTwoDialogues) + "{not json\n", kThreeTriples);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(LoadCorpus, DialogueWithoutTurnsIsRejected) {
  EXPECT_THROW(load_strings(R"({"id":"e","turns":[]})", kThreeTriples), Error);
}

TEST(LoadCorpus, DuplicateTriplesAreCounted) {
  const auto c = load_strings(kTwoDialogues, std::string(kThreeTriples) + "Inception\tdirected_by\tChristopher Nolan\n");
  EXPECT_EQ(c.graph.size(), 3u);
  EXPECT_EQ(c.report.duplicate_triples, 1u);
}

TEST(LoadCorpus, EveryGroundingTripleExistsInGraph) {
  const auto c = load_corpus(std::string(FADE_FIXTURES) + "/corpus.jsonl", std::string(FADE_FIXTURES) + "/kg.tsv",
                             std::string(FADE_FIXTURES) + "/types.tsv");
  EXPECT_EQ(c.dialogues.size(), 10u);
  for (const auto& d : c.dialogues)
    for (const auto& t : d.turns)
      for (const auto& tr : t.grounding) EXPECT_TRUE(c.graph.contains_triple(tr));
}

TEST(LocateMentions, LongestSurfaceWinsAndSpansMatchText) {
  KnowledgeGraph g;
  g.add_entity({"New York City", "New York City", "GPE"});
  g.add_entity({"New York", "New York", "GPE"});
  g.add_triple({"New York City", "located_in", "New York"});
  Turn t;
  t.text = "No, new york city is located in New York.";
  t.grounding = {{"New York City", "located_in", "New York"}};
  locate_mentions(t, g);
  ASSERT_EQ(t.mentions.size(), 2u);
  EXPECT_EQ(t.mentions[0], (EntityMention{"New York City", 4, 17}));
  EXPECT_EQ(t.mentions[1], (EntityMention{"New York", 32, 40}));
  EXPECT_TRUE(t.unlocatable.empty());
}

TEST(LocateMentions, AbsentSurfaceIsUnlocatable) {
  KnowledgeGraph g;
  g.add_entity({"Titanic", "Titanic", "WORK_OF_ART"});
  g.add_entity({"Leonardo DiCaprio", "Leonardo DiCaprio", "PERSON"});
  g.add_triple({"Titanic", "starred_actors", "Leonardo DiCaprio"});
  Turn t;
  t.text = "He starred in Titanic.";
  t.grounding = g.triples();
  locate_mentions(t, g);
  ASSERT_EQ(t.mentions.size(), 1u);
  EXPECT_EQ(t.unlocatable, std::vector<EntityId>{"Leonardo DiCaprio"});
}

TEST(KhopSubgraph, ZeroHopsIsJustTheCenter) {
  const auto g = ten_node_graph();
  const auto sub = khop_subgraph(g, "n1", 0);
  EXPECT_EQ(sub.size(), 0u);
  EXPECT_EQ(sub.entities().size(), 1u);
  EXPECT_TRUE(sub.contains_entity("n1"));
}

TEST(KhopSubgraph, OneHopIsTheIncidentTriples) {
  KnowledgeGraph g;
  for (auto id : {"c", "a", "b", "d", "e", "f"}) g.add_entity({id, id, "X"});
  g.add_triple({"c", "r", "a"});
  g.add_triple({"b", "r", "c"});
  g.add_triple({"c", "s", "d"});
  g.add_triple({"e", "s", "c"});
  g.add_triple({"a", "r", "f"});
  const auto sub = khop_subgraph(g, "c", 1);
  const std::set<KGTriple> got(sub.triples().begin(), sub.triples().end());
  EXPECT_EQ(got, (std::set<KGTriple>{{"c", "r", "a"}, {"b", "r", "c"}, {"c", "s", "d"}, {"e", "s", "c"}}));
}

TEST(KhopSubgraph, TwoHopsMatchesOracleOnHandBuiltGraph) {
  const auto g = ten_node_graph();
  for (const auto& [id, e] : g.entities()) {
    const auto sub = khop_subgraph(g, id, 2);
    EXPECT_EQ(std::set<KGTriple>(sub.triples().begin(), sub.triples().end()), oracle::khop(g, id, 2)) << id;
  }
}

TEST(KhopSubgraph, UnknownCenterThrows) {
  const auto g = ten_node_graph();
  EXPECT_THROW(khop_subgraph(g, "nope", 1), Error);
  EXPECT_THROW(khop_subgraph(g, "n0", -1), Error);
}

TEST(KhopSubgraph, MonotoneInK) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    synth::WorldSpec spec;
    spec.entities = 30;
    spec.triples = 45;
    const auto g = synth::random_graph(rng, spec);
    for (const auto& [id, e] : g.entities()) {
      std::set<KGTriple> prev;
      for (int k = 0; k <= 4; ++k) {
        const auto sub = khop_subgraph(g, id, k);
        const std::set<KGTriple> cur(sub.triples().begin(), sub.triples().end());
        EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
        prev = cur;
      }
    }
  }
}

TEST(InSubgraph, MembershipMatchesOracle) {
  const auto g = ten_node_graph();
  const auto sub = khop_subgraph(g, "n0", 2);
  std::set<std::string> members;
  for (const auto& t : oracle::khop(g, "n0", 2)) {
    members.insert(t.subject);
    members.insert(t.object);
  }
  for (const auto& [id, e] : g.entities()) EXPECT_EQ(in_subgraph(sub, id), members.count(id) == 1) << id;
  EXPECT_TRUE(in_subgraph(khop_subgraph(g, "n3", 1), "n3"));
  EXPECT_FALSE(in_subgraph(sub, "absent"));
}

TEST(RenderTriple, JoinsSurfacesWithSingleSpaces) {
  KnowledgeGraph g;
  g.add_entity({"m1", "Inception", "WORK_OF_ART"});
  g.add_entity({"p1", "Christopher Nolan", "PERSON"});
  g.add_entity({"y", "2010", "DATE"});
  g.add_triple({"m1", "directed_by", "p1"});
  g.add_triple({"m1", "release year", "y"});
  EXPECT_EQ(render_triple(g.triples()[0], g), "Inception directed_by Christopher Nolan");
  EXPECT_EQ(render_triple(g.triples()[1], g), "Inception release year 2010");
  EXPECT_THROW(render_triple({"m1", "x", "ghost"}, g), Error);
}

TEST(RenderTriple, FixtureMatchesConcatenation) {
  const auto c = load_corpus(std::string(FADE_FIXTURES) + "/corpus.jsonl", std::string(FADE_FIXTURES) + "/kg.tsv",
                             std::string(FADE_FIXTURES) + "/types.tsv");
  for (const auto& t : c.graph.triples())
    EXPECT_EQ(render_triple(t, c.graph), oracle::render(c.graph, t));
}

TEST(CorpusIo, RoundTripIsStructurallyIdentical) {
  const auto a = load_corpus(std::string(FADE_FIXTURES) + "/corpus.jsonl", std::string(FADE_FIXTURES) + "/kg.tsv",
                             std::string(FADE_FIXTURES) + "/types.tsv");
  std::ostringstream corpus, kg, types;
  write_corpus_jsonl(corpus, a.dialogues);
  write_kg_tsv(kg, a.graph);
  write_types_tsv(types, a.graph);
  const auto b = load_strings(corpus.str(), kg.str(), types.str());
  EXPECT_EQ(a.dialogues, b.dialogues);
  EXPECT_EQ(a.graph.triples(), b.graph.triples());
  EXPECT_EQ(a.graph.entities(), b.graph.entities());
}

TEST(KnowledgeGraph, AdjacencyIsConsistentBothWays) {
  const auto g = ten_node_graph();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& t = g.triples()[i];
    const auto& out = g.outgoing(t.subject);
    const auto& in = g.incoming(t.object);
    EXPECT_NE(std::find(out.begin(), out.end(), i), out.end());
    EXPECT_NE(std::find(in.begin(), in.end(), i), in.end());
  }
  KnowledgeGraph h;
  h.add_entity({"a", "A", "X"});
  EXPECT_THROW(h.add_triple({"a", "r", "b"}), Error);
  EXPECT_THROW(h.add_triple({"a", "", "a"}), Error);
}
