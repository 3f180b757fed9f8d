#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "fuseqa/error.hpp"
#include "fuseqa/kg_store.hpp"
#include "fuseqa/tensor.hpp"

using namespace fuseqa;

namespace {

KnowledgeGraph parse(const std::string& s) {
  std::istringstream in(s);
  return parse_triples(in);
}

std::size_t parse_error_line(const std::string& s) {
  try {
    parse(s);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

std::string random_triples(SplitMix64& rng, std::size_t lines, std::size_t entities, std::size_t relations) {
  std::ostringstream out;
  for (std::size_t i = 0; i < lines; ++i)
    out << 'e' << rng.below(entities) << "\tr" << rng.below(relations) << "\te" << rng.below(entities) << '\n';
  return out.str();
}

}  // namespace

TEST(LoadTriples, BuildsVocabulariesAndAdjacency) {
  const auto kg = parse("a\tr1\tb\nb\tr2\tc");
  EXPECT_EQ(kg.num_entities(), 3u);
  EXPECT_EQ(kg.num_relations(), 2u);
  EXPECT_EQ(kg.num_triplets(), 2u);
  const auto a = *kg.lookup_entity("a");
  ASSERT_EQ(kg.out_edges(a).size(), 1u);
  EXPECT_EQ(kg.out_edges(a)[0], 0u);
  EXPECT_EQ(index(a), 0u);
  EXPECT_EQ(kg.triplet(1).head, *kg.lookup_entity("b"));
}

TEST(LoadTriples, ReportsLineNumbers) {
  EXPECT_EQ(parse_error_line("a\tr1"), 1u);
  EXPECT_EQ(parse_error_line("a\tr\tb\n# comment\nx\t\ty\n"), 3u);
  EXPECT_EQ(parse_error_line("a\tr\tb\na\tr\tb\tc\n"), 2u);
  EXPECT_THROW(parse("a\tr1"), ParseError);
}

TEST(LoadTriples, EmptyInputIsAnError) {
  try {
    parse("# only a comment\n\n");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "empty knowledge graph");
  }
}

TEST(LoadTriples, ToleratesCrLfAndKeepsDuplicatesAndSelfLoops) {
  const auto kg = parse("a\tr\tb\r\na\tr\tb\r\nc\tr\tc\r\n");
  EXPECT_EQ(kg.num_triplets(), 3u);
  EXPECT_EQ(kg.triplet(2).head, kg.triplet(2).tail);
  EXPECT_EQ(kg.entity_surface(kg.triplet(0).tail), "b");
}

TEST(LoadTriples, MissingFileThrows) { EXPECT_THROW(load_triples("/nonexistent/triples.tsv"), Error); }

TEST(LoadTriples, AdjacencyMatchesBruteForceGrouping) {
  SplitMix64 rng(5);
  const auto kg = parse(random_triples(rng, 50, 12, 4));
  std::map<std::uint32_t, std::vector<TripletId>> out, in;
  std::map<std::uint32_t, std::size_t> degree;
  for (const auto& t : kg.triplets()) {
    out[index(t.head)].push_back(t.id);
    in[index(t.tail)].push_back(t.id);
    ++degree[index(t.head)];
    ++degree[index(t.tail)];
  }
  for (std::uint32_t e = 0; e < kg.num_entities(); ++e) {
    const auto oe = kg.out_edges(EntityId{e});
    const auto ie = kg.in_edges(EntityId{e});
    EXPECT_EQ(std::vector<TripletId>(oe.begin(), oe.end()), out[e]);
    EXPECT_EQ(std::vector<TripletId>(ie.begin(), ie.end()), in[e]);
    EXPECT_EQ(oe.size() + ie.size(), degree[e]);
  }
}

TEST(LoadTriples, RoundTripThroughWriter) {
  SplitMix64 rng(9);
  const auto kg = parse("Ice  Cream\tAtLocation\tFridge\n" + random_triples(rng, 40, 10, 3));
  std::ostringstream out;
  write_triples(kg, out);
  EXPECT_EQ(parse(out.str()), kg);
}

TEST(LookupEntity, NormalizesCaseAndWhitespace) {
  const auto kg = parse("dog\tr\tice cream\n");
  EXPECT_EQ(kg.lookup_entity("Dog"), kg.triplet(0).head);
  EXPECT_EQ(kg.lookup_entity(" ice  cream "), kg.triplet(0).tail);
  EXPECT_FALSE(kg.lookup_entity("cat").has_value());
  EXPECT_EQ(kg.lookup_relation("R"), kg.triplet(0).relation);
}

TEST(LookupEntity, FirstSpellingIsTheDisplaySurface) {
  const auto kg = parse("Dog\tr\tx\ndog\tr\ty\n");
  EXPECT_EQ(kg.num_entities(), 3u);
  EXPECT_EQ(kg.entity_surface(kg.triplet(1).head), "Dog");
}

TEST(RelationStats, CountsFrequencies) {
  const auto kg = parse("a\tr1\tb\nb\tr1\tc\nc\tr2\td\nd\tr3\ta\n");
  const auto s = relation_stats(kg);
  EXPECT_DOUBLE_EQ(s.relf(*kg.lookup_relation("r1")), 0.5);
  EXPECT_DOUBLE_EQ(s.relf(*kg.lookup_relation("r2")), 0.25);
  EXPECT_DOUBLE_EQ(s.relf(*kg.lookup_relation("r3")), 0.25);
}

TEST(RelationStats, SingleTriplet) {
  const auto s = relation_stats(parse("a\tr\tb\n"));
  EXPECT_EQ(s.rel_freq, std::vector<double>{1.0});
}

TEST(RelationStats, InverseFrequencyIsNormalized) {
  const auto kg = parse("a\tr1\tb\nb\tr1\tc\nc\tr1\td\nd\tr2\ta\n");
  const auto s = relation_stats(kg, RelfMode::inverse_frequency);
  EXPECT_NEAR(s.rel_freq[0], (1.0 / 3) / (1.0 / 3 + 1.0), 1e-15);
  EXPECT_NEAR(s.rel_freq[0] + s.rel_freq[1], 1.0, 1e-12);
  EXPECT_GT(s.rel_freq[1], s.rel_freq[0]);
}

TEST(RelationStats, MatchesIndependentRecount) {
  SplitMix64 rng(21);
  for (auto mode : {RelfMode::frequency, RelfMode::inverse_frequency}) {
    const auto kg = parse(random_triples(rng, 200, 30, 5));
    const auto s = relation_stats(kg, mode);
    std::map<std::string, double> count;
    for (const auto& t : kg.triplets()) count[kg.relation_surface(t.relation)] += 1.0;
    double inv_total = 0.0;
    for (const auto& [r, c] : count) inv_total += 1.0 / c;
    double sum = 0.0;
    for (const auto& [r, c] : count) {
      const double expect = mode == RelfMode::frequency ? c / 200.0 : (1.0 / c) / inv_total;
      const double got = s.relf(*kg.lookup_relation(r));
      EXPECT_NEAR(got, expect, 1e-15);
      EXPECT_GE(got, 0.0);
      EXPECT_LE(got, 1.0);
      sum += got;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(RelfMode, ParsesNames) {
  EXPECT_EQ(parse_relf_mode("inverse_frequency"), RelfMode::inverse_frequency);
  EXPECT_EQ(to_string(RelfMode::frequency), "frequency");
  EXPECT_THROW(parse_relf_mode("tfidf"), ConfigError);
}

TEST(Templates, ValidatesPlaceholders) {
  EXPECT_NO_THROW(TemplateTable::validate("{head} is at {tail}"));
  EXPECT_THROW(TemplateTable::validate("{head} {head}"), ConfigError);
  EXPECT_THROW(TemplateTable::validate("{head} only"), ConfigError);
  EXPECT_THROW(TemplateTable::validate("{head} {rel} {tail}"), ConfigError);
}

TEST(Templates, DefaultUsesRelationSurface) {
  const auto kg = parse("dog\tUsedFor\tkennel\n");
  TemplateTable t;
  EXPECT_EQ(t.template_for(kg, kg.triplet(0).relation), "{head} UsedFor {tail}");
  t.set("usedfor", "{head} is used for {tail}");
  EXPECT_EQ(t.template_for(kg, kg.triplet(0).relation), "{head} is used for {tail}");
}

TEST(Templates, ParseReportsLineAndRoundTrips) {
  std::istringstream bad("AtLocation\t{head} at {tail}\nCauses\t{head} {head}\n");
  try {
    parse_templates(bad);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream good("# c\nCauses\t{head} causes {tail}\nAtLocation\t{head} at {tail}\n");
  const auto table = parse_templates(good);
  EXPECT_EQ(table.size(), 2u);
  std::ostringstream out;
  write_templates(table, out);
  std::istringstream again(out.str());
  EXPECT_EQ(parse_templates(again).entries(), table.entries());
}
