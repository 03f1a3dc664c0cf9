#include <fstream>

#include "doctest.h"
#include "support/tmpdir.hpp"
#include "tcqa/kg.hpp"

using namespace tcqa;
using testsupport::TempDir;

TEST_CASE("load_triples interns names in first-appearance order") {
  TempDir tmp;
  auto path = tmp.write("t.tsv", "a\tr\tb\n");
  KnowledgeGraph kg;
  auto stats = kg.load_triples(path, Split::train);
  CHECK(stats.added == 1);
  CHECK(kg.num_entities() == 2);
  CHECK(kg.entities().find("a") == 0u);
  CHECK(kg.entities().find("b") == 1u);
  CHECK(kg.num_relations() == 1);
  CHECK(kg.relations().find("r") == 0u);
}

TEST_CASE("duplicate lines are deduplicated within a split") {
  TempDir tmp;
  auto path = tmp.write("t.tsv", "a\tr\tb\na\tr\tb\n");
  KnowledgeGraph kg;
  auto stats = kg.load_triples(path, Split::train);
  CHECK(stats.added == 1);
  CHECK(stats.duplicates == 1);
  CHECK(kg.triples(Split::train).size() == 1);
}

TEST_CASE("the same triple may appear in two different splits") {
  TempDir tmp;
  auto path = tmp.write("t.tsv", "a\tr\tb\n");
  KnowledgeGraph kg;
  kg.load_triples(path, Split::train);
  kg.load_triples(path, Split::valid);
  CHECK(kg.triples(Split::train).size() == 1);
  CHECK(kg.triples(Split::valid).size() == 1);
}

TEST_CASE("malformed lines raise ParseError with the line number") {
  TempDir tmp;
  KnowledgeGraph kg;
  auto path = tmp.write("bad.tsv", "a\tr\n");
  CHECK_THROWS_WITH_AS(kg.load_triples(path, Split::train),
                       doctest::Contains(":1:"), ParseError);
  auto path4 = tmp.write("bad4.tsv", "a\tr\tb\tc\n");
  CHECK_THROWS_AS(kg.load_triples(path4, Split::train), ParseError);
}

TEST_CASE("empty file loads an empty fragment") {
  TempDir tmp;
  auto path = tmp.write("empty.tsv", "");
  KnowledgeGraph kg;
  auto stats = kg.load_triples(path, Split::train);
  CHECK(stats.added == 0);
  CHECK(kg.num_entities() == 0);
}

TEST_CASE("vocab interning round-trips") {
  TempDir tmp;
  auto path = tmp.write("t.tsv", "a\tr\tb\nb\ts\tc\nc\tr\ta\n");
  KnowledgeGraph kg;
  kg.load_triples(path, Split::train);
  kg.finalize_inverses();
  for (std::uint32_t e = 0; e < kg.num_entities(); ++e) {
    CHECK(kg.entities().find(kg.entities().name(e)) == e);
  }
  for (std::uint32_t r = 0; r < kg.num_relations(); ++r) {
    CHECK(kg.relations().find(kg.relations().name(r)) == r);
  }
}

TEST_CASE("loading the same files twice yields identical id assignments") {
  TempDir tmp;
  auto path = tmp.write("t.tsv", "x\tp\ty\nz\tq\tx\ny\tp\tz\n");
  KnowledgeGraph a, b;
  a.load_triples(path, Split::train);
  b.load_triples(path, Split::train);
  a.finalize_inverses();
  b.finalize_inverses();
  REQUIRE(a.num_entities() == b.num_entities());
  for (std::uint32_t e = 0; e < a.num_entities(); ++e) {
    CHECK(a.entities().name(e) == b.entities().name(e));
  }
  CHECK(a.triples(Split::train) == b.triples(Split::train));
}

TEST_CASE("finalize materializes reciprocal relations with reversed triples") {
  KnowledgeGraph kg;
  kg.add_triple("a", "r", "b", Split::train);
  kg.add_triple("c", "s", "d", Split::valid);
  CHECK(kg.num_relations() == 2);
  kg.finalize_inverses();
  CHECK(kg.num_relations() == 4);
  CHECK(kg.num_base_relations() == 2);
  CHECK(kg.inverse_of(0) == 2);
  CHECK(kg.inverse_of(2) == 0);
  CHECK(kg.is_inverse(3));
  CHECK(kg.relations().name(2) == std::string("r") + kInverseSuffix);

  // reversed triple landed in the same split
  auto view = kg.graph_view(GraphScope::train);
  std::uint32_t a = *kg.entities().find("a");
  std::uint32_t b = *kg.entities().find("b");
  CHECK(view.has_edge(b, 2, a));
  CHECK_FALSE(view.has_edge(b, 2, b));

  CHECK_THROWS_AS(kg.finalize_inverses(), ContractError);
  CHECK_THROWS_AS(kg.add_triple("x", "y", "z", Split::train), ContractError);
}

TEST_CASE("graph_view unions splits and sorts tails") {
  KnowledgeGraph kg;
  kg.add_triple("a", "r", "c", Split::train);
  kg.add_triple("a", "r", "b", Split::valid);
  kg.finalize_inverses();
  std::uint32_t a = *kg.entities().find("a");
  std::uint32_t b = *kg.entities().find("b");
  std::uint32_t c = *kg.entities().find("c");

  auto train_view = kg.graph_view(GraphScope::train);
  CHECK(train_view.tails(a, 0) == std::vector<std::uint32_t>{c});

  auto tv_view = kg.graph_view(GraphScope::train_valid);
  CHECK(tv_view.tails(a, 0) == std::vector<std::uint32_t>{c, b});  // c interned first

  // nested views: every train edge appears in the wider views
  for (const Triple& t : train_view.edges()) {
    CHECK(tv_view.has_edge(t.head, t.relation, t.tail));
  }
}

TEST_CASE("empty graph produces an empty view") {
  KnowledgeGraph kg;
  kg.finalize_inverses();
  auto view = kg.graph_view(GraphScope::train_valid_test);
  CHECK(view.edges().empty());
}

TEST_CASE("load_types keeps known entities and counts unknown ones") {
  TempDir tmp;
  auto triples = tmp.write("t.tsv", "a\tr\tb\n");
  KnowledgeGraph kg;
  kg.load_triples(triples, Split::train);
  kg.finalize_inverses();

  SUBCASE("known entity") {
    auto types = load_types(tmp.write("ty.tsv", "a\tperson\n"), kg);
    CHECK(types.skipped_unknown == 0);
    CHECK(types.of(*kg.entities().find("a")) ==
          std::vector<std::uint32_t>{*types.types.find("person")});
  }
  SUBCASE("unknown entity is skipped with a count") {
    auto types = load_types(tmp.write("ty.tsv", "zzz\tperson\n"), kg);
    CHECK(types.skipped_unknown == 1);
    CHECK(types.of(0).empty());
  }
  SUBCASE("an entity may carry several types") {
    auto types = load_types(tmp.write("ty.tsv", "a\tperson\na\tscholar\n"), kg);
    CHECK(types.of(*kg.entities().find("a")).size() == 2);
  }
  SUBCASE("malformed line") {
    CHECK_THROWS_AS(load_types(tmp.write("ty.tsv", "a person\n"), kg), ParseError);
  }
}

TEST_CASE("vocab dump writes name/id lines") {
  TempDir tmp;
  KnowledgeGraph kg;
  kg.add_triple("a", "r", "b", Split::train);
  kg.finalize_inverses();
  auto path = tmp.file("vocab.tsv");
  dump_vocab(kg.entities(), path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "a\t0");
  std::getline(in, line);
  CHECK(line == "b\t1");
}
