#include <algorithm>

#include "doctest.h"
#include "support/oracle.hpp"
#include "support/synth.hpp"
#include "tcqa/type_graphs.hpp"

using namespace tcqa;
namespace ts = tcqa::testsupport;

namespace {

TypeAnnotations annotate(const KnowledgeGraph& kg,
                         const std::vector<std::pair<std::string, std::string>>& pairs) {
  TypeAnnotations ann;
  ann.entity_types.resize(kg.num_entities());
  for (const auto& [entity, type] : pairs) {
    ann.entity_types[*kg.entities().find(entity)].push_back(ann.types.intern(type));
  }
  for (auto& v : ann.entity_types) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return ann;
}

std::vector<std::uint32_t> bits_of(const Bitset& b) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < b.size(); ++i) {
    if (b.test(i)) out.push_back(i);
  }
  return out;
}

}  // namespace

TEST_CASE("head union and tail intersection on the award example") {
  KnowledgeGraph kg;
  kg.add_triple("e0", "win", "e2", Split::train);
  kg.add_triple("e1", "win", "e2", Split::train);
  kg.finalize_inverses();
  auto ann = annotate(kg, {{"e0", "person"}, {"e1", "person"}, {"e2", "award"}});
  auto g = build_type_graphs(kg, ann);

  std::uint32_t win = *kg.relations().find("win");
  std::uint32_t person = *ann.types.find("person");
  std::uint32_t award = *ann.types.find("award");
  std::uint32_t e0 = *kg.entities().find("e0");
  std::uint32_t e1 = *kg.entities().find("e1");
  std::uint32_t e2 = *kg.entities().find("e2");

  CHECK(g.head_types[win] == std::vector<std::uint32_t>{person});
  CHECK(g.tail_types[win] == std::vector<std::uint32_t>{award});
  CHECK(bits_of(g.head_compat[win]) == std::vector<std::uint32_t>{e0, e1});
  CHECK(bits_of(g.tail_compat[win]) == std::vector<std::uint32_t>{e2});

  SUBCASE("compat_mask returns the same sets") {
    CHECK(compat_mask(g, win, CompatSide::head).test(e0));
    CHECK(compat_mask(g, win, CompatSide::head).test(e1));
    CHECK_FALSE(compat_mask(g, win, CompatSide::head).test(e2));
    CHECK(compat_mask(g, win, CompatSide::tail).test(e2));
  }
  SUBCASE("reciprocal relation swaps the profiles") {
    std::uint32_t inv = kg.inverse_of(win);
    CHECK(g.head_types[inv] == std::vector<std::uint32_t>{award});
    CHECK(g.tail_types[inv] == std::vector<std::uint32_t>{person});
    CHECK(bits_of(g.head_compat[inv]) == std::vector<std::uint32_t>{e2});
  }
}

TEST_CASE("tail intersection shrinks to the common type") {
  KnowledgeGraph kg;
  kg.add_triple("e0", "win", "e2", Split::train);
  kg.add_triple("e1", "win", "e3", Split::train);
  kg.finalize_inverses();
  auto ann = annotate(kg, {{"e0", "person"},
                           {"e1", "person"},
                           {"e2", "award"},
                           {"e2", "prize"},
                           {"e3", "award"}});
  auto g = build_type_graphs(kg, ann);
  std::uint32_t win = *kg.relations().find("win");
  CHECK(g.tail_types[win] == std::vector<std::uint32_t>{*ann.types.find("award")});
}

TEST_CASE("untyped entities join no compat set for relations they were not observed with") {
  KnowledgeGraph kg;
  kg.add_triple("e0", "win", "e2", Split::train);
  kg.add_triple("e4", "other", "e0", Split::train);
  kg.finalize_inverses();
  auto ann = annotate(kg, {{"e0", "person"}, {"e2", "award"}});
  auto g = build_type_graphs(kg, ann);
  std::uint32_t win = *kg.relations().find("win");
  std::uint32_t e4 = *kg.entities().find("e4");
  CHECK_FALSE(g.head_compat[win].test(e4));
  CHECK_FALSE(g.tail_compat[win].test(e4));
}

TEST_CASE("observed training edges are always head-compatible") {
  auto kg = ts::random_kg(18, 3, 60, 11);
  auto ann = ts::random_types(kg, 4, 12);
  // knock a few entities down to no types at all
  ann.entity_types[0].clear();
  ann.entity_types[5].clear();
  auto g = build_type_graphs(kg, ann);
  for (const Triple& t : kg.triples(Split::train)) {
    CHECK(compat_mask(g, t.relation, CompatSide::head).test(t.head));
  }
}

TEST_CASE("an untyped observed tail forces the fallback to observed tails") {
  KnowledgeGraph kg;
  kg.add_triple("e0", "win", "e2", Split::train);
  kg.add_triple("e1", "win", "e3", Split::train);  // e3 untyped
  kg.finalize_inverses();
  auto ann = annotate(kg, {{"e0", "person"}, {"e1", "person"}, {"e2", "award"}});
  auto g = build_type_graphs(kg, ann);
  std::uint32_t win = *kg.relations().find("win");
  CHECK(g.tail_types[win].empty());
  CHECK(bits_of(g.tail_compat[win]) ==
        std::vector<std::uint32_t>{*kg.entities().find("e2"), *kg.entities().find("e3")});
  CHECK(std::find(g.report.tail_fallback_relations.begin(),
                  g.report.tail_fallback_relations.end(),
                  win) != g.report.tail_fallback_relations.end());
}

TEST_CASE("relation with no training triples has empty profiles and masks") {
  KnowledgeGraph kg;
  kg.add_triple("a", "r", "b", Split::train);
  kg.add_triple("a", "s", "b", Split::valid);  // s never trains
  kg.finalize_inverses();
  auto ann = annotate(kg, {{"a", "x"}, {"b", "y"}});
  auto g = build_type_graphs(kg, ann);
  std::uint32_t s = *kg.relations().find("s");
  CHECK(g.head_types[s].empty());
  CHECK(g.tail_types[s].empty());
  CHECK(g.head_compat[s].count() == 0);
  CHECK(g.tail_compat[s].count() == 0);
  CHECK(g.report.relations_without_train_triples == 1);
}

TEST_CASE("empty train split is a precondition error") {
  KnowledgeGraph kg;
  kg.add_triple("a", "r", "b", Split::valid);
  kg.finalize_inverses();
  TypeAnnotations ann;
  ann.entity_types.resize(kg.num_entities());
  CHECK_THROWS_AS(build_type_graphs(kg, ann), ContractError);
}

TEST_CASE("adding a triple grows head unions and shrinks tail intersections") {
  auto types = std::vector<std::pair<std::string, std::string>>{
      {"a", "p"}, {"b", "q"}, {"c", "r0t"}, {"d", "q"}, {"d", "s"}};
  KnowledgeGraph small;
  small.add_triple("a", "w", "b", Split::train);
  small.finalize_inverses();
  KnowledgeGraph big;
  big.add_triple("a", "w", "b", Split::train);
  big.add_triple("c", "w", "d", Split::train);
  big.finalize_inverses();

  auto filter = [&](const KnowledgeGraph& kg) {
    std::vector<std::pair<std::string, std::string>> kept;
    for (const auto& p : types) {
      if (kg.entities().find(p.first)) kept.push_back(p);
    }
    return kept;
  };
  auto g_small = build_type_graphs(small, annotate(small, filter(small)));
  auto g_big = build_type_graphs(big, annotate(big, filter(big)));
  std::uint32_t w = *small.relations().find("w");

  CHECK(std::includes(g_big.head_types[w].begin(), g_big.head_types[w].end(),
                      g_small.head_types[w].begin(), g_small.head_types[w].end()));
  CHECK(std::includes(g_small.tail_types[w].begin(), g_small.tail_types[w].end(),
                      g_big.tail_types[w].begin(), g_big.tail_types[w].end()));
}

TEST_CASE("matches the quadratic-loop evaluation on small fully typed graphs") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto kg = ts::random_kg(14 + seed % 6, 2 + seed % 3, 50, seed);
    auto ann = ts::random_types(kg, 3 + seed % 3, seed + 100);
    auto g = build_type_graphs(kg, ann);
    auto brute = ts::brute_force_type_sets(kg, ann);
    for (std::uint32_t r = 0; r < kg.num_relations(); ++r) {
      CAPTURE(seed);
      CAPTURE(r);
      CHECK(g.head_types[r] == brute.head_types[r]);
      CHECK(g.tail_types[r] == brute.tail_types[r]);
      CHECK(bits_of(g.head_compat[r]) == brute.head_compat[r]);
      CHECK(bits_of(g.tail_compat[r]) == brute.tail_compat[r]);
    }
  }
}
