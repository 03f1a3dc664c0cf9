#include "tcqa/type_graphs.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <unordered_set>

namespace tcqa {

namespace {

bool sorted_intersects(const std::vector<std::uint32_t>& a,
                       const std::vector<std::uint32_t>& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) return true;
    if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return false;
}

std::vector<std::uint32_t> sorted_intersection(const std::vector<std::uint32_t>& a,
                                               const std::vector<std::uint32_t>& b) {
  std::vector<std::uint32_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

TypedEntityRelationGraphs build_type_graphs(const KnowledgeGraph& kg,
                                            const TypeAnnotations& types) {
  if (!kg.finalized()) throw ContractError("build_type_graphs: graph not finalized");
  if (kg.triples(Split::train).empty()) {
    throw ContractError("build_type_graphs: empty train split");
  }

  const std::uint32_t num_entities = kg.num_entities();
  const std::uint32_t num_relations = kg.num_relations();
  const std::uint32_t base = kg.num_base_relations();

  TypedEntityRelationGraphs g;
  g.head_types.resize(num_relations);
  g.tail_types.resize(num_relations);
  g.head_compat.assign(num_relations, Bitset(num_entities));
  g.tail_compat.assign(num_relations, Bitset(num_entities));

  std::vector<Bitset> observed_head(num_relations, Bitset(num_entities));
  std::vector<Bitset> observed_tail(num_relations, Bitset(num_entities));
  std::vector<std::unordered_set<std::uint32_t>> head_union(base);
  // nullopt = no triple seen yet; distinguishes "empty by intersection"
  std::vector<std::optional<std::vector<std::uint32_t>>> tail_inter(base);

  for (const Triple& t : kg.triples(Split::train)) {
    observed_head[t.relation].set(t.head);
    observed_tail[t.relation].set(t.tail);
    if (t.relation >= base) continue;  // reciprocals mirror the base relation
    for (std::uint32_t type : types.of(t.head)) head_union[t.relation].insert(type);
    const auto& tail_ts = types.of(t.tail);
    if (!tail_inter[t.relation]) {
      tail_inter[t.relation] = tail_ts;
    } else {
      *tail_inter[t.relation] = sorted_intersection(*tail_inter[t.relation], tail_ts);
    }
  }

  for (std::uint32_t r = 0; r < base; ++r) {
    std::vector<std::uint32_t> heads(head_union[r].begin(), head_union[r].end());
    std::sort(heads.begin(), heads.end());
    g.head_types[r] = std::move(heads);
    g.tail_types[r] = tail_inter[r] ? *tail_inter[r] : std::vector<std::uint32_t>{};
    if (!tail_inter[r]) ++g.report.relations_without_train_triples;
    // reciprocal relation: swapped profiles
    g.head_types[base + r] = g.tail_types[r];
    g.tail_types[base + r] = g.head_types[r];
  }

  for (std::uint32_t r = 0; r < num_relations; ++r) {
    bool has_triples = observed_head[r].any();
    // head side: type-derived pairs, plus every observed training head
    g.head_compat[r] = observed_head[r];
    if (!g.head_types[r].empty()) {
      for (std::uint32_t e = 0; e < num_entities; ++e) {
        if (sorted_intersects(types.of(e), g.head_types[r])) g.head_compat[r].set(e);
      }
    }
    // tail side: type-derived pairs; observed tails as fallback when the
    // intersection is empty
    if (g.tail_types[r].empty()) {
      g.tail_compat[r] = observed_tail[r];
      if (has_triples) g.report.tail_fallback_relations.push_back(r);
    } else {
      for (std::uint32_t e = 0; e < num_entities; ++e) {
        if (sorted_intersects(types.of(e), g.tail_types[r])) g.tail_compat[r].set(e);
      }
    }
  }
  return g;
}

const Bitset& compat_mask(const TypedEntityRelationGraphs& graphs, std::uint32_t relation,
                          CompatSide side) {
  const auto& masks = side == CompatSide::head ? graphs.head_compat : graphs.tail_compat;
  if (relation >= masks.size()) throw ContractError("compat_mask: relation out of range");
  return masks[relation];
}

void dump_compat_tsv(const TypedEntityRelationGraphs& graphs, const KnowledgeGraph& kg,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open output file: " + path);
  for (std::uint32_t r = 0; r < graphs.head_compat.size(); ++r) {
    for (std::uint32_t e = 0; e < kg.num_entities(); ++e) {
      if (graphs.head_compat[r].test(e)) {
        out << kg.relations().name(r) << "\thead\t" << kg.entities().name(e) << '\n';
      }
    }
    for (std::uint32_t e = 0; e < kg.num_entities(); ++e) {
      if (graphs.tail_compat[r].test(e)) {
        out << kg.relations().name(r) << "\ttail\t" << kg.entities().name(e) << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace tcqa
