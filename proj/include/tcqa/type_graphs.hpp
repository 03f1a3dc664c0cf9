#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcqa/bitset.hpp"
#include "tcqa/kg.hpp"

namespace tcqa {

enum class CompatSide { head, tail };

struct TypeGraphBuildReport {
  std::uint32_t relations_without_train_triples = 0;  // base relations only
  std::vector<std::uint32_t> tail_fallback_relations;  // empty tail intersection
};

/// Per-relation type profiles and the derived entity-relation compatibility
/// masks. Head profiles are the union of observed head type sets, tail
/// profiles the intersection of observed tail type sets; reciprocal relations
/// carry the swapped profiles. Head masks additionally include every observed
/// training head so that observed edges are never skipped; when a tail
/// intersection comes out empty the tail mask falls back to the observed
/// tails (reported).
struct TypedEntityRelationGraphs {
  std::vector<std::vector<std::uint32_t>> head_types;  // per relation, sorted type ids
  std::vector<std::vector<std::uint32_t>> tail_types;
  std::vector<Bitset> head_compat;  // per relation, bit per entity
  std::vector<Bitset> tail_compat;
  TypeGraphBuildReport report;
};

/// Builds both compatibility graphs from the training split of a finalized
/// graph. Requires a non-empty train split.
TypedEntityRelationGraphs build_type_graphs(const KnowledgeGraph& kg,
                                            const TypeAnnotations& types);

const Bitset& compat_mask(const TypedEntityRelationGraphs& graphs, std::uint32_t relation,
                          CompatSide side);

/// Audit dump: `relation<TAB>side<TAB>entity` per compatible pair.
void dump_compat_tsv(const TypedEntityRelationGraphs& graphs, const KnowledgeGraph& kg,
                     const std::string& path);

}  // namespace tcqa
