#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tcqa/kg.hpp"

namespace tcqa {

enum class QueryOp { anchor, projection, conjunction, disjunction };

/// Tree-shaped query: anchors at the leaves, the answer variable at the root.
/// Negation lives on projection nodes only.
struct QueryNode {
  QueryOp op = QueryOp::anchor;
  std::uint32_t entity = 0;    // anchor
  std::uint32_t relation = 0;  // projection
  bool negated = false;        // projection
  std::vector<QueryNode> children;

  bool operator==(const QueryNode&) const = default;
};

struct QueryAst {
  QueryNode root;
  std::string label;  // one of the 14 structure labels, or empty

  bool operator==(const QueryAst&) const = default;
};

struct LabeledQuery {
  QueryAst ast;
  std::vector<std::uint32_t> easy;  // sorted
  std::vector<std::uint32_t> hard;  // sorted, disjoint from easy
};

/// The 14 benchmark structure labels in canonical order.
const std::vector<std::string>& query_structure_labels();

/// Structure groups used for aggregate metrics.
const std::vector<std::string>& epfo_structure_labels();      // 9 EPFO
const std::vector<std::string>& ood_structure_labels();       // pi, ip, 2u, up
const std::vector<std::string>& negation_structure_labels();  // 2in..pni

/// Canonical shape string of a tree (child order normalized); used for label
/// validation and structure inference.
std::string shape_signature(const QueryNode& node);

/// Label whose template matches the node's shape, if any.
std::optional<std::string> structure_of(const QueryNode& node);

/// Checks basic tree validity (projection arity 1, and/or arity >= 2, ids in
/// range) and, when a label is present, that the shape matches the template.
void validate_query(const QueryAst& ast, std::uint32_t num_entities,
                    std::uint32_t num_relations);

/// Name/id resolution scope for query parsing. Name lookup is optional so
/// query files with integer ids can be read with nothing but the matrix
/// dimensions at hand.
struct IdResolver {
  std::uint32_t num_entities = 0;
  std::uint32_t num_relations = 0;
  const Vocab* entity_names = nullptr;
  const Vocab* relation_names = nullptr;

  static IdResolver from(const KnowledgeGraph& kg) {
    return {kg.num_entities(), kg.num_relations(), &kg.entities(), &kg.relations()};
  }
};

/// JSON object form: {"op":"anchor","entity":...}, {"op":"proj","rel":...,
/// "neg":bool,"child":{...}}, {"op":"and"/"or","children":[...]}. Entity and
/// relation fields accept names or integer ids.
QueryAst parse_query_json(const std::string& json_text, const IdResolver& ids);
QueryAst parse_query_json(const std::string& json_text, const KnowledgeGraph& kg);
std::string query_to_json(const QueryAst& ast);

/// JSONL records {"label":...,"ast":{...},"easy":[...],"hard":[...]}.
LabeledQuery parse_labeled_query(const std::string& line, const IdResolver& ids);
std::string labeled_query_to_json(const LabeledQuery& q);
std::vector<LabeledQuery> load_queries_jsonl(const std::string& path,
                                             const IdResolver& ids);
std::vector<LabeledQuery> load_queries_jsonl(const std::string& path,
                                             const KnowledgeGraph& kg);
void save_queries_jsonl(const std::vector<LabeledQuery>& queries,
                        const std::string& path);

/// Exact set-semantics evaluation against an edge index. Projections take the
/// relational image; negated projections collect every entity missed by at
/// least one source (the existential reading, which matches enumeration of
/// variable assignments); conjunction intersects, disjunction unions.
std::vector<std::uint32_t> symbolic_answers(const QueryNode& node, const EdgeIndex& edges);

struct GenerationResult {
  std::vector<LabeledQuery> queries;
  std::size_t attempts = 0;
  bool complete = true;  // false when the retry budget ran out
};

/// Samples `count` instances of one structure backward from target answers on
/// the fuller graph view for `target_split`. Easy answers come from the next
/// smaller view; hard answers are the fuller-view answers minus easy. For
/// valid/test targets, queries with no hard answers are rejected and
/// resampled within a budget of 100 * count attempts.
GenerationResult generate_queries(const KnowledgeGraph& kg, const std::string& label,
                                  std::size_t count, std::uint64_t seed,
                                  Split target_split);

}  // namespace tcqa
