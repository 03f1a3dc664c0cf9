#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tcqa/common.hpp"

namespace tcqa {

enum class Split : int { train = 0, valid = 1, test = 2 };

/// Union of splits used when building a graph view.
enum class GraphScope : int { train = 0, train_valid = 1, train_valid_test = 2 };

/// Name interning with dense ids in first-appearance order. name -> id -> name
/// round-trips for every entry.
class Vocab {
 public:
  std::uint32_t intern(const std::string& name);
  std::optional<std::uint32_t> find(const std::string& name) const;
  const std::string& name(std::uint32_t id) const;
  std::uint32_t size() const { return static_cast<std::uint32_t>(names_.size()); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

struct Triple {
  std::uint32_t head = 0;
  std::uint32_t relation = 0;
  std::uint32_t tail = 0;
  bool operator==(const Triple&) const = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const {
    std::uint64_t k = t.head;
    k = k * 0x9e3779b97f4a7c15ull + t.relation;
    k = k * 0x9e3779b97f4a7c15ull + t.tail;
    k ^= k >> 29;
    return static_cast<std::size_t>(k * 0xbf58476d1ce4e5b9ull);
  }
};

struct LoadStats {
  std::size_t lines = 0;
  std::size_t added = 0;
  std::size_t duplicates = 0;
};

/// Adjacency index (head, relation) -> sorted unique tail ids over a chosen
/// split union. Also exposes a deterministic flattened edge list and
/// per-entity outgoing arcs for samplers.
class EdgeIndex {
 public:
  EdgeIndex(std::uint32_t num_entities, std::uint32_t num_relations)
      : num_entities_(num_entities),
        num_relations_(num_relations),
        outgoing_(num_entities) {}

  void add(std::uint32_t h, std::uint32_t r, std::uint32_t t);
  void finalize();

  const std::vector<std::uint32_t>& tails(std::uint32_t h, std::uint32_t r) const;
  bool has_edge(std::uint32_t h, std::uint32_t r, std::uint32_t t) const;

  /// Distinct edges in insertion order (deterministic).
  const std::vector<Triple>& edges() const { return edges_; }
  /// Outgoing (relation, tail) arcs of an entity, insertion order.
  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& outgoing(std::uint32_t e) const {
    return outgoing_[e];
  }

  std::uint32_t num_entities() const { return num_entities_; }
  std::uint32_t num_relations() const { return num_relations_; }

 private:
  std::uint32_t num_entities_;
  std::uint32_t num_relations_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> tails_;
  std::unordered_set<Triple, TripleHash> seen_;
  std::vector<Triple> edges_;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> outgoing_;
  static const std::vector<std::uint32_t> kNoTails;
};

/// In-memory knowledge graph: interned vocabularies plus per-split triple
/// sets. Loading is a two-phase affair: load_triples/add_triple while
/// building, then finalize_inverses() exactly once, which appends a reciprocal
/// relation per base relation (ids base..2*base-1) and the reversed triples.
/// A finalized graph is immutable and safe to share across threads.
class KnowledgeGraph {
 public:
  /// Reads `head<TAB>relation<TAB>tail` lines. Duplicates within the split are
  /// dropped; malformed lines raise ParseError with the line number.
  LoadStats load_triples(const std::string& path, Split split);

  /// Programmatic building (tests, synthetic data).
  void add_triple(const std::string& head, const std::string& relation,
                  const std::string& tail, Split split);

  void finalize_inverses();
  bool finalized() const { return finalized_; }

  std::uint32_t num_entities() const { return entities_.size(); }
  std::uint32_t num_relations() const { return relations_.size(); }
  /// Relation count before reciprocals were appended.
  std::uint32_t num_base_relations() const { return base_relations_; }
  std::uint32_t inverse_of(std::uint32_t r) const;
  bool is_inverse(std::uint32_t r) const { return finalized_ && r >= base_relations_; }

  const Vocab& entities() const { return entities_; }
  const Vocab& relations() const { return relations_; }
  Vocab& entities() { return entities_; }
  Vocab& relations() { return relations_; }

  const std::vector<Triple>& triples(Split split) const {
    return triples_[static_cast<int>(split)];
  }

  EdgeIndex graph_view(GraphScope scope) const;

 private:
  bool insert(const Triple& t, Split split);

  Vocab entities_;
  Vocab relations_;
  std::array<std::vector<Triple>, 3> triples_;
  std::array<std::unordered_set<Triple, TripleHash>, 3> seen_;
  bool finalized_ = false;
  std::uint32_t base_relations_ = 0;
};

/// Suffix appended to a relation name to form its reciprocal's name.
extern const char* const kInverseSuffix;

/// Flat entity -> type-set annotations; the type vocabulary is its own
/// interning table.
struct TypeAnnotations {
  Vocab types;
  std::vector<std::vector<std::uint32_t>> entity_types;  // sorted unique per entity
  std::size_t skipped_unknown = 0;                       // lines naming unknown entities

  const std::vector<std::uint32_t>& of(std::uint32_t entity) const {
    return entity_types[entity];
  }
};

/// Reads `entity<TAB>type` lines; pairs naming entities absent from `kg` are
/// skipped and counted.
TypeAnnotations load_types(const std::string& path, const KnowledgeGraph& kg);

/// Writes `name<TAB>id` per vocabulary entry.
void dump_vocab(const Vocab& vocab, const std::string& path);

}  // namespace tcqa
