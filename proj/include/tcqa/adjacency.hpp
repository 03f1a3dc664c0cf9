#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tcqa/bitset.hpp"
#include "tcqa/kg.hpp"
#include "tcqa/kge.hpp"
#include "tcqa/type_graphs.hpp"

namespace tcqa {

/// Learnable per-(entity, relation) affine calibration applied lazily to
/// stored base probabilities: p * (1 + scale) + offset. Absent keys read as
/// zero, so untouched rows stay identity-calibrated.
struct CalibrationParams {
  std::unordered_map<std::uint64_t, double> scale;   // keyed pack_pair(entity, relation)
  std::unordered_map<std::uint64_t, double> offset;

  double scale_at(std::uint32_t entity, std::uint32_t relation) const {
    auto it = scale.find(pack_pair(entity, relation));
    return it == scale.end() ? 0.0 : it->second;
  }
  double offset_at(std::uint32_t entity, std::uint32_t relation) const {
    auto it = offset.find(pack_pair(entity, relation));
    return it == offset.end() ? 0.0 : it->second;
  }
  bool empty() const { return scale.empty() && offset.empty(); }
};

/// Sparse rows of one relation in compressed layout. Base values are the
/// scaled softmax probabilities before calibration; observed train edges are
/// always stored and flagged. Rows outside the head-compatibility mask are
/// absent entirely.
struct RelationRows {
  std::vector<std::uint64_t> row_offsets;  // num_entities + 1
  std::vector<std::uint32_t> cols;
  std::vector<float> base;
  Bitset observed;      // per stored entry
  std::vector<std::uint32_t> tail_counts;  // per head entity
  Bitset head_present;  // rows computed (head compatibility)
  Bitset tail_compat;   // adapter applicability on the tail side

  std::uint64_t entry_count() const { return cols.size(); }

  bool operator==(const RelationRows&) const = default;
};

struct StorageReport {
  std::uint64_t stored_entries = 0;
  std::uint64_t skipped_rows = 0;
  std::uint64_t bytes = 0;
};

/// Per-relation sparse probability matrix over entity pairs, with the clamp
/// floor delta and sparsification threshold eps it was built with. Immutable
/// after construction; calibration happens at read time.
class NeuralAdjacencyMatrix {
 public:
  NeuralAdjacencyMatrix() = default;
  NeuralAdjacencyMatrix(std::uint32_t num_entities, std::uint32_t num_relations,
                        double delta, double eps);

  std::uint32_t num_entities() const { return num_entities_; }
  std::uint32_t num_relations() const { return num_relations_; }
  double delta() const { return delta_; }
  double eps() const { return eps_; }

  const RelationRows& rows(std::uint32_t r) const { return relations_[r]; }
  RelationRows& rows(std::uint32_t r) { return relations_[r]; }

  /// Calibrated probability of (i, r, j): observed edges read exactly 1,
  /// stored entries clamp(base*(1+scale)+offset, delta, 1-delta), absent
  /// entries 0.
  double calibrated_entry(const CalibrationParams& params, std::uint32_t i,
                          std::uint32_t r, std::uint32_t j) const;

  StorageReport storage_report() const;

  /// Binary format TADJ v1: header (counts, delta, eps) then per relation the
  /// compressed arrays, packed flag bits, tail counts, and the two
  /// compatibility bitsets. Round-trips bit-identically.
  void save(const std::string& path) const;
  static NeuralAdjacencyMatrix load(const std::string& path);

  bool operator==(const NeuralAdjacencyMatrix&) const = default;

 private:
  std::uint32_t num_entities_ = 0;
  std::uint32_t num_relations_ = 0;
  double delta_ = 1e-4;
  double eps_ = 2e-4;
  std::vector<RelationRows> relations_;
};

/// Stabilized softmax; exposed because row normalization is checked directly
/// by tests.
std::vector<double> softmax(const std::vector<double>& scores);

/// Applies the affine calibration and clamp to a stored base value.
inline double calibrate_stored(double base, double scale, double offset, double delta) {
  double v = base * (1.0 + scale) + offset;
  if (v < delta) return delta;
  if (v > 1.0 - delta) return 1.0 - delta;
  return v;
}

struct AdjacencyBuildConfig {
  double eps = 2e-4;
  double delta = 1e-4;
  bool type_skip = true;  // false computes every row (ablation)
  unsigned threads = 0;
};

/// Materializes the matrix from a scorer: for every head-compatible (h, r),
/// softmax over all entities of f_r(h, .) scaled by max(tail count, 1);
/// entries below eps are dropped unless observed. Rows outside the head mask
/// are skipped entirely.
NeuralAdjacencyMatrix build_base_matrix(const KgeModel& model, const KnowledgeGraph& kg,
                                        const TypedEntityRelationGraphs& graphs,
                                        const AdjacencyBuildConfig& config);

}  // namespace tcqa
