#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tcqa/executor.hpp"
#include "tcqa/trainer.hpp"

namespace tcqa {

struct StructureMetrics {
  std::size_t query_count = 0;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
};

struct EvalReport {
  std::map<std::string, StructureMetrics> per_structure;
  std::optional<double> avg_p;    // mean MRR over the 9 EPFO structures
  std::optional<double> avg_ood;  // pi, ip, 2u, up
  std::optional<double> avg_n;    // the 5 negation structures
  std::vector<std::string> missing_structures;  // present in an aggregate set but unseen
};

struct EvalOptions {
  bool flat_average = false;  // average 1/rank over all hard answers instead of per query
  AdapterHops adapter_hops = AdapterHops::all;
  unsigned threads = 0;
};

/// Filtered 1-based rank of hard answer `a`: competitors are all entities
/// outside easy and outside hard\{a}; ties count against `a`.
std::size_t rank_hard_answer(const FuzzyVector& scores, std::uint32_t a,
                             const std::vector<std::uint32_t>& easy,
                             const std::vector<std::uint32_t>& hard);

/// Runs every query, ranks its hard answers, and aggregates MRR/Hits@K per
/// structure plus the three cross-structure averages.
EvalReport evaluate(const NeuralAdjacencyMatrix& matrix,
                    const CalibrationParams& calibration, const AdapterParams& adapter,
                    const std::vector<LabeledQuery>& queries, const EvalOptions& options);

void write_report_tsv(const EvalReport& report, const std::string& path);
void write_report_json(const EvalReport& report, const std::string& path);

}  // namespace tcqa
