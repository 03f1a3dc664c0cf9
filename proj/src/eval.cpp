#include "tcqa/eval.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "tcqa/parallel.hpp"

namespace tcqa {

std::size_t rank_hard_answer(const FuzzyVector& scores, std::uint32_t a,
                             const std::vector<std::uint32_t>& easy,
                             const std::vector<std::uint32_t>& hard) {
  if (!std::binary_search(hard.begin(), hard.end(), a)) {
    throw ContractError("rank_hard_answer: entity is not a hard answer");
  }
  const double target = scores[a];
  std::size_t ahead = 0;
  for (std::uint32_t e = 0; e < scores.size(); ++e) {
    if (e == a) continue;
    if (std::binary_search(easy.begin(), easy.end(), e)) continue;
    if (std::binary_search(hard.begin(), hard.end(), e)) continue;
    if (scores[e] >= target) ++ahead;  // pessimistic ties
  }
  return ahead + 1;
}

namespace {

struct QueryOutcome {
  double mrr_contrib = 0.0;  // per-query mean of 1/rank (or sum in flat mode)
  double h1 = 0.0, h3 = 0.0, h10 = 0.0;
  std::size_t hard_count = 0;
};

std::optional<double> aggregate(const EvalReport& report,
                                const std::vector<std::string>& labels,
                                std::vector<std::string>& missing) {
  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& label : labels) {
    auto it = report.per_structure.find(label);
    if (it == report.per_structure.end() || it->second.query_count == 0) {
      missing.push_back(label);
      continue;
    }
    sum += it->second.mrr;
    ++present;
  }
  if (present == 0) return std::nullopt;
  return sum / static_cast<double>(present);
}

}  // namespace

EvalReport evaluate(const NeuralAdjacencyMatrix& matrix,
                    const CalibrationParams& calibration, const AdapterParams& adapter,
                    const std::vector<LabeledQuery>& queries,
                    const EvalOptions& options) {
  ExecutionContext ctx;
  ctx.matrix = &matrix;
  ctx.calibration = &calibration;
  ctx.adapter = &adapter;
  ctx.adapter_hops = options.adapter_hops;

  std::vector<QueryOutcome> outcomes(queries.size());
  parallel_jobs(queries.size(), options.threads, [&](std::size_t i) {
    const LabeledQuery& q = queries[i];
    if (q.hard.empty()) {
      throw ContractError("evaluate: query " + std::to_string(i) + " has no hard answers");
    }
    FuzzyVector scores = execute(q.ast.root, ctx, nullptr);
    QueryOutcome& o = outcomes[i];
    o.hard_count = q.hard.size();
    for (std::uint32_t a : q.hard) {
      std::size_t rank = rank_hard_answer(scores, a, q.easy, q.hard);
      o.mrr_contrib += 1.0 / static_cast<double>(rank);
      if (rank <= 1) o.h1 += 1.0;
      if (rank <= 3) o.h3 += 1.0;
      if (rank <= 10) o.h10 += 1.0;
    }
    if (!options.flat_average) {
      double inv = 1.0 / static_cast<double>(o.hard_count);
      o.mrr_contrib *= inv;
      o.h1 *= inv;
      o.h3 *= inv;
      o.h10 *= inv;
    }
  });

  EvalReport report;
  std::map<std::string, double> denom;  // query count, or hard-answer count in flat mode
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const std::string& label = queries[i].ast.label;
    auto& m = report.per_structure[label];
    const QueryOutcome& o = outcomes[i];
    m.query_count += 1;
    m.mrr += o.mrr_contrib;
    m.hits1 += o.h1;
    m.hits3 += o.h3;
    m.hits10 += o.h10;
    denom[label] += options.flat_average ? static_cast<double>(o.hard_count) : 1.0;
  }
  for (auto& [label, m] : report.per_structure) {
    double d = denom[label];
    if (d > 0) {
      m.mrr /= d;
      m.hits1 /= d;
      m.hits3 /= d;
      m.hits10 /= d;
    }
  }
  report.avg_p = aggregate(report, epfo_structure_labels(), report.missing_structures);
  report.avg_ood = aggregate(report, ood_structure_labels(), report.missing_structures);
  report.avg_n = aggregate(report, negation_structure_labels(), report.missing_structures);
  std::sort(report.missing_structures.begin(), report.missing_structures.end());
  report.missing_structures.erase(
      std::unique(report.missing_structures.begin(), report.missing_structures.end()),
      report.missing_structures.end());
  return report;
}

namespace {

std::vector<std::string> ordered_labels(const EvalReport& report) {
  std::vector<std::string> labels;
  for (const auto& label : query_structure_labels()) {
    if (report.per_structure.contains(label)) labels.push_back(label);
  }
  for (const auto& [label, metrics] : report.per_structure) {
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) {
      labels.push_back(label);
    }
  }
  return labels;
}

}  // namespace

void write_report_tsv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open output file: " + path);
  out << "structure\tqueries\tmrr\thits@1\thits@3\thits@10\n";
  out.precision(6);
  out << std::fixed;
  for (const auto& label : ordered_labels(report)) {
    const auto& m = report.per_structure.at(label);
    out << label << '\t' << m.query_count << '\t' << m.mrr << '\t' << m.hits1 << '\t'
        << m.hits3 << '\t' << m.hits10 << '\n';
  }
  auto put_avg = [&](const char* name, const std::optional<double>& v) {
    out << name << "\t-\t";
    if (v) {
      out << *v;
    } else {
      out << "n/a";
    }
    out << "\t-\t-\t-\n";
  };
  put_avg("avg_p", report.avg_p);
  put_avg("avg_ood", report.avg_ood);
  put_avg("avg_n", report.avg_n);
  if (!out) throw IoError("write failed: " + path);
}

void write_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::json j;
  for (const auto& label : ordered_labels(report)) {
    const auto& m = report.per_structure.at(label);
    j["structures"][label] = {{"queries", m.query_count},
                              {"mrr", m.mrr},
                              {"hits1", m.hits1},
                              {"hits3", m.hits3},
                              {"hits10", m.hits10}};
  }
  if (report.avg_p) j["avg_p"] = *report.avg_p;
  if (report.avg_ood) j["avg_ood"] = *report.avg_ood;
  if (report.avg_n) j["avg_n"] = *report.avg_n;
  if (!report.missing_structures.empty()) j["missing"] = report.missing_structures;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open output file: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace tcqa
