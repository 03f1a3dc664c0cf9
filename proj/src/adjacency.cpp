#include "tcqa/adjacency.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "tcqa/binio.hpp"
#include "tcqa/parallel.hpp"

namespace tcqa {

namespace {
constexpr char kMatrixMagic[4] = {'T', 'A', 'D', 'J'};
constexpr std::uint8_t kMatrixVersion = 1;

void write_bitset(std::ostream& os, const Bitset& b) {
  std::size_t bytes = (b.size() + 7) / 8;
  const auto& words = b.words();
  for (std::size_t i = 0; i < bytes; ++i) {
    std::uint8_t byte =
        static_cast<std::uint8_t>((words[i / 8] >> ((i % 8) * 8)) & 0xff);
    binio::write_u8(os, byte);
  }
}

Bitset read_bitset(std::istream& is, std::size_t size) {
  Bitset b(size);
  std::size_t bytes = (size + 7) / 8;
  auto& words = b.words();
  for (std::size_t i = 0; i < bytes; ++i) {
    std::uint64_t byte = binio::read_u8(is);
    words[i / 8] |= byte << ((i % 8) * 8);
  }
  return b;
}

std::uint64_t bitset_bytes(std::size_t size) { return (size + 7) / 8; }

}  // namespace

std::vector<double> softmax(const std::vector<double>& scores) {
  std::vector<double> out(scores.size());
  if (scores.empty()) return out;
  double m = -std::numeric_limits<double>::infinity();
  for (double s : scores) m = std::max(m, s);
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

NeuralAdjacencyMatrix::NeuralAdjacencyMatrix(std::uint32_t num_entities,
                                             std::uint32_t num_relations, double delta,
                                             double eps)
    : num_entities_(num_entities),
      num_relations_(num_relations),
      delta_(delta),
      eps_(eps),
      relations_(num_relations) {
  for (auto& rel : relations_) {
    rel.row_offsets.assign(num_entities + 1, 0);
    rel.tail_counts.assign(num_entities, 0);
    rel.head_present = Bitset(num_entities);
    rel.tail_compat = Bitset(num_entities);
    rel.observed = Bitset(0);
  }
}

double NeuralAdjacencyMatrix::calibrated_entry(const CalibrationParams& params,
                                               std::uint32_t i, std::uint32_t r,
                                               std::uint32_t j) const {
  const RelationRows& rel = relations_[r];
  if (!rel.head_present.test(i)) return 0.0;
  std::uint64_t begin = rel.row_offsets[i];
  std::uint64_t end = rel.row_offsets[i + 1];
  auto first = rel.cols.begin() + static_cast<std::ptrdiff_t>(begin);
  auto last = rel.cols.begin() + static_cast<std::ptrdiff_t>(end);
  auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return 0.0;
  std::uint64_t idx = begin + static_cast<std::uint64_t>(it - first);
  if (rel.observed.test(idx)) return 1.0;
  return calibrate_stored(rel.base[idx], params.scale_at(i, r), params.offset_at(i, r),
                          delta_);
}

StorageReport NeuralAdjacencyMatrix::storage_report() const {
  StorageReport report;
  report.bytes = 4 + 1 + 4 + 4 + 8 + 8;  // magic, version, counts, delta, eps
  for (const auto& rel : relations_) {
    std::uint64_t nnz = rel.entry_count();
    report.stored_entries += nnz;
    report.skipped_rows += num_entities_ - rel.head_present.count();
    report.bytes += 8;                                  // entry count
    report.bytes += (num_entities_ + 1ull) * 8;         // row offsets
    report.bytes += nnz * 4 + nnz * 4;                  // cols + base values
    report.bytes += bitset_bytes(nnz);                  // observed flags
    report.bytes += num_entities_ * 4ull;               // tail counts
    report.bytes += 2 * bitset_bytes(num_entities_);    // compat bitsets
  }
  return report;
}

void NeuralAdjacencyMatrix::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path);
  binio::write_magic(out, kMatrixMagic);
  binio::write_u8(out, kMatrixVersion);
  binio::write_u32(out, num_entities_);
  binio::write_u32(out, num_relations_);
  binio::write_f64(out, delta_);
  binio::write_f64(out, eps_);
  for (const auto& rel : relations_) {
    binio::write_u64(out, rel.entry_count());
    for (std::uint64_t v : rel.row_offsets) binio::write_u64(out, v);
    for (std::uint32_t v : rel.cols) binio::write_u32(out, v);
    for (float v : rel.base) binio::write_f32(out, v);
    write_bitset(out, rel.observed);
    for (std::uint32_t v : rel.tail_counts) binio::write_u32(out, v);
    write_bitset(out, rel.head_present);
    write_bitset(out, rel.tail_compat);
  }
  if (!out) throw IoError("write failed: " + path);
}

NeuralAdjacencyMatrix NeuralAdjacencyMatrix::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open matrix file: " + path);
  binio::expect_magic(in, kMatrixMagic, "adjacency matrix");
  std::uint8_t version = binio::read_u8(in);
  if (version != kMatrixVersion) {
    throw IoError("unsupported matrix file version " + std::to_string(version));
  }
  std::uint32_t num_entities = binio::read_u32(in);
  std::uint32_t num_relations = binio::read_u32(in);
  double delta = binio::read_f64(in);
  double eps = binio::read_f64(in);
  NeuralAdjacencyMatrix m(num_entities, num_relations, delta, eps);
  for (std::uint32_t r = 0; r < num_relations; ++r) {
    RelationRows& rel = m.relations_[r];
    std::uint64_t nnz = binio::read_u64(in);
    rel.row_offsets.resize(num_entities + 1);
    for (auto& v : rel.row_offsets) v = binio::read_u64(in);
    if (rel.row_offsets.back() != nnz) {
      throw IoError("matrix file corrupt: row offsets do not match entry count");
    }
    rel.cols.resize(nnz);
    for (auto& v : rel.cols) v = binio::read_u32(in);
    rel.base.resize(nnz);
    for (auto& v : rel.base) v = binio::read_f32(in);
    rel.observed = read_bitset(in, nnz);
    rel.tail_counts.resize(num_entities);
    for (auto& v : rel.tail_counts) v = binio::read_u32(in);
    rel.head_present = read_bitset(in, num_entities);
    rel.tail_compat = read_bitset(in, num_entities);
  }
  return m;
}

NeuralAdjacencyMatrix build_base_matrix(const KgeModel& model, const KnowledgeGraph& kg,
                                        const TypedEntityRelationGraphs& graphs,
                                        const AdjacencyBuildConfig& config) {
  if (config.eps < 0.0) throw ContractError("build_base_matrix: eps must be >= 0");
  if (!(config.delta > 0.0 && config.delta < 0.5)) {
    throw ContractError("build_base_matrix: delta must be in (0, 0.5)");
  }
  const std::uint32_t num_entities = kg.num_entities();
  const std::uint32_t num_relations = kg.num_relations();
  NeuralAdjacencyMatrix m(num_entities, num_relations, config.delta, config.eps);

  EdgeIndex train_view = kg.graph_view(GraphScope::train);

  struct RowResult {
    std::vector<std::uint32_t> cols;
    std::vector<float> base;
    std::vector<bool> observed;
  };

  for (std::uint32_t r = 0; r < num_relations; ++r) {
    RelationRows& rel = m.rows(r);
    rel.tail_compat = graphs.tail_compat[r];
    if (config.type_skip) {
      rel.head_present = graphs.head_compat[r];
    } else {
      rel.head_present.set_all();
    }
    for (std::uint32_t h = 0; h < num_entities; ++h) {
      rel.tail_counts[h] =
          static_cast<std::uint32_t>(train_view.tails(h, r).size());
    }

    std::vector<RowResult> results(num_entities);
    auto ranges = chunk_ranges(num_entities, 64);
    parallel_jobs(ranges.size(), config.threads, [&](std::size_t c) {
      for (std::size_t h = ranges[c].first; h < ranges[c].second; ++h) {
        if (!rel.head_present.test(h)) continue;
        auto scores = model.score_row(static_cast<std::uint32_t>(h), r);
        auto probs = softmax(scores);
        double multiplier = std::max<std::uint32_t>(rel.tail_counts[h], 1);
        const auto& observed_tails = train_view.tails(static_cast<std::uint32_t>(h), r);
        RowResult& row = results[h];
        std::size_t next_observed = 0;
        for (std::uint32_t j = 0; j < num_entities; ++j) {
          bool observed = next_observed < observed_tails.size() &&
                          observed_tails[next_observed] == j;
          if (observed) ++next_observed;
          double value = probs[j] * multiplier;
          if (!observed && value < config.eps) continue;
          float stored = static_cast<float>(value);
          if (stored <= 0.0f) stored = std::numeric_limits<float>::min();
          row.cols.push_back(j);
          row.base.push_back(stored);
          row.observed.push_back(observed);
        }
      }
    });

    std::uint64_t nnz = 0;
    for (const auto& row : results) nnz += row.cols.size();
    rel.cols.reserve(nnz);
    rel.base.reserve(nnz);
    rel.observed = Bitset(nnz);
    std::uint64_t offset = 0;
    for (std::uint32_t h = 0; h < num_entities; ++h) {
      rel.row_offsets[h] = offset;
      const RowResult& row = results[h];
      for (std::size_t k = 0; k < row.cols.size(); ++k) {
        rel.cols.push_back(row.cols[k]);
        rel.base.push_back(row.base[k]);
        if (row.observed[k]) rel.observed.set(offset + k);
      }
      offset += row.cols.size();
    }
    rel.row_offsets[num_entities] = offset;
  }
  return m;
}

}  // namespace tcqa
