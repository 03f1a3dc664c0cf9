#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "support/oracle.hpp"
#include "support/synth.hpp"
#include "support/tmpdir.hpp"
#include "tcqa/adjacency.hpp"

using namespace tcqa;
namespace ts = tcqa::testsupport;

namespace {

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// one relation, chosen stored entries on row `head`
NeuralAdjacencyMatrix single_row_matrix(std::uint32_t num_entities, std::uint32_t head,
                                        std::vector<std::pair<std::uint32_t, float>> entries,
                                        std::vector<bool> observed, double delta = 1e-4) {
  NeuralAdjacencyMatrix m(num_entities, 1, delta, 0.0);
  RelationRows& rel = m.rows(0);
  rel.head_present.set(head);
  rel.observed = Bitset(entries.size());
  for (std::uint32_t h = 0; h <= num_entities; ++h) {
    rel.row_offsets[h] = h <= head ? 0 : entries.size();
  }
  for (std::size_t k = 0; k < entries.size(); ++k) {
    rel.cols.push_back(entries[k].first);
    rel.base.push_back(entries[k].second);
    if (observed[k]) rel.observed.set(k);
  }
  return m;
}

struct BuiltFixture {
  KnowledgeGraph kg;
  TypeAnnotations ann;
  TypedEntityRelationGraphs graphs;
  KgeModel model;
  NeuralAdjacencyMatrix matrix;
};

BuiltFixture build_fixture(double eps = 2e-4, bool type_skip = true) {
  BuiltFixture f;
  ts::SynthConfig config;
  config.entities = 40;
  config.groups = 2;
  config.relations = 2;
  config.test_fraction = 0.0;
  config.valid_fraction = 0.0;
  auto data = ts::make_synth_dataset(config);
  f.kg = ts::synth_graph(data);
  f.ann = ts::synth_annotations(data, f.kg);
  f.graphs = build_type_graphs(f.kg, f.ann);
  KgeConfig kc;
  kc.dim = 6;
  kc.epochs = 10;
  kc.seed = 17;
  f.model = train_kge(f.kg, kc).model;
  AdjacencyBuildConfig ac;
  ac.eps = eps;
  ac.type_skip = type_skip;
  f.matrix = build_base_matrix(f.model, f.kg, f.graphs, ac);
  return f;
}

}  // namespace

TEST_CASE("softmax of [0, ln2, ln2] is [0.2, 0.4, 0.4]") {
  auto p = softmax({0.0, std::log(2.0), std::log(2.0)});
  CHECK(p[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("softmax is stable under huge score offsets") {
  auto p = softmax({5000.0, 5000.0 + std::log(3.0)});
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("built rows equal the scaled softmax of the score row") {
  auto f = build_fixture(/*eps=*/0.0);
  EdgeIndex train = f.kg.graph_view(GraphScope::train);
  int rows_checked = 0;
  for (std::uint32_t r = 0; r < f.kg.num_relations() && rows_checked < 6; ++r) {
    const RelationRows& rel = f.matrix.rows(r);
    for (std::uint32_t h = 0; h < f.kg.num_entities() && rows_checked < 6; ++h) {
      if (!rel.head_present.test(h)) continue;
      auto probs = softmax(f.model.score_row(h, r));
      double mult = std::max<std::uint32_t>(rel.tail_counts[h], 1);
      // with eps = 0 every entity is stored
      REQUIRE(rel.row_offsets[h + 1] - rel.row_offsets[h] == f.kg.num_entities());
      for (std::uint64_t k = rel.row_offsets[h]; k < rel.row_offsets[h + 1]; ++k) {
        std::uint32_t j = rel.cols[k];
        CHECK(rel.base[k] ==
              doctest::Approx(probs[j] * mult).epsilon(1e-6));
      }
      // tail counts match the train view
      CHECK(rel.tail_counts[h] == train.tails(h, r).size());
      ++rows_checked;
    }
  }
  CHECK(rows_checked > 0);
}

TEST_CASE("pre-scaling softmax row sums to one") {
  auto f = build_fixture(/*eps=*/0.0);
  for (std::uint32_t r = 0; r < f.kg.num_relations(); ++r) {
    const RelationRows& rel = f.matrix.rows(r);
    for (std::uint32_t h = 0; h < f.kg.num_entities(); ++h) {
      if (!rel.head_present.test(h)) continue;
      double mult = std::max<std::uint32_t>(rel.tail_counts[h], 1);
      double sum = 0.0;
      for (std::uint64_t k = rel.row_offsets[h]; k < rel.row_offsets[h + 1]; ++k) {
        sum += rel.base[k];
      }
      CHECK(std::fabs(sum / mult - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("entries below eps are dropped unless observed") {
  auto f = build_fixture(/*eps=*/2e-4);
  EdgeIndex train = f.kg.graph_view(GraphScope::train);
  for (std::uint32_t r = 0; r < f.kg.num_relations(); ++r) {
    const RelationRows& rel = f.matrix.rows(r);
    for (std::uint32_t h = 0; h < f.kg.num_entities(); ++h) {
      for (std::uint64_t k = rel.row_offsets[h]; k < rel.row_offsets[h + 1]; ++k) {
        bool observed = rel.observed.test(k);
        CHECK(observed == train.has_edge(h, r, rel.cols[k]));
        if (!observed) CHECK(rel.base[k] >= f.matrix.eps());
        CHECK(rel.base[k] > 0.0f);
      }
      // every observed edge is stored
      for (std::uint32_t t : train.tails(h, r)) {
        bool found = false;
        for (std::uint64_t k = rel.row_offsets[h]; k < rel.row_offsets[h + 1]; ++k) {
          if (rel.cols[k] == t) found = true;
        }
        CHECK(found);
      }
    }
  }
}

TEST_CASE("calibrated entry applies the affine map then the clamp") {
  auto m = single_row_matrix(3, 0, {{1, 0.4f}}, {false});
  CalibrationParams params;

  SUBCASE("affine arithmetic") {
    params.scale[pack_pair(0, 0)] = 0.25;
    params.offset[pack_pair(0, 0)] = 0.05;
    CHECK(m.calibrated_entry(params, 0, 0, 1) == doctest::Approx(0.55).epsilon(1e-6));
  }
  SUBCASE("identity calibration clamps the raw value only") {
    CHECK(m.calibrated_entry(params, 0, 0, 1) == doctest::Approx(0.4).epsilon(1e-6));
  }
  SUBCASE("output above 1 - delta clamps to 0.9999") {
    params.scale[pack_pair(0, 0)] = 2.0;  // 0.4 * 3 = 1.2
    CHECK(m.calibrated_entry(params, 0, 0, 1) == 1.0 - m.delta());
    CHECK(m.calibrated_entry(params, 0, 0, 1) == doctest::Approx(0.9999));
  }
  SUBCASE("output below delta clamps to delta") {
    params.offset[pack_pair(0, 0)] = -1.0;
    CHECK(m.calibrated_entry(params, 0, 0, 1) == m.delta());
  }
  SUBCASE("absent entry reads zero") {
    CHECK(m.calibrated_entry(params, 0, 0, 2) == 0.0);
  }
  SUBCASE("absent row reads zero") {
    CHECK(m.calibrated_entry(params, 1, 0, 1) == 0.0);
  }
}

TEST_CASE("observed edges read exactly one under any calibration") {
  auto m = single_row_matrix(3, 0, {{1, 0.0001f}}, {true});
  CalibrationParams params;
  params.scale[pack_pair(0, 0)] = -5.0;
  params.offset[pack_pair(0, 0)] = -7.0;
  CHECK(m.calibrated_entry(params, 0, 0, 1) == 1.0);
}

TEST_CASE("calibrated range is {0} or [delta, 1-delta] or {1}") {
  auto f = build_fixture();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  CalibrationParams params;
  for (std::uint32_t e = 0; e < f.kg.num_entities(); e += 3) {
    for (std::uint32_t r = 0; r < f.kg.num_relations(); ++r) {
      params.scale[pack_pair(e, r)] = u(rng);
      params.offset[pack_pair(e, r)] = u(rng);
    }
  }
  EdgeIndex train = f.kg.graph_view(GraphScope::train);
  const double delta = f.matrix.delta();
  std::uniform_int_distribution<std::uint32_t> pick(0, f.kg.num_entities() - 1);
  for (int trial = 0; trial < 4000; ++trial) {
    std::uint32_t i = pick(rng);
    std::uint32_t j = pick(rng);
    std::uint32_t r = trial % f.kg.num_relations();
    double v = f.matrix.calibrated_entry(params, i, r, j);
    bool valid = v == 0.0 || v == 1.0 || (v >= delta && v <= 1.0 - delta);
    CHECK(valid);
    CHECK((v == 1.0) == train.has_edge(i, r, j));
  }
}

TEST_CASE("calibrated entry is monotone in scale and offset when unclamped") {
  auto m = single_row_matrix(3, 0, {{1, 0.3f}}, {false});
  CalibrationParams lo, hi;
  lo.scale[pack_pair(0, 0)] = 0.1;
  hi.scale[pack_pair(0, 0)] = 0.2;
  CHECK(m.calibrated_entry(lo, 0, 0, 1) < m.calibrated_entry(hi, 0, 0, 1));
  lo.offset[pack_pair(0, 0)] = 0.01;
  hi.offset[pack_pair(0, 0)] = 0.01;
  CHECK(m.calibrated_entry(lo, 0, 0, 1) < m.calibrated_entry(hi, 0, 0, 1));
}

TEST_CASE("rows outside the head mask are absent and read zero") {
  auto f = build_fixture();
  bool found_skipped = false;
  for (std::uint32_t r = 0; r < f.kg.num_relations() && !found_skipped; ++r) {
    const RelationRows& rel = f.matrix.rows(r);
    for (std::uint32_t h = 0; h < f.kg.num_entities(); ++h) {
      if (rel.head_present.test(h)) continue;
      found_skipped = true;
      CHECK(rel.row_offsets[h + 1] == rel.row_offsets[h]);
      CalibrationParams params;
      params.offset[pack_pair(h, r)] = 0.9;
      for (std::uint32_t j = 0; j < f.kg.num_entities(); j += 7) {
        CHECK(f.matrix.calibrated_entry(params, h, r, j) == 0.0);
      }
      break;
    }
  }
  CHECK(found_skipped);
}

TEST_CASE("type skipping stores strictly fewer entries than the full build") {
  auto skip = build_fixture(2e-4, true);
  AdjacencyBuildConfig full_config;
  full_config.eps = 2e-4;
  full_config.type_skip = false;
  auto full = build_base_matrix(skip.model, skip.kg, skip.graphs, full_config);
  auto report_skip = skip.matrix.storage_report();
  auto report_full = full.storage_report();
  CHECK(report_skip.stored_entries < report_full.stored_entries);
  CHECK(report_full.skipped_rows == 0);
  CHECK(report_skip.skipped_rows > 0);
  CHECK(report_skip.bytes < report_full.bytes);
}

TEST_CASE("with a huge eps only observed edges are stored") {
  auto f = build_fixture(/*eps=*/10.0);
  std::uint64_t observed = 0;
  for (std::uint32_t r = 0; r < f.kg.num_relations(); ++r) {
    observed += f.matrix.rows(r).observed.count();
    CHECK(f.matrix.rows(r).observed.count() == f.matrix.rows(r).entry_count());
  }
  CHECK(f.matrix.storage_report().stored_entries == observed);
  // the train split already carries both directions after finalize
  CHECK(observed == f.kg.triples(Split::train).size());
}

TEST_CASE("matrix files round-trip bit-identically") {
  ts::TempDir tmp;
  auto f = build_fixture();
  auto p1 = tmp.file("m1.tadj");
  auto p2 = tmp.file("m2.tadj");
  f.matrix.save(p1);
  auto loaded = NeuralAdjacencyMatrix::load(p1);
  CHECK(loaded == f.matrix);
  loaded.save(p2);
  CHECK(file_bytes(p1) == file_bytes(p2));
  CHECK(file_bytes(p1).size() == f.matrix.storage_report().bytes);
}

TEST_CASE("an empty matrix saves and loads as a valid zero-entry file") {
  ts::TempDir tmp;
  NeuralAdjacencyMatrix empty(5, 2, 1e-4, 2e-4);
  auto p = tmp.file("empty.tadj");
  empty.save(p);
  auto loaded = NeuralAdjacencyMatrix::load(p);
  CHECK(loaded == empty);
  CHECK(loaded.storage_report().stored_entries == 0);
}

TEST_CASE("bad magic and truncated matrix files raise IoError") {
  ts::TempDir tmp;
  auto bad = tmp.write("bad.tadj", "WHAT\x01xxxxxxxxxxxxxxxxxxxxxxx");
  CHECK_THROWS_AS(NeuralAdjacencyMatrix::load(bad), IoError);

  auto f = build_fixture();
  auto p = tmp.file("m.tadj");
  f.matrix.save(p);
  auto bytes = file_bytes(p);
  tmp.write("trunc.tadj", bytes.substr(0, bytes.size() * 2 / 3));
  CHECK_THROWS_AS(NeuralAdjacencyMatrix::load(tmp.file("trunc.tadj")), IoError);
}

TEST_CASE("storage report counts skipped rows against the head masks") {
  auto f = build_fixture();
  auto report = f.matrix.storage_report();
  std::uint64_t expected_skipped = 0;
  std::uint64_t expected_entries = 0;
  for (std::uint32_t r = 0; r < f.kg.num_relations(); ++r) {
    expected_skipped += f.kg.num_entities() - f.matrix.rows(r).head_present.count();
    expected_entries += f.matrix.rows(r).entry_count();
  }
  CHECK(report.skipped_rows == expected_skipped);
  CHECK(report.stored_entries == expected_entries);
}

TEST_CASE("negative eps is rejected") {
  auto f = build_fixture();
  AdjacencyBuildConfig config;
  config.eps = -1.0;
  CHECK_THROWS_AS(build_base_matrix(f.model, f.kg, f.graphs, config), ContractError);
}
