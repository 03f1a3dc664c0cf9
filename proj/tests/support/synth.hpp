#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tcqa/kg.hpp"

// Synthetic typed knowledge graphs used across the test suites and bundled
// under data/synthetic. Entities fall into type groups; each relation maps a
// source group onto a target group with a cyclic local edge pattern, so a
// held-out edge is predictable from the observed ones.
namespace tcqa::testsupport {

struct SynthConfig {
  std::uint32_t entities = 200;
  std::uint32_t groups = 4;
  std::uint32_t relations = 8;
  double valid_fraction = 0.05;
  double test_fraction = 0.10;
  std::uint64_t seed = 7;
  bool subtypes = true;  // every 4th entity also carries a group subtype
};

struct SynthDataset {
  std::vector<std::array<std::string, 3>> train, valid, test;
  std::vector<std::pair<std::string, std::string>> types;
};

SynthDataset make_synth_dataset(const SynthConfig& config);

/// Writes train.tsv/valid.tsv/test.tsv/types.tsv under `dir`.
void write_synth_dataset(const SynthDataset& data, const std::string& dir);

/// Loads the dataset in memory: finalized graph plus annotations.
KnowledgeGraph synth_graph(const SynthDataset& data);
TypeAnnotations synth_annotations(const SynthDataset& data, const KnowledgeGraph& kg);

/// Uniform random graph, all triples in the train split, finalized.
KnowledgeGraph random_kg(std::uint32_t entities, std::uint32_t relations,
                         std::uint32_t edges, std::uint64_t seed);

/// Random type annotations: every entity gets 1..2 types from a pool.
TypeAnnotations random_types(const KnowledgeGraph& kg, std::uint32_t type_count,
                             std::uint64_t seed);

}  // namespace tcqa::testsupport
