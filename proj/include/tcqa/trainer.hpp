#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tcqa/executor.hpp"

namespace tcqa {

struct AdapterTrainConfig {
  double learning_rate = 1e-5;
  std::uint32_t epochs = 10;
  std::uint32_t batch_size = 64;
  std::vector<std::string> structures = {"2i", "3i", "2in", "3in"};
  double lr_decay = 0.9;  // multiplicative, per epoch
  std::uint64_t seed = 0;
  unsigned threads = 0;
  AdapterHops adapter_hops = AdapterHops::all;
};

/// Joint state of both parameter families plus Adagrad accumulators and the
/// per-epoch loss history.
struct TrainState {
  CalibrationParams calibration;
  AdapterParams adapter;
  std::unordered_map<std::uint64_t, double> scale_acc;
  std::unordered_map<std::uint64_t, double> offset_acc;
  std::vector<double> gain_acc;
  std::vector<double> bias_acc;
  std::vector<double> epoch_loss;
};

/// Mean binary cross entropy over answers and all non-answers (no negative
/// sampling); probabilities are clamped to [1e-9, 1 - 1e-9] before the log.
/// Requires a non-empty, proper answer subset.
double bce_loss(const FuzzyVector& output, const std::vector<std::uint32_t>& answers);

/// dL/d(output) of bce_loss; zero where the probability clamp saturates.
FuzzyVector bce_loss_grad(const FuzzyVector& output,
                          const std::vector<std::uint32_t>& answers);

/// Trains calibration and adapter parameters jointly with Adagrad on queries
/// whose labels are in config.structures. Answer supervision is each query's
/// easy set. Parameters start at zero; a NaN loss aborts with the offending
/// query index.
TrainState train_adapter(const NeuralAdjacencyMatrix& matrix,
                         const std::vector<LabeledQuery>& queries,
                         const AdapterTrainConfig& config);

/// Parameter file TPAR v1: relation count, adapter vectors, then the sorted
/// sparse calibration entries. Round-trips bit-identically.
void save_params(const CalibrationParams& calibration, const AdapterParams& adapter,
                 const std::string& path);

struct LoadedParams {
  CalibrationParams calibration;
  AdapterParams adapter;
  std::uint32_t num_relations = 0;
};

/// `expected_relations` > 0 enforces a relation-count match (pass the
/// matrix's count to reject params trained against a different graph).
LoadedParams load_params(const std::string& path, std::uint32_t expected_relations = 0);

}  // namespace tcqa
