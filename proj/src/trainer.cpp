#include "tcqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

#include "tcqa/binio.hpp"
#include "tcqa/parallel.hpp"

namespace tcqa {

namespace {
constexpr char kParamsMagic[4] = {'T', 'P', 'A', 'R'};
constexpr std::uint8_t kParamsVersion = 1;
constexpr double kProbFloor = 1e-9;
constexpr double kAdagradEps = 1e-10;
}  // namespace

double bce_loss(const FuzzyVector& output, const std::vector<std::uint32_t>& answers) {
  const std::size_t n = output.size();
  if (answers.empty() || answers.size() >= n) {
    throw ContractError("bce_loss: answers must be a non-empty proper subset");
  }
  double pos = 0.0;
  double neg = 0.0;
  std::size_t next = 0;
  for (std::uint32_t j = 0; j < n; ++j) {
    bool is_answer = next < answers.size() && answers[next] == j;
    if (is_answer) ++next;
    double p = std::clamp(output[j], kProbFloor, 1.0 - kProbFloor);
    if (is_answer) {
      pos += std::log(p);
    } else {
      neg += std::log(1.0 - p);
    }
  }
  double n_pos = static_cast<double>(answers.size());
  double n_neg = static_cast<double>(n - answers.size());
  return -pos / n_pos - neg / n_neg;
}

FuzzyVector bce_loss_grad(const FuzzyVector& output,
                          const std::vector<std::uint32_t>& answers) {
  const std::size_t n = output.size();
  if (answers.empty() || answers.size() >= n) {
    throw ContractError("bce_loss_grad: answers must be a non-empty proper subset");
  }
  FuzzyVector grad(n, 0.0);
  double n_pos = static_cast<double>(answers.size());
  double n_neg = static_cast<double>(n - answers.size());
  std::size_t next = 0;
  for (std::uint32_t j = 0; j < n; ++j) {
    bool is_answer = next < answers.size() && answers[next] == j;
    if (is_answer) ++next;
    double p = output[j];
    if (p <= kProbFloor || p >= 1.0 - kProbFloor) continue;  // clamped: no gradient
    if (is_answer) {
      grad[j] = -1.0 / (n_pos * p);
    } else {
      grad[j] = 1.0 / (n_neg * (1.0 - p));
    }
  }
  return grad;
}

TrainState train_adapter(const NeuralAdjacencyMatrix& matrix,
                         const std::vector<LabeledQuery>& queries,
                         const AdapterTrainConfig& config) {
  if (config.learning_rate <= 0.0) {
    throw ContractError("train_adapter: learning rate must be positive");
  }
  const std::uint32_t num_relations = matrix.num_relations();

  TrainState state;
  state.adapter = AdapterParams::zeros(num_relations);
  state.gain_acc.assign(num_relations, 0.0);
  state.bias_acc.assign(num_relations, 0.0);

  std::unordered_set<std::string> wanted(config.structures.begin(),
                                         config.structures.end());
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (wanted.contains(queries[i].ast.label)) selected.push_back(i);
  }
  if (selected.empty() || config.epochs == 0) return state;

  std::mt19937_64 rng(config.seed);
  const std::size_t batch_size = std::max<std::uint32_t>(1, config.batch_size);
  double lr = config.learning_rate;

  struct QueryResult {
    ParamGradients grads;
    double loss = 0.0;
  };

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(selected.begin(), selected.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < selected.size(); start += batch_size) {
      std::size_t end = std::min(selected.size(), start + batch_size);
      std::vector<QueryResult> results(end - start);

      ExecutionContext ctx;
      ctx.matrix = &matrix;
      ctx.calibration = &state.calibration;
      ctx.adapter = &state.adapter;
      ctx.adapter_hops = config.adapter_hops;

      parallel_jobs(end - start, config.threads, [&](std::size_t slot) {
        const LabeledQuery& q = queries[selected[start + slot]];
        TraceNode trace;
        FuzzyVector out = execute(q.ast.root, ctx, &trace);
        results[slot].loss = bce_loss(out, q.easy);
        FuzzyVector grad = bce_loss_grad(out, q.easy);
        results[slot].grads = backward(q.ast.root, trace, grad, ctx);
      });

      ParamGradients batch_grads(num_relations);
      double batch_loss = 0.0;
      for (std::size_t slot = 0; slot < results.size(); ++slot) {
        if (!std::isfinite(results[slot].loss)) {
          throw Error("train_adapter: non-finite loss on query " +
                      std::to_string(selected[start + slot]));
        }
        batch_loss += results[slot].loss;
        batch_grads.add(results[slot].grads);
      }
      epoch_loss += batch_loss;
      batch_grads.scale_by(1.0 / static_cast<double>(results.size()));

      for (const auto& [key, g] : batch_grads.scale) {
        if (g == 0.0) continue;
        double& acc = state.scale_acc[key];
        acc += g * g;
        state.calibration.scale[key] -= lr * g / (std::sqrt(acc) + kAdagradEps);
      }
      for (const auto& [key, g] : batch_grads.offset) {
        if (g == 0.0) continue;
        double& acc = state.offset_acc[key];
        acc += g * g;
        state.calibration.offset[key] -= lr * g / (std::sqrt(acc) + kAdagradEps);
      }
      for (std::uint32_t r = 0; r < num_relations; ++r) {
        double g = batch_grads.gain[r];
        if (g != 0.0) {
          state.gain_acc[r] += g * g;
          state.adapter.gain[r] -= lr * g / (std::sqrt(state.gain_acc[r]) + kAdagradEps);
        }
        g = batch_grads.bias[r];
        if (g != 0.0) {
          state.bias_acc[r] += g * g;
          state.adapter.bias[r] -= lr * g / (std::sqrt(state.bias_acc[r]) + kAdagradEps);
        }
      }
    }
    state.epoch_loss.push_back(epoch_loss / static_cast<double>(selected.size()));
    lr *= config.lr_decay;
  }
  return state;
}

void save_params(const CalibrationParams& calibration, const AdapterParams& adapter,
                 const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path);
  binio::write_magic(out, kParamsMagic);
  binio::write_u8(out, kParamsVersion);
  std::uint32_t num_relations = static_cast<std::uint32_t>(adapter.gain.size());
  binio::write_u32(out, num_relations);
  for (double v : adapter.gain) binio::write_f64(out, v);
  for (double v : adapter.bias) binio::write_f64(out, v);

  auto write_sparse = [&](const std::unordered_map<std::uint64_t, double>& map) {
    std::vector<std::uint64_t> keys;
    keys.reserve(map.size());
    for (const auto& [k, v] : map) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    binio::write_u64(out, keys.size());
    for (std::uint64_t k : keys) {
      binio::write_u64(out, k);
      binio::write_f64(out, map.at(k));
    }
  };
  write_sparse(calibration.scale);
  write_sparse(calibration.offset);
  if (!out) throw IoError("write failed: " + path);
}

LoadedParams load_params(const std::string& path, std::uint32_t expected_relations) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open params file: " + path);
  binio::expect_magic(in, kParamsMagic, "parameter");
  std::uint8_t version = binio::read_u8(in);
  if (version != kParamsVersion) {
    throw IoError("unsupported parameter file version " + std::to_string(version));
  }
  LoadedParams loaded;
  loaded.num_relations = binio::read_u32(in);
  if (expected_relations > 0 && loaded.num_relations != expected_relations) {
    throw IoError("parameter file built for " + std::to_string(loaded.num_relations) +
                  " relations, expected " + std::to_string(expected_relations));
  }
  loaded.adapter.gain.resize(loaded.num_relations);
  loaded.adapter.bias.resize(loaded.num_relations);
  for (double& v : loaded.adapter.gain) v = binio::read_f64(in);
  for (double& v : loaded.adapter.bias) v = binio::read_f64(in);

  auto read_sparse = [&](std::unordered_map<std::uint64_t, double>& map) {
    std::uint64_t n = binio::read_u64(in);
    map.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint64_t k = binio::read_u64(in);
      map[k] = binio::read_f64(in);
    }
  };
  read_sparse(loaded.calibration.scale);
  read_sparse(loaded.calibration.offset);
  return loaded;
}

}  // namespace tcqa
