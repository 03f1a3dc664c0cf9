#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tcqa/adjacency.hpp"
#include "tcqa/query.hpp"

namespace tcqa {

/// Membership vector over all entities, each component in [0, 1].
using FuzzyVector = std::vector<double>;

/// Per-relation affine adjustment of projection outputs on type-compatible
/// tails: clamp(value * (1 + gain) + bias, 0, 1).
struct AdapterParams {
  std::vector<double> gain;  // per relation
  std::vector<double> bias;

  static AdapterParams zeros(std::uint32_t num_relations) {
    AdapterParams p;
    p.gain.assign(num_relations, 0.0);
    p.bias.assign(num_relations, 0.0);
    return p;
  }
};

/// Which projection hops the adapter applies to. `all` is the default;
/// `first` restricts it to anchor-adjacent projections; `none` disables it.
enum class AdapterHops { all, first, none };

struct ExecutionContext {
  const NeuralAdjacencyMatrix* matrix = nullptr;
  const CalibrationParams* calibration = nullptr;
  const AdapterParams* adapter = nullptr;
  AdapterHops adapter_hops = AdapterHops::all;
};

/// Extra bookkeeping recorded on projection nodes for the backward pass and
/// for witness extraction.
struct ProjectionDetail {
  FuzzyVector pre_adapter;
  std::vector<std::int32_t> argmax_source;  // winning source per target, -1 if none
  bool adapter_hop = false;                 // adapter active at this hop
};

/// Mirrors the AST: one node per query node, children in the same order.
struct TraceNode {
  FuzzyVector output;
  std::vector<TraceNode> children;
  std::optional<ProjectionDetail> projection;
};

FuzzyVector one_hot(std::uint32_t num_entities, std::uint32_t entity);

/// Componentwise product t-norm over >= 2 equal-length vectors.
FuzzyVector t_and(const std::vector<FuzzyVector>& inputs);

/// Componentwise product t-conorm (a + b - a*b), folded left.
FuzzyVector t_or(const std::vector<FuzzyVector>& inputs);

/// One relational hop: each target takes the max over sources of source mass
/// times the (possibly complemented) calibrated edge probability, then the
/// adapter adjusts type-compatible tails. Ties pick the lowest source id.
FuzzyVector project(const FuzzyVector& x, std::uint32_t relation, bool negated,
                    const ExecutionContext& ctx, bool adapter_hop,
                    ProjectionDetail* detail);

/// Bottom-up evaluation of the query tree; `trace` (optional) receives the
/// per-node outputs needed by backward().
FuzzyVector execute(const QueryNode& node, const ExecutionContext& ctx,
                    TraceNode* trace);

/// Gradients of a scalar loss w.r.t. the calibration maps and adapter
/// vectors, given dL/d(output).
struct ParamGradients {
  std::unordered_map<std::uint64_t, double> scale;   // calibration scale
  std::unordered_map<std::uint64_t, double> offset;  // calibration offset
  std::vector<double> gain;                          // adapter gain, per relation
  std::vector<double> bias;                          // adapter bias, per relation

  explicit ParamGradients(std::uint32_t num_relations = 0)
      : gain(num_relations, 0.0), bias(num_relations, 0.0) {}

  void add(const ParamGradients& other);
  void scale_by(double factor);
};

/// Reverse-mode accumulation through the recorded trace. Max nodes route
/// gradient to their recorded winning source; saturated clamps pass zero.
/// Throws ContractError when the trace does not mirror the AST.
ParamGradients backward(const QueryNode& node, const TraceNode& trace,
                        const FuzzyVector& grad_output, const ExecutionContext& ctx);

}  // namespace tcqa
