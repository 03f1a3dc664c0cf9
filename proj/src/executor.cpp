#include "tcqa/executor.hpp"

#include <algorithm>
#include <cmath>

namespace tcqa {

FuzzyVector one_hot(std::uint32_t num_entities, std::uint32_t entity) {
  FuzzyVector v(num_entities, 0.0);
  v[entity] = 1.0;
  return v;
}

FuzzyVector t_and(const std::vector<FuzzyVector>& inputs) {
  if (inputs.size() < 2) throw ContractError("t_and: needs at least two inputs");
  FuzzyVector out = inputs[0];
  for (std::size_t c = 1; c < inputs.size(); ++c) {
    if (inputs[c].size() != out.size()) throw ContractError("t_and: length mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inputs[c][i];
  }
  return out;
}

FuzzyVector t_or(const std::vector<FuzzyVector>& inputs) {
  if (inputs.size() < 2) throw ContractError("t_or: needs at least two inputs");
  FuzzyVector out = inputs[0];
  for (std::size_t c = 1; c < inputs.size(); ++c) {
    if (inputs[c].size() != out.size()) throw ContractError("t_or: length mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = out[i] + inputs[c][i] - out[i] * inputs[c][i];
    }
  }
  return out;
}

FuzzyVector project(const FuzzyVector& x, std::uint32_t relation, bool negated,
                    const ExecutionContext& ctx, bool adapter_hop,
                    ProjectionDetail* detail) {
  const NeuralAdjacencyMatrix& m = *ctx.matrix;
  const CalibrationParams& cal = *ctx.calibration;
  const std::uint32_t n = m.num_entities();
  if (x.size() != n) throw ContractError("project: vector length mismatch");
  const RelationRows& rel = m.rows(relation);
  const double delta = m.delta();

  FuzzyVector result(n, 0.0);
  std::vector<std::int32_t> argmax(n, -1);

  if (!negated) {
    for (std::uint32_t i = 0; i < n; ++i) {
      if (x[i] <= 0.0 || !rel.head_present.test(i)) continue;
      const double scale = cal.scale_at(i, relation);
      const double offset = cal.offset_at(i, relation);
      const std::uint64_t begin = rel.row_offsets[i];
      const std::uint64_t end = rel.row_offsets[i + 1];
      for (std::uint64_t k = begin; k < end; ++k) {
        std::uint32_t j = rel.cols[k];
        double c = rel.observed.test(k)
                       ? 1.0
                       : calibrate_stored(rel.base[k], scale, offset, delta);
        double v = x[i] * c;
        if (v > result[j]) {
          result[j] = v;
          argmax[j] = static_cast<std::int32_t>(i);
        }
      }
    }
  } else {
    // absent entries complement to 1, so every positive source covers every
    // target; stored entries lower the candidate for their targets only
    std::vector<double> candidate(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      if (x[i] <= 0.0) continue;
      std::fill(candidate.begin(), candidate.end(), x[i]);
      if (rel.head_present.test(i)) {
        const double scale = cal.scale_at(i, relation);
        const double offset = cal.offset_at(i, relation);
        const std::uint64_t begin = rel.row_offsets[i];
        const std::uint64_t end = rel.row_offsets[i + 1];
        for (std::uint64_t k = begin; k < end; ++k) {
          double c = rel.observed.test(k)
                         ? 1.0
                         : calibrate_stored(rel.base[k], scale, offset, delta);
          candidate[rel.cols[k]] = x[i] * (1.0 - c);
        }
      }
      for (std::uint32_t j = 0; j < n; ++j) {
        if (candidate[j] > result[j]) {
          result[j] = candidate[j];
          argmax[j] = static_cast<std::int32_t>(i);
        }
      }
    }
  }

  if (detail != nullptr) {
    detail->pre_adapter = result;
    detail->argmax_source = std::move(argmax);
    detail->adapter_hop = adapter_hop;
  }

  if (adapter_hop) {
    const AdapterParams& adapter = *ctx.adapter;
    const double gain = adapter.gain[relation];
    const double bias = adapter.bias[relation];
    for (std::uint32_t j = 0; j < n; ++j) {
      if (!rel.tail_compat.test(j)) continue;
      double v = result[j] * (1.0 + gain) + bias;
      result[j] = std::clamp(v, 0.0, 1.0);
    }
  }
  return result;
}

namespace {

bool adapter_active(const ExecutionContext& ctx, const QueryNode& node) {
  switch (ctx.adapter_hops) {
    case AdapterHops::none:
      return false;
    case AdapterHops::all:
      return true;
    case AdapterHops::first:
      return node.children[0].op == QueryOp::anchor;
  }
  return true;
}

}  // namespace

FuzzyVector execute(const QueryNode& node, const ExecutionContext& ctx,
                    TraceNode* trace) {
  FuzzyVector out;
  switch (node.op) {
    case QueryOp::anchor:
      out = one_hot(ctx.matrix->num_entities(), node.entity);
      break;
    case QueryOp::projection: {
      TraceNode* child_trace = nullptr;
      if (trace != nullptr) {
        trace->children.resize(1);
        child_trace = &trace->children[0];
      }
      FuzzyVector x = execute(node.children[0], ctx, child_trace);
      ProjectionDetail detail;
      out = project(x, node.relation, node.negated, ctx, adapter_active(ctx, node),
                    trace != nullptr ? &detail : nullptr);
      if (trace != nullptr) trace->projection = std::move(detail);
      break;
    }
    case QueryOp::conjunction:
    case QueryOp::disjunction: {
      std::vector<FuzzyVector> inputs;
      inputs.reserve(node.children.size());
      if (trace != nullptr) trace->children.resize(node.children.size());
      for (std::size_t c = 0; c < node.children.size(); ++c) {
        inputs.push_back(execute(node.children[c], ctx,
                                 trace != nullptr ? &trace->children[c] : nullptr));
      }
      out = node.op == QueryOp::conjunction ? t_and(inputs) : t_or(inputs);
      break;
    }
  }
  if (trace != nullptr) trace->output = out;
  return out;
}

void ParamGradients::add(const ParamGradients& other) {
  for (const auto& [k, v] : other.scale) scale[k] += v;
  for (const auto& [k, v] : other.offset) offset[k] += v;
  if (gain.size() < other.gain.size()) gain.resize(other.gain.size(), 0.0);
  if (bias.size() < other.bias.size()) bias.resize(other.bias.size(), 0.0);
  for (std::size_t i = 0; i < other.gain.size(); ++i) gain[i] += other.gain[i];
  for (std::size_t i = 0; i < other.bias.size(); ++i) bias[i] += other.bias[i];
}

void ParamGradients::scale_by(double factor) {
  for (auto& [k, v] : scale) v *= factor;
  for (auto& [k, v] : offset) v *= factor;
  for (auto& v : gain) v *= factor;
  for (auto& v : bias) v *= factor;
}

namespace {

void check_trace(const QueryNode& node, const TraceNode& trace) {
  if (trace.children.size() != node.children.size()) {
    throw ContractError("backward: trace does not mirror the query tree");
  }
  if (node.op == QueryOp::projection && !trace.projection.has_value()) {
    throw ContractError("backward: projection trace missing");
  }
  if (!trace.output.empty() && node.op == QueryOp::projection &&
      trace.projection->pre_adapter.size() != trace.output.size()) {
    throw ContractError("backward: trace vectors inconsistent");
  }
}

// Looks up a stored entry index for (i, j) in a relation's row; returns
// npos for absent entries.
std::uint64_t find_entry(const RelationRows& rel, std::uint32_t i, std::uint32_t j) {
  constexpr std::uint64_t npos = ~std::uint64_t{0};
  if (!rel.head_present.test(i)) return npos;
  std::uint64_t begin = rel.row_offsets[i];
  std::uint64_t end = rel.row_offsets[i + 1];
  auto first = rel.cols.begin() + static_cast<std::ptrdiff_t>(begin);
  auto last = rel.cols.begin() + static_cast<std::ptrdiff_t>(end);
  auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return npos;
  return begin + static_cast<std::uint64_t>(it - first);
}

void backward_node(const QueryNode& node, const TraceNode& trace,
                   const FuzzyVector& grad_out, const ExecutionContext& ctx,
                   ParamGradients& grads) {
  check_trace(node, trace);
  const std::uint32_t n = static_cast<std::uint32_t>(grad_out.size());

  switch (node.op) {
    case QueryOp::anchor:
      return;
    case QueryOp::projection: {
      const ProjectionDetail& detail = *trace.projection;
      const NeuralAdjacencyMatrix& m = *ctx.matrix;
      const RelationRows& rel = m.rows(node.relation);
      const CalibrationParams& cal = *ctx.calibration;
      const double delta = m.delta();
      const std::uint32_t r = node.relation;

      // adapter backward: grad w.r.t. the pre-adapter max output
      FuzzyVector grad_pre = grad_out;
      if (detail.adapter_hop) {
        const double gain = ctx.adapter->gain[r];
        const double bias = ctx.adapter->bias[r];
        for (std::uint32_t j = 0; j < n; ++j) {
          if (!rel.tail_compat.test(j)) continue;
          double u = detail.pre_adapter[j] * (1.0 + gain) + bias;
          if (u <= 0.0 || u >= 1.0) {  // saturated clamp: no gradient through
            grad_pre[j] = 0.0;
            continue;
          }
          grads.gain[r] += grad_out[j] * detail.pre_adapter[j];
          grads.bias[r] += grad_out[j];
          grad_pre[j] = grad_out[j] * (1.0 + gain);
        }
      }

      // max backward: route to the recorded winning source
      const FuzzyVector& x = trace.children[0].output;
      FuzzyVector grad_child(x.size(), 0.0);
      for (std::uint32_t j = 0; j < n; ++j) {
        if (grad_pre[j] == 0.0) continue;
        std::int32_t src = detail.argmax_source[j];
        if (src < 0) continue;
        std::uint32_t i = static_cast<std::uint32_t>(src);
        std::uint64_t k = find_entry(rel, i, j);
        double c;
        bool stored_unclamped = false;
        double base = 0.0;
        if (k == ~std::uint64_t{0}) {
          c = 0.0;  // absent entry: constant
        } else if (rel.observed.test(k)) {
          c = 1.0;  // observed edge: constant
        } else {
          base = rel.base[k];
          double u = base * (1.0 + cal.scale_at(i, r)) + cal.offset_at(i, r);
          c = std::clamp(u, delta, 1.0 - delta);
          stored_unclamped = u > delta && u < 1.0 - delta;
        }
        double edge_factor = node.negated ? 1.0 - c : c;
        grad_child[i] += grad_pre[j] * edge_factor;
        if (stored_unclamped) {
          double dc = grad_pre[j] * x[i] * (node.negated ? -1.0 : 1.0);
          grads.scale[pack_pair(i, r)] += dc * base;
          grads.offset[pack_pair(i, r)] += dc;
        }
      }
      backward_node(node.children[0], trace.children[0], grad_child, ctx, grads);
      return;
    }
    case QueryOp::conjunction: {
      for (std::size_t c = 0; c < node.children.size(); ++c) {
        FuzzyVector grad_child(n, 0.0);
        for (std::uint32_t j = 0; j < n; ++j) {
          if (grad_out[j] == 0.0) continue;
          double others = 1.0;
          for (std::size_t l = 0; l < node.children.size(); ++l) {
            if (l != c) others *= trace.children[l].output[j];
          }
          grad_child[j] = grad_out[j] * others;
        }
        backward_node(node.children[c], trace.children[c], grad_child, ctx, grads);
      }
      return;
    }
    case QueryOp::disjunction: {
      for (std::size_t c = 0; c < node.children.size(); ++c) {
        FuzzyVector grad_child(n, 0.0);
        for (std::uint32_t j = 0; j < n; ++j) {
          if (grad_out[j] == 0.0) continue;
          double others = 1.0;
          for (std::size_t l = 0; l < node.children.size(); ++l) {
            if (l != c) others *= 1.0 - trace.children[l].output[j];
          }
          grad_child[j] = grad_out[j] * others;
        }
        backward_node(node.children[c], trace.children[c], grad_child, ctx, grads);
      }
      return;
    }
  }
}

}  // namespace

ParamGradients backward(const QueryNode& node, const TraceNode& trace,
                        const FuzzyVector& grad_output, const ExecutionContext& ctx) {
  ParamGradients grads(ctx.matrix->num_relations());
  backward_node(node, trace, grad_output, ctx, grads);
  return grads;
}

}  // namespace tcqa
