#include "tcqa/query.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace tcqa {

using nlohmann::json;

const std::vector<std::string>& query_structure_labels() {
  static const std::vector<std::string> labels = {"1p", "2p", "3p", "2i", "3i",
                                                  "pi", "ip", "2u", "up", "2in",
                                                  "3in", "inp", "pin", "pni"};
  return labels;
}

const std::vector<std::string>& epfo_structure_labels() {
  static const std::vector<std::string> labels = {"1p", "2p", "3p", "2i", "3i",
                                                  "pi", "ip", "2u", "up"};
  return labels;
}

const std::vector<std::string>& ood_structure_labels() {
  static const std::vector<std::string> labels = {"pi", "ip", "2u", "up"};
  return labels;
}

const std::vector<std::string>& negation_structure_labels() {
  static const std::vector<std::string> labels = {"2in", "3in", "inp", "pin", "pni"};
  return labels;
}

std::string shape_signature(const QueryNode& node) {
  switch (node.op) {
    case QueryOp::anchor:
      return "a";
    case QueryOp::projection:
      return std::string(node.negated ? "n(" : "p(") +
             shape_signature(node.children[0]) + ")";
    case QueryOp::conjunction:
    case QueryOp::disjunction: {
      std::vector<std::string> parts;
      parts.reserve(node.children.size());
      for (const auto& child : node.children) parts.push_back(shape_signature(child));
      std::sort(parts.begin(), parts.end());
      std::string out = node.op == QueryOp::conjunction ? "i[" : "u[";
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += ',';
        out += parts[i];
      }
      out += ']';
      return out;
    }
  }
  throw ContractError("shape_signature: bad node");
}

namespace {

const std::unordered_map<std::string, std::string>& label_signatures() {
  static const std::unordered_map<std::string, std::string> sigs = {
      {"1p", "p(a)"},
      {"2p", "p(p(a))"},
      {"3p", "p(p(p(a)))"},
      {"2i", "i[p(a),p(a)]"},
      {"3i", "i[p(a),p(a),p(a)]"},
      {"pi", "i[p(a),p(p(a))]"},
      {"ip", "p(i[p(a),p(a)])"},
      {"2u", "u[p(a),p(a)]"},
      {"up", "p(u[p(a),p(a)])"},
      {"2in", "i[n(a),p(a)]"},
      {"3in", "i[n(a),p(a),p(a)]"},
      {"inp", "p(i[n(a),p(a)])"},
      {"pin", "i[n(a),p(p(a))]"},
      {"pni", "i[n(p(a)),p(a)]"},
  };
  return sigs;
}

const std::unordered_map<std::string, std::string>& signature_labels() {
  static const std::unordered_map<std::string, std::string> labels = [] {
    std::unordered_map<std::string, std::string> m;
    for (const auto& [label, sig] : label_signatures()) m.emplace(sig, label);
    return m;
  }();
  return labels;
}

void check_node(const QueryNode& node, std::uint32_t num_entities,
                std::uint32_t num_relations) {
  switch (node.op) {
    case QueryOp::anchor:
      if (!node.children.empty()) throw ParseError("anchor node cannot have children");
      if (node.entity >= num_entities) throw ParseError("anchor entity id out of range");
      return;
    case QueryOp::projection:
      if (node.children.size() != 1) {
        throw ParseError("projection node needs exactly one child");
      }
      if (node.relation >= num_relations) {
        throw ParseError("projection relation id out of range");
      }
      break;
    case QueryOp::conjunction:
    case QueryOp::disjunction:
      if (node.children.size() < 2) {
        throw ParseError("and/or nodes need at least two children");
      }
      if (node.negated) throw ParseError("negation is only valid on projections");
      break;
  }
  for (const auto& child : node.children) {
    check_node(child, num_entities, num_relations);
  }
}

}  // namespace

std::optional<std::string> structure_of(const QueryNode& node) {
  const auto& labels = signature_labels();
  auto it = labels.find(shape_signature(node));
  if (it == labels.end()) return std::nullopt;
  return it->second;
}

void validate_query(const QueryAst& ast, std::uint32_t num_entities,
                    std::uint32_t num_relations) {
  check_node(ast.root, num_entities, num_relations);
  if (!ast.label.empty()) {
    auto it = label_signatures().find(ast.label);
    if (it == label_signatures().end()) {
      throw ParseError("unknown structure label: " + ast.label);
    }
    if (shape_signature(ast.root) != it->second) {
      throw ParseError("query shape does not match label " + ast.label);
    }
  }
}

namespace {

std::uint32_t resolve_id(const json& value, const Vocab* vocab, std::uint32_t limit,
                         const char* what) {
  if (value.is_string()) {
    if (vocab == nullptr) {
      throw ParseError(std::string(what) +
                       " names need a loaded vocabulary; use integer ids");
    }
    auto id = vocab->find(value.get<std::string>());
    if (!id) {
      throw ParseError(std::string("unknown ") + what + " name: " +
                       value.get<std::string>());
    }
    return *id;
  }
  if (value.is_number_unsigned() || value.is_number_integer()) {
    long long id = value.get<long long>();
    if (id < 0 || static_cast<std::uint64_t>(id) >= limit) {
      throw ParseError(std::string(what) + " id out of range: " + std::to_string(id));
    }
    return static_cast<std::uint32_t>(id);
  }
  throw ParseError(std::string(what) + " field must be a name or integer id");
}

QueryNode parse_node(const json& j, const IdResolver& ids) {
  if (!j.is_object() || !j.contains("op")) {
    throw ParseError("query node must be an object with an \"op\" field");
  }
  std::string op = j.at("op").get<std::string>();
  QueryNode node;
  if (op == "anchor") {
    node.op = QueryOp::anchor;
    node.entity = resolve_id(j.at("entity"), ids.entity_names, ids.num_entities, "entity");
  } else if (op == "proj") {
    node.op = QueryOp::projection;
    node.relation =
        resolve_id(j.at("rel"), ids.relation_names, ids.num_relations, "relation");
    node.negated = j.value("neg", false);
    node.children.push_back(parse_node(j.at("child"), ids));
  } else if (op == "and" || op == "or") {
    node.op = op == "and" ? QueryOp::conjunction : QueryOp::disjunction;
    const auto& children = j.at("children");
    if (!children.is_array()) throw ParseError("\"children\" must be an array");
    for (const auto& child : children) node.children.push_back(parse_node(child, ids));
  } else {
    throw ParseError("unknown query op: " + op);
  }
  return node;
}

json node_to_json(const QueryNode& node) {
  json j;
  switch (node.op) {
    case QueryOp::anchor:
      j["op"] = "anchor";
      j["entity"] = node.entity;
      break;
    case QueryOp::projection:
      j["op"] = "proj";
      j["rel"] = node.relation;
      if (node.negated) j["neg"] = true;
      j["child"] = node_to_json(node.children[0]);
      break;
    case QueryOp::conjunction:
    case QueryOp::disjunction: {
      j["op"] = node.op == QueryOp::conjunction ? "and" : "or";
      json children = json::array();
      for (const auto& child : node.children) children.push_back(node_to_json(child));
      j["children"] = std::move(children);
      break;
    }
  }
  return j;
}

std::vector<std::uint32_t> parse_id_array(const json& j, const IdResolver& ids) {
  std::vector<std::uint32_t> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw ParseError("answer set must be an array");
  for (const auto& v : j) {
    out.push_back(resolve_id(v, ids.entity_names, ids.num_entities, "entity"));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

json parse_json_line(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError("invalid JSON");
  return j;
}

}  // namespace

QueryAst parse_query_json(const std::string& json_text, const IdResolver& ids) {
  json j = parse_json_line(json_text);
  QueryAst ast;
  if (j.contains("ast")) {
    ast.root = parse_node(j.at("ast"), ids);
    ast.label = j.value("label", "");
  } else {
    ast.root = parse_node(j, ids);
  }
  validate_query(ast, ids.num_entities, ids.num_relations);
  return ast;
}

QueryAst parse_query_json(const std::string& json_text, const KnowledgeGraph& kg) {
  return parse_query_json(json_text, IdResolver::from(kg));
}

std::string query_to_json(const QueryAst& ast) {
  json j;
  if (!ast.label.empty()) j["label"] = ast.label;
  j["ast"] = node_to_json(ast.root);
  return j.dump();
}

LabeledQuery parse_labeled_query(const std::string& line, const IdResolver& ids) {
  json j = parse_json_line(line);
  LabeledQuery q;
  q.ast.root = parse_node(j.at("ast"), ids);
  q.ast.label = j.value("label", "");
  validate_query(q.ast, ids.num_entities, ids.num_relations);
  q.easy = parse_id_array(j.contains("easy") ? j.at("easy") : json(), ids);
  q.hard = parse_id_array(j.contains("hard") ? j.at("hard") : json(), ids);
  std::vector<std::uint32_t> overlap;
  std::set_intersection(q.easy.begin(), q.easy.end(), q.hard.begin(), q.hard.end(),
                        std::back_inserter(overlap));
  if (!overlap.empty()) throw ParseError("easy and hard answer sets overlap");
  return q;
}

std::string labeled_query_to_json(const LabeledQuery& q) {
  json j;
  if (!q.ast.label.empty()) j["label"] = q.ast.label;
  j["ast"] = node_to_json(q.ast.root);
  j["easy"] = q.easy;
  j["hard"] = q.hard;
  return j.dump();
}

std::vector<LabeledQuery> load_queries_jsonl(const std::string& path,
                                             const IdResolver& ids) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open queries file: " + path);
  std::vector<LabeledQuery> queries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      queries.push_back(parse_labeled_query(line, ids));
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return queries;
}

std::vector<LabeledQuery> load_queries_jsonl(const std::string& path,
                                             const KnowledgeGraph& kg) {
  return load_queries_jsonl(path, IdResolver::from(kg));
}

void save_queries_jsonl(const std::vector<LabeledQuery>& queries,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open output file: " + path);
  for (const auto& q : queries) out << labeled_query_to_json(q) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

namespace {

std::vector<std::uint8_t> eval_mask(const QueryNode& node, const EdgeIndex& edges) {
  const std::uint32_t n = edges.num_entities();
  std::vector<std::uint8_t> out(n, 0);
  switch (node.op) {
    case QueryOp::anchor:
      out[node.entity] = 1;
      return out;
    case QueryOp::projection: {
      auto child = eval_mask(node.children[0], edges);
      if (!node.negated) {
        for (std::uint32_t i = 0; i < n; ++i) {
          if (!child[i]) continue;
          for (std::uint32_t t : edges.tails(i, node.relation)) out[t] = 1;
        }
      } else {
        // a target qualifies when at least one source misses it
        std::vector<std::uint8_t> reached(n);
        for (std::uint32_t i = 0; i < n; ++i) {
          if (!child[i]) continue;
          std::fill(reached.begin(), reached.end(), 0);
          for (std::uint32_t t : edges.tails(i, node.relation)) reached[t] = 1;
          for (std::uint32_t j = 0; j < n; ++j) {
            if (!reached[j]) out[j] = 1;
          }
        }
      }
      return out;
    }
    case QueryOp::conjunction: {
      out = eval_mask(node.children[0], edges);
      for (std::size_t c = 1; c < node.children.size(); ++c) {
        auto m = eval_mask(node.children[c], edges);
        for (std::uint32_t i = 0; i < n; ++i) out[i] &= m[i];
      }
      return out;
    }
    case QueryOp::disjunction: {
      out = eval_mask(node.children[0], edges);
      for (std::size_t c = 1; c < node.children.size(); ++c) {
        auto m = eval_mask(node.children[c], edges);
        for (std::uint32_t i = 0; i < n; ++i) out[i] |= m[i];
      }
      return out;
    }
  }
  throw ContractError("symbolic_answers: bad node");
}

}  // namespace

std::vector<std::uint32_t> symbolic_answers(const QueryNode& node,
                                            const EdgeIndex& edges) {
  auto mask = eval_mask(node, edges);
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(i);
  }
  return out;
}

namespace {

QueryNode make_anchor(std::uint32_t entity) {
  QueryNode n;
  n.op = QueryOp::anchor;
  n.entity = entity;
  return n;
}

QueryNode make_projection(std::uint32_t relation, bool negated, QueryNode child) {
  QueryNode n;
  n.op = QueryOp::projection;
  n.relation = relation;
  n.negated = negated;
  n.children.push_back(std::move(child));
  return n;
}

QueryNode make_op(QueryOp op, std::vector<QueryNode> children) {
  QueryNode n;
  n.op = op;
  n.children = std::move(children);
  return n;
}

struct Sampler {
  const KnowledgeGraph& kg;
  const EdgeIndex& view;
  std::mt19937_64& rng;

  std::size_t pick(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  }

  Triple random_edge() { return view.edges()[pick(view.edges().size())]; }

  // (anchor, relation) such that relation(anchor, target) holds; uses the
  // reciprocal arcs of the target, so every incoming edge is reachable
  std::optional<std::pair<std::uint32_t, std::uint32_t>> incoming(std::uint32_t target) {
    const auto& out = view.outgoing(target);
    if (out.empty()) return std::nullopt;
    auto [r, m] = out[pick(out.size())];
    return std::make_pair(m, kg.inverse_of(r));
  }

  // (anchor, relation) whose image does not contain target
  std::optional<std::pair<std::uint32_t, std::uint32_t>> negated_anchor(
      std::uint32_t target) {
    for (int tries = 0; tries < 64; ++tries) {
      Triple e = random_edge();
      if (!view.has_edge(e.head, e.relation, target)) {
        return std::make_pair(e.head, e.relation);
      }
    }
    return std::nullopt;
  }
};

}  // namespace

GenerationResult generate_queries(const KnowledgeGraph& kg, const std::string& label,
                                  std::size_t count, std::uint64_t seed,
                                  Split target_split) {
  if (!kg.finalized()) throw ContractError("generate_queries: graph not finalized");
  if (!label_signatures().contains(label)) {
    throw ContractError("generate_queries: unknown structure label " + label);
  }

  GraphScope fuller_scope = GraphScope::train;
  GraphScope smaller_scope = GraphScope::train;
  if (target_split == Split::valid) {
    fuller_scope = GraphScope::train_valid;
  } else if (target_split == Split::test) {
    fuller_scope = GraphScope::train_valid_test;
    smaller_scope = GraphScope::train_valid;
  }
  EdgeIndex fuller = kg.graph_view(fuller_scope);
  EdgeIndex smaller = kg.graph_view(smaller_scope);

  GenerationResult result;
  if (count == 0 || fuller.edges().empty()) {
    result.complete = count == 0;
    return result;
  }

  std::mt19937_64 rng(seed);
  Sampler sample{kg, fuller, rng};
  const std::size_t max_attempts = 100 * count;
  const std::uint32_t num_entities = kg.num_entities();

  auto build = [&](std::uint32_t target) -> std::optional<QueryNode> {
    if (label == "1p") {
      auto in = sample.incoming(target);
      if (!in) return std::nullopt;
      return make_projection(in->second, false, make_anchor(in->first));
    }
    if (label == "2p" || label == "3p") {
      std::uint32_t cur = target;
      std::vector<std::uint32_t> rels;
      std::size_t hops = label == "2p" ? 2 : 3;
      for (std::size_t i = 0; i < hops; ++i) {
        auto in = sample.incoming(cur);
        if (!in) return std::nullopt;
        rels.push_back(in->second);
        cur = in->first;
      }
      QueryNode node = make_anchor(cur);
      for (auto it = rels.rbegin(); it != rels.rend(); ++it) {
        node = make_projection(*it, false, std::move(node));
      }
      return node;
    }
    if (label == "2i" || label == "3i") {
      std::size_t branches = label == "2i" ? 2 : 3;
      std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
      for (int tries = 0; tries < 64 && pairs.size() < branches; ++tries) {
        auto in = sample.incoming(target);
        if (!in) return std::nullopt;
        if (std::find(pairs.begin(), pairs.end(), *in) == pairs.end()) {
          pairs.push_back(*in);
        }
      }
      if (pairs.size() < branches) return std::nullopt;
      std::vector<QueryNode> children;
      for (auto [anchor, rel] : pairs) {
        children.push_back(make_projection(rel, false, make_anchor(anchor)));
      }
      return make_op(QueryOp::conjunction, std::move(children));
    }
    if (label == "pi") {
      auto mid = sample.incoming(target);
      if (!mid) return std::nullopt;
      auto first = sample.incoming(mid->first);
      auto direct = sample.incoming(target);
      if (!first || !direct) return std::nullopt;
      std::vector<QueryNode> children;
      children.push_back(make_projection(
          mid->second, false,
          make_projection(first->second, false, make_anchor(first->first))));
      children.push_back(make_projection(direct->second, false, make_anchor(direct->first)));
      return make_op(QueryOp::conjunction, std::move(children));
    }
    if (label == "ip") {
      auto last = sample.incoming(target);
      if (!last) return std::nullopt;
      std::uint32_t mid = last->first;
      std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
      for (int tries = 0; tries < 64 && pairs.size() < 2; ++tries) {
        auto in = sample.incoming(mid);
        if (!in) return std::nullopt;
        if (std::find(pairs.begin(), pairs.end(), *in) == pairs.end()) {
          pairs.push_back(*in);
        }
      }
      if (pairs.size() < 2) return std::nullopt;
      std::vector<QueryNode> children;
      for (auto [anchor, rel] : pairs) {
        children.push_back(make_projection(rel, false, make_anchor(anchor)));
      }
      return make_projection(last->second, false,
                             make_op(QueryOp::conjunction, std::move(children)));
    }
    if (label == "2u") {
      auto in = sample.incoming(target);
      if (!in) return std::nullopt;
      Triple other = sample.random_edge();
      std::pair<std::uint32_t, std::uint32_t> alt{other.head, other.relation};
      if (alt == *in) return std::nullopt;
      std::vector<QueryNode> children;
      children.push_back(make_projection(in->second, false, make_anchor(in->first)));
      children.push_back(make_projection(alt.second, false, make_anchor(alt.first)));
      return make_op(QueryOp::disjunction, std::move(children));
    }
    if (label == "up") {
      auto last = sample.incoming(target);
      if (!last) return std::nullopt;
      auto in = sample.incoming(last->first);
      if (!in) return std::nullopt;
      Triple other = sample.random_edge();
      std::pair<std::uint32_t, std::uint32_t> alt{other.head, other.relation};
      if (alt == *in) return std::nullopt;
      std::vector<QueryNode> children;
      children.push_back(make_projection(in->second, false, make_anchor(in->first)));
      children.push_back(make_projection(alt.second, false, make_anchor(alt.first)));
      return make_projection(last->second, false,
                             make_op(QueryOp::disjunction, std::move(children)));
    }
    if (label == "2in" || label == "3in") {
      std::size_t positives = label == "2in" ? 1 : 2;
      std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
      for (int tries = 0; tries < 64 && pairs.size() < positives; ++tries) {
        auto in = sample.incoming(target);
        if (!in) return std::nullopt;
        if (std::find(pairs.begin(), pairs.end(), *in) == pairs.end()) {
          pairs.push_back(*in);
        }
      }
      if (pairs.size() < positives) return std::nullopt;
      auto neg = sample.negated_anchor(target);
      if (!neg) return std::nullopt;
      std::vector<QueryNode> children;
      for (auto [anchor, rel] : pairs) {
        children.push_back(make_projection(rel, false, make_anchor(anchor)));
      }
      children.push_back(make_projection(neg->second, true, make_anchor(neg->first)));
      return make_op(QueryOp::conjunction, std::move(children));
    }
    if (label == "inp") {
      auto last = sample.incoming(target);
      if (!last) return std::nullopt;
      std::uint32_t mid = last->first;
      auto pos = sample.incoming(mid);
      auto neg = sample.negated_anchor(mid);
      if (!pos || !neg) return std::nullopt;
      std::vector<QueryNode> children;
      children.push_back(make_projection(pos->second, false, make_anchor(pos->first)));
      children.push_back(make_projection(neg->second, true, make_anchor(neg->first)));
      return make_projection(last->second, false,
                             make_op(QueryOp::conjunction, std::move(children)));
    }
    if (label == "pin") {
      auto mid = sample.incoming(target);
      if (!mid) return std::nullopt;
      auto first = sample.incoming(mid->first);
      auto neg = sample.negated_anchor(target);
      if (!first || !neg) return std::nullopt;
      std::vector<QueryNode> children;
      children.push_back(make_projection(
          mid->second, false,
          make_projection(first->second, false, make_anchor(first->first))));
      children.push_back(make_projection(neg->second, true, make_anchor(neg->first)));
      return make_op(QueryOp::conjunction, std::move(children));
    }
    if (label == "pni") {
      auto direct = sample.incoming(target);
      if (!direct) return std::nullopt;
      for (int tries = 0; tries < 64; ++tries) {
        Triple chain = sample.random_edge();
        Triple rel_pick = sample.random_edge();
        std::uint32_t r2 = rel_pick.relation;
        bool feasible = false;
        for (std::uint32_t m : fuller.tails(chain.head, chain.relation)) {
          if (!fuller.has_edge(m, r2, target)) {
            feasible = true;
            break;
          }
        }
        if (!feasible) continue;
        std::vector<QueryNode> children;
        children.push_back(make_projection(
            r2, true,
            make_projection(chain.relation, false, make_anchor(chain.head))));
        children.push_back(
            make_projection(direct->second, false, make_anchor(direct->first)));
        return make_op(QueryOp::conjunction, std::move(children));
      }
      return std::nullopt;
    }
    return std::nullopt;
  };

  while (result.queries.size() < count && result.attempts < max_attempts) {
    ++result.attempts;
    Triple seed_edge = sample.random_edge();
    std::uint32_t target = seed_edge.tail;
    auto node = build(target);
    if (!node) continue;

    LabeledQuery q;
    q.ast.root = std::move(*node);
    q.ast.label = label;
    auto full_answers = symbolic_answers(q.ast.root, fuller);
    if (full_answers.empty() || full_answers.size() >= num_entities) continue;
    q.easy = symbolic_answers(q.ast.root, smaller);
    std::set_difference(full_answers.begin(), full_answers.end(), q.easy.begin(),
                        q.easy.end(), std::back_inserter(q.hard));
    if (target_split == Split::train) {
      if (q.easy.empty() || q.easy.size() >= num_entities) continue;
      q.hard.clear();
    } else {
      if (q.hard.empty()) continue;
    }
    result.queries.push_back(std::move(q));
  }
  result.complete = result.queries.size() == count;
  return result;
}

}  // namespace tcqa
