#include "tcqa/kg.hpp"

#include <algorithm>
#include <fstream>

namespace tcqa {

const char* const kInverseSuffix = "⁻¹";  // superscript -1

std::uint32_t Vocab::intern(const std::string& name) {
  auto it = ids_.find(name);
  if (it != ids_.end()) return it->second;
  std::uint32_t id = static_cast<std::uint32_t>(names_.size());
  names_.push_back(name);
  ids_.emplace(name, id);
  return id;
}

std::optional<std::uint32_t> Vocab::find(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocab::name(std::uint32_t id) const {
  if (id >= names_.size()) throw ContractError("vocab id out of range");
  return names_[id];
}

const std::vector<std::uint32_t> EdgeIndex::kNoTails;

void EdgeIndex::add(std::uint32_t h, std::uint32_t r, std::uint32_t t) {
  Triple triple{h, r, t};
  if (!seen_.insert(triple).second) return;
  tails_[pack_pair(h, r)].push_back(t);
  edges_.push_back(triple);
  outgoing_[h].emplace_back(r, t);
}

void EdgeIndex::finalize() {
  for (auto& [key, v] : tails_) std::sort(v.begin(), v.end());
}

const std::vector<std::uint32_t>& EdgeIndex::tails(std::uint32_t h, std::uint32_t r) const {
  auto it = tails_.find(pack_pair(h, r));
  return it == tails_.end() ? kNoTails : it->second;
}

bool EdgeIndex::has_edge(std::uint32_t h, std::uint32_t r, std::uint32_t t) const {
  return seen_.contains(Triple{h, r, t});
}

namespace {

// Splits a line on tabs without merging empty fields.
std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

bool KnowledgeGraph::insert(const Triple& t, Split split) {
  int s = static_cast<int>(split);
  if (!seen_[s].insert(t).second) return false;
  triples_[s].push_back(t);
  return true;
}

LoadStats KnowledgeGraph::load_triples(const std::string& path, Split split) {
  if (finalized_) throw ContractError("cannot load triples after finalize_inverses()");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triples file: " + path);
  LoadStats stats;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 3 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    ++stats.lines;
    Triple t;
    t.head = entities_.intern(fields[0]);
    t.relation = relations_.intern(fields[1]);
    t.tail = entities_.intern(fields[2]);
    if (insert(t, split)) {
      ++stats.added;
    } else {
      ++stats.duplicates;
    }
  }
  return stats;
}

void KnowledgeGraph::add_triple(const std::string& head, const std::string& relation,
                                const std::string& tail, Split split) {
  if (finalized_) throw ContractError("cannot add triples after finalize_inverses()");
  Triple t;
  t.head = entities_.intern(head);
  t.relation = relations_.intern(relation);
  t.tail = entities_.intern(tail);
  insert(t, split);
}

void KnowledgeGraph::finalize_inverses() {
  if (finalized_) throw ContractError("finalize_inverses() called twice");
  base_relations_ = relations_.size();
  for (std::uint32_t r = 0; r < base_relations_; ++r) {
    std::string inv_name = relations_.name(r) + kInverseSuffix;
    if (relations_.find(inv_name)) {
      throw Error("relation name collides with reciprocal naming: " + inv_name);
    }
    std::uint32_t id = relations_.intern(inv_name);
    if (id != base_relations_ + r) {
      throw Error("reciprocal relation id assignment out of order");
    }
  }
  for (int s = 0; s < 3; ++s) {
    std::size_t n = triples_[s].size();  // snapshot; we append below
    for (std::size_t i = 0; i < n; ++i) {
      Triple t = triples_[s][i];
      insert(Triple{t.tail, t.relation + base_relations_, t.head},
             static_cast<Split>(s));
    }
  }
  finalized_ = true;
}

std::uint32_t KnowledgeGraph::inverse_of(std::uint32_t r) const {
  if (!finalized_) throw ContractError("graph not finalized");
  return r < base_relations_ ? r + base_relations_ : r - base_relations_;
}

EdgeIndex KnowledgeGraph::graph_view(GraphScope scope) const {
  EdgeIndex index(num_entities(), num_relations());
  for (int s = 0; s <= static_cast<int>(scope); ++s) {
    for (const Triple& t : triples_[s]) index.add(t.head, t.relation, t.tail);
  }
  index.finalize();
  return index;
}

TypeAnnotations load_types(const std::string& path, const KnowledgeGraph& kg) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open types file: " + path);
  TypeAnnotations ann;
  ann.entity_types.resize(kg.num_entities());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 2 tab-separated fields");
    }
    std::string entity = line.substr(0, tab);
    std::string type = line.substr(tab + 1);
    auto id = kg.entities().find(entity);
    if (!id) {
      ++ann.skipped_unknown;
      continue;
    }
    std::uint32_t type_id = ann.types.intern(type);
    ann.entity_types[*id].push_back(type_id);
  }
  for (auto& v : ann.entity_types) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return ann;
}

void dump_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open output file: " + path);
  for (std::uint32_t id = 0; id < vocab.size(); ++id) {
    out << vocab.name(id) << '\t' << id << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace tcqa
