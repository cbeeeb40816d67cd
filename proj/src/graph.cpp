#include "encprov/graph.hpp"

#include <algorithm>
#include <cstdio>

#include "encprov/errors.hpp"

namespace encprov {

std::string to_string(const ActionPattern& p) {
  std::string out(1, tag_letter(p.type));
  out += '@';
  if (p.src) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(*p.src));
    out += buf;
  } else {
    out += "null";
  }
  out += ':';
  out += to_string(p.cond);
  return out;
}

VertexId ActionGraph::add_vertex(const ActionPattern& p) {
  if (index_.contains(p)) throw DuplicateVertex("duplicate vertex " + to_string(p));
  const auto id = static_cast<VertexId>(vertices_.size());
  vertices_.push_back(p);
  succ_.emplace_back();
  index_.emplace(p, id);
  return id;
}

VertexId ActionGraph::intern(const ActionPattern& p) {
  if (auto it = index_.find(p); it != index_.end()) return it->second;
  return add_vertex(p);
}

std::optional<VertexId> ActionGraph::find(const ActionPattern& p) const {
  if (auto it = index_.find(p); it != index_.end()) return it->second;
  return std::nullopt;
}

void ActionGraph::add_edge(VertexId from, VertexId to) {
  if (from >= vertices_.size() || to >= vertices_.size())
    throw ContractViolation("edge endpoint is not a vertex of this graph");
  auto& s = succ_[from];
  auto it = std::lower_bound(s.begin(), s.end(), to);
  if (it == s.end() || *it != to) s.insert(it, to);
}

void ActionGraph::add_entry(VertexId v) {
  if (v >= vertices_.size()) throw ContractViolation("entry is not a vertex of this graph");
  auto it = std::lower_bound(entries_.begin(), entries_.end(), v);
  if (it == entries_.end() || *it != v) entries_.insert(it, v);
}

bool ActionGraph::has_edge(VertexId from, VertexId to) const {
  const auto& s = succ_.at(from);
  return std::binary_search(s.begin(), s.end(), to);
}

std::size_t ActionGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& s : succ_) n += s.size();
  return n;
}

std::set<std::pair<ActionPattern, ActionPattern>> ActionGraph::edge_patterns() const {
  std::set<std::pair<ActionPattern, ActionPattern>> out;
  for (VertexId v = 0; v < vertices_.size(); ++v)
    for (VertexId w : succ_[v]) out.emplace(vertices_[v], vertices_[w]);
  return out;
}

std::set<ActionPattern> ActionGraph::vertex_patterns() const {
  return {vertices_.begin(), vertices_.end()};
}

std::set<ActionPattern> ActionGraph::entry_patterns() const {
  std::set<ActionPattern> out;
  for (VertexId v : entries_) out.insert(vertices_[v]);
  return out;
}

ActionGraph ActionGraph::canonical() const {
  ActionGraph out;
  for (const auto& [pattern, id] : index_) out.add_vertex(pattern);
  for (VertexId v = 0; v < vertices_.size(); ++v)
    for (VertexId w : succ_[v]) out.add_edge(*out.find(vertices_[v]), *out.find(vertices_[w]));
  for (VertexId v : entries_) out.add_entry(*out.find(vertices_[v]));
  return out;
}

Transaction::Transaction(std::vector<Action> body, Action terminator)
    : body_(std::move(body)), terminator_(std::move(terminator)) {
  for (const auto& a : body_)
    if (is_stop(a.type)) throw ContractViolation("transaction body holds stop action " + to_string(a));
  if (!is_stop(terminator_.type))
    throw ContractViolation("transaction terminator must be a stop action");
}

}  // namespace encprov
