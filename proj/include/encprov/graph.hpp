#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "encprov/action.hpp"

namespace encprov {

/// Vertex label: an action shape that a runtime action either matches or not.
struct ActionPattern {
  ActionType type = ActionType::Edge;
  std::optional<std::uint64_t> src;
  Condition cond;

  TransitionRule rule() const { return {type, cond}; }
  bool matches(const Action& a) const noexcept {
    return a.type == type && a.src == src && cond.matches(a.value);
  }

  friend auto operator<=>(const ActionPattern&, const ActionPattern&) = default;
  friend bool operator==(const ActionPattern&, const ActionPattern&) = default;
};

std::string to_string(const ActionPattern& p);

using VertexId = std::uint32_t;

/// Per-function graph of actions. Vertices and patterns are in one-to-one
/// correspondence; successor lists are kept sorted and duplicate free.
class ActionGraph {
 public:
  /// Inserts a new vertex. Throws DuplicateVertex if the pattern exists.
  VertexId add_vertex(const ActionPattern& p);
  /// Returns the vertex for `p`, creating it when absent.
  VertexId intern(const ActionPattern& p);
  std::optional<VertexId> find(const ActionPattern& p) const;

  void add_edge(VertexId from, VertexId to);
  void add_entry(VertexId v);

  const ActionPattern& vertex(VertexId v) const { return vertices_.at(v); }
  std::span<const VertexId> successors(VertexId v) const { return succ_.at(v); }
  std::span<const VertexId> entries() const { return entries_; }
  bool has_edge(VertexId from, VertexId to) const;

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t edge_count() const;

  /// Edge set expressed over patterns, independent of vertex numbering.
  std::set<std::pair<ActionPattern, ActionPattern>> edge_patterns() const;
  std::set<ActionPattern> vertex_patterns() const;
  std::set<ActionPattern> entry_patterns() const;

  /// Copy with vertices renumbered in pattern order.
  ActionGraph canonical() const;

  friend bool operator==(const ActionGraph& a, const ActionGraph& b) {
    return a.vertex_patterns() == b.vertex_patterns() && a.edge_patterns() == b.edge_patterns() &&
           a.entry_patterns() == b.entry_patterns();
  }

 private:
  std::vector<ActionPattern> vertices_;
  std::map<ActionPattern, VertexId> index_;
  std::vector<std::vector<VertexId>> succ_;
  std::vector<VertexId> entries_;
};

/// A run of generic actions closed by one stop action.
class Transaction {
 public:
  /// Throws ContractViolation if the body holds a stop action or the
  /// terminator is generic.
  Transaction(std::vector<Action> body, Action terminator);

  const std::vector<Action>& body() const { return body_; }
  const Action& terminator() const { return terminator_; }

 private:
  std::vector<Action> body_;
  Action terminator_;
};

}  // namespace encprov
