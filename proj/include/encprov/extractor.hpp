#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "encprov/graph.hpp"
#include "encprov/model.hpp"
#include "encprov/program.hpp"

namespace encprov {

inline constexpr int kLoopIterationCap = 3;

struct LoopInfo {
  bool reducible = true;
  /// Headers in block order.
  std::vector<std::size_t> headers;
  /// Edges u -> h where h dominates u.
  std::set<std::pair<std::size_t, std::size_t>> back_edges;
  /// Natural-loop body (header included) per header.
  std::map<std::size_t, std::set<std::size_t>> body;
  /// Every header carries the same cap.
  int iteration_cap = kLoopIterationCap;

  bool is_back_edge(std::size_t from, std::size_t to) const { return back_edges.contains({from, to}); }
};

/// Finds natural loops via dominators over the blocks reachable from entry.
/// An irreducible CFG is reported with reducible = false.
LoopInfo loop_analysis(const Function& f);

/// Symbolic environment: a variable is concrete (value) or unconstrained
/// (nullopt). Unlisted locals read as 0.
using SymbolicEnv = std::map<std::string, std::optional<std::int64_t>>;

/// Binds every global to an unconstrained symbol.
SymbolicEnv set_symbolic_globals(const TraceProgram& p);
/// Binds the parameters of `f` to unconstrained symbols, except those pinned
/// by `overrides`.
SymbolicEnv set_symbolic_free_args(const Function& f, SymbolicEnv env,
                                   const std::map<std::string, std::int64_t>& overrides = {});

struct ExtractOptions {
  std::chrono::milliseconds timeout{10000};
  std::size_t path_cap = 10000;
  bool force_insensitive = false;
  /// Per-function hook pinning free arguments to concrete values.
  std::map<std::string, std::map<std::string, std::int64_t>> arg_overrides;
};

struct ExplorationResult {
  ActionGraph graph;
  ExtractionMethod method = ExtractionMethod::Symbolic;
  bool timed_out = false;
  bool irreducible = false;
  double coverage = 0.0;
  std::size_t covered_sites = 0;
  std::size_t reachable_sites = 0;
  std::size_t paths = 0;
  std::chrono::nanoseconds elapsed{0};
};

/// Depth-first path enumeration with constant folding. Each loop header may
/// be visited three times per activation; the third visit forgets the values
/// of variables written in the loop, a fourth visit ends the path after its
/// next action, and a fifth is pruned. Exceeding the path cap or the timeout
/// sets timed_out.
ExplorationResult symbolic_exploration(const TraceProgram& p, const Function& f, const SymbolicEnv& env,
                                       const ExtractOptions& opt);

/// Path-insensitive traversal of the static CFG: every reachable action site
/// is a vertex and u -> v when v's site follows u's without crossing another.
ExplorationResult insensitive_analysis(const TraceProgram& p, const Function& f);

/// The registered custom exception handlers, deduplicated in registration
/// order. Throws ExtractionError for an unknown or non-unary handler.
std::vector<std::string> resolve_exception_handlers(const TraceProgram& p);

/// Built-in graphs of the simulated SDK runtime.
ActionGraph runtime_enter_graph();
ActionGraph runtime_exception_graph(const TraceProgram& p, const std::vector<std::string>& handlers);

/// Statically reachable action sites of `f` (by instruction address).
std::set<std::uint64_t> reachable_sites(const Function& f);

struct ExtractionReport {
  EnclaveModel model;
  /// Per program function; graphs are also in `model`.
  std::map<std::string, ExplorationResult> results;
  std::vector<std::string> handlers;

  double aggregate_coverage() const;
};

/// Extracts every function (symbolic first, insensitive on timeout or an
/// irreducible CFG) and adds the runtime graphs and the secure table.
ExtractionReport extract_model(const TraceProgram& p, const ExtractOptions& opt = {});

}  // namespace encprov
