#include "encprov/extractor.hpp"

#include <algorithm>

#include "encprov/errors.hpp"
#include "encprov/runtime_layout.hpp"

namespace encprov {

namespace {

using Clock = std::chrono::steady_clock;
using Value = std::optional<std::int64_t>;

bool is_site(Opcode op) {
  switch (op) {
    case Opcode::Br:
    case Opcode::Call:
    case Opcode::ICall:
    case Opcode::Ret:
    case Opcode::Stop:
    case Opcode::FnPtr:
    case Opcode::VPtr:
    case Opcode::Ocall:
      return true;
    default:
      return false;
  }
}

ActionPattern pattern(ActionType t, std::uint64_t src, Condition c) { return ActionPattern{t, src, c}; }

/// Condition attached to a value-carrying site. Only syntactic constants are
/// pinned so that both analyses produce the same patterns.
Condition static_value_condition(const TraceProgram& p, const Instruction& ins) {
  if (ins.args.empty()) return Condition::any();
  const Operand& op = ins.args[0];
  if (op.kind == Operand::Kind::Literal) return Condition::equals(op.literal);
  if (op.kind == Operand::Kind::FuncAddr) return Condition::equals(static_cast<std::int64_t>(p.find(op.name)->entry));
  return Condition::any();
}

std::size_t icall_arity(const Instruction& ins) { return ins.args.size() - 1; }

std::vector<const Function*> functions_with_arity(const TraceProgram& p, std::size_t arity) {
  std::vector<const Function*> out;
  for (const auto& f : p.functions)
    if (f.params.size() == arity) out.push_back(&f);
  return out;
}

/// Static candidate set of an indirect call: the named or literal target when
/// it is a function of the right arity, otherwise every same-arity function.
std::vector<const Function*> static_icall_candidates(const TraceProgram& p, const Instruction& ins) {
  const Operand& t = ins.args[0];
  const Function* f = nullptr;
  if (t.kind == Operand::Kind::Var) return functions_with_arity(p, icall_arity(ins));
  f = t.kind == Operand::Kind::FuncAddr ? p.find(t.name) : p.find_entry(static_cast<std::uint64_t>(t.literal));
  if (f && f->params.size() == icall_arity(ins)) return {f};
  return {};
}

std::vector<char> reachable_blocks(const Function& f) {
  std::vector<char> seen(f.blocks.size(), 0);
  std::vector<std::size_t> work{f.entry_block};
  seen[f.entry_block] = 1;
  while (!work.empty()) {
    const std::size_t b = work.back();
    work.pop_back();
    for (std::size_t s : f.blocks[b].successors())
      if (!seen[s]) {
        seen[s] = 1;
        work.push_back(s);
      }
  }
  return seen;
}

void finish_coverage(ExplorationResult& r, const Function& f) {
  const auto sites = reachable_sites(f);
  std::set<std::uint64_t> covered;
  for (VertexId v = 0; v < r.graph.vertex_count(); ++v)
    if (const auto& src = r.graph.vertex(v).src; src && sites.contains(*src)) covered.insert(*src);
  r.reachable_sites = sites.size();
  r.covered_sites = covered.size();
  r.coverage = sites.empty() ? 1.0 : static_cast<double>(covered.size()) / static_cast<double>(sites.size());
}

// ---------------------------------------------------------------------------
// Symbolic exploration

class Explorer {
 public:
  Explorer(const TraceProgram& p, const Function& f, const SymbolicEnv& env, const ExtractOptions& opt)
      : p_(p), f_(f), opt_(opt), loops_(loop_analysis(f)) {
    auto intern_var = [&](const std::string& n) {
      if (n.empty() || n == kDiscard || var_ids_.contains(n)) return;
      var_ids_.emplace(n, var_names_.size());
      var_names_.push_back(n);
    };
    for (const auto& g : p.globals) intern_var(g.name);
    for (const auto& prm : f.params) intern_var(prm.name);
    for (const auto& b : f.blocks)
      for (const auto& ins : b.instrs) {
        intern_var(ins.dst);
        for (const auto& a : ins.args)
          if (a.kind == Operand::Kind::Var) intern_var(a.name);
      }
    initial_.assign(var_names_.size(), Value{0});
    for (const auto& [name, v] : env)
      if (auto it = var_ids_.find(name); it != var_ids_.end()) initial_[it->second] = v;
    for (const auto& g : p.globals) global_ids_.push_back(var_ids_.at(g.name));
    for (const auto& [h, body] : loops_.body) {
      std::vector<std::size_t>& written = loop_writes_[h];
      for (std::size_t b : body)
        for (const auto& ins : f.blocks[b].instrs)
          if (!ins.dst.empty() && ins.dst != kDiscard) written.push_back(var_ids_.at(ins.dst));
      std::sort(written.begin(), written.end());
      written.erase(std::unique(written.begin(), written.end()), written.end());
    }
  }

  ExplorationResult run() {
    ExplorationResult r;
    const auto start = Clock::now();
    deadline_ = start + opt_.timeout;
    if (!loops_.reducible) {
      r.irreducible = true;
      r.elapsed = Clock::now() - start;
      return r;
    }
    State s0;
    s0.env = initial_;
    s0.visits.assign(f_.blocks.size(), 0);
    s0.block = f_.entry_block;
    if (loops_.body.contains(s0.block)) s0.visits[s0.block] = 1;
    stack_.push_back(std::move(s0));
    while (!stack_.empty() && !timed_out_) {
      State s = std::move(stack_.back());
      stack_.pop_back();
      run_path(s);
    }
    r.graph = std::move(graph_);
    r.timed_out = timed_out_;
    r.paths = paths_;
    r.elapsed = Clock::now() - start;
    finish_coverage(r, f_);
    return r;
  }

 private:
  struct State {
    std::size_t block = 0, idx = 0;
    std::vector<Value> env;
    std::vector<int> visits;
    std::vector<VertexId> prev;
    bool started = false;
    bool truncate = false;
  };

  Value eval(const State& s, const Operand& op) const {
    switch (op.kind) {
      case Operand::Kind::Literal: return op.literal;
      case Operand::Kind::FuncAddr: return static_cast<std::int64_t>(p_.find(op.name)->entry);
      case Operand::Kind::Var: return s.env[var_ids_.at(op.name)];
    }
    return std::nullopt;
  }

  void set(State& s, const std::string& dst, Value v) const {
    if (dst.empty() || dst == kDiscard) return;
    s.env[var_ids_.at(dst)] = v;
  }

  void havoc_globals(State& s) const {
    for (std::size_t g : global_ids_) s.env[g] = std::nullopt;
  }

  void link(State& s, const std::vector<VertexId>& targets) {
    for (VertexId v : targets) {
      if (!s.started)
        graph_.add_entry(v);
      else
        for (VertexId u : s.prev) graph_.add_edge(u, v);
    }
    s.prev = targets;
    s.started = true;
  }

  void emit(State& s, const ActionPattern& pat) { link(s, {graph_.intern(pat)}); }

  /// Ends the current path; true when the path cap is exhausted.
  void end_path() {
    ++paths_;
    if (paths_ >= opt_.path_cap) timed_out_ = true;
  }

  /// Moves to block `to`; false when the loop bound prunes the path.
  bool enter_block(State& s, std::size_t from, std::size_t to) {
    if (loops_.body.contains(to)) {
      int& visits = s.visits[to];
      visits = loops_.is_back_edge(from, to) ? visits + 1 : 1;
      if (visits == loops_.iteration_cap) {
        for (std::size_t v : loop_writes_.at(to)) s.env[v] = std::nullopt;
      } else if (visits == loops_.iteration_cap + 1) {
        s.truncate = true;
      } else if (visits > loops_.iteration_cap + 1) {
        return false;
      }
    }
    s.block = to;
    s.idx = 0;
    return true;
  }

  bool tick() {
    if ((++steps_ & 1023) == 0 && Clock::now() > deadline_) timed_out_ = true;
    return !timed_out_;
  }

  void run_path(State& s) {
    for (;;) {
      if (!tick()) return;
      const Block& b = f_.blocks[s.block];
      if (s.idx == b.instrs.size()) {
        // Only blocks without br/ret reach their end.
        if (!enter_block(s, s.block, *b.next)) return end_path();
        continue;
      }
      const Instruction& ins = b.instrs[s.idx];
      const std::uint64_t site = ins.addr;
      switch (ins.op) {
        case Opcode::Nop:
        case Opcode::Store:
        case Opcode::RegHandler:
          break;
        case Opcode::Assign:
          set(s, ins.dst, eval(s, ins.args[0]));
          break;
        case Opcode::Binop: {
          const Value a = eval(s, ins.args[0]);
          const Value c = eval(s, ins.args[1]);
          set(s, ins.dst, a && c ? Value{eval_binop(ins.binop, *a, *c)} : std::nullopt);
          break;
        }
        case Opcode::Load:
          set(s, ins.dst, std::nullopt);
          break;
        case Opcode::Fault: {
          const Value v = eval(s, ins.args[0]);
          if (!v || *v != 0) havoc_globals(s);
          break;
        }
        case Opcode::Br: {
          const Value v = eval(s, ins.args[0]);
          const bool can_true = !v || *v != 0;
          const bool can_false = !v || *v == 0;
          if (can_true && can_false) {
            State other = s;
            if (take_branch(other, ins, false)) stack_.push_back(std::move(other));
          }
          if (!take_branch(s, ins, can_true)) return;
          continue;
        }
        case Opcode::Call:
          emit(s, pattern(ActionType::Edge, site, Condition::call(p_.find(ins.callee)->entry)));
          havoc_globals(s);
          set(s, ins.dst, std::nullopt);
          break;
        case Opcode::ICall: {
          const Value t = eval(s, ins.args[0]);
          std::vector<const Function*> targets;
          if (t) {
            const Function* f = p_.find_entry(static_cast<std::uint64_t>(*t));
            if (f && f->params.size() == icall_arity(ins)) targets.push_back(f);
          } else {
            targets = functions_with_arity(p_, icall_arity(ins));
          }
          if (targets.empty()) return end_path();
          std::vector<VertexId> vs;
          for (const Function* f : targets)
            vs.push_back(graph_.intern(pattern(ActionType::Edge, site, Condition::call(f->entry))));
          link(s, vs);
          havoc_globals(s);
          set(s, ins.dst, std::nullopt);
          break;
        }
        case Opcode::Ret:
          emit(s, pattern(ActionType::Edge, site, Condition::ret()));
          return end_path();
        case Opcode::Stop:
          emit(s, pattern(ins.tag, site, static_value_condition(p_, ins)));
          break;
        case Opcode::FnPtr:
          emit(s, pattern(ActionType::FnPtrAssign, site, static_value_condition(p_, ins)));
          set(s, ins.dst, eval(s, ins.args[0]));
          break;
        case Opcode::VPtr:
          emit(s, pattern(ActionType::VPtrAssign, site, static_value_condition(p_, ins)));
          set(s, ins.dst, eval(s, ins.args[0]));
          break;
        case Opcode::Ocall:
          emit(s, pattern(ActionType::OcallCtxGen, site, Condition::any()));
          emit(s, pattern(ActionType::OcallExit, site, Condition::any()));
          emit(s, pattern(ActionType::Enter, site, Condition::equals(runtime::kOretIndex)));
          emit(s, pattern(ActionType::OcallCtxUse, site, Condition::any()));
          havoc_globals(s);
          set(s, ins.dst, std::nullopt);
          break;
      }
      if (is_site(ins.op) && s.truncate) return end_path();
      ++s.idx;
    }
  }

  /// Emits the branch outcome and moves to its successor; false when the
  /// path ends here.
  bool take_branch(State& s, const Instruction& ins, bool taken) {
    emit(s, pattern(ActionType::Branch, ins.addr, Condition::equals(taken ? 1 : 0)));
    if (s.truncate) {
      end_path();
      return false;
    }
    const Block& b = f_.blocks[s.block];
    if (!enter_block(s, s.block, taken ? *b.on_true : *b.on_false)) {
      end_path();
      return false;
    }
    return true;
  }

  const TraceProgram& p_;
  const Function& f_;
  const ExtractOptions& opt_;
  LoopInfo loops_;
  std::map<std::string, std::size_t> var_ids_;
  std::vector<std::string> var_names_;
  std::vector<std::size_t> global_ids_;
  std::map<std::size_t, std::vector<std::size_t>> loop_writes_;
  std::vector<Value> initial_;
  std::vector<State> stack_;
  ActionGraph graph_;
  std::size_t paths_ = 0;
  std::uint64_t steps_ = 0;
  bool timed_out_ = false;
  Clock::time_point deadline_;
};

// ---------------------------------------------------------------------------
// Insensitive analysis

struct Position {
  std::size_t block, idx;
};

class StaticWalker {
 public:
  StaticWalker(const TraceProgram& p, const Function& f) : p_(p), f_(f) {}

  ExplorationResult run() {
    const auto start = Clock::now();
    ExplorationResult r;
    r.method = ExtractionMethod::InsensitiveFallback;
    const auto reach = reachable_blocks(f_);
    for (std::size_t b = 0; b < f_.blocks.size(); ++b) {
      if (!reach[b]) continue;
      for (std::size_t i = 0; i < f_.blocks[b].instrs.size(); ++i) {
        const Instruction& ins = f_.blocks[b].instrs[i];
        if (!is_site(ins.op)) continue;
        for (const auto& [out, from] : exits(ins, {b, i}))
          for (const Instruction* t : next_sites(from))
            for (VertexId v : in_vertices(*t)) graph_.add_edge(out, v);
      }
    }
    for (const Instruction* t : next_sites({f_.entry_block, 0}))
      for (VertexId v : in_vertices(*t)) graph_.add_entry(v);
    r.graph = std::move(graph_);
    r.paths = 1;
    r.elapsed = Clock::now() - start;
    finish_coverage(r, f_);
    return r;
  }

 private:
  std::vector<VertexId> in_vertices(const Instruction& ins) {
    const std::uint64_t site = ins.addr;
    switch (ins.op) {
      case Opcode::Br:
        return {graph_.intern(pattern(ActionType::Branch, site, Condition::equals(0))),
                graph_.intern(pattern(ActionType::Branch, site, Condition::equals(1)))};
      case Opcode::Call:
        return {graph_.intern(pattern(ActionType::Edge, site, Condition::call(p_.find(ins.callee)->entry)))};
      case Opcode::ICall: {
        std::vector<VertexId> out;
        for (const Function* f : static_icall_candidates(p_, ins))
          out.push_back(graph_.intern(pattern(ActionType::Edge, site, Condition::call(f->entry))));
        return out;
      }
      case Opcode::Ret:
        return {graph_.intern(pattern(ActionType::Edge, site, Condition::ret()))};
      case Opcode::Stop:
        return {graph_.intern(pattern(ins.tag, site, static_value_condition(p_, ins)))};
      case Opcode::FnPtr:
        return {graph_.intern(pattern(ActionType::FnPtrAssign, site, static_value_condition(p_, ins)))};
      case Opcode::VPtr:
        return {graph_.intern(pattern(ActionType::VPtrAssign, site, static_value_condition(p_, ins)))};
      case Opcode::Ocall: {
        const VertexId g = graph_.intern(pattern(ActionType::OcallCtxGen, site, Condition::any()));
        const VertexId d = graph_.intern(pattern(ActionType::OcallExit, site, Condition::any()));
        const VertexId n = graph_.intern(pattern(ActionType::Enter, site, Condition::equals(runtime::kOretIndex)));
        const VertexId c = graph_.intern(pattern(ActionType::OcallCtxUse, site, Condition::any()));
        graph_.add_edge(g, d);
        graph_.add_edge(d, n);
        graph_.add_edge(n, c);
        return {g};
      }
      default:
        return {};
    }
  }

  /// (last vertex of the site, position where control continues).
  std::vector<std::pair<VertexId, Position>> exits(const Instruction& ins, Position at) {
    const Block& b = f_.blocks[at.block];
    const std::uint64_t site = ins.addr;
    switch (ins.op) {
      case Opcode::Br:
        return {{graph_.intern(pattern(ActionType::Branch, site, Condition::equals(0))), {*b.on_false, 0}},
                {graph_.intern(pattern(ActionType::Branch, site, Condition::equals(1))), {*b.on_true, 0}}};
      case Opcode::Ret:
        in_vertices(ins);
        return {};
      case Opcode::Ocall:
        in_vertices(ins);
        return {{graph_.intern(pattern(ActionType::OcallCtxUse, site, Condition::any())), {at.block, at.idx + 1}}};
      default: {
        std::vector<std::pair<VertexId, Position>> out;
        for (VertexId v : in_vertices(ins)) out.push_back({v, {at.block, at.idx + 1}});
        return out;
      }
    }
  }

  /// Sites reachable from `from` without crossing another site.
  std::vector<const Instruction*> next_sites(Position from) {
    std::vector<const Instruction*> out;
    std::vector<char> entered(f_.blocks.size(), 0);
    std::vector<Position> work{from};
    while (!work.empty()) {
      Position pos = work.back();
      work.pop_back();
      const Block& b = f_.blocks[pos.block];
      for (; pos.idx < b.instrs.size(); ++pos.idx)
        if (is_site(b.instrs[pos.idx].op)) break;
      if (pos.idx < b.instrs.size()) {
        const Instruction* ins = &b.instrs[pos.idx];
        if (std::find(out.begin(), out.end(), ins) == out.end()) out.push_back(ins);
        continue;
      }
      if (!entered[*b.next]) {
        entered[*b.next] = 1;
        work.push_back({*b.next, 0});
      }
    }
    return out;
  }

  const TraceProgram& p_;
  const Function& f_;
  ActionGraph graph_;
};

}  // namespace

SymbolicEnv set_symbolic_globals(const TraceProgram& p) {
  SymbolicEnv env;
  for (const auto& g : p.globals) env[g.name] = std::nullopt;
  return env;
}

SymbolicEnv set_symbolic_free_args(const Function& f, SymbolicEnv env,
                                   const std::map<std::string, std::int64_t>& overrides) {
  for (const auto& prm : f.params) {
    auto it = overrides.find(prm.name);
    env[prm.name] = it == overrides.end() ? std::nullopt : Value{it->second};
  }
  return env;
}

std::set<std::uint64_t> reachable_sites(const Function& f) {
  std::set<std::uint64_t> out;
  const auto reach = reachable_blocks(f);
  for (std::size_t b = 0; b < f.blocks.size(); ++b)
    if (reach[b])
      for (const auto& ins : f.blocks[b].instrs)
        if (is_site(ins.op)) out.insert(ins.addr);
  return out;
}

ExplorationResult symbolic_exploration(const TraceProgram& p, const Function& f, const SymbolicEnv& env,
                                       const ExtractOptions& opt) {
  return Explorer(p, f, env, opt).run();
}

ExplorationResult insensitive_analysis(const TraceProgram& p, const Function& f) {
  return StaticWalker(p, f).run();
}

std::vector<std::string> resolve_exception_handlers(const TraceProgram& p) {
  std::vector<std::string> out;
  for (const auto& reg : p.handler_registrations()) {
    const Function* h = p.find(reg.handler);
    if (!h) throw ExtractionError("handler registration references unknown function " + reg.handler);
    if (h->params.size() != 1) throw ExtractionError("exception handler " + reg.handler + " must take one argument");
    if (std::find(out.begin(), out.end(), reg.handler) == out.end()) out.push_back(reg.handler);
  }
  return out;
}

ActionGraph runtime_enter_graph() {
  using namespace runtime;
  ActionGraph g;
  const VertexId n = g.add_vertex(pattern(ActionType::Enter, kEnterSite, Condition::at_least(0)));
  const VertexId t = g.add_vertex(pattern(ActionType::Exit, kEnterSite, Condition::any()));
  g.add_edge(n, t);
  g.add_entry(n);
  return g;
}

ActionGraph runtime_exception_graph(const TraceProgram& p, const std::vector<std::string>& handlers) {
  using namespace runtime;
  ActionGraph g;
  const VertexId n3 = g.add_vertex(pattern(ActionType::Enter, kEnterSite, Condition::equals(kExceptionIndex)));
  const VertexId jth = g.add_vertex(pattern(ActionType::ExcInfoGen, kTrustedHandlerSite, Condition::any()));
  const VertexId tth = g.add_vertex(pattern(ActionType::Exit, kTrustedHandlerSite, Condition::any()));
  const VertexId r = g.add_vertex(pattern(ActionType::Resume, kEnterSite, Condition::any()));
  const VertexId kcont = g.add_vertex(pattern(ActionType::ExcInfoUse, kContinueSite, Condition::any()));
  g.add_entry(n3);
  g.add_edge(n3, jth);
  g.add_edge(jth, tth);
  g.add_edge(tth, r);
  g.add_edge(r, kcont);
  if (handlers.empty()) return g;
  const VertexId kih = g.add_vertex(pattern(ActionType::ExcInfoUse, kInternalHandlerSite, Condition::any()));
  const VertexId jih = g.add_vertex(pattern(ActionType::ExcInfoGen, kInternalHandlerSite, Condition::any()));
  g.add_edge(r, kih);
  for (const auto& name : handlers) {
    const Function* h = p.find(name);
    if (!h) throw ExtractionError("unknown exception handler " + name);
    const VertexId call = g.add_vertex(pattern(ActionType::Edge, kHandlerCallSite, Condition::call(h->entry)));
    g.add_edge(kih, call);
    g.add_edge(call, jih);
  }
  g.add_edge(jih, kih);
  g.add_edge(jih, kcont);
  return g;
}

double ExtractionReport::aggregate_coverage() const {
  std::size_t covered = 0, reachable = 0;
  for (const auto& [name, r] : results) {
    covered += r.covered_sites;
    reachable += r.reachable_sites;
  }
  return reachable == 0 ? 1.0 : static_cast<double>(covered) / static_cast<double>(reachable);
}

ExtractionReport extract_model(const TraceProgram& p, const ExtractOptions& opt) {
  ExtractionReport rep;
  rep.handlers = resolve_exception_handlers(p);
  const SymbolicEnv globals = set_symbolic_globals(p);
  for (const auto& f : p.functions) {
    ExplorationResult r;
    if (opt.force_insensitive) {
      r = insensitive_analysis(p, f);
    } else {
      auto ov = opt.arg_overrides.find(f.name);
      const SymbolicEnv env =
          set_symbolic_free_args(f, globals, ov == opt.arg_overrides.end() ? std::map<std::string, std::int64_t>{}
                                                                           : ov->second);
      r = symbolic_exploration(p, f, env, opt);
      if (r.timed_out || r.irreducible) {
        ExplorationResult fb = insensitive_analysis(p, f);
        fb.timed_out = r.timed_out;
        fb.irreducible = r.irreducible;
        fb.elapsed += r.elapsed;
        r = std::move(fb);
      }
    }
    rep.model.add_function({f.name, f.entry, r.method, r.graph});
    rep.results.emplace(f.name, std::move(r));
  }
  rep.model.add_function({std::string(runtime::kEnterFunction), runtime::kEnterSite, ExtractionMethod::Runtime,
                          runtime_enter_graph()});
  rep.model.add_function({std::string(runtime::kExceptionFunction), runtime::kTrustedHandlerSite,
                          ExtractionMethod::Runtime, runtime_exception_graph(p, rep.handlers)});
  for (const auto& [idx, name] : p.secure) rep.model.set_secure(idx, name);
  rep.model.validate();
  return rep;
}

}  // namespace encprov
