#include "encprov/verifier.hpp"

#include <sstream>

#include "encprov/errors.hpp"
#include "encprov/runtime_layout.hpp"

namespace encprov {

std::string_view to_string(AnomalyClass c) {
  switch (c) {
    case AnomalyClass::UnknownEdge: return "unknown-edge";
    case AnomalyClass::ShadowStackViolation: return "shadow-stack-violation";
    case AnomalyClass::InvalidStateTransition: return "invalid-state-transition";
    case AnomalyClass::StructureMismatch: return "structure-mismatch";
    case AnomalyClass::ProtocolTamper: return "protocol-tamper";
    case AnomalyClass::Timeout: return "timeout";
  }
  return "?";
}

std::optional<AnomalyClass> anomaly_class_from_string(std::string_view s) {
  for (auto c : {AnomalyClass::UnknownEdge, AnomalyClass::ShadowStackViolation, AnomalyClass::InvalidStateTransition,
                 AnomalyClass::StructureMismatch, AnomalyClass::ProtocolTamper, AnomalyClass::Timeout})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::string_view to_string(FsmPhase p) {
  switch (p) {
    case FsmPhase::Outside: return "outside";
    case FsmPhase::Ecall: return "ecall";
    case FsmPhase::OcallPending: return "ocall-pending";
    case FsmPhase::OcallOut: return "ocall-out";
    case FsmPhase::OcallReturn: return "ocall-return";
    case FsmPhase::ThEntered: return "th-entered";
    case FsmPhase::ThInfo: return "th-info";
    case FsmPhase::ThExited: return "th-exited";
    case FsmPhase::IhReady: return "ih-ready";
    case FsmPhase::IhConsumed: return "ih-consumed";
    case FsmPhase::Untrusted: return "untrusted";
  }
  return "?";
}

std::string_view coarse_name(FsmPhase p) {
  switch (p) {
    case FsmPhase::Outside: return "outside";
    case FsmPhase::Ecall:
    case FsmPhase::OcallPending: return "in-ecall";
    case FsmPhase::OcallOut:
    case FsmPhase::OcallReturn: return "in-ocall-out";
    case FsmPhase::ThEntered:
    case FsmPhase::ThInfo:
    case FsmPhase::ThExited: return "in-exception-TH";
    case FsmPhase::IhReady:
    case FsmPhase::IhConsumed: return "in-exception-IH";
    case FsmPhase::Untrusted: return "untrusted";
  }
  return "?";
}

std::string_view to_string(TransactionKind k) {
  switch (k) {
    case TransactionKind::Ecall: return "ECALL";
    case TransactionKind::Eret: return "ERET";
    case TransactionKind::Ocall1: return "OCALL1";
    case TransactionKind::Ocall2: return "OCALL2";
    case TransactionKind::Oret1: return "ORET1";
    case TransactionKind::Oret2: return "ORET2";
    case TransactionKind::Thd1: return "THD1";
    case TransactionKind::Thd2: return "THD2";
    case TransactionKind::Thd3: return "THD3";
    case TransactionKind::Eresume: return "ERESUME";
    case TransactionKind::Ihd1: return "IHD1";
    case TransactionKind::Ihd2: return "IHD2";
    case TransactionKind::Cont: return "CONT";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Life-cycle machine

namespace {

FsmResult rejected(AnomalyClass c = AnomalyClass::InvalidStateTransition) { return {false, TransactionKind::Ecall, c}; }

}  // namespace

FsmResult fsm_advance(FsmState& st, const Action& a) {
  if (!is_stop(a.type)) throw ContractViolation("fsm_advance requires a stop action");
  if (!is_valid(a)) return rejected();
  FsmState next = st;
  TransactionKind kind;
  const std::int64_t idx = a.type == ActionType::Enter ? a.index() : 0;
  const bool consumes_top = a.type == ActionType::OcallCtxUse || a.type == ActionType::ExcInfoUse;
  if (consumes_top) {
    const bool expects_consume = (st.phase == FsmPhase::OcallReturn && a.type == ActionType::OcallCtxUse) ||
                                 (st.phase == FsmPhase::IhReady && a.type == ActionType::ExcInfoUse);
    if (!expects_consume) return rejected();
    if (st.structures.empty() || st.structures.back() != *a.value) return rejected(AnomalyClass::StructureMismatch);
    next.structures.pop_back();
  }
  if ((st.phase == FsmPhase::OcallReturn || st.phase == FsmPhase::IhReady) && !consumes_top) return rejected();
  switch (st.phase) {
    case FsmPhase::Outside:
      if (a.type == ActionType::Enter && idx >= 0) {
        next.resume.push_back(FsmPhase::Outside);
        next.phase = FsmPhase::Ecall;
        kind = TransactionKind::Ecall;
      } else if (a.type == ActionType::Enter && idx == runtime::kExceptionIndex) {
        // AEX is untraced: an exception may surface before any ECALL record.
        next.resume.push_back(FsmPhase::Outside);
        next.resume.push_back(FsmPhase::Ecall);
        next.phase = FsmPhase::ThEntered;
        kind = TransactionKind::Thd1;
      } else {
        return rejected();
      }
      break;
    case FsmPhase::Ecall:
      if (a.type == ActionType::Exit) {
        if (next.resume.empty()) return rejected();
        next.phase = next.resume.back();
        next.resume.pop_back();
        kind = TransactionKind::Eret;
      } else if (a.type == ActionType::OcallCtxGen) {
        next.structures.push_back(*a.value);
        next.phase = FsmPhase::OcallPending;
        kind = TransactionKind::Ocall1;
      } else if (a.type == ActionType::Enter && idx == runtime::kExceptionIndex) {
        next.resume.push_back(FsmPhase::Ecall);
        next.phase = FsmPhase::ThEntered;
        kind = TransactionKind::Thd1;
      } else {
        return rejected();
      }
      break;
    case FsmPhase::OcallPending:
      if (a.type != ActionType::OcallExit) return rejected();
      next.phase = FsmPhase::OcallOut;
      kind = TransactionKind::Ocall2;
      break;
    case FsmPhase::OcallOut:
      if (a.type == ActionType::Enter && idx == runtime::kOretIndex) {
        next.phase = FsmPhase::OcallReturn;
        kind = TransactionKind::Oret1;
      } else if (a.type == ActionType::Enter && idx >= 0) {
        next.resume.push_back(FsmPhase::OcallOut);
        next.phase = FsmPhase::Ecall;
        kind = TransactionKind::Ecall;
      } else {
        return rejected();
      }
      break;
    case FsmPhase::OcallReturn:
      next.phase = FsmPhase::Ecall;
      kind = TransactionKind::Oret2;
      break;
    case FsmPhase::ThEntered:
      if (a.type != ActionType::ExcInfoGen) return rejected();
      next.structures.push_back(*a.value);
      next.phase = FsmPhase::ThInfo;
      kind = TransactionKind::Thd2;
      break;
    case FsmPhase::ThInfo:
      if (a.type != ActionType::Exit) return rejected();
      next.phase = FsmPhase::ThExited;
      kind = TransactionKind::Thd3;
      break;
    case FsmPhase::ThExited:
      if (a.type != ActionType::Resume) return rejected();
      next.phase = FsmPhase::IhReady;
      kind = TransactionKind::Eresume;
      break;
    case FsmPhase::IhReady:
      if (*a.src == runtime::kContinueSite) {
        if (next.resume.empty()) return rejected();
        next.phase = next.resume.back();
        next.resume.pop_back();
        kind = TransactionKind::Cont;
      } else {
        next.phase = FsmPhase::IhConsumed;
        kind = TransactionKind::Ihd1;
      }
      break;
    case FsmPhase::IhConsumed:
      if (a.type != ActionType::ExcInfoGen) return rejected();
      next.structures.push_back(*a.value);
      next.phase = FsmPhase::IhReady;
      kind = TransactionKind::Ihd2;
      break;
    default:
      return rejected();
  }
  next.state = state_apply(next.state, a);
  st = std::move(next);
  return {true, kind, AnomalyClass::InvalidStateTransition};
}

FsmResult fsm_advance(FsmState& st, const Transaction& completed) { return fsm_advance(st, completed.terminator()); }

// ---------------------------------------------------------------------------
// Reports

std::string AnomalyReport::to_line() const {
  std::ostringstream out;
  out << "ANOMALY thread=" << thread_id << " class=" << to_string(cls)
      << " action=" << (action ? to_string(*action) : std::string("none")) << " expected={";
  for (std::size_t i = 0; i < expected.size(); ++i) out << (i ? "," : "") << to_string(expected[i]);
  out << "} state=" << to_string(state) << " fsm=" << coarse_name(phase) << " at="
      << (function.empty() ? "-" : function) << '/' << (vertex ? std::to_string(*vertex) : std::string("-"))
      << " seq=" << seq;
  return out.str();
}

// ---------------------------------------------------------------------------
// Verifier

Verifier::Verifier(const EnclaveModel& model) : model_(model) {
  enter_ = model.find(runtime::kEnterFunction);
  exception_ = model.find(runtime::kExceptionFunction);
  if (!enter_ || !exception_) throw ModelError("model lacks the runtime graphs");
  const auto& eg = enter_->graph;
  const auto n = eg.find({ActionType::Enter, runtime::kEnterSite, Condition::at_least(0)});
  const auto t = eg.find({ActionType::Exit, runtime::kEnterSite, Condition::any()});
  const auto n3 = exception_->graph.find(
      {ActionType::Enter, runtime::kEnterSite, Condition::equals(runtime::kExceptionIndex)});
  if (!n || !t || !n3) throw ModelError("runtime graphs are malformed");
  enter_n_ = *n;
  enter_t_ = *t;
  exception_n_ = *n3;
  for (const auto& [name, f] : model.functions()) by_entry_.emplace(f.entry, &f);
  for (const auto& [idx, name] : model.secure_table()) secure_.emplace(idx, model.find(name));
}

Verifier::Thread& Verifier::thread(std::uint16_t id) {
  auto [it, inserted] = threads_.try_emplace(id);
  if (inserted) {
    it->second.id = id;
    it->second.cursor = idle_cursor();
  }
  return it->second;
}

Verifier::Cursor Verifier::idle_cursor() const { return {enter_, {enter_n_}, std::nullopt}; }

Verifier::Cursor Verifier::after(const FunctionModel* fn, VertexId v) const {
  const auto succ = fn->graph.successors(v);
  return {fn, std::vector<VertexId>(succ.begin(), succ.end()), v};
}

std::optional<VertexId> Verifier::match(const Cursor& c, const Action& a) const {
  for (VertexId v : c.expected)
    if (c.fn->graph.vertex(v).matches(a)) return v;
  return std::nullopt;
}

std::optional<AnomalyReport> Verifier::fail(Thread& t, AnomalyClass cls, const std::optional<Action>& a) {
  AnomalyReport r;
  r.thread_id = t.id;
  r.cls = cls;
  r.action = a;
  if (t.cursor.fn) {
    for (VertexId v : t.cursor.expected) r.expected.push_back(t.cursor.fn->graph.vertex(v));
    r.function = t.cursor.fn->name;
  }
  r.vertex = t.cursor.last;
  r.state = t.fsm.state;
  r.phase = t.fsm.phase;
  r.seq = seq_;
  t.fsm.phase = FsmPhase::Untrusted;
  t.anomaly = r;
  anomalies_.push_back(r);
  return r;
}

std::optional<AnomalyReport> Verifier::process(const Action& a, std::uint16_t thread_id) {
  ++seq_;
  Thread& t = thread(thread_id);
  ++t.actions;
  if (t.anomaly) return std::nullopt;
  return is_stop(a.type) ? process_stop(t, a) : process_generic(t, a);
}

std::optional<AnomalyReport> Verifier::process_generic(Thread& t, const Action& a) {
  if (t.fsm.phase != FsmPhase::Ecall && t.fsm.phase != FsmPhase::IhConsumed)
    return fail(t, AnomalyClass::UnknownEdge, a);
  const auto v = match(t.cursor, a);
  if (!v) return fail(t, AnomalyClass::UnknownEdge, a);
  const ActionPattern& pat = t.cursor.fn->graph.vertex(*v);
  if (pat.cond.kind == ConditionKind::CallTarget) {
    auto callee = by_entry_.find(*a.value);
    if (callee == by_entry_.end()) return fail(t, AnomalyClass::UnknownEdge, a);
    t.shadow.push_back({*a.src, after(t.cursor.fn, *v)});
    const auto entries = callee->second->graph.entries();
    t.cursor = {callee->second, std::vector<VertexId>(entries.begin(), entries.end()), std::nullopt};
  } else if (pat.cond.kind == ConditionKind::Return) {
    if (t.shadow.empty() || t.shadow.back().return_site != *a.value) {
      t.cursor.last = *v;
      return fail(t, AnomalyClass::ShadowStackViolation, a);
    }
    t.cursor = std::move(t.shadow.back().resume);
    t.shadow.pop_back();
  } else {
    t.cursor = after(t.cursor.fn, *v);
  }
  t.pending.push_back(a);
  return std::nullopt;
}

std::optional<AnomalyReport> Verifier::process_stop(Thread& t, const Action& a) {
  FsmState trial = t.fsm;
  const FsmResult r = fsm_advance(trial, a);
  if (!r.ok) return fail(t, r.error, a);

  switch (r.kind) {
    case TransactionKind::Ecall: {
      if (!enter_->graph.vertex(enter_n_).matches(a)) return fail(t, AnomalyClass::UnknownEdge, a);
      auto fn = secure_.find(a.index());
      if (fn == secure_.end()) return fail(t, AnomalyClass::UnknownEdge, a);
      t.saved.push_back(std::move(t.cursor));
      t.shadow.push_back({runtime::kEcallReturnSite, after(enter_, enter_n_)});
      const auto entries = fn->second->graph.entries();
      t.cursor = {fn->second, std::vector<VertexId>(entries.begin(), entries.end()), std::nullopt};
      break;
    }
    case TransactionKind::Thd1: {
      if (!exception_->graph.vertex(exception_n_).matches(a)) return fail(t, AnomalyClass::UnknownEdge, a);
      if (t.fsm.phase == FsmPhase::Outside) {
        t.saved.push_back(idle_cursor());
        t.saved.push_back({enter_, {enter_t_}, enter_n_});
      } else {
        t.saved.push_back(std::move(t.cursor));
      }
      t.cursor = after(exception_, exception_n_);
      break;
    }
    default: {
      const auto v = match(t.cursor, a);
      if (!v) return fail(t, AnomalyClass::UnknownEdge, a);
      if (r.kind == TransactionKind::Eret || r.kind == TransactionKind::Cont) {
        if (t.saved.empty()) return fail(t, AnomalyClass::InvalidStateTransition, a);
        t.cursor = std::move(t.saved.back());
        t.saved.pop_back();
      } else {
        t.cursor = after(t.cursor.fn, *v);
      }
      break;
    }
  }
  t.fsm = std::move(trial);
  t.last_transaction.emplace(std::move(t.pending), a);
  t.pending = {};
  ++t.transactions;
  return std::nullopt;
}

std::vector<AnomalyReport> Verifier::channel_tampered() {
  std::vector<AnomalyReport> out;
  for (auto& [id, t] : threads_)
    if (!t.anomaly) out.push_back(*fail(t, AnomalyClass::ProtocolTamper, std::nullopt));
  return out;
}

std::vector<AnomalyReport> Verifier::channel_timeout() {
  std::vector<AnomalyReport> out;
  for (auto& [id, t] : threads_)
    if (!t.anomaly && t.fsm.phase != FsmPhase::Outside) out.push_back(*fail(t, AnomalyClass::Timeout, std::nullopt));
  return out;
}

std::optional<ThreadSnapshot> Verifier::status(std::uint16_t thread_id) const {
  auto it = threads_.find(thread_id);
  if (it == threads_.end()) return std::nullopt;
  const Thread& t = it->second;
  return ThreadSnapshot{t.id,          t.fsm.state,    t.fsm.phase, t.shadow.size(), t.fsm.structures.size(),
                        t.transactions, t.actions, t.anomaly};
}

std::vector<ThreadSnapshot> Verifier::snapshot() const {
  std::vector<ThreadSnapshot> out;
  for (const auto& [id, t] : threads_) out.push_back(*status(id));
  return out;
}

}  // namespace encprov
