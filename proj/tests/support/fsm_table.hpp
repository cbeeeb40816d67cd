#pragma once

// Life-cycle conformance table written from the transaction definitions
// alone: every phase is probed with every stop-action shape, and each pair
// that is not listed as accepted must be rejected without touching the state.

#include <optional>
#include <string>
#include <vector>

#include "encprov/action.hpp"
#include "encprov/runtime_layout.hpp"
#include "encprov/verifier.hpp"

namespace fsm_table {

using namespace encprov;

inline constexpr std::uint64_t kHash = 0x5eed;
inline constexpr std::uint64_t kOther = 0xbad;
inline constexpr std::uint64_t kSite = 0x4000;

struct Probe {
  std::string name;
  Action action;
};

inline std::vector<Probe> probes() {
  using runtime::kContinueSite;
  using runtime::kInternalHandlerSite;
  return {
      {"N0", Action::enter(runtime::kEnterSite, 0)},
      {"N5", Action::enter(runtime::kEnterSite, 5)},
      {"N-1", Action::enter(runtime::kEnterSite, -1)},
      {"N-2", Action::enter(kSite, -2)},
      {"N-3", Action::enter(runtime::kEnterSite, -3)},
      {"N-4", Action::enter(runtime::kEnterSite, -4)},
      {"T", Action::bare(ActionType::Exit, runtime::kEnterSite)},
      {"R", Action::bare(ActionType::Resume, runtime::kEnterSite)},
      {"D", Action::bare(ActionType::OcallExit, kSite)},
      {"G", Action::structure(ActionType::OcallCtxGen, kSite, kHash)},
      {"J", Action::structure(ActionType::ExcInfoGen, runtime::kTrustedHandlerSite, kHash)},
      {"C", Action::structure(ActionType::OcallCtxUse, kSite, kHash)},
      {"C-bad", Action::structure(ActionType::OcallCtxUse, kSite, kOther)},
      {"Kcont", Action::structure(ActionType::ExcInfoUse, kContinueSite, kHash)},
      {"Kcont-bad", Action::structure(ActionType::ExcInfoUse, kContinueSite, kOther)},
      {"Kih", Action::structure(ActionType::ExcInfoUse, kInternalHandlerSite, kHash)},
      {"Kih-bad", Action::structure(ActionType::ExcInfoUse, kInternalHandlerSite, kOther)},
  };
}

/// A representative state for each phase, as a well-formed run reaches it.
inline FsmState state_in(FsmPhase p) {
  FsmState s;
  s.phase = p;
  switch (p) {
    case FsmPhase::Outside:
    case FsmPhase::Untrusted:
      break;
    case FsmPhase::Ecall:
    case FsmPhase::OcallPending:
    case FsmPhase::OcallOut:
      s.resume = {FsmPhase::Outside};
      if (p != FsmPhase::Ecall) s.structures = {kHash};
      break;
    case FsmPhase::OcallReturn:
      s.resume = {FsmPhase::Outside};
      s.structures = {kHash};
      break;
    case FsmPhase::ThEntered:
      s.resume = {FsmPhase::Outside, FsmPhase::Ecall};
      break;
    case FsmPhase::ThInfo:
    case FsmPhase::ThExited:
    case FsmPhase::IhReady:
    case FsmPhase::IhConsumed:
      s.resume = {FsmPhase::Outside, FsmPhase::Ecall};
      s.structures = {kHash};
      break;
  }
  return s;
}

/// Accepted (phase, probe) pairs with their transaction and next phase.
struct Accept {
  FsmPhase from;
  std::string probe;
  TransactionKind kind;
  FsmPhase to;
};

inline const std::vector<Accept>& accepted() {
  using P = FsmPhase;
  using K = TransactionKind;
  static const std::vector<Accept> rows = {
      {P::Outside, "N0", K::Ecall, P::Ecall},
      {P::Outside, "N5", K::Ecall, P::Ecall},
      {P::Outside, "N-3", K::Thd1, P::ThEntered},
      {P::Ecall, "T", K::Eret, P::Outside},
      {P::Ecall, "G", K::Ocall1, P::OcallPending},
      {P::Ecall, "N-3", K::Thd1, P::ThEntered},
      {P::OcallPending, "D", K::Ocall2, P::OcallOut},
      {P::OcallOut, "N-2", K::Oret1, P::OcallReturn},
      {P::OcallOut, "N0", K::Ecall, P::Ecall},
      {P::OcallOut, "N5", K::Ecall, P::Ecall},
      {P::OcallReturn, "C", K::Oret2, P::Ecall},
      {P::ThEntered, "J", K::Thd2, P::ThInfo},
      {P::ThInfo, "T", K::Thd3, P::ThExited},
      {P::ThExited, "R", K::Eresume, P::IhReady},
      {P::IhReady, "Kih", K::Ihd1, P::IhConsumed},
      {P::IhReady, "Kcont", K::Cont, P::Ecall},
      {P::IhConsumed, "J", K::Ihd2, P::IhReady},
  };
  return rows;
}

/// A consume with the wrong hash in a phase that expects the consume.
inline bool is_mismatch(FsmPhase p, const std::string& probe) {
  return (p == FsmPhase::OcallReturn && probe == "C-bad") ||
         (p == FsmPhase::IhReady && (probe == "Kcont-bad" || probe == "Kih-bad"));
}

struct Outcome {
  std::size_t checked = 0;
  std::vector<std::string> failures;
};

inline Outcome run() {
  Outcome out;
  for (std::size_t pi = 0; pi < kFsmPhaseCount; ++pi) {
    const auto phase = static_cast<FsmPhase>(pi);
    for (const Probe& probe : probes()) {
      ++out.checked;
      FsmState st = state_in(phase);
      const FsmState before = st;
      const FsmResult r = fsm_advance(st, probe.action);
      const std::string where = std::string(to_string(phase)) + " x " + probe.name + ": ";
      const Accept* row = nullptr;
      for (const auto& a : accepted())
        if (a.from == phase && a.probe == probe.name) row = &a;
      if (row) {
        if (!r.ok)
          out.failures.push_back(where + "rejected, expected " + std::string(to_string(row->kind)));
        else if (r.kind != row->kind || st.phase != row->to)
          out.failures.push_back(where + "took " + std::string(to_string(r.kind)) + " to " +
                                 std::string(to_string(st.phase)));
        continue;
      }
      const AnomalyClass want =
          is_mismatch(phase, probe.name) ? AnomalyClass::StructureMismatch : AnomalyClass::InvalidStateTransition;
      if (r.ok)
        out.failures.push_back(where + "accepted as " + std::string(to_string(r.kind)));
      else if (r.error != want)
        out.failures.push_back(where + "rejected as " + std::string(to_string(r.error)));
      else if (st.phase != before.phase || st.resume != before.resume || st.structures != before.structures)
        out.failures.push_back(where + "rejection modified the state");
    }
  }
  return out;
}

}  // namespace fsm_table
