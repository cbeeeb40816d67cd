#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "encprov/graph.hpp"
#include "encprov/model.hpp"
#include "encprov/state.hpp"

namespace encprov {

enum class AnomalyClass : std::uint8_t {
  UnknownEdge,
  ShadowStackViolation,
  InvalidStateTransition,
  StructureMismatch,
  ProtocolTamper,
  Timeout,
};

std::string_view to_string(AnomalyClass c);
std::optional<AnomalyClass> anomaly_class_from_string(std::string_view s);

/// Life-cycle position of one thread. Finer than the six coarse positions
/// (see coarse_name) because OCALL and exception handling take several
/// stop actions each.
enum class FsmPhase : std::uint8_t {
  Outside,
  Ecall,
  OcallPending,  // G seen, D pending
  OcallOut,      // host side of an OCALL
  OcallReturn,   // N(-2) seen, C pending
  ThEntered,     // N(-3) seen, J pending
  ThInfo,        // J seen, T pending
  ThExited,      // T seen, R pending
  IhReady,       // expects K
  IhConsumed,    // K seen, J pending (handler running)
  Untrusted,
};

inline constexpr std::size_t kFsmPhaseCount = 11;

std::string_view to_string(FsmPhase p);
/// outside, in-ecall, in-ocall-out, in-exception-TH, in-exception-IH, untrusted.
std::string_view coarse_name(FsmPhase p);

enum class TransactionKind : std::uint8_t {
  Ecall, Eret, Ocall1, Ocall2, Oret1, Oret2, Thd1, Thd2, Thd3, Eresume, Ihd1, Ihd2, Cont,
};

std::string_view to_string(TransactionKind k);

struct FsmState {
  FsmPhase phase = FsmPhase::Outside;
  /// Phase to return to on ERET (pushed by ECALL) or CONT (pushed by THD1).
  std::vector<FsmPhase> resume;
  /// Hashes generated by G/J and not yet consumed by C/K.
  std::vector<std::uint64_t> structures;
  StateTriplet state;
};

struct FsmResult {
  bool ok = false;
  TransactionKind kind = TransactionKind::Ecall;
  AnomalyClass error = AnomalyClass::InvalidStateTransition;
};

/// Advances the life-cycle machine by one stop action. On failure `st` is
/// left untouched and the result carries invalid-state-transition or
/// structure-mismatch. A K at the continue site closes the exception; any
/// other K is a handler pass.
FsmResult fsm_advance(FsmState& st, const Action& stop);
FsmResult fsm_advance(FsmState& st, const Transaction& completed);

struct AnomalyReport {
  std::uint16_t thread_id = 0;
  AnomalyClass cls = AnomalyClass::UnknownEdge;
  std::optional<Action> action;
  std::vector<ActionPattern> expected;
  StateTriplet state;
  FsmPhase phase = FsmPhase::Outside;
  std::string function;
  std::optional<VertexId> vertex;
  std::uint64_t seq = 0;

  /// `ANOMALY thread=.. class=.. action=.. expected={..} state=.. fsm=.. at=fn/v seq=..`
  std::string to_line() const;
};

struct ThreadSnapshot {
  std::uint16_t thread_id = 0;
  StateTriplet state;
  FsmPhase phase = FsmPhase::Outside;
  std::size_t shadow_depth = 0;
  std::size_t structure_depth = 0;
  std::uint64_t transactions = 0;
  std::uint64_t actions = 0;
  std::optional<AnomalyReport> anomaly;

  bool trusted() const { return !anomaly; }
};

/// Validates the authenticated action stream of one target against a model.
/// Not thread-safe; callers serialize access.
class Verifier {
 public:
  /// Throws ModelError when the model lacks the runtime graphs.
  explicit Verifier(const EnclaveModel& model);

  /// Returns the report when this action turns the thread untrusted. Actions
  /// of an untrusted thread are counted and otherwise ignored.
  std::optional<AnomalyReport> process(const Action& a, std::uint16_t thread_id);

  /// Marks every thread seen so far as untrusted with protocol-tamper.
  std::vector<AnomalyReport> channel_tampered();
  /// Marks every thread not outside the enclave as untrusted with timeout.
  std::vector<AnomalyReport> channel_timeout();

  std::optional<ThreadSnapshot> status(std::uint16_t thread_id) const;
  std::vector<ThreadSnapshot> snapshot() const;
  const std::vector<AnomalyReport>& anomalies() const { return anomalies_; }
  std::uint64_t actions_processed() const { return seq_; }

 private:
  struct Cursor {
    const FunctionModel* fn = nullptr;
    std::vector<VertexId> expected;
    std::optional<VertexId> last;
  };
  struct ShadowFrame {
    std::uint64_t return_site;
    Cursor resume;
  };
  struct Thread {
    std::uint16_t id = 0;
    FsmState fsm;
    Cursor cursor;
    std::vector<ShadowFrame> shadow;
    std::vector<Cursor> saved;
    std::vector<Action> pending;
    std::optional<Transaction> last_transaction;
    std::uint64_t transactions = 0;
    std::uint64_t actions = 0;
    std::optional<AnomalyReport> anomaly;
  };

  Thread& thread(std::uint16_t id);
  Cursor idle_cursor() const;
  Cursor after(const FunctionModel* fn, VertexId v) const;
  std::optional<VertexId> match(const Cursor& c, const Action& a) const;
  std::optional<AnomalyReport> fail(Thread& t, AnomalyClass cls, const std::optional<Action>& a);
  std::optional<AnomalyReport> process_generic(Thread& t, const Action& a);
  std::optional<AnomalyReport> process_stop(Thread& t, const Action& a);

  const EnclaveModel& model_;
  const FunctionModel* enter_ = nullptr;
  const FunctionModel* exception_ = nullptr;
  VertexId enter_n_ = 0, enter_t_ = 0, exception_n_ = 0;
  std::map<std::uint64_t, const FunctionModel*> by_entry_;
  std::map<std::int64_t, const FunctionModel*> secure_;
  std::map<std::uint16_t, Thread> threads_;
  std::vector<AnomalyReport> anomalies_;
  std::uint64_t seq_ = 0;
};

}  // namespace encprov
