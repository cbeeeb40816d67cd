#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "encprov/action.hpp"
#include "encprov/program.hpp"

namespace encprov {

/// Receives every action strictly before the interpreter acts on it.
using Emitter = std::function<void(const Action&, std::uint16_t thread_id)>;

/// Thrown by an emitter to take control away from the interpreted thread
/// (the hijacked code no longer follows the program).
struct ThreadHijacked {};

/// Deterministic turn passing: at most one thread runs at a time and the
/// turn moves after each action. Without an order the turn goes round-robin;
/// with one it follows the (cycled) order, skipping finished threads.
class TurnScheduler {
 public:
  explicit TurnScheduler(std::size_t threads, std::vector<std::size_t> order = {});
  void wait_turn(std::size_t i);
  /// Gives the turn to the next unfinished thread after `i`.
  void pass(std::size_t i);
  void finish(std::size_t i);

 private:
  void advance_locked(std::size_t from);

  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t current_ = 0;
  std::vector<char> done_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct TargetConfig {
  std::uint16_t threads = 1;
  /// Host-side corruption of the first saved OCALL context (backdoor activation).
  bool corrupt_first_ocall_context = false;
  std::uint64_t step_limit = 200'000'000;
  std::size_t max_call_depth = 256;
  int max_exception_attempts = 3;
  /// Thread indices (0-based) giving the turn order; empty = round-robin.
  std::vector<std::size_t> schedule;
};

/// Parses a schedule file: whitespace-separated 1-based thread ids.
/// Throws ContractViolation on ids outside [1, threads].
std::vector<std::size_t> parse_schedule(std::string_view text, std::size_t threads);

struct Frame {
  const Function* fn = nullptr;
  std::size_t block = 0, idx = 0;
  std::map<std::string, std::int64_t> locals;
  std::uint64_t return_site = 0;
};

/// Per-thread interpreter state.
struct ExecutionContext {
  std::uint16_t thread_id = 0;
  std::size_t depth = 0;
  /// Saved frames of in-flight OCALLs (the ocall_context structures).
  std::vector<std::vector<std::int64_t>> ocall_records;
  /// Exception-info hashes of in-flight exceptions.
  std::vector<std::uint64_t> exception_records;
  std::size_t handler_depth = 0;
  bool halted = false;
  std::uint64_t steps = 0;
};

/// A simulated enclave instance: shared memory, globals and registered
/// handlers, executed on behalf of one or more host threads.
class Enclave {
 public:
  Enclave(const TraceProgram& p, Emitter emit, TargetConfig cfg = {});

  /// One ECALL from the host. Returns the secure function's result, or
  /// nullopt when the enclave is (or becomes) crashed or the thread was
  /// hijacked. A crashed enclave emits nothing.
  std::optional<std::int64_t> ecall(ExecutionContext& ctx, std::int64_t index, const std::vector<std::int64_t>& args);

  bool crashed() const { return crashed_; }
  bool context_corrupted() const { return cfg_.corrupt_first_ocall_context && !corrupt_pending_; }
  std::int64_t global(const std::string& name) const { return globals_.at(name); }
  const std::vector<std::string>& handlers() const { return handlers_; }

 private:
  struct Crash {};

  std::int64_t run_function(ExecutionContext& ctx, const Function& f, const std::vector<std::int64_t>& args,
                            std::uint64_t return_site);
  std::int64_t read(const Frame& fr, const Operand& op) const;
  void write(Frame& fr, const std::string& dst, std::int64_t v);
  void emit(ExecutionContext& ctx, const Action& a);
  std::vector<std::int64_t> serialize(const Frame& fr) const;
  std::int64_t host_ocall(ExecutionContext& ctx, const Instruction& ins, Frame& fr);
  void raise(ExecutionContext& ctx, Frame& fr, const Instruction& ins, std::int64_t code);

  const TraceProgram& p_;
  Emitter emit_;
  TargetConfig cfg_;
  std::map<std::string, std::int64_t> globals_;
  std::map<std::int64_t, std::int64_t> memory_;
  std::vector<std::string> handlers_;
  bool crashed_ = false;
  bool corrupt_pending_ = false;
};

struct TargetRun {
  std::uint64_t actions = 0;
  bool crashed = false;
  bool context_corrupted = false;
  /// Per thread, the result of each workload ECALL (nullopt = no result).
  std::vector<std::vector<std::optional<std::int64_t>>> results;
};

/// Runs the program's workload on `cfg.threads` threads. With more than one
/// thread the round-robin scheduler fixes the interleaving.
TargetRun run_target(const TraceProgram& p, const Emitter& emit, const TargetConfig& cfg = {});

}  // namespace encprov
