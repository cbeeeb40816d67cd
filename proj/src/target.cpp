#include "encprov/target.hpp"

#include <algorithm>
#include <exception>
#include <sstream>
#include <thread>

#include "encprov/crypto.hpp"
#include "encprov/errors.hpp"
#include "encprov/runtime_layout.hpp"

namespace encprov {

TurnScheduler::TurnScheduler(std::size_t threads, std::vector<std::size_t> order)
    : done_(threads, 0), order_(std::move(order)) {
  if (!order_.empty()) current_ = order_[0];
}

void TurnScheduler::wait_turn(std::size_t i) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return current_ == i; });
}

void TurnScheduler::advance_locked(std::size_t from) {
  const std::size_t n = done_.size();
  for (std::size_t k = 1; k <= order_.size(); ++k) {
    const std::size_t c = order_[(pos_ + k) % order_.size()];
    if (!done_[c]) {
      pos_ = (pos_ + k) % order_.size();
      current_ = c;
      cv_.notify_all();
      return;
    }
  }
  for (std::size_t k = 1; k <= n; ++k) {
    const std::size_t c = (from + k) % n;
    if (!done_[c]) {
      current_ = c;
      break;
    }
  }
  cv_.notify_all();
}

void TurnScheduler::pass(std::size_t i) {
  std::lock_guard lock(mu_);
  if (current_ == i) advance_locked(i);
}

void TurnScheduler::finish(std::size_t i) {
  std::lock_guard lock(mu_);
  done_[i] = 1;
  if (current_ == i) advance_locked(i);
}

// ---------------------------------------------------------------------------

Enclave::Enclave(const TraceProgram& p, Emitter emit, TargetConfig cfg)
    : p_(p), emit_(std::move(emit)), cfg_(cfg), corrupt_pending_(cfg.corrupt_first_ocall_context) {
  for (const auto& g : p.globals) globals_[g.name] = g.init;
}

void Enclave::emit(ExecutionContext& ctx, const Action& a) { emit_(a, ctx.thread_id); }

std::int64_t Enclave::read(const Frame& fr, const Operand& op) const {
  switch (op.kind) {
    case Operand::Kind::Literal: return op.literal;
    case Operand::Kind::FuncAddr: return static_cast<std::int64_t>(p_.find(op.name)->entry);
    case Operand::Kind::Var: {
      if (auto it = fr.locals.find(op.name); it != fr.locals.end()) return it->second;
      if (auto it = globals_.find(op.name); it != globals_.end()) return it->second;
      return 0;
    }
  }
  return 0;
}

void Enclave::write(Frame& fr, const std::string& dst, std::int64_t v) {
  if (dst.empty() || dst == kDiscard) return;
  if (auto it = globals_.find(dst); it != globals_.end() && !fr.locals.contains(dst)) {
    it->second = v;
    return;
  }
  fr.locals[dst] = v;
}

std::vector<std::int64_t> Enclave::serialize(const Frame& fr) const {
  std::vector<std::int64_t> words{static_cast<std::int64_t>(fr.fn->entry), static_cast<std::int64_t>(fr.block),
                                  static_cast<std::int64_t>(fr.idx), static_cast<std::int64_t>(fr.return_site)};
  for (const auto& [name, value] : fr.locals) {
    words.push_back(static_cast<std::int64_t>(structure_hash(as_bytes(name))));
    words.push_back(value);
  }
  return words;
}

std::optional<std::int64_t> Enclave::ecall(ExecutionContext& ctx, std::int64_t index,
                                           const std::vector<std::int64_t>& args) {
  if (crashed_ || ctx.halted) return std::nullopt;
  auto it = p_.secure.find(index);
  if (it == p_.secure.end()) throw ContractViolation("unknown secure index " + std::to_string(index));
  const Function& f = *p_.find(it->second);
  try {
    emit(ctx, Action::enter(runtime::kEnterSite, index));
    const std::int64_t r = run_function(ctx, f, args, runtime::kEcallReturnSite);
    emit(ctx, Action::bare(ActionType::Exit, runtime::kEnterSite));
    return r;
  } catch (const Crash&) {
    crashed_ = true;
  } catch (const ThreadHijacked&) {
    ctx.halted = true;
  }
  // A nested ECALL unwinding through an OCALL takes the outer one with it.
  if (ctx.depth > 0) throw Crash{};
  return std::nullopt;
}

std::int64_t Enclave::run_function(ExecutionContext& ctx, const Function& f, const std::vector<std::int64_t>& args,
                                   std::uint64_t return_site) {
  if (ctx.depth >= cfg_.max_call_depth) throw Crash{};
  Frame fr;
  fr.fn = &f;
  fr.block = f.entry_block;
  fr.return_site = return_site;
  for (std::size_t i = 0; i < f.params.size(); ++i) fr.locals[f.params[i].name] = i < args.size() ? args[i] : 0;
  ++ctx.depth;
  struct DepthGuard {
    ExecutionContext& c;
    ~DepthGuard() { --c.depth; }
  } guard{ctx};

  for (;;) {
    const Block& b = f.blocks[fr.block];
    if (fr.idx == b.instrs.size()) {
      fr.block = *b.next;
      fr.idx = 0;
      continue;
    }
    if (++ctx.steps > cfg_.step_limit) throw Crash{};
    const Instruction& ins = b.instrs[fr.idx];
    const std::uint64_t site = ins.addr;
    switch (ins.op) {
      case Opcode::Nop:
      case Opcode::RegHandler:
        if (ins.op == Opcode::RegHandler) {
          const std::string& h = ins.args[0].name;
          if (std::find(handlers_.begin(), handlers_.end(), h) == handlers_.end()) handlers_.push_back(h);
        }
        break;
      case Opcode::Assign:
        write(fr, ins.dst, read(fr, ins.args[0]));
        break;
      case Opcode::Binop:
        write(fr, ins.dst, eval_binop(ins.binop, read(fr, ins.args[0]), read(fr, ins.args[1])));
        break;
      case Opcode::Load: {
        auto it = memory_.find(read(fr, ins.args[0]));
        write(fr, ins.dst, it == memory_.end() ? 0 : it->second);
        break;
      }
      case Opcode::Store:
        memory_[read(fr, ins.args[0])] = read(fr, ins.args[1]);
        break;
      case Opcode::Br: {
        const bool taken = read(fr, ins.args[0]) != 0;
        emit(ctx, Action::branch(site, taken));
        fr.block = taken ? *b.on_true : *b.on_false;
        fr.idx = 0;
        continue;
      }
      case Opcode::Call: {
        const Function& callee = *p_.find(ins.callee);
        std::vector<std::int64_t> vals;
        for (const auto& a : ins.args) vals.push_back(read(fr, a));
        emit(ctx, Action::edge(site, callee.entry));
        write(fr, ins.dst, run_function(ctx, callee, vals, site));
        break;
      }
      case Opcode::ICall: {
        const auto target = static_cast<std::uint64_t>(read(fr, ins.args[0]));
        std::vector<std::int64_t> vals;
        for (std::size_t i = 1; i < ins.args.size(); ++i) vals.push_back(read(fr, ins.args[i]));
        emit(ctx, Action::edge(site, target));
        const Function* callee = p_.find_entry(target);
        if (!callee || callee->params.size() != vals.size()) throw Crash{};
        write(fr, ins.dst, run_function(ctx, *callee, vals, site));
        break;
      }
      case Opcode::Ret: {
        const std::int64_t v = ins.args.empty() ? 0 : read(fr, ins.args[0]);
        emit(ctx, Action::edge(site, fr.return_site));
        return v;
      }
      case Opcode::Stop: {
        Action a{ins.tag, site, std::nullopt};
        if (!ins.args.empty()) a.value = static_cast<std::uint64_t>(read(fr, ins.args[0]));
        emit(ctx, a);
        break;
      }
      case Opcode::FnPtr:
      case Opcode::VPtr: {
        const std::int64_t v = read(fr, ins.args[0]);
        emit(ctx, ins.op == Opcode::FnPtr ? Action::fnptr(site, static_cast<std::uint64_t>(v))
                                          : Action::vptr(site, static_cast<std::uint64_t>(v)));
        write(fr, ins.dst, v);
        break;
      }
      case Opcode::Ocall:
        write(fr, ins.dst, host_ocall(ctx, ins, fr));
        break;
      case Opcode::Fault: {
        const std::int64_t code = read(fr, ins.args[0]);
        if (code != 0) raise(ctx, fr, ins, code);
        break;
      }
    }
    ++fr.idx;
  }
}

std::int64_t Enclave::host_ocall(ExecutionContext& ctx, const Instruction& ins, Frame& fr) {
  const std::uint64_t site = ins.addr;
  ctx.ocall_records.push_back(serialize(fr));
  emit(ctx, Action::structure(ActionType::OcallCtxGen, site, hash_words(ctx.ocall_records.back())));
  emit(ctx, Action::bare(ActionType::OcallExit, site));
  // Host side: nested ECALLs on the same thread.
  if (auto it = p_.host.find(ins.callee); it != p_.host.end())
    for (const auto& r : it->second.ecalls) {
      ecall(ctx, r.index, r.args);
      if (crashed_) throw Crash{};
      if (ctx.halted) throw ThreadHijacked{};
    }
  bool corrupted = false;
  if (corrupt_pending_) {
    // The host rewrites the saved resume point inside the ocall context.
    corrupt_pending_ = false;
    ctx.ocall_records.back()[2] ^= 0x40;
    corrupted = true;
  }
  emit(ctx, Action::enter(site, runtime::kOretIndex));
  emit(ctx, Action::structure(ActionType::OcallCtxUse, site, hash_words(ctx.ocall_records.back())));
  ctx.ocall_records.pop_back();
  if (corrupted) throw ThreadHijacked{};
  return 0;
}

void Enclave::raise(ExecutionContext& ctx, Frame& fr, const Instruction& ins, std::int64_t code) {
  using namespace runtime;
  // A fault inside a handler is not recoverable.
  if (ctx.handler_depth > 0) throw Crash{};
  for (int attempt = 0; attempt < cfg_.max_exception_attempts; ++attempt) {
    std::int64_t payload = code;
    auto info = [&] { return hash_words({static_cast<std::int64_t>(ins.addr), code, payload}); };
    ctx.exception_records.push_back(info());
    emit(ctx, Action::enter(kEnterSite, kExceptionIndex));
    emit(ctx, Action::structure(ActionType::ExcInfoGen, kTrustedHandlerSite, ctx.exception_records.back()));
    emit(ctx, Action::bare(ActionType::Exit, kTrustedHandlerSite));
    emit(ctx, Action::bare(ActionType::Resume, kEnterSite));
    const std::vector<std::string> handlers = handlers_;
    for (const auto& name : handlers) {
      const Function& h = *p_.find(name);
      emit(ctx, Action::structure(ActionType::ExcInfoUse, kInternalHandlerSite, ctx.exception_records.back()));
      emit(ctx, Action::edge(kHandlerCallSite, h.entry));
      ++ctx.handler_depth;
      try {
        payload = run_function(ctx, h, {payload}, kHandlerCallSite);
      } catch (...) {
        --ctx.handler_depth;
        throw;
      }
      --ctx.handler_depth;
      ctx.exception_records.back() = info();
      emit(ctx, Action::structure(ActionType::ExcInfoGen, kInternalHandlerSite, ctx.exception_records.back()));
    }
    emit(ctx, Action::structure(ActionType::ExcInfoUse, kContinueSite, ctx.exception_records.back()));
    ctx.exception_records.pop_back();
    if (read(fr, ins.args[0]) == 0) return;
  }
  throw Crash{};
}

std::vector<std::size_t> parse_schedule(std::string_view text, std::size_t threads) {
  std::vector<std::size_t> order;
  std::istringstream in{std::string(text)};
  long long id = 0;
  while (in >> id) {
    if (id < 1 || static_cast<std::size_t>(id) > threads)
      throw ContractViolation("schedule names thread " + std::to_string(id));
    order.push_back(static_cast<std::size_t>(id - 1));
  }
  if (!in.eof()) throw ContractViolation("schedule is not a list of thread ids");
  return order;
}

// ---------------------------------------------------------------------------

TargetRun run_target(const TraceProgram& p, const Emitter& emit, const TargetConfig& cfg) {
  TargetRun run;
  const std::size_t n = cfg.threads == 0 ? 1 : cfg.threads;
  run.results.resize(n);
  std::uint64_t count = 0;
  if (n == 1) {
    Enclave enclave(p, [&](const Action& a, std::uint16_t tid) {
      ++count;
      emit(a, tid);
    }, cfg);
    ExecutionContext ctx;
    ctx.thread_id = 1;
    for (const auto& r : p.workload) {
      run.results[0].push_back(enclave.ecall(ctx, r.index, r.args));
      if (ctx.halted) break;
    }
    run.crashed = enclave.crashed();
    run.context_corrupted = enclave.context_corrupted();
    run.actions = count;
    return run;
  }

  TurnScheduler sched(n, cfg.schedule);
  Enclave enclave(p, [&](const Action& a, std::uint16_t tid) {
    ++count;
    emit(a, tid);
    const std::size_t i = tid - 1u;
    sched.pass(i);
    sched.wait_turn(i);
  }, cfg);
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < n; ++i)
    workers.emplace_back([&, i] {
      sched.wait_turn(i);
      try {
        ExecutionContext ctx;
        ctx.thread_id = static_cast<std::uint16_t>(i + 1);
        for (const auto& r : p.workload) {
          run.results[i].push_back(enclave.ecall(ctx, r.index, r.args));
          if (ctx.halted) break;
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
      sched.finish(i);
    });
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  run.crashed = enclave.crashed();
  run.context_corrupted = enclave.context_corrupted();
  run.actions = count;
  return run;
}

}  // namespace encprov
