#include "encprov/attack.hpp"

#include <algorithm>
#include <memory>
#include <thread>

#include "encprov/errors.hpp"
#include "encprov/runtime_layout.hpp"

namespace encprov {

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::RopInstall: return "rop-install";
    case Scenario::BackdoorActivation: return "backdoor-activation";
    case Scenario::StackOverwrite: return "stack-overwrite";
    case Scenario::WireTamper: return "wire-tamper";
    case Scenario::WireDrop: return "wire-drop";
    case Scenario::WireReplay: return "wire-replay";
    case Scenario::WireForge: return "wire-forge";
  }
  return "?";
}

std::optional<Scenario> scenario_from_string(std::string_view s) {
  for (Scenario c : kAllScenarios)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

AnomalyClass expected_class(Scenario s) {
  switch (s) {
    case Scenario::RopInstall: return AnomalyClass::UnknownEdge;
    case Scenario::BackdoorActivation: return AnomalyClass::StructureMismatch;
    case Scenario::StackOverwrite: return AnomalyClass::ShadowStackViolation;
    default: return AnomalyClass::ProtocolTamper;
  }
}

bool is_wire_scenario(Scenario s) {
  return s == Scenario::WireTamper || s == Scenario::WireDrop || s == Scenario::WireReplay || s == Scenario::WireForge;
}

namespace {

std::set<std::uint64_t> sites_of(const TraceProgram& p, std::initializer_list<Opcode> ops) {
  std::set<std::uint64_t> out;
  for (const auto& f : p.functions)
    for (const auto& b : f.blocks)
      for (const auto& i : b.instrs)
        if (std::find(ops.begin(), ops.end(), i.op) != ops.end()) out.insert(i.addr);
  return out;
}

}  // namespace

Emitter attack_emitter(Scenario s, const TraceProgram& p, Emitter inner, const AttackParams& params) {
  if (s != Scenario::RopInstall && s != Scenario::StackOverwrite) return inner;
  const bool rop = s == Scenario::RopInstall;
  auto sites = std::make_shared<std::set<std::uint64_t>>(
      rop ? sites_of(p, {Opcode::Call, Opcode::ICall}) : sites_of(p, {Opcode::Ret}));
  auto call_sites = std::make_shared<std::set<std::uint64_t>>(sites_of(p, {Opcode::Call, Opcode::ICall}));
  if (sites->empty()) throw ContractViolation(std::string(to_string(s)) + " needs a program with a suitable site");
  auto done = std::make_shared<bool>(false);
  const std::uint64_t gadget = params.gadget;
  return [=](const Action& a, std::uint16_t tid) {
    if (*done || a.type != ActionType::Edge || !a.src || !sites->contains(*a.src)) return inner(a, tid);
    Action forged = a;
    if (rop) {
      forged.value = gadget;
    } else {
      // Return into some other legitimate call site instead of the caller.
      std::optional<std::uint64_t> other;
      for (std::uint64_t c : *call_sites)
        if (c != a.value) {
          other = c;
          break;
        }
      forged.value = other.value_or(runtime::kEcallReturnSite == a.value ? *call_sites->begin()
                                                                         : runtime::kEcallReturnSite);
    }
    *done = true;
    inner(forged, tid);
    throw ThreadHijacked{};
  };
}

TargetConfig attack_target_config(Scenario s, TargetConfig base) {
  if (s == Scenario::BackdoorActivation) base.corrupt_first_ocall_context = true;
  return base;
}

// ---------------------------------------------------------------------------

TamperingTransport::TamperingTransport(Transport& inner, Scenario s, AttackParams params)
    : inner_(inner), scenario_(s), params_(params) {
  if (s == Scenario::WireReplay && params.replay_source >= params.packet_index)
    throw ContractViolation("replay source must precede the injection point");
}

void TamperingTransport::observe_key(const Key& k) { leaked_ = k; }

void TamperingTransport::write(std::span<const std::uint8_t> data) {
  partial_.insert(partial_.end(), data.begin(), data.end());
  std::size_t off = 0;
  while (partial_.size() - off >= kPacketBytes) {
    Packet p;
    std::copy_n(partial_.begin() + static_cast<std::ptrdiff_t>(off), kPacketBytes, p.begin());
    on_packet(p);
    off += kPacketBytes;
  }
  partial_.erase(partial_.begin(), partial_.begin() + static_cast<std::ptrdiff_t>(off));
}

void TamperingTransport::on_packet(const Packet& original) {
  const std::uint64_t i = count_++;
  const bool leak = leaked_.has_value();
  const std::optional<Key> key = std::exchange(leaked_, std::nullopt);
  Packet p = original;
  if (scenario_ == Scenario::WireReplay && i < params_.packet_index) history_.push_back(p);
  if (fired_ || i < params_.packet_index) return inner_.write(p);

  switch (scenario_) {
    case Scenario::WireTamper:
      p[params_.byte_index % kPacketBytes] ^= static_cast<std::uint8_t>(1u << (params_.bit % 8));
      break;
    case Scenario::WireDrop:
      fired_ = true;
      return;
    case Scenario::WireReplay:
      inner_.write(history_.at(params_.replay_source));
      break;
    case Scenario::WireForge: {
      // Needs the key disclosed right after this packet was sealed.
      if (!leak) return inner_.write(p);
      ChannelState forger(ChannelRole::Reporter, *key);
      p = report_log(forger, Action::edge(0x1000, params_.gadget), 1);
      break;
    }
    default:
      return inner_.write(p);
  }
  fired_ = true;
  inner_.write(p);
}

// ---------------------------------------------------------------------------

DriveResult drive_target(Transport& t, const TraceProgram& p, const DriveOptions& opt) {
  std::unique_ptr<TamperingTransport> shim;
  Transport* out = &t;
  if (opt.scenario && is_wire_scenario(*opt.scenario)) {
    shim = std::make_unique<TamperingTransport>(t, *opt.scenario, opt.params);
    out = shim.get();
  }
  Reporter reporter(*out);
  reporter.handshake(opt.handshake_timeout);
  if (opt.transcript) reporter.set_transcript(true);
  if (opt.dummies) reporter.set_dummies(*opt.dummies, opt.dummy_seed);
  if (shim && *opt.scenario == Scenario::WireForge) {
    TamperingTransport* s = shim.get();
    reporter.set_key_observer([s](const Key& k) { s->observe_key(k); });
  }

  Emitter emit = [&reporter](const Action& a, std::uint16_t tid) { reporter.report(a, tid); };
  TargetConfig cfg = opt.target;
  bool hijacked = false;
  if (opt.scenario) {
    cfg = attack_target_config(*opt.scenario, cfg);
    Emitter injected = attack_emitter(*opt.scenario, p, emit, opt.params);
    emit = [&hijacked, injected](const Action& a, std::uint16_t tid) {
      try {
        injected(a, tid);
      } catch (const ThreadHijacked&) {
        hijacked = true;
        throw;
      }
    };
  }

  DriveResult r;
  r.run = run_target(p, emit, cfg);
  reporter.close();
  r.packets = reporter.packets_sent();
  if (opt.transcript) r.transcript = reporter.transcript();
  if (opt.scenario) {
    switch (*opt.scenario) {
      case Scenario::RopInstall:
      case Scenario::StackOverwrite: r.attack_fired = hijacked; break;
      case Scenario::BackdoorActivation: r.attack_fired = r.run.context_corrupted; break;
      default: r.attack_fired = shim->fired(); break;
    }
  }
  return r;
}

AttackOutcome run_attack(Scenario s, const TraceProgram& p, const EnclaveModel& model, const AttackParams& params,
                         TargetConfig base) {
  auto [target_end, monitor_end] = make_memory_pipe();
  AttackOutcome out;
  out.scenario = s;
  out.expected = expected_class(s);
  std::thread monitor([&] { out.summary = run_session(*monitor_end, model); });
  DriveOptions opt;
  opt.target = base;
  opt.scenario = s;
  opt.params = params;
  try {
    out.fired = drive_target(*target_end, p, opt).attack_fired;
  } catch (...) {
    target_end->close();
    monitor.join();
    throw;
  }
  monitor.join();
  out.first = out.summary.first_anomaly();
  return out;
}

}  // namespace encprov
