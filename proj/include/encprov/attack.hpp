#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "encprov/channel.hpp"
#include "encprov/model.hpp"
#include "encprov/monitor.hpp"
#include "encprov/program.hpp"
#include "encprov/target.hpp"
#include "encprov/verifier.hpp"

namespace encprov {

enum class Scenario : std::uint8_t {
  RopInstall,
  BackdoorActivation,
  StackOverwrite,
  WireTamper,
  WireDrop,
  WireReplay,
  WireForge,
};

inline constexpr std::array<Scenario, 7> kAllScenarios = {
    Scenario::RopInstall, Scenario::BackdoorActivation, Scenario::StackOverwrite, Scenario::WireTamper,
    Scenario::WireDrop,   Scenario::WireReplay,         Scenario::WireForge,
};

std::string_view to_string(Scenario s);
std::optional<Scenario> scenario_from_string(std::string_view s);
/// The classification the monitor must report for the scenario.
AnomalyClass expected_class(Scenario s);
/// True for scenarios that act on packets rather than on emitted actions.
bool is_wire_scenario(Scenario s);

struct AttackParams {
  /// Address of the rogue gadget (outside every model).
  std::uint64_t gadget = 0xdead0000;
  /// 0-based index (among packets sent after the handshake) of the packet
  /// the wire scenarios act on.
  std::uint64_t packet_index = 8;
  std::size_t byte_index = 5;
  unsigned bit = 3;
  /// Earlier packet injected again by wire-replay.
  std::uint64_t replay_source = 2;
};

/// Emission-layer injector. For rop-install and stack-overwrite it rewrites
/// the first qualifying action, lets it through, then hijacks the thread;
/// for every other scenario it forwards unchanged.
Emitter attack_emitter(Scenario s, const TraceProgram& p, Emitter inner, const AttackParams& params = {});

/// Host-side perturbations that live in the target configuration.
TargetConfig attack_target_config(Scenario s, TargetConfig base);

/// Malicious-host shim on the target's outbound stream. Counts whole
/// packets and perturbs exactly one of them.
class TamperingTransport final : public Transport {
 public:
  TamperingTransport(Transport& inner, Scenario s, AttackParams params);

  void write(std::span<const std::uint8_t> data) override;
  void flush() override { inner_.flush(); }
  std::pair<ReadStatus, std::size_t> read_some(std::span<std::uint8_t> out, Timeout timeout) override {
    return inner_.read_some(out, timeout);
  }
  void close() override { inner_.close(); }
  std::string peer_name() const override { return inner_.peer_name(); }
  std::string local_name() const override { return inner_.local_name(); }

  /// Memory-disclosure feed for wire-forge: the key after the latest seal.
  void observe_key(const Key& k);
  bool fired() const { return fired_; }

 private:
  void on_packet(const Packet& p);

  Transport& inner_;
  Scenario scenario_;
  AttackParams params_;
  std::vector<std::uint8_t> partial_;
  std::vector<Packet> history_;
  std::uint64_t count_ = 0;
  std::optional<Key> leaked_;
  bool fired_ = false;
};

struct DriveOptions {
  TargetConfig target;
  std::optional<Scenario> scenario;
  AttackParams params;
  std::optional<DummyConfig> dummies;
  std::uint64_t dummy_seed = 1;
  bool transcript = false;
  std::chrono::milliseconds handshake_timeout = kDefaultChannelTimeout;
};

struct DriveResult {
  TargetRun run;
  std::uint64_t packets = 0;
  std::vector<DecodedAction> transcript;
  /// Whether the scenario's perturbation actually took place.
  bool attack_fired = false;
};

/// Host driver: handshake, run the workload through a Reporter (with the
/// scenario's injectors in place), then close the stream.
DriveResult drive_target(Transport& t, const TraceProgram& p, const DriveOptions& opt = {});

struct AttackOutcome {
  Scenario scenario = Scenario::RopInstall;
  AnomalyClass expected = AnomalyClass::UnknownEdge;
  std::optional<AnomalyReport> first;
  SessionSummary summary;
  bool fired = false;

  bool detected() const { return fired && first && first->cls == expected; }
};

/// Runs the scenario against an in-process monitor session over a memory pipe.
AttackOutcome run_attack(Scenario s, const TraceProgram& p, const EnclaveModel& model, const AttackParams& params = {},
                         TargetConfig base = {});

}  // namespace encprov
