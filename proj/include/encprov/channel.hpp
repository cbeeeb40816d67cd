#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "encprov/action.hpp"
#include "encprov/transport.hpp"

namespace encprov {

inline constexpr std::size_t kMacBytes = 16;
inline constexpr std::size_t kPacketBytes = kActionBytes + kMacBytes;
inline constexpr std::uint8_t kHandshakeVersion = 0x01;
inline constexpr std::chrono::milliseconds kDefaultChannelTimeout{5000};

using Key = std::array<std::uint8_t, kPacketBytes>;
using Packet = std::array<std::uint8_t, kPacketBytes>;
using Mac = std::array<std::uint8_t, kMacBytes>;

/// First 16 bytes of SHA-256(payload || key).
Mac mac_compute(std::span<const std::uint8_t, kActionBytes> payload, const Key& key);

/// SHA-256(key || 0x00) || SHA-256(key || 0x01)[0:16].
Key key_evolve(const Key& key);

Key random_key();

enum class ChannelRole : std::uint8_t { Reporter, Verifier };
enum class ChannelStatus : std::uint8_t { Trusted, Untrusted };

/// One endpoint's view of the log channel. Every seal/open consumes the
/// current key exactly once and replaces it with key_evolve(key).
class ChannelState {
 public:
  ChannelState(ChannelRole role, const Key& initial, std::chrono::milliseconds timeout = kDefaultChannelTimeout)
      : role_(role), key_(initial), timeout_(timeout) {}

  ChannelRole role() const noexcept { return role_; }
  const Key& key() const noexcept { return key_; }
  std::uint64_t packets_processed() const noexcept { return processed_; }
  ChannelStatus status() const noexcept { return status_; }
  std::chrono::milliseconds timeout() const noexcept { return timeout_; }

  /// Untrusted is absorbing.
  void mark_untrusted() noexcept { status_ = ChannelStatus::Untrusted; }

  /// (payload || mac) XOR K, then evolve K.
  Packet seal(std::span<const std::uint8_t, kActionBytes> payload);

  /// Decrypts under K and evolves K regardless of the outcome. Returns the
  /// payload when the MAC matches; on mismatch marks the channel untrusted.
  std::optional<std::array<std::uint8_t, kActionBytes>> open(const Packet& packet);

 private:
  ChannelRole role_;
  Key key_;
  std::chrono::milliseconds timeout_;
  std::uint64_t processed_ = 0;
  ChannelStatus status_ = ChannelStatus::Trusted;
};

/// Encodes and seals one action. The caller serializes access to `ch`.
Packet report_log(ChannelState& ch, const Action& a, std::uint16_t thread_id);

/// Sealed dummy packet: reserved tag, zero body, valid MAC.
Packet seal_dummy(ChannelState& ch);

struct VerifyOutcome {
  enum class Kind : std::uint8_t { Action, Dummy, Untrusted } kind = Kind::Untrusted;
  DecodedAction decoded;
};

/// Authenticates and decodes one packet. A MAC mismatch, a malformed payload,
/// or a channel already untrusted all yield Untrusted.
VerifyOutcome verify_log(ChannelState& ch, const Packet& packet);

/// Verifier side of the stub handshake: draws a fresh key, sends
/// version || key, and returns the verifier state. Throws HandshakeFailed.
ChannelState verifier_handshake(Transport& t, std::chrono::milliseconds timeout = kDefaultChannelTimeout);

struct DummyConfig {
  std::uint32_t k_max = 0;
  std::chrono::microseconds t_max{0};
};

/// Target-side emitter. All threads share one key and one emission order;
/// report() is serialized by an internal mutex.
class Reporter {
 public:
  explicit Reporter(Transport& transport);

  /// Receives the initial key. Throws HandshakeFailed on transport failure,
  /// timeout, or a bad version byte.
  void handshake(std::chrono::milliseconds timeout = kDefaultChannelTimeout);
  bool ready() const;

  /// Seals and writes one action, then emits dummies if configured. Flushes
  /// the transport on T and D (the thread leaves the enclave). Throws
  /// ChannelNotReady before the handshake. On a transport failure the key
  /// stays evolved and TransportError propagates.
  void report(const Action& a, std::uint16_t thread_id);

  /// Writes between 0 and k_max dummies, each after a uniform delay in [0, t_max].
  void emit_dummies(const DummyConfig& cfg);

  void set_dummies(const DummyConfig& cfg, std::uint64_t seed);
  /// Keeps a decrypted copy of every real action for test oracles.
  void set_transcript(bool enabled);
  std::vector<DecodedAction> transcript() const;

  void flush();
  void close();

  std::uint64_t packets_sent() const;
  /// Key state after the most recent emission (what a post-hoc memory
  /// disclosure would reveal).
  Key current_key() const;
  /// Test hook modelling a memory disclosure: called with the evolved key
  /// after each real action is sealed and before its packet is written.
  void set_key_observer(std::function<void(const Key&)> observer);

 private:
  void write_locked(const Packet& p);
  void emit_dummies_locked(const DummyConfig& cfg);

  Transport& transport_;
  mutable std::mutex mu_;
  std::optional<ChannelState> state_;
  std::optional<DummyConfig> dummies_;
  std::mt19937_64 rng_;
  bool record_ = false;
  std::vector<DecodedAction> transcript_;
  std::function<void(const Key&)> key_observer_;
};

}  // namespace encprov
