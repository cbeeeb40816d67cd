#include "encprov/channel.hpp"

#include <algorithm>
#include <thread>

#include "encprov/crypto.hpp"
#include "encprov/errors.hpp"

namespace encprov {

Mac mac_compute(std::span<const std::uint8_t, kActionBytes> payload, const Key& key) {
  thread_local Sha256 h;
  const Digest d = h.update(payload).update(key).finish();
  Mac m;
  std::copy_n(d.begin(), kMacBytes, m.begin());
  return m;
}

Key key_evolve(const Key& key) {
  thread_local Sha256 h;
  const Digest a = h.update(key).update(std::uint8_t{0x00}).finish();
  const Digest b = h.update(key).update(std::uint8_t{0x01}).finish();
  Key out;
  std::copy(a.begin(), a.end(), out.begin());
  std::copy_n(b.begin(), kPacketBytes - a.size(), out.begin() + a.size());
  return out;
}

Key random_key() {
  Key k;
  random_bytes(k);
  return k;
}

Packet ChannelState::seal(std::span<const std::uint8_t, kActionBytes> payload) {
  const Mac mac = mac_compute(payload, key_);
  Packet p;
  for (std::size_t i = 0; i < kActionBytes; ++i) p[i] = payload[i] ^ key_[i];
  for (std::size_t i = 0; i < kMacBytes; ++i) p[kActionBytes + i] = mac[i] ^ key_[kActionBytes + i];
  key_ = key_evolve(key_);
  ++processed_;
  return p;
}

std::optional<std::array<std::uint8_t, kActionBytes>> ChannelState::open(const Packet& packet) {
  std::array<std::uint8_t, kActionBytes> payload;
  Mac received;
  for (std::size_t i = 0; i < kActionBytes; ++i) payload[i] = packet[i] ^ key_[i];
  for (std::size_t i = 0; i < kMacBytes; ++i) received[i] = packet[kActionBytes + i] ^ key_[kActionBytes + i];
  const Mac expected = mac_compute(payload, key_);
  key_ = key_evolve(key_);
  ++processed_;
  if (!equal_ct(received, expected)) {
    status_ = ChannelStatus::Untrusted;
    return std::nullopt;
  }
  return payload;
}

Packet report_log(ChannelState& ch, const Action& a, std::uint16_t thread_id) {
  const ActionBytes enc = action_encode(a, thread_id);
  return ch.seal(enc);
}

Packet seal_dummy(ChannelState& ch) {
  ActionBytes payload{};
  payload[0] = kDummyTag;
  return ch.seal(payload);
}

namespace {

bool is_dummy(std::span<const std::uint8_t, kActionBytes> payload) {
  return payload[0] == kDummyTag && std::all_of(payload.begin() + 1, payload.end(), [](auto b) { return b == 0; });
}

}  // namespace

VerifyOutcome verify_log(ChannelState& ch, const Packet& packet) {
  const bool was_trusted = ch.status() == ChannelStatus::Trusted;
  auto payload = ch.open(packet);
  if (!was_trusted || !payload) return {};
  if (is_dummy(*payload)) return {VerifyOutcome::Kind::Dummy, {}};
  try {
    return {VerifyOutcome::Kind::Action, action_decode(*payload)};
  } catch (const MalformedAction&) {
    ch.mark_untrusted();
    return {};
  }
}

ChannelState verifier_handshake(Transport& t, std::chrono::milliseconds timeout) {
  const Key k = random_key();
  std::array<std::uint8_t, 1 + kPacketBytes> frame;
  frame[0] = kHandshakeVersion;
  std::copy(k.begin(), k.end(), frame.begin() + 1);
  try {
    t.write(frame);
    t.flush();
  } catch (const TransportError& e) {
    throw HandshakeFailed(std::string("handshake send failed: ") + e.what());
  }
  return ChannelState(ChannelRole::Verifier, k, timeout);
}

Reporter::Reporter(Transport& transport) : transport_(transport), rng_(std::random_device{}()) {}

void Reporter::handshake(std::chrono::milliseconds timeout) {
  std::array<std::uint8_t, 1 + kPacketBytes> frame;
  ReadStatus status;
  try {
    status = transport_.read_exact(frame, timeout);
  } catch (const TransportError& e) {
    throw HandshakeFailed(std::string("handshake receive failed: ") + e.what());
  }
  if (status == ReadStatus::Timeout) throw HandshakeFailed("handshake timed out");
  if (status == ReadStatus::Eof) throw HandshakeFailed("peer closed during handshake");
  if (frame[0] != kHandshakeVersion) throw HandshakeFailed("unsupported handshake version");
  Key k;
  std::copy(frame.begin() + 1, frame.end(), k.begin());
  std::lock_guard lock(mu_);
  state_.emplace(ChannelRole::Reporter, k);
}

bool Reporter::ready() const {
  std::lock_guard lock(mu_);
  return state_.has_value();
}

void Reporter::write_locked(const Packet& p) { transport_.write(p); }

void Reporter::report(const Action& a, std::uint16_t thread_id) {
  std::lock_guard lock(mu_);
  if (!state_) throw ChannelNotReady("report before handshake");
  const Packet p = report_log(*state_, a, thread_id);
  if (record_) transcript_.push_back({a, thread_id});
  if (key_observer_) key_observer_(state_->key());
  write_locked(p);
  if (dummies_) emit_dummies_locked(*dummies_);
  if (a.type == ActionType::Exit || a.type == ActionType::OcallExit) transport_.flush();
}

void Reporter::emit_dummies_locked(const DummyConfig& cfg) {
  if (cfg.k_max == 0) return;
  std::uniform_int_distribution<std::uint32_t> count(0, cfg.k_max);
  std::uniform_int_distribution<std::int64_t> delay(0, cfg.t_max.count());
  const std::uint32_t n = count(rng_);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (cfg.t_max.count() > 0) std::this_thread::sleep_for(std::chrono::microseconds(delay(rng_)));
    write_locked(seal_dummy(*state_));
  }
}

void Reporter::emit_dummies(const DummyConfig& cfg) {
  std::lock_guard lock(mu_);
  if (!state_) throw ChannelNotReady("dummies before handshake");
  emit_dummies_locked(cfg);
}

void Reporter::set_dummies(const DummyConfig& cfg, std::uint64_t seed) {
  std::lock_guard lock(mu_);
  dummies_ = cfg;
  rng_.seed(seed);
}

void Reporter::set_transcript(bool enabled) {
  std::lock_guard lock(mu_);
  record_ = enabled;
}

std::vector<DecodedAction> Reporter::transcript() const {
  std::lock_guard lock(mu_);
  return transcript_;
}

void Reporter::flush() {
  std::lock_guard lock(mu_);
  transport_.flush();
}

void Reporter::close() {
  std::lock_guard lock(mu_);
  transport_.close();
}

std::uint64_t Reporter::packets_sent() const {
  std::lock_guard lock(mu_);
  return state_ ? state_->packets_processed() : 0;
}

Key Reporter::current_key() const {
  std::lock_guard lock(mu_);
  if (!state_) throw ChannelNotReady("no key before handshake");
  return state_->key();
}

void Reporter::set_key_observer(std::function<void(const Key&)> observer) {
  std::lock_guard lock(mu_);
  key_observer_ = std::move(observer);
}

}  // namespace encprov
