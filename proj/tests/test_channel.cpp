#include <algorithm>
#include <thread>

#include "doctest.h"
#include "encprov/channel.hpp"
#include "encprov/errors.hpp"
#include "sha256_ref.hpp"

using namespace encprov;

namespace {

Key fixed_key(std::uint8_t seed) {
  Key k;
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<std::uint8_t>(seed + 3 * i);
  return k;
}

/// Independent restatement of the key schedule using the reference hash.
Key ref_evolve(const Key& k) {
  std::vector<std::uint8_t> m(k.begin(), k.end());
  m.push_back(0);
  const auto a = ref::sha256(m);
  m.back() = 1;
  const auto b = ref::sha256(m);
  Key out;
  std::copy(a.begin(), a.end(), out.begin());
  std::copy_n(b.begin(), 16, out.begin() + 32);
  return out;
}

}  // namespace

TEST_CASE("key evolution matches the reference construction") {
  Key k = fixed_key(1), r = k;
  for (int i = 0; i < 100; ++i) {
    k = key_evolve(k);
    r = ref_evolve(r);
    REQUIRE(k == r);
  }
}

TEST_CASE("mac is the truncated hash of payload then key") {
  const Key k = fixed_key(9);
  ActionBytes payload = action_encode(Action::edge(0x10, 0x20), 1);
  std::vector<std::uint8_t> m(payload.begin(), payload.end());
  m.insert(m.end(), k.begin(), k.end());
  const auto d = ref::sha256(m);
  const Mac mac = mac_compute(payload, k);
  CHECK(std::equal(mac.begin(), mac.end(), d.begin()));
}

TEST_CASE("sealed packet is (payload || mac) xor key") {
  const Key k = fixed_key(4);
  ChannelState rep(ChannelRole::Reporter, k);
  const ActionBytes payload = action_encode(Action::branch(0x44, true), 2);
  const Packet p = rep.seal(payload);
  const Mac mac = mac_compute(payload, k);
  for (std::size_t i = 0; i < kActionBytes; ++i) CHECK((p[i] ^ k[i]) == payload[i]);
  for (std::size_t i = 0; i < kMacBytes; ++i) CHECK((p[kActionBytes + i] ^ k[kActionBytes + i]) == mac[i]);
  CHECK(rep.key() == key_evolve(k));
}

TEST_CASE("reporter and verifier stay in sync") {
  const Key k = fixed_key(2);
  ChannelState rep(ChannelRole::Reporter, k), ver(ChannelRole::Verifier, k);
  for (std::uint64_t i = 0; i < 500; ++i) {
    const Action a = Action::edge(i, i + 1);
    const auto out = verify_log(ver, report_log(rep, a, 3));
    REQUIRE(out.kind == VerifyOutcome::Kind::Action);
    CHECK(out.decoded.action == a);
    CHECK(out.decoded.thread_id == 3);
  }
  CHECK(rep.key() == ver.key());
  CHECK(ver.packets_processed() == 500);
}

TEST_CASE("dummies authenticate and are distinguishable") {
  const Key k = fixed_key(5);
  ChannelState rep(ChannelRole::Reporter, k), ver(ChannelRole::Verifier, k);
  CHECK(verify_log(ver, seal_dummy(rep)).kind == VerifyOutcome::Kind::Dummy);
  CHECK(verify_log(ver, report_log(rep, Action::edge(1, 2), 1)).kind == VerifyOutcome::Kind::Action);
}

TEST_CASE("any corruption is absorbing") {
  const Key k = fixed_key(6);
  ChannelState rep(ChannelRole::Reporter, k), ver(ChannelRole::Verifier, k);
  Packet p = report_log(rep, Action::edge(1, 2), 1);
  p[40] ^= 0x01;
  CHECK(verify_log(ver, p).kind == VerifyOutcome::Kind::Untrusted);
  CHECK(ver.status() == ChannelStatus::Untrusted);
  // Keys still advance, but nothing is accepted any more.
  CHECK(ver.key() == rep.key());
  CHECK(verify_log(ver, report_log(rep, Action::edge(1, 2), 1)).kind == VerifyOutcome::Kind::Untrusted);
}

TEST_CASE("an authentic packet with a malformed payload is untrusted") {
  const Key k = fixed_key(7);
  ChannelState rep(ChannelRole::Reporter, k), ver(ChannelRole::Verifier, k);
  ActionBytes junk{};
  junk[0] = 0x33;
  CHECK(verify_log(ver, rep.seal(junk)).kind == VerifyOutcome::Kind::Untrusted);
}

TEST_CASE("reporter handshake and errors") {
  auto [target, monitor] = make_memory_pipe();
  Reporter r(*target);
  CHECK_FALSE(r.ready());
  CHECK_THROWS_AS(r.report(Action::edge(1, 2), 1), ChannelNotReady);

  std::optional<ChannelState> ver;
  std::thread t([&] { ver = verifier_handshake(*monitor); });
  r.handshake();
  t.join();
  CHECK(r.ready());
  r.set_transcript(true);
  r.report(Action::edge(1, 2), 1);
  r.report(Action::bare(ActionType::Exit, 3), 1);
  r.close();
  CHECK(r.packets_sent() == 2);
  CHECK(r.transcript().size() == 2);

  Packet p;
  for (int i = 0; i < 2; ++i) {
    REQUIRE(monitor->read_exact(p, std::chrono::milliseconds(1000)) == ReadStatus::Ok);
    CHECK(verify_log(*ver, p).kind == VerifyOutcome::Kind::Action);
  }
  CHECK(monitor->read_exact(p, std::chrono::milliseconds(1000)) == ReadStatus::Eof);
  CHECK(r.current_key() == ver->key());
}

TEST_CASE("handshake rejects a bad version byte and a silent peer") {
  auto [target, monitor] = make_memory_pipe();
  Reporter r(*target);
  std::vector<std::uint8_t> bad(1 + kPacketBytes, 0);
  bad[0] = 0x02;
  monitor->write(bad);
  monitor->flush();
  CHECK_THROWS_AS(r.handshake(std::chrono::milliseconds(500)), HandshakeFailed);

  auto [t2, m2] = make_memory_pipe();
  Reporter r2(*t2);
  CHECK_THROWS_AS(r2.handshake(std::chrono::milliseconds(50)), HandshakeFailed);
}

TEST_CASE("dummy emission is bounded by k_max") {
  auto [target, monitor] = make_memory_pipe();
  Reporter r(*target);
  std::optional<ChannelState> ver;
  std::thread t([&] { ver = verifier_handshake(*monitor); });
  r.handshake();
  t.join();
  r.set_dummies({3, std::chrono::microseconds(0)}, 11);
  for (int i = 0; i < 50; ++i) r.report(Action::edge(1, 2), 1);
  r.close();
  const std::uint64_t sent = r.packets_sent();
  CHECK(sent >= 50);
  CHECK(sent <= 50 + 50 * 3);
  std::uint64_t actions = 0, dummies = 0;
  Packet p;
  while (monitor->read_exact(p, std::chrono::milliseconds(1000)) == ReadStatus::Ok) {
    const auto o = verify_log(*ver, p);
    REQUIRE(o.kind != VerifyOutcome::Kind::Untrusted);
    (o.kind == VerifyOutcome::Kind::Action ? actions : dummies)++;
  }
  CHECK(actions == 50);
  CHECK(actions + dummies == sent);
}
