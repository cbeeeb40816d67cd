#include <random>
#include <stdexcept>

#include "doctest.h"
#include "encprov/crypto.hpp"
#include "sha256_ref.hpp"

using namespace encprov;

TEST_CASE("sha256 known answers") {
  CHECK(to_hex(sha256(as_bytes(""))) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(to_hex(sha256(as_bytes("abc"))) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(to_hex(sha256(as_bytes("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"))) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("sha256 agrees with the reference transcription on random inputs") {
  std::mt19937_64 rng(7);
  for (std::size_t len = 0; len < 300; len += 7) {
    std::vector<std::uint8_t> msg(len);
    for (auto& b : msg) b = static_cast<std::uint8_t>(rng());
    CHECK(sha256(msg) == ref::sha256(msg));
    Sha256 inc;
    for (auto b : msg) inc.update(b);
    CHECK(inc.finish() == ref::sha256(msg));
  }
}

TEST_CASE("hmac-sha256 known answer") {
  CHECK(to_hex(hmac_sha256(as_bytes("Jefe"), as_bytes("what do ya want for nothing?"))) ==
        "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
}

TEST_CASE("structure hash is the little-endian digest prefix") {
  const auto d = ref::sha256(as_bytes("frame"));
  std::uint64_t expect = 0;
  for (int i = 7; i >= 0; --i) expect = (expect << 8) | d[static_cast<std::size_t>(i)];
  CHECK(structure_hash(as_bytes("frame")) == expect);
}

TEST_CASE("hex codec") {
  const std::vector<std::uint8_t> v = {0x00, 0xab, 0xff, 0x10};
  CHECK(to_hex(v) == "00abff10");
  CHECK(from_hex("00ABff10") == v);
  CHECK_THROWS_AS(from_hex("abc"), std::invalid_argument);
  CHECK_THROWS_AS(from_hex("zz"), std::invalid_argument);
}

TEST_CASE("constant-time equality") {
  const std::vector<std::uint8_t> a = {1, 2, 3}, b = {1, 2, 3}, c = {1, 2, 4}, d = {1, 2};
  CHECK(equal_ct(a, b));
  CHECK_FALSE(equal_ct(a, c));
  CHECK_FALSE(equal_ct(a, d));
}

TEST_CASE("random bytes are not constant") {
  std::array<std::uint8_t, 32> a{}, b{};
  random_bytes(a);
  random_bytes(b);
  CHECK(a != b);
}
