#include <vector>

#include "doctest.h"
#include "encprov/action.hpp"
#include "encprov/errors.hpp"
#include "encprov/state.hpp"

using namespace encprov;

TEST_CASE("tags round-trip through letters and wire bytes") {
  const std::string letters = "ABCDEGJKNRTV";
  for (std::size_t i = 0; i < kAllActionTypes.size(); ++i) {
    const ActionType t = kAllActionTypes[i];
    CHECK(tag_letter(t) == letters[i]);
    CHECK(type_from_letter(letters[i]) == t);
    CHECK(type_from_tag(static_cast<std::uint8_t>(t)) == t);
  }
  CHECK_FALSE(type_from_tag(0).has_value());
  CHECK_FALSE(type_from_tag(kDummyTag).has_value());
  CHECK_FALSE(type_from_letter('Z').has_value());
}

TEST_CASE("generic versus stop classification") {
  for (ActionType t : kAllActionTypes) {
    const bool generic = t == ActionType::Edge || t == ActionType::Branch || t == ActionType::FnPtrAssign ||
                         t == ActionType::VPtrAssign;
    CHECK(is_stop(t) == !generic);
  }
}

TEST_CASE("encoding is fixed-layout little-endian") {
  const Action a = Action::edge(0x1122334455667788ull, 0x0102030405060708ull);
  const ActionBytes b = action_encode(a, 0xBEEF);
  CHECK(b[0] == static_cast<std::uint8_t>(ActionType::Edge));
  CHECK(b[1] == 0);
  CHECK(b[2] == 0xEF);
  CHECK(b[3] == 0xBE);
  CHECK(b[4] == 0x88);
  CHECK(b[11] == 0x11);
  CHECK(b[12] == 0x08);
  CHECK(b[19] == 0x01);
  for (std::size_t i = 20; i < kActionBytes; ++i) CHECK(b[i] == 0);
}

TEST_CASE("decode inverts encode for every type") {
  const std::vector<Action> samples = {
      Action::edge(0x10, 0x20),           Action::branch(0x14, true),
      Action::branch(0x18, false),        Action::fnptr(0x1c, 0x4000),
      Action::vptr(0x20, 0x5000),         Action::enter(0x70000000, 3),
      Action::enter(0x70000000, -2),      Action::enter(0x70000000, -3),
      Action::structure(ActionType::OcallCtxGen, 0x24, 0xabcdef),
      Action::structure(ActionType::OcallCtxUse, 0x24, 0xabcdef),
      Action::structure(ActionType::ExcInfoGen, 0x28, 7),
      Action::structure(ActionType::ExcInfoUse, 0x28, 7),
      Action::bare(ActionType::Exit, 0x70000000), Action::bare(ActionType::OcallExit, 0x30),
      Action::bare(ActionType::Resume, 0x70000000),
  };
  for (const Action& a : samples) {
    const auto d = action_decode(action_encode(a, 9));
    CHECK(d.action == a);
    CHECK(d.thread_id == 9);
  }
}

TEST_CASE("malformed payloads are rejected") {
  ActionBytes b = action_encode(Action::edge(1, 2), 1);
  SUBCASE("unknown tag") { b[0] = 0x40; }
  SUBCASE("dummy tag is not an action") { b[0] = kDummyTag; }
  SUBCASE("stray flag bits") { b[1] = 0x80; }
  SUBCASE("nonzero padding") { b[31] = 1; }
  SUBCASE("branch outcome out of range") {
    b = action_encode(Action::branch(1, true), 1);
    b[12] = 2;
  }
  SUBCASE("exit carrying a value") {
    b = action_encode(Action::bare(ActionType::Exit, 1), 1);
    b[1] = 0;
  }
  CHECK_THROWS_AS(action_decode(b), MalformedAction);
}

TEST_CASE("encoding an invalid action throws") {
  CHECK_THROWS_AS(action_encode(Action{ActionType::Branch, 1, 5}, 1), MalformedAction);
  CHECK_THROWS_AS(action_encode(Action{ActionType::Exit, 1, 5}, 1), MalformedAction);
}

TEST_CASE("edges may carry null fields") {
  const Action a{ActionType::Edge, std::nullopt, std::nullopt};
  CHECK(action_decode(action_encode(a, 1)).action == a);
}

TEST_CASE("conditions") {
  CHECK(Condition::any().matches(std::nullopt));
  CHECK(Condition::any().matches(5));
  CHECK(Condition::equals(-2).matches(static_cast<std::uint64_t>(-2)));
  CHECK_FALSE(Condition::equals(1).matches(0));
  CHECK(Condition::at_least(0).matches(4));
  CHECK_FALSE(Condition::at_least(0).matches(static_cast<std::uint64_t>(-3)));
  CHECK(Condition::call(0x4000).matches(0x4000));
  CHECK_FALSE(Condition::call(0x4000).matches(0x4004));
  for (const Condition c : {Condition::any(), Condition::equals(-3), Condition::at_least(0), Condition::call(0x10),
                            Condition::ret()})
    CHECK(parse_condition(to_string(c)) == c);
  CHECK_FALSE(parse_condition("eq:").has_value());
  CHECK_FALSE(parse_condition("bogus").has_value());
}

TEST_CASE("state triplet follows stop actions") {
  StateTriplet s;
  CHECK(to_string(s) == "(non-in-use,null,null)");
  s = state_apply(s, Action::enter(0x70000000, 0));
  CHECK(s.usage == Usage::InUse);
  s = state_apply(s, Action::structure(ActionType::OcallCtxGen, 0x10, 0x42));
  CHECK(s.structure == 0x42u);
  CHECK(s.operation == StructOp::Generated);
  s = state_apply(s, Action::bare(ActionType::OcallExit, 0x10));
  CHECK(s.usage == Usage::NonInUse);
  CHECK(s.structure == 0x42u);
  s = state_apply(s, Action::enter(0x10, -2));
  s = state_apply(s, Action::structure(ActionType::OcallCtxUse, 0x10, 0x42));
  CHECK(s.usage == Usage::InUse);
  CHECK(s.operation == StructOp::Consumed);
  CHECK_THROWS_AS(state_apply(s, Action::edge(1, 2)), ContractViolation);
}
