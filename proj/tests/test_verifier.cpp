#include "doctest.h"
#include "encprov/errors.hpp"
#include "encprov/runtime_layout.hpp"
#include "corpus.hpp"
#include "fsm_table.hpp"
#include "harness.hpp"

using namespace encprov;

namespace {

struct Fixture {
  TraceProgram program;
  EnclaveModel model;
  std::vector<DecodedAction> stream;

  explicit Fixture(const std::string& name)
      : program(load_program(corpus::path(name))),
        model(extract_model(program).model),
        stream(harness::collect(program)) {}

  std::optional<AnomalyReport> first_after(std::vector<DecodedAction> s) const {
    const auto a = harness::verify(model, s);
    return a.empty() ? std::nullopt : std::optional(a.front());
  }

  std::size_t find(ActionType t, std::size_t from = 0) const {
    for (std::size_t i = from; i < stream.size(); ++i)
      if (stream[i].action.type == t) return i;
    FAIL("action type not in stream");
    return 0;
  }
};

}  // namespace

TEST_CASE("life-cycle conformance table") {
  const auto out = fsm_table::run();
  CHECK(out.checked == kFsmPhaseCount * fsm_table::probes().size());
  for (const auto& f : out.failures) FAIL_CHECK(f);
}

TEST_CASE("life-cycle rejects generic actions and malformed stops") {
  FsmState st;
  CHECK_THROWS_AS(fsm_advance(st, Action::edge(1, 2)), ContractViolation);
  CHECK_FALSE(fsm_advance(st, Action{ActionType::Exit, 1, 5}).ok);
}

TEST_CASE("nested ECALL from an OCALL returns to the host side") {
  FsmState st;
  const std::uint64_t h = 0x77;
  REQUIRE(fsm_advance(st, Action::enter(runtime::kEnterSite, 0)).ok);
  REQUIRE(fsm_advance(st, Action::structure(ActionType::OcallCtxGen, 0x10, h)).ok);
  REQUIRE(fsm_advance(st, Action::bare(ActionType::OcallExit, 0x10)).ok);
  REQUIRE(fsm_advance(st, Action::enter(runtime::kEnterSite, 1)).ok);
  CHECK(st.phase == FsmPhase::Ecall);
  REQUIRE(fsm_advance(st, Action::bare(ActionType::Exit, runtime::kEnterSite)).ok);
  CHECK(st.phase == FsmPhase::OcallOut);
  REQUIRE(fsm_advance(st, Action::enter(0x10, -2)).ok);
  REQUIRE(fsm_advance(st, Action::structure(ActionType::OcallCtxUse, 0x10, h)).ok);
  REQUIRE(fsm_advance(st, Action::bare(ActionType::Exit, runtime::kEnterSite)).ok);
  CHECK(st.phase == FsmPhase::Outside);
  CHECK(st.structures.empty());
  CHECK(st.state.usage == Usage::NonInUse);
}

TEST_CASE("benign corpus streams verify cleanly") {
  for (const auto& name : corpus::benign()) {
    CAPTURE(name);
    const Fixture fx(name);
    Verifier v(fx.model);
    for (const auto& d : fx.stream) CHECK_FALSE(v.process(d.action, d.thread_id).has_value());
    // A crashed enclave stops mid-ECALL; every other run ends outside.
    const bool crashes = name == "exc_none.ir";
    for (const auto& t : v.snapshot()) {
      CHECK(t.trusted());
      if (crashes) continue;
      CHECK(t.phase == FsmPhase::Outside);
      CHECK(t.shadow_depth == 0);
      CHECK(t.structure_depth == 0);
    }
    CHECK(v.actions_processed() == fx.stream.size());
  }
}

TEST_CASE("an edge to an unknown target is flagged") {
  Fixture fx("plain_ecall.ir");
  auto s = fx.stream;
  const std::size_t i = fx.find(ActionType::Edge);
  s[i].action.value = 0xdead0000;
  const auto r = fx.first_after(s);
  REQUIRE(r);
  CHECK(r->cls == AnomalyClass::UnknownEdge);
  CHECK(r->action == s[i].action);
  CHECK_FALSE(r->expected.empty());
  CHECK(r->seq == i + 1);
}

TEST_CASE("a return to the wrong site violates the shadow stack") {
  Fixture fx("attack_demo.ir");
  auto s = fx.stream;
  // The first return is from check() back to 0x8204; send it to 0x820c.
  std::size_t i = fx.find(ActionType::Edge);
  i = fx.find(ActionType::Edge, i + 1);
  REQUIRE(s[i].action.value == 0x8204u);
  s[i].action.value = 0x820c;
  const auto r = fx.first_after(s);
  REQUIRE(r);
  CHECK(r->cls == AnomalyClass::ShadowStackViolation);
}

TEST_CASE("a corrupted OCALL context is a structure mismatch") {
  Fixture fx("nested_ocall.ir");
  auto s = fx.stream;
  const std::size_t i = fx.find(ActionType::OcallCtxUse);
  *s[i].action.value ^= 1;
  const auto r = fx.first_after(s);
  REQUIRE(r);
  CHECK(r->cls == AnomalyClass::StructureMismatch);
  CHECK(r->phase == FsmPhase::OcallReturn);
}

TEST_CASE("a tampered exception info is a structure mismatch") {
  Fixture fx("exc_one.ir");
  auto s = fx.stream;
  const std::size_t i = fx.find(ActionType::ExcInfoUse);
  *s[i].action.value ^= 1;
  const auto r = fx.first_after(s);
  REQUIRE(r);
  CHECK(r->cls == AnomalyClass::StructureMismatch);
}

TEST_CASE("out-of-order stop actions are invalid transitions") {
  Fixture fx("nested_ocall.ir");
  auto s = fx.stream;
  s.erase(s.begin() + static_cast<std::ptrdiff_t>(fx.find(ActionType::OcallExit)));
  const auto r = fx.first_after(s);
  REQUIRE(r);
  CHECK(r->cls == AnomalyClass::InvalidStateTransition);
}

TEST_CASE("an unknown secure index is rejected") {
  Fixture fx("plain_ecall.ir");
  auto s = fx.stream;
  s[0].action = Action::enter(runtime::kEnterSite, 9);
  const auto r = fx.first_after(s);
  REQUIRE(r);
  CHECK(r->cls != AnomalyClass::ProtocolTamper);
}

TEST_CASE("a branch outcome the model excludes is flagged") {
  const TraceProgram p = parse_program(R"(
FUNC f 0x1000 x:scalar
BLOCK a
INSTR 0x1004 binop c == 1 1
INSTR 0x1008 br c
EDGE a t T
EDGE a e F
BLOCK t
INSTR 0x100c ret 1
BLOCK e
INSTR 0x1010 ret 0
ENDFUNC
SECURE 0 f
)");
  const EnclaveModel m = extract_model(p).model;
  Verifier v(m);
  CHECK_FALSE(v.process(Action::enter(runtime::kEnterSite, 0), 1));
  const auto r = v.process(Action::branch(0x1008, false), 1);
  REQUIRE(r);
  CHECK(r->cls == AnomalyClass::UnknownEdge);
}

TEST_CASE("threads are tracked independently") {
  Fixture fx("plain_ecall.ir");
  Verifier v(fx.model);
  // Thread 2 misbehaves; thread 1 runs the whole workload afterwards.
  v.process(Action::bare(ActionType::Exit, runtime::kEnterSite), 2);
  for (const auto& d : fx.stream) v.process(d.action, 1);
  REQUIRE(v.status(1));
  REQUIRE(v.status(2));
  CHECK(v.status(1)->trusted());
  CHECK_FALSE(v.status(2)->trusted());
  CHECK_FALSE(v.status(3).has_value());
  // Later actions of an untrusted thread are counted and ignored.
  CHECK_FALSE(v.process(Action::enter(runtime::kEnterSite, 0), 2));
  CHECK(v.anomalies().size() == 1);
}

TEST_CASE("channel failures mark threads") {
  Fixture fx("nested_ocall.ir");
  Verifier v(fx.model);
  v.process(fx.stream[0].action, 1);
  v.process(Action::enter(runtime::kEnterSite, 0), 2);
  const auto timed = v.channel_timeout();
  for (const auto& r : timed) CHECK(r.cls == AnomalyClass::Timeout);
  const auto tampered = v.channel_tampered();
  for (const auto& r : tampered) CHECK(r.cls == AnomalyClass::ProtocolTamper);
  for (const auto& t : v.snapshot()) CHECK_FALSE(t.trusted());
}

TEST_CASE("a model without runtime graphs is refused") {
  EnclaveModel m;
  CHECK_THROWS_AS(Verifier{m}, ModelError);
}

TEST_CASE("anomaly lines carry the fields needed to triage") {
  Fixture fx("plain_ecall.ir");
  auto s = fx.stream;
  s[1].action.value = 1 - *s[1].action.value;
  s[2].action.value = 0xdead0000;
  const auto r = fx.first_after(s);
  REQUIRE(r);
  const std::string line = r->to_line();
  for (const char* field : {"ANOMALY", "thread=1", "class=", "action=", "expected={", "state=", "fsm=", "seq="})
    CHECK(line.find(field) != std::string::npos);
}
