#include "encprov/state.hpp"

#include <cstdio>

#include "encprov/errors.hpp"

namespace encprov {

StateTriplet state_apply(StateTriplet s, const Action& a) {
  switch (a.type) {
    case ActionType::Enter:
    case ActionType::Resume:
      s.usage = Usage::InUse;
      return s;
    case ActionType::Exit:
    case ActionType::OcallExit:
      s.usage = Usage::NonInUse;
      return s;
    case ActionType::OcallCtxGen:
    case ActionType::ExcInfoGen:
      s.structure = a.value;
      s.operation = StructOp::Generated;
      return s;
    case ActionType::OcallCtxUse:
    case ActionType::ExcInfoUse:
      s.structure.reset();
      s.operation = StructOp::Consumed;
      return s;
    default:
      throw ContractViolation("state_apply requires a stop action, got " + to_string(a));
  }
}

std::string to_string(const StateTriplet& s) {
  std::string out = "(";
  out += s.usage == Usage::InUse ? "in-use" : "non-in-use";
  out += ',';
  if (s.structure) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(*s.structure));
    out += buf;
  } else {
    out += "null";
  }
  out += ',';
  switch (s.operation) {
    case StructOp::None: out += "null"; break;
    case StructOp::Generated: out += "G"; break;
    case StructOp::Consumed: out += "C"; break;
  }
  out += ')';
  return out;
}

}  // namespace encprov
