#include "encprov/action.hpp"

#include <charconv>
#include <cstdio>

#include "encprov/errors.hpp"

namespace encprov {

namespace {

constexpr std::uint8_t kValueNull = 0x01;
constexpr std::uint8_t kSrcNull = 0x02;

void put_u64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_u64(const std::uint8_t* in) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | in[i];
  return v;
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

char tag_letter(ActionType t) noexcept {
  switch (t) {
    case ActionType::FnPtrAssign: return 'A';
    case ActionType::Branch: return 'B';
    case ActionType::OcallCtxUse: return 'C';
    case ActionType::OcallExit: return 'D';
    case ActionType::Edge: return 'E';
    case ActionType::OcallCtxGen: return 'G';
    case ActionType::ExcInfoGen: return 'J';
    case ActionType::ExcInfoUse: return 'K';
    case ActionType::Enter: return 'N';
    case ActionType::Resume: return 'R';
    case ActionType::Exit: return 'T';
    case ActionType::VPtrAssign: return 'V';
  }
  return '?';
}

std::optional<ActionType> type_from_letter(char c) noexcept {
  for (ActionType t : kAllActionTypes)
    if (tag_letter(t) == c) return t;
  return std::nullopt;
}

std::optional<ActionType> type_from_tag(std::uint8_t tag) noexcept {
  if (tag < 1 || tag > 12) return std::nullopt;
  return static_cast<ActionType>(tag);
}

bool is_valid(const Action& a) noexcept {
  switch (a.type) {
    case ActionType::Edge:
      return true;
    case ActionType::Branch:
      return a.src && a.value && *a.value <= 1;
    case ActionType::Resume:
    case ActionType::Exit:
    case ActionType::OcallExit:
      return a.src && !a.value;
    default:
      return a.src && a.value;
  }
}

std::string to_string(const Action& a) {
  std::string out(1, tag_letter(a.type));
  out += ':';
  out += a.src ? hex(*a.src) : "null";
  out += ':';
  if (!a.value)
    out += "null";
  else if (a.type == ActionType::Enter || a.type == ActionType::Branch)
    out += std::to_string(a.index());
  else
    out += hex(*a.value);
  return out;
}

ActionBytes action_encode(const Action& a, std::uint16_t thread_id) {
  if (!is_valid(a)) throw MalformedAction("action violates its type invariants: " + to_string(a));
  ActionBytes out{};
  out[0] = static_cast<std::uint8_t>(a.type);
  out[1] = static_cast<std::uint8_t>((a.value ? 0 : kValueNull) | (a.src ? 0 : kSrcNull));
  out[2] = static_cast<std::uint8_t>(thread_id);
  out[3] = static_cast<std::uint8_t>(thread_id >> 8);
  put_u64(out.data() + 4, a.src.value_or(0));
  put_u64(out.data() + 12, a.value.value_or(0));
  return out;
}

DecodedAction action_decode(std::span<const std::uint8_t, kActionBytes> bytes) {
  auto type = type_from_tag(bytes[0]);
  if (!type) throw MalformedAction("unknown action tag " + std::to_string(bytes[0]));
  const std::uint8_t flags = bytes[1];
  if (flags & ~(kValueNull | kSrcNull)) throw MalformedAction("unknown flag bits");
  for (std::size_t i = 20; i < kActionBytes; ++i)
    if (bytes[i] != 0) throw MalformedAction("nonzero padding");

  DecodedAction out;
  out.thread_id = static_cast<std::uint16_t>(bytes[2] | (bytes[3] << 8));
  out.action.type = *type;
  const std::uint64_t src = get_u64(bytes.data() + 4);
  const std::uint64_t value = get_u64(bytes.data() + 12);
  if (flags & kSrcNull) {
    if (src != 0) throw MalformedAction("null src with nonzero field");
  } else {
    out.action.src = src;
  }
  if (flags & kValueNull) {
    if (value != 0) throw MalformedAction("null value with nonzero field");
  } else {
    out.action.value = value;
  }
  if (!is_valid(out.action)) throw MalformedAction("decoded action violates invariants");
  return out;
}

bool Condition::matches(const std::optional<std::uint64_t>& value) const noexcept {
  switch (kind) {
    case ConditionKind::Any:
      return true;
    case ConditionKind::Return:
      return value.has_value();
    case ConditionKind::Equals:
    case ConditionKind::CallTarget:
      return value && static_cast<std::int64_t>(*value) == operand;
    case ConditionKind::AtLeast:
      return value && static_cast<std::int64_t>(*value) >= operand;
  }
  return false;
}

std::string to_string(const Condition& c) {
  switch (c.kind) {
    case ConditionKind::Any: return "*";
    case ConditionKind::Equals: return "eq:" + std::to_string(c.operand);
    case ConditionKind::AtLeast: return "ge:" + std::to_string(c.operand);
    case ConditionKind::CallTarget: return "call:" + hex(static_cast<std::uint64_t>(c.operand));
    case ConditionKind::Return: return "ret";
  }
  return "?";
}

std::optional<Condition> parse_condition(std::string_view text) {
  if (text == "*") return Condition::any();
  if (text == "ret") return Condition::ret();
  auto number = [](std::string_view s, int base) -> std::optional<std::int64_t> {
    if (s.empty()) return std::nullopt;
    if (base == 16) {
      if (s.substr(0, 2) != "0x") return std::nullopt;
      s.remove_prefix(2);
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
      if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
      return static_cast<std::int64_t>(v);
    }
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 10);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
  };
  auto colon = text.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  auto head = text.substr(0, colon);
  auto rest = text.substr(colon + 1);
  if (head == "eq") {
    if (auto v = number(rest, 10)) return Condition::equals(*v);
  } else if (head == "ge") {
    if (auto v = number(rest, 10)) return Condition::at_least(*v);
  } else if (head == "call") {
    if (auto v = number(rest, 16)) return Condition::call(static_cast<std::uint64_t>(*v));
  }
  return std::nullopt;
}

}  // namespace encprov
