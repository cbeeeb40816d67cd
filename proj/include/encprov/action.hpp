#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace encprov {

/// Kinds of traced events. Byte values are the wire tags; 0 is reserved as
/// invalid and 0xFF is reserved for channel dummy packets.
enum class ActionType : std::uint8_t {
  FnPtrAssign = 1,   // A
  Branch = 2,        // B
  OcallCtxUse = 3,   // C
  OcallExit = 4,     // D
  Edge = 5,          // E
  OcallCtxGen = 6,   // G
  ExcInfoGen = 7,    // J
  ExcInfoUse = 8,    // K
  Enter = 9,         // N
  Resume = 10,       // R
  Exit = 11,         // T
  VPtrAssign = 12,   // V
};

inline constexpr std::array<ActionType, 12> kAllActionTypes = {
    ActionType::FnPtrAssign, ActionType::Branch,     ActionType::OcallCtxUse,
    ActionType::OcallExit,   ActionType::Edge,       ActionType::OcallCtxGen,
    ActionType::ExcInfoGen,  ActionType::ExcInfoUse, ActionType::Enter,
    ActionType::Resume,      ActionType::Exit,       ActionType::VPtrAssign,
};

/// Stop actions mutate the per-thread enclave state; generic ones do not.
constexpr bool is_stop(ActionType t) noexcept {
  switch (t) {
    case ActionType::Edge:
    case ActionType::Branch:
    case ActionType::FnPtrAssign:
    case ActionType::VPtrAssign:
      return false;
    default:
      return true;
  }
}

char tag_letter(ActionType t) noexcept;
std::optional<ActionType> type_from_letter(char c) noexcept;
std::optional<ActionType> type_from_tag(std::uint8_t tag) noexcept;

/// One runtime event. `value` holds the callee or target address for E,
/// 0/1 for B, a target address for A/V, a structure hash for G/C/J/K and a
/// two's-complement secure-function index for N. R/T/D carry no value.
struct Action {
  ActionType type = ActionType::Edge;
  std::optional<std::uint64_t> src;
  std::optional<std::uint64_t> value;

  friend bool operator==(const Action&, const Action&) = default;

  static Action edge(std::uint64_t src, std::uint64_t dst) { return {ActionType::Edge, src, dst}; }
  static Action branch(std::uint64_t src, bool taken) {
    return {ActionType::Branch, src, taken ? 1u : 0u};
  }
  static Action fnptr(std::uint64_t src, std::uint64_t addr) {
    return {ActionType::FnPtrAssign, src, addr};
  }
  static Action vptr(std::uint64_t src, std::uint64_t addr) {
    return {ActionType::VPtrAssign, src, addr};
  }
  static Action enter(std::uint64_t src, std::int64_t index) {
    return {ActionType::Enter, src, static_cast<std::uint64_t>(index)};
  }
  static Action structure(ActionType t, std::uint64_t src, std::uint64_t hash) { return {t, src, hash}; }
  static Action bare(ActionType t, std::uint64_t src) { return {t, src, std::nullopt}; }

  /// The secure-function index carried by an Enter action.
  std::int64_t index() const noexcept { return static_cast<std::int64_t>(value.value_or(0)); }
};

/// Checks the per-type value invariants (B in {0,1}, R/T/D null, ...).
bool is_valid(const Action& a) noexcept;

std::string to_string(const Action& a);

inline constexpr std::size_t kActionBytes = 32;
using ActionBytes = std::array<std::uint8_t, kActionBytes>;

/// Reserved tag for dummy packets emitted by the traffic-shaping mitigation.
inline constexpr std::uint8_t kDummyTag = 0xFF;

/// Fixed little-endian layout: tag, flags (bit0 value-null, bit1 src-null),
/// thread id, src, value, 12 zero bytes. Throws MalformedAction on an
/// action that violates its type invariants.
ActionBytes action_encode(const Action& a, std::uint16_t thread_id);

struct DecodedAction {
  Action action;
  std::uint16_t thread_id = 0;
};

/// Inverse of action_encode. Throws MalformedAction on unknown tags, stray
/// flag bits, nonzero padding or invariant violations.
DecodedAction action_decode(std::span<const std::uint8_t, kActionBytes> bytes);

/// Predicate attached to a vertex. `Return` marks a backward edge whose value
/// is checked against the shadow stack instead of a constant.
enum class ConditionKind : std::uint8_t { Any, Equals, AtLeast, CallTarget, Return };

struct Condition {
  ConditionKind kind = ConditionKind::Any;
  std::int64_t operand = 0;

  static constexpr Condition any() { return {}; }
  static constexpr Condition equals(std::int64_t v) { return {ConditionKind::Equals, v}; }
  static constexpr Condition at_least(std::int64_t v) { return {ConditionKind::AtLeast, v}; }
  static constexpr Condition call(std::uint64_t target) {
    return {ConditionKind::CallTarget, static_cast<std::int64_t>(target)};
  }
  static constexpr Condition ret() { return {ConditionKind::Return, 0}; }

  bool matches(const std::optional<std::uint64_t>& value) const noexcept;

  friend auto operator<=>(const Condition&, const Condition&) = default;
};

std::string to_string(const Condition& c);
std::optional<Condition> parse_condition(std::string_view text);

/// Expected next action type plus an optional predicate over its value.
struct TransitionRule {
  ActionType expected = ActionType::Edge;
  Condition condition;

  bool admits(const Action& a) const noexcept {
    return a.type == expected && condition.matches(a.value);
  }

  friend auto operator<=>(const TransitionRule&, const TransitionRule&) = default;
};

}  // namespace encprov
