#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "encprov/action.hpp"

namespace encprov {

enum class Usage : std::uint8_t { NonInUse, InUse };

/// Last operation performed over the tracked structure.
enum class StructOp : std::uint8_t { None, Generated, Consumed };

/// Per-thread enclave state: (usage, structure hash, operation).
struct StateTriplet {
  Usage usage = Usage::NonInUse;
  std::optional<std::uint64_t> structure;
  StructOp operation = StructOp::None;

  friend bool operator==(const StateTriplet&, const StateTriplet&) = default;
};

/// Applies a stop action: N/R enter, T/D exit, G/J generate and C/K consume.
/// Throws ContractViolation when given a generic action.
StateTriplet state_apply(StateTriplet s, const Action& a);

/// Renders as "(in-use,0x1f..,G)" with "null" for absent fields.
std::string to_string(const StateTriplet& s);

}  // namespace encprov
