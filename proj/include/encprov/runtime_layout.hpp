#pragma once

#include <cstdint>
#include <string_view>

// Addresses and names of the simulated SDK runtime. Trace programs may not
// place instructions or functions inside [kRuntimeBase, kRuntimeEnd).
namespace encprov::runtime {

inline constexpr std::uint64_t kRuntimeBase = 0x70000000;
inline constexpr std::uint64_t kRuntimeEnd = 0x70010000;

/// enter_enclave: source of ECALL/exception EENTER, ERESUME and ERET.
inline constexpr std::uint64_t kEnterSite = 0x70000000;
/// Return site the top-level secure function returns to.
inline constexpr std::uint64_t kEcallReturnSite = 0x70000008;
/// trts_handle_exception: fills and publishes the exception info.
inline constexpr std::uint64_t kTrustedHandlerSite = 0x70000100;
/// internal_handle_exception: per-handler consume/regenerate.
inline constexpr std::uint64_t kInternalHandlerSite = 0x70000200;
/// Call site inside internal_handle_exception that dispatches to handlers.
inline constexpr std::uint64_t kHandlerCallSite = 0x70000208;
/// continue_execution: final consumption before resuming.
inline constexpr std::uint64_t kContinueSite = 0x70000300;

inline constexpr std::int64_t kOretIndex = -2;
inline constexpr std::int64_t kExceptionIndex = -3;

inline constexpr std::string_view kEnterFunction = "__rt_enter_enclave";
inline constexpr std::string_view kExceptionFunction = "__rt_exception";

inline constexpr bool is_runtime_address(std::uint64_t a) { return a >= kRuntimeBase && a < kRuntimeEnd; }

}  // namespace encprov::runtime
