#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "encprov/action.hpp"

namespace encprov {

enum class ParamKind : std::uint8_t { Scalar, Pointer, FnPtr };

struct Param {
  std::string name;
  ParamKind kind = ParamKind::Scalar;
};

/// Literal, variable reference, or `&f` (the entry address of function f).
struct Operand {
  enum class Kind : std::uint8_t { Literal, Var, FuncAddr } kind = Kind::Literal;
  std::int64_t literal = 0;
  std::string name;

  static Operand lit(std::int64_t v) { return {Kind::Literal, v, {}}; }
  static Operand var(std::string n) { return {Kind::Var, 0, std::move(n)}; }
  static Operand func(std::string n) { return {Kind::FuncAddr, 0, std::move(n)}; }
};

enum class Opcode : std::uint8_t {
  Nop,
  Assign,      // dst = a0
  Binop,       // dst = a0 <op> a1
  Load,        // dst = mem[a0]
  Store,       // mem[a0] = a1
  Br,          // B action; T edge when a0 != 0
  Call,        // E(site, entry(callee)); dst = callee(args)
  ICall,       // E(site, a0); dst = (*a0)(args[1..])
  Ret,         // E(site, return site); returns a0 or 0
  Stop,        // raw stop action of type `tag` with value a0
  FnPtr,       // A(site, entry(a0)); dst = a0
  VPtr,        // V(site, a0); dst = a0
  Ocall,       // G, D, host call `callee`, N(-2), C
  Fault,       // raises an exception when a0 != 0
  RegHandler,  // registers a0 as a custom exception handler
};

std::string_view to_string(Opcode op);

/// Dummy destination meaning "discard the result".
inline constexpr std::string_view kDiscard = "_";

struct Instruction {
  std::uint64_t addr = 0;
  Opcode op = Opcode::Nop;
  std::string dst;
  std::string binop;
  std::string callee;
  ActionType tag = ActionType::Edge;
  std::vector<Operand> args;
};

struct Block {
  std::string label;
  std::vector<Instruction> instrs;
  /// Unconditional successor (blocks not ending in br/ret).
  std::optional<std::size_t> next;
  /// Successors of a terminating br.
  std::optional<std::size_t> on_true, on_false;

  const Instruction* terminator() const { return instrs.empty() ? nullptr : &instrs.back(); }
  std::vector<std::size_t> successors() const;
};

struct Function {
  std::string name;
  std::uint64_t entry = 0;
  std::vector<Param> params;
  std::vector<Block> blocks;
  std::size_t entry_block = 0;
  bool entry_marked = false;

  std::optional<std::size_t> block_index(std::string_view label) const;
};

struct Global {
  std::string name;
  std::int64_t init = 0;
};

struct EcallRequest {
  std::int64_t index = 0;
  std::vector<std::int64_t> args;
};

/// A simulated host ocall implementation: the nested ECALLs it issues.
struct HostOcall {
  std::string name;
  std::vector<EcallRequest> ecalls;
};

struct HandlerRegistration {
  std::uint64_t site = 0;
  std::string handler;
};

/// Enclave code plus the host-side driver (ocall behaviour and workload).
class TraceProgram {
 public:
  std::vector<Global> globals;
  std::vector<Function> functions;
  std::map<std::int64_t, std::string> secure;
  std::map<std::string, HostOcall> host;
  std::vector<EcallRequest> workload;

  const Function* find(std::string_view name) const;
  const Function* find_entry(std::uint64_t entry) const;
  bool is_global(std::string_view name) const;

  /// Every `reghandler` instruction in program order.
  std::vector<HandlerRegistration> handler_registrations() const;

  /// Structural checks; throws ParseError (line 0) on violation. Called by
  /// parse_program; call again after building a program in code.
  void validate() const;
};

/// Parses the textual IR. Throws ParseError with the offending line.
TraceProgram parse_program(std::string_view text);
TraceProgram load_program(const std::string& path);
std::string to_text(const TraceProgram& p);

/// Two's-complement 64-bit arithmetic shared by the interpreter and the
/// extractor's constant folder. Division or modulo by zero yields 0; shift
/// counts are taken mod 64. Comparisons yield 0 or 1.
std::int64_t eval_binop(std::string_view op, std::int64_t a, std::int64_t b);
bool is_binop(std::string_view op);

/// Fields that go into a saved-frame or exception-info structure hash.
std::uint64_t hash_words(std::initializer_list<std::int64_t> words);
std::uint64_t hash_words(const std::vector<std::int64_t>& words);

}  // namespace encprov
