#include "encprov/program.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "encprov/crypto.hpp"
#include "encprov/errors.hpp"
#include "encprov/runtime_layout.hpp"

namespace encprov {

std::string_view to_string(Opcode op) {
  switch (op) {
    case Opcode::Nop: return "nop";
    case Opcode::Assign: return "assign";
    case Opcode::Binop: return "binop";
    case Opcode::Load: return "load";
    case Opcode::Store: return "store";
    case Opcode::Br: return "br";
    case Opcode::Call: return "call";
    case Opcode::ICall: return "icall";
    case Opcode::Ret: return "ret";
    case Opcode::Stop: return "stop";
    case Opcode::FnPtr: return "fnptr";
    case Opcode::VPtr: return "vptr";
    case Opcode::Ocall: return "ocall";
    case Opcode::Fault: return "fault";
    case Opcode::RegHandler: return "reghandler";
  }
  return "?";
}

std::vector<std::size_t> Block::successors() const {
  std::vector<std::size_t> out;
  if (on_true) out.push_back(*on_true);
  if (on_false && on_false != on_true) out.push_back(*on_false);
  if (next) out.push_back(*next);
  return out;
}

std::optional<std::size_t> Function::block_index(std::string_view label) const {
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].label == label) return i;
  return std::nullopt;
}

const Function* TraceProgram::find(std::string_view name) const {
  for (const auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

const Function* TraceProgram::find_entry(std::uint64_t entry) const {
  for (const auto& f : functions)
    if (f.entry == entry) return &f;
  return nullptr;
}

bool TraceProgram::is_global(std::string_view name) const {
  for (const auto& g : globals)
    if (g.name == name) return true;
  return false;
}

std::vector<HandlerRegistration> TraceProgram::handler_registrations() const {
  std::vector<HandlerRegistration> out;
  for (const auto& f : functions)
    for (const auto& b : f.blocks)
      for (const auto& ins : b.instrs)
        if (ins.op == Opcode::RegHandler && !ins.args.empty()) out.push_back({ins.addr, ins.args[0].name});
  return out;
}

std::int64_t eval_binop(std::string_view op, std::int64_t a, std::int64_t b) {
  const auto ua = static_cast<std::uint64_t>(a);
  const auto ub = static_cast<std::uint64_t>(b);
  if (op == "+") return static_cast<std::int64_t>(ua + ub);
  if (op == "-") return static_cast<std::int64_t>(ua - ub);
  if (op == "*") return static_cast<std::int64_t>(ua * ub);
  if (op == "/") {
    if (b == 0 || (a == INT64_MIN && b == -1)) return 0;
    return a / b;
  }
  if (op == "%") {
    if (b == 0 || (a == INT64_MIN && b == -1)) return 0;
    return a % b;
  }
  if (op == "==") return a == b;
  if (op == "!=") return a != b;
  if (op == "<") return a < b;
  if (op == "<=") return a <= b;
  if (op == ">") return a > b;
  if (op == ">=") return a >= b;
  if (op == "&") return a & b;
  if (op == "|") return a | b;
  if (op == "^") return a ^ b;
  if (op == "<<") return static_cast<std::int64_t>(ua << (ub & 63));
  if (op == ">>") return a >> (ub & 63);
  throw ContractViolation("unknown binary operator " + std::string(op));
}

bool is_binop(std::string_view op) {
  static const std::set<std::string_view> ops = {"+",  "-",  "*", "/",  "%", "==", "!=", "<",
                                                 "<=", ">",  ">=", "&", "|", "^",  "<<", ">>"};
  return ops.contains(op);
}

std::uint64_t hash_words(const std::vector<std::int64_t>& words) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(words.size() * 8);
  for (std::int64_t w : words) {
    const auto u = static_cast<std::uint64_t>(w);
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  return structure_hash(bytes);
}

std::uint64_t hash_words(std::initializer_list<std::int64_t> words) {
  return hash_words(std::vector<std::int64_t>(words));
}

// ---------------------------------------------------------------------------
// Validation

namespace {

[[noreturn]] void invalid(const std::string& what) { throw ParseError(0, what); }

struct Arity {
  std::size_t min, max;
};

Arity arity_of(Opcode op) {
  switch (op) {
    case Opcode::Nop: return {0, 0};
    case Opcode::Assign: return {1, 1};
    case Opcode::Binop: return {2, 2};
    case Opcode::Load: return {1, 1};
    case Opcode::Store: return {2, 2};
    case Opcode::Br: return {1, 1};
    case Opcode::Call: return {0, SIZE_MAX};
    case Opcode::ICall: return {1, SIZE_MAX};
    case Opcode::Ret: return {0, 1};
    case Opcode::Stop: return {0, 1};
    case Opcode::FnPtr: return {1, 1};
    case Opcode::VPtr: return {1, 1};
    case Opcode::Ocall: return {0, SIZE_MAX};
    case Opcode::Fault: return {1, 1};
    case Opcode::RegHandler: return {1, 1};
  }
  return {0, 0};
}

bool has_dst(Opcode op) {
  switch (op) {
    case Opcode::Assign:
    case Opcode::Binop:
    case Opcode::Load:
    case Opcode::Call:
    case Opcode::ICall:
    case Opcode::FnPtr:
    case Opcode::VPtr:
    case Opcode::Ocall:
      return true;
    default:
      return false;
  }
}

void check_name(const std::string& n, const char* what) {
  if (n.empty()) invalid(std::string("empty ") + what + " name");
  if (n.starts_with("__")) invalid(std::string(what) + " name '" + n + "' uses the reserved '__' prefix");
}

}  // namespace

void TraceProgram::validate() const {
  std::set<std::string> names;
  for (const auto& g : globals) {
    check_name(g.name, "global");
    if (!names.insert(g.name).second) invalid("duplicate name " + g.name);
  }
  std::set<std::uint64_t> entries;
  for (const auto& f : functions) {
    check_name(f.name, "function");
    if (!names.insert(f.name).second) invalid("duplicate name " + f.name);
    if (runtime::is_runtime_address(f.entry)) invalid("function " + f.name + " entry lies in the runtime range");
    if (!entries.insert(f.entry).second) invalid("duplicate entry address for " + f.name);
  }
  std::set<std::uint64_t> addrs;
  for (const auto& f : functions) {
    const std::string where = "function " + f.name;
    if (f.blocks.empty()) invalid(where + " has no blocks");
    if (f.entry_block >= f.blocks.size()) invalid(where + " entry block out of range");
    std::set<std::string> params;
    for (const auto& p : f.params) {
      check_name(p.name, "parameter");
      if (is_global(p.name)) invalid(where + " parameter " + p.name + " shadows a global");
      if (!params.insert(p.name).second) invalid(where + " repeats parameter " + p.name);
    }
    std::vector<std::size_t> preds(f.blocks.size(), 0);
    std::set<std::string> labels;
    for (const auto& b : f.blocks) {
      if (!labels.insert(b.label).second) invalid(where + " repeats block " + b.label);
      for (std::size_t s : b.successors()) {
        if (s >= f.blocks.size()) invalid(where + " edge to unknown block");
        ++preds[s];
      }
    }
    if (preds[f.entry_block] > 0 && !f.entry_marked)
      invalid(where + " entry block has predecessors but is not marked entry");
    for (const auto& b : f.blocks) {
      const std::string bw = where + " block " + b.label;
      const Instruction* term = b.terminator();
      const bool ends_br = term && term->op == Opcode::Br;
      const bool ends_ret = term && term->op == Opcode::Ret;
      if (ends_br && (!b.on_true || !b.on_false || b.next)) invalid(bw + " ends in br and needs exactly T and F edges");
      if (ends_ret && (b.on_true || b.on_false || b.next)) invalid(bw + " ends in ret and may not have edges");
      if (!ends_br && !ends_ret && (!b.next || b.on_true || b.on_false))
        invalid(bw + " needs exactly one unconditional edge");
      for (std::size_t i = 0; i < b.instrs.size(); ++i) {
        const auto& ins = b.instrs[i];
        const std::string iw = bw + " instruction " + std::to_string(ins.addr);
        if (runtime::is_runtime_address(ins.addr)) invalid(iw + " lies in the runtime range");
        if (entries.contains(ins.addr)) invalid(iw + " collides with a function entry");
        if (!addrs.insert(ins.addr).second) invalid(iw + " reuses an address");
        if ((ins.op == Opcode::Br || ins.op == Opcode::Ret) && i + 1 != b.instrs.size())
          invalid(iw + ": " + std::string(to_string(ins.op)) + " must end its block");
        const Arity ar = arity_of(ins.op);
        if (ins.args.size() < ar.min || ins.args.size() > ar.max) invalid(iw + " has the wrong operand count");
        if (has_dst(ins.op) && ins.dst.empty()) invalid(iw + " needs a destination");
        for (const auto& a : ins.args)
          if (a.kind == Operand::Kind::FuncAddr && !find(a.name)) invalid(iw + " references unknown function " + a.name);
        switch (ins.op) {
          case Opcode::Binop:
            if (!is_binop(ins.binop)) invalid(iw + " has unknown operator " + ins.binop);
            break;
          case Opcode::Call: {
            const Function* callee = find(ins.callee);
            if (!callee) invalid(iw + " calls unknown function " + ins.callee);
            if (callee->params.size() != ins.args.size()) invalid(iw + " passes the wrong number of arguments");
            break;
          }
          case Opcode::FnPtr:
          case Opcode::RegHandler:
            if (ins.args[0].kind != Operand::Kind::FuncAddr) invalid(iw + " expects &function");
            break;
          case Opcode::Stop: {
            if (!is_stop(ins.tag)) invalid(iw + " emits a generic tag");
            const bool null_value = ins.tag == ActionType::Resume || ins.tag == ActionType::Exit ||
                                    ins.tag == ActionType::OcallExit;
            if (null_value != ins.args.empty()) invalid(iw + " value operand does not fit the tag");
            break;
          }
          case Opcode::Ocall:
            check_name(ins.callee, "ocall");
            break;
          default:
            break;
        }
      }
    }
  }
  auto check_request = [&](const EcallRequest& r, const std::string& where) {
    auto it = secure.find(r.index);
    if (it == secure.end()) invalid(where + " uses unknown secure index " + std::to_string(r.index));
    if (find(it->second)->params.size() != r.args.size()) invalid(where + " passes the wrong number of arguments");
  };
  for (const auto& [idx, name] : secure) {
    if (idx < 0) invalid("secure index must be non-negative");
    if (!find(name)) invalid("secure index maps to unknown function " + name);
  }
  for (const auto& [name, h] : host)
    for (const auto& r : h.ecalls) check_request(r, "host ocall " + name);
  for (const auto& r : workload) check_request(r, "RUN");
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::vector<std::string_view> tokenize(std::string_view line) {
  if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<std::int64_t> parse_number(std::string_view s) {
  bool neg = false;
  if (s.starts_with('-')) {
    neg = true;
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.starts_with("0x") || s.starts_with("0X")) {
    s.remove_prefix(2);
    base = 16;
  }
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  const auto sv = static_cast<std::int64_t>(v);
  return neg ? static_cast<std::int64_t>(0 - v) : sv;
}

bool looks_numeric(std::string_view s) {
  return !s.empty() && (std::isdigit(static_cast<unsigned char>(s[0])) || (s[0] == '-' && s.size() > 1));
}

struct PendingEdge {
  std::string from, to;
  char kind;  // 'U', 'T', 'F'
  std::size_t line;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  TraceProgram run() {
    std::size_t pos = 0;
    while (pos <= text_.size()) {
      auto nl = text_.find('\n', pos);
      if (nl == std::string_view::npos) nl = text_.size();
      ++line_;
      handle(tokenize(text_.substr(pos, nl - pos)));
      pos = nl + 1;
    }
    if (func_) fail("missing ENDFUNC for " + func_->name);
    // Whole-program checks have no single line; they report line 0.
    prog_.validate();
    return std::move(prog_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, what); }

  std::int64_t number(std::string_view s) const {
    auto v = parse_number(s);
    if (!v) fail("bad number '" + std::string(s) + "'");
    return *v;
  }

  Operand operand(std::string_view s) const {
    if (s.starts_with('&')) {
      if (s.size() == 1) fail("empty function reference");
      return Operand::func(std::string(s.substr(1)));
    }
    if (looks_numeric(s)) return Operand::lit(number(s));
    return Operand::var(std::string(s));
  }

  std::vector<Operand> operands(const std::vector<std::string_view>& tok, std::size_t from) const {
    std::vector<Operand> out;
    for (std::size_t i = from; i < tok.size(); ++i) out.push_back(operand(tok[i]));
    return out;
  }

  void need(const std::vector<std::string_view>& tok, std::size_t n, const char* usage) const {
    if (tok.size() < n) fail(std::string("expected ") + usage);
  }

  EcallRequest request(const std::vector<std::string_view>& tok, std::size_t from, std::size_t to) const {
    EcallRequest r;
    r.index = number(tok[from]);
    for (std::size_t i = from + 1; i < to; ++i) r.args.push_back(number(tok[i]));
    return r;
  }

  void handle(const std::vector<std::string_view>& tok) {
    if (tok.empty()) return;
    const auto kw = tok[0];
    if (kw == "FUNC") return begin_function(tok);
    if (kw == "BLOCK") return begin_block(tok);
    if (kw == "INSTR") return instruction(tok);
    if (kw == "EDGE") {
      if (!func_) fail("EDGE outside FUNC");
      need(tok, 3, "EDGE from to [T|F]");
      char kind = 'U';
      if (tok.size() == 4) {
        if (tok[3] != "T" && tok[3] != "F") fail("edge label must be T or F");
        kind = tok[3][0];
      } else if (tok.size() > 4) {
        fail("trailing tokens after EDGE");
      }
      edges_.push_back({std::string(tok[1]), std::string(tok[2]), kind, line_});
      return;
    }
    if (kw == "ENDFUNC") return end_function();
    if (func_) fail(std::string(kw) + " inside FUNC");
    if (kw == "GLOBAL") {
      need(tok, 2, "GLOBAL name [init]");
      prog_.globals.push_back({std::string(tok[1]), tok.size() > 2 ? number(tok[2]) : 0});
    } else if (kw == "SECURE") {
      need(tok, 3, "SECURE index function");
      const auto idx = number(tok[1]);
      if (!prog_.secure.emplace(idx, std::string(tok[2])).second) fail("secure index defined twice");
    } else if (kw == "HOST") {
      need(tok, 2, "HOST ocall [ECALL index args...]...");
      auto& h = prog_.host[std::string(tok[1])];
      h.name = std::string(tok[1]);
      std::size_t i = 2;
      while (i < tok.size()) {
        if (tok[i] != "ECALL" || i + 1 >= tok.size()) fail("expected ECALL index args...");
        std::size_t j = i + 2;
        while (j < tok.size() && tok[j] != "ECALL") ++j;
        h.ecalls.push_back(request(tok, i + 1, j));
        i = j;
      }
    } else if (kw == "RUN") {
      need(tok, 2, "RUN index args...");
      prog_.workload.push_back(request(tok, 1, tok.size()));
    } else {
      fail("unknown record " + std::string(kw));
    }
  }

  void begin_function(const std::vector<std::string_view>& tok) {
    if (func_) fail("nested FUNC");
    need(tok, 3, "FUNC name entry params...");
    func_.emplace();
    func_->name = std::string(tok[1]);
    func_->entry = static_cast<std::uint64_t>(number(tok[2]));
    for (std::size_t i = 3; i < tok.size(); ++i) {
      const auto colon = tok[i].find(':');
      if (colon == std::string_view::npos) fail("parameter must be name:kind");
      Param p;
      p.name = std::string(tok[i].substr(0, colon));
      const auto kind = tok[i].substr(colon + 1);
      if (kind == "scalar")
        p.kind = ParamKind::Scalar;
      else if (kind == "ptr")
        p.kind = ParamKind::Pointer;
      else if (kind == "fnptr")
        p.kind = ParamKind::FnPtr;
      else
        fail("parameter kind must be scalar, ptr or fnptr");
      func_->params.push_back(std::move(p));
    }
    edges_.clear();
    entry_seen_ = false;
  }

  void begin_block(const std::vector<std::string_view>& tok) {
    if (!func_) fail("BLOCK outside FUNC");
    need(tok, 2, "BLOCK label [entry]");
    Block b;
    b.label = std::string(tok[1]);
    if (tok.size() == 3) {
      if (tok[2] != "entry") fail("unknown block flag " + std::string(tok[2]));
      if (entry_seen_) fail("two entry blocks");
      entry_seen_ = true;
      func_->entry_block = func_->blocks.size();
      func_->entry_marked = true;
    } else if (tok.size() > 3) {
      fail("trailing tokens after BLOCK");
    }
    func_->blocks.push_back(std::move(b));
  }

  void instruction(const std::vector<std::string_view>& tok) {
    if (!func_ || func_->blocks.empty()) fail("INSTR outside BLOCK");
    need(tok, 3, "INSTR addr op ...");
    Instruction ins;
    ins.addr = static_cast<std::uint64_t>(number(tok[1]));
    const auto op = tok[2];
    auto dst_and_args = [&](Opcode code, std::size_t min_tokens, const char* usage) {
      need(tok, min_tokens, usage);
      ins.op = code;
      ins.dst = std::string(tok[3]);
      ins.args = operands(tok, 4);
    };
    if (op == "nop") {
      ins.op = Opcode::Nop;
    } else if (op == "assign") {
      dst_and_args(Opcode::Assign, 5, "assign dst value");
    } else if (op == "binop") {
      need(tok, 7, "binop dst op a b");
      ins.op = Opcode::Binop;
      ins.dst = std::string(tok[3]);
      ins.binop = std::string(tok[4]);
      if (!is_binop(ins.binop)) fail("unknown operator " + ins.binop);
      ins.args = operands(tok, 5);
    } else if (op == "load") {
      dst_and_args(Opcode::Load, 5, "load dst ptr");
    } else if (op == "store") {
      ins.op = Opcode::Store;
      ins.args = operands(tok, 3);
    } else if (op == "br") {
      ins.op = Opcode::Br;
      ins.args = operands(tok, 3);
    } else if (op == "call") {
      need(tok, 5, "call dst function args...");
      ins.op = Opcode::Call;
      ins.dst = std::string(tok[3]);
      ins.callee = std::string(tok[4]);
      ins.args = operands(tok, 5);
    } else if (op == "icall") {
      dst_and_args(Opcode::ICall, 5, "icall dst target args...");
    } else if (op == "ret") {
      ins.op = Opcode::Ret;
      ins.args = operands(tok, 3);
    } else if (op == "stop") {
      need(tok, 4, "stop TAG [value]");
      ins.op = Opcode::Stop;
      const auto t = tok[3].size() == 1 ? type_from_letter(tok[3][0]) : std::nullopt;
      if (!t) fail("unknown action tag " + std::string(tok[3]));
      ins.tag = *t;
      ins.args = operands(tok, 4);
    } else if (op == "fnptr") {
      dst_and_args(Opcode::FnPtr, 5, "fnptr dst &function");
    } else if (op == "vptr") {
      dst_and_args(Opcode::VPtr, 5, "vptr dst value");
    } else if (op == "ocall") {
      need(tok, 5, "ocall dst name args...");
      ins.op = Opcode::Ocall;
      ins.dst = std::string(tok[3]);
      ins.callee = std::string(tok[4]);
      ins.args = operands(tok, 5);
    } else if (op == "fault") {
      ins.op = Opcode::Fault;
      ins.args = operands(tok, 3);
    } else if (op == "reghandler") {
      ins.op = Opcode::RegHandler;
      ins.args = operands(tok, 3);
    } else {
      fail("unknown opcode " + std::string(op));
    }
    func_->blocks.back().instrs.push_back(std::move(ins));
  }

  void end_function() {
    if (!func_) fail("ENDFUNC without FUNC");
    for (const auto& e : edges_) {
      auto from = func_->block_index(e.from);
      auto to = func_->block_index(e.to);
      if (!from || !to) throw ParseError(e.line, "edge references unknown block");
      Block& b = func_->blocks[*from];
      std::optional<std::size_t>& slot = e.kind == 'T' ? b.on_true : e.kind == 'F' ? b.on_false : b.next;
      if (slot) throw ParseError(e.line, "block " + b.label + " already has this kind of edge");
      slot = *to;
    }
    prog_.functions.push_back(std::move(*func_));
    func_.reset();
  }

  std::string_view text_;
  std::size_t line_ = 0;
  TraceProgram prog_;
  std::optional<Function> func_;
  std::vector<PendingEdge> edges_;
  bool entry_seen_ = false;
};

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string operand_text(const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::Literal: return std::to_string(o.literal);
    case Operand::Kind::Var: return o.name;
    case Operand::Kind::FuncAddr: return "&" + o.name;
  }
  return "?";
}

}  // namespace

TraceProgram parse_program(std::string_view text) { return Parser(text).run(); }

TraceProgram load_program(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TransportError("cannot open program " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_program(ss.str());
}

std::string to_text(const TraceProgram& p) {
  std::ostringstream out;
  for (const auto& g : p.globals) out << "GLOBAL " << g.name << ' ' << g.init << '\n';
  for (const auto& f : p.functions) {
    out << "FUNC " << f.name << ' ' << hex(f.entry);
    for (const auto& prm : f.params)
      out << ' ' << prm.name << ':'
          << (prm.kind == ParamKind::Scalar ? "scalar" : prm.kind == ParamKind::Pointer ? "ptr" : "fnptr");
    out << '\n';
    for (std::size_t bi = 0; bi < f.blocks.size(); ++bi) {
      const auto& b = f.blocks[bi];
      out << "BLOCK " << b.label << (f.entry_marked && bi == f.entry_block ? " entry" : "") << '\n';
      for (const auto& ins : b.instrs) {
        out << "INSTR " << hex(ins.addr) << ' ' << to_string(ins.op);
        if (ins.op == Opcode::Stop) out << ' ' << tag_letter(ins.tag);
        if (!ins.dst.empty()) out << ' ' << ins.dst;
        if (ins.op == Opcode::Binop) out << ' ' << ins.binop;
        if (ins.op == Opcode::Call || ins.op == Opcode::Ocall) out << ' ' << ins.callee;
        for (const auto& a : ins.args) out << ' ' << operand_text(a);
        out << '\n';
      }
    }
    for (const auto& b : f.blocks) {
      if (b.next) out << "EDGE " << b.label << ' ' << f.blocks[*b.next].label << '\n';
      if (b.on_true) out << "EDGE " << b.label << ' ' << f.blocks[*b.on_true].label << " T\n";
      if (b.on_false) out << "EDGE " << b.label << ' ' << f.blocks[*b.on_false].label << " F\n";
    }
    out << "ENDFUNC\n";
  }
  for (const auto& [idx, name] : p.secure) out << "SECURE " << idx << ' ' << name << '\n';
  for (const auto& [name, h] : p.host) {
    out << "HOST " << name;
    for (const auto& r : h.ecalls) {
      out << " ECALL " << r.index;
      for (auto a : r.args) out << ' ' << a;
    }
    out << '\n';
  }
  for (const auto& r : p.workload) {
    out << "RUN " << r.index;
    for (auto a : r.args) out << ' ' << a;
    out << '\n';
  }
  return out.str();
}

}  // namespace encprov
