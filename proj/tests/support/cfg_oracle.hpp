#pragma once

// Random structured CFGs and a brute-force path enumerator used as the
// reference for symbolic extraction. The enumerator works on the generator's
// own block structure (it never looks at the parsed program or at the
// extractor's loop analysis) and forks on every choice.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "encprov/action.hpp"
#include "encprov/graph.hpp"
#include "encprov/runtime_layout.hpp"

namespace oracle {

using encprov::ActionPattern;
using encprov::ActionType;
using encprov::Condition;

inline constexpr int kLoopBound = 3;

/// One traced site: alternatives are mutually exclusive (an indirect call
/// forks per target); each alternative is a chain of consecutive patterns.
using Site = std::vector<std::vector<ActionPattern>>;

struct OBlock {
  std::string label;
  std::vector<std::string> lines;
  std::vector<Site> sites;
  enum class End { Next, Branch, Ret } end = End::Next;
  std::uint64_t branch_site = 0;
  int next = -1, on_true = -1, on_false = -1;
  bool header = false;
  /// Edges into a header from its own body.
  std::set<int> latches;
};

struct GeneratedCfg {
  std::string program;
  std::vector<OBlock> blocks;
  int loops = 0;
  int max_depth = 0;
};

struct GraphSets {
  std::set<ActionPattern> vertices;
  std::set<std::pair<ActionPattern, ActionPattern>> edges;
  std::set<ActionPattern> entries;
  std::uint64_t paths = 0;

  friend bool operator==(const GraphSets&, const GraphSets&) = default;
};

inline GraphSets sets_of(const encprov::ActionGraph& g) {
  return {g.vertex_patterns(), g.edge_patterns(), g.entry_patterns(), 0};
}

class Generator {
 public:
  static constexpr std::uint64_t kHelperA = 0x100000;
  static constexpr std::uint64_t kHelperB = 0x100100;
  static constexpr std::uint64_t kEntry = 0x200000;

  explicit Generator(std::uint64_t seed, int max_blocks = 12, int max_loops = 2)
      : rng_(seed), max_blocks_(max_blocks), max_loops_(max_loops) {}

  GeneratedCfg generate() {
    cfg_ = {};
    addr_ = kEntry + 4;
    const int first = new_block();
    const int last = sequence(first, 0, 3);
    OBlock& b = cfg_.blocks[last];
    const std::uint64_t a = take_addr();
    b.lines.push_back(instr(a, "ret p"));
    b.sites.push_back({{{ActionType::Edge, a, Condition::ret()}}});
    b.end = OBlock::End::Ret;
    cfg_.program = render();
    return cfg_;
  }

 private:
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  std::uint64_t take_addr() {
    const std::uint64_t a = addr_;
    addr_ += 4;
    return a;
  }

  static std::string instr(std::uint64_t a, const std::string& body) {
    std::ostringstream o;
    o << "INSTR 0x" << std::hex << a << ' ' << body;
    return o.str();
  }

  int new_block() {
    OBlock b;
    b.label = "b" + std::to_string(cfg_.blocks.size());
    cfg_.blocks.push_back(std::move(b));
    return static_cast<int>(cfg_.blocks.size()) - 1;
  }

  int blocks_left() const { return max_blocks_ - static_cast<int>(cfg_.blocks.size()); }

  void straight_line(int bi) {
    const int n = pick(0, 2);
    for (int k = 0; k < n; ++k) {
      OBlock& b = cfg_.blocks[bi];
      const std::uint64_t a = take_addr();
      switch (pick(0, 7)) {
        case 0:
          b.lines.push_back(instr(a, "binop t + p " + std::to_string(pick(1, 9))));
          break;
        case 1:
          b.lines.push_back(instr(a, "call t ha p"));
          b.sites.push_back({{{ActionType::Edge, a, Condition::call(kHelperA)}}});
          break;
        case 2: {
          b.lines.push_back(instr(a, "load fp q"));
          const std::uint64_t c = take_addr();
          b.lines.push_back(instr(c, "icall t fp p"));
          b.sites.push_back({{{ActionType::Edge, c, Condition::call(kHelperA)}},
                             {{ActionType::Edge, c, Condition::call(kHelperB)}}});
          break;
        }
        case 3:
          b.lines.push_back(instr(a, "fnptr u &hb"));
          b.sites.push_back({{{ActionType::FnPtrAssign, a, Condition::equals(static_cast<std::int64_t>(kHelperB))}}});
          break;
        case 4:
          b.lines.push_back(instr(a, "vptr _ p"));
          b.sites.push_back({{{ActionType::VPtrAssign, a, Condition::any()}}});
          break;
        case 5:
          b.lines.push_back(instr(a, "ocall _ host_io p"));
          b.sites.push_back({{{ActionType::OcallCtxGen, a, Condition::any()},
                              {ActionType::OcallExit, a, Condition::any()},
                              {ActionType::Enter, a, Condition::equals(encprov::runtime::kOretIndex)},
                              {ActionType::OcallCtxUse, a, Condition::any()}}});
          break;
        case 6:
          b.lines.push_back(instr(a, "store q p"));
          break;
        default:
          b.lines.push_back(instr(a, "assign g t"));
          break;
      }
    }
  }

  /// Ends block `bi` with a symbolic branch.
  void branch(int bi, int t, int f) {
    OBlock& b = cfg_.blocks[bi];
    const std::uint64_t l = take_addr();
    b.lines.push_back(instr(l, "load c q"));
    const std::uint64_t a = take_addr();
    b.lines.push_back(instr(a, "br c"));
    b.end = OBlock::End::Branch;
    b.branch_site = a;
    b.on_true = t;
    b.on_false = f;
  }

  void jump(int from, int to) {
    cfg_.blocks[from].end = OBlock::End::Next;
    cfg_.blocks[from].next = to;
  }

  /// Emits statements starting in block `cur`; returns the block where
  /// control continues afterwards.
  int sequence(int cur, int depth, int max_statements) {
    const int statements = pick(1, max_statements);
    for (int s = 0; s < statements; ++s) {
      straight_line(cur);
      const int choice = pick(0, 2);
      if (choice == 1 && blocks_left() >= 3) {
        const int then_b = new_block();
        const int else_b = new_block();
        const int join = new_block();
        branch(cur, then_b, else_b);
        jump(sequence(then_b, depth, 1), join);
        jump(sequence(else_b, depth, 1), join);
        cur = join;
      } else if (choice == 2 && blocks_left() >= 3 && cfg_.loops < max_loops_) {
        ++cfg_.loops;
        cfg_.max_depth = std::max(cfg_.max_depth, depth + 1);
        const int head = new_block();
        const int body = new_block();
        const int exit = new_block();
        jump(cur, head);
        cfg_.blocks[head].header = true;
        straight_line(head);
        branch(head, body, exit);
        const int latch = sequence(body, depth + 1, 1);
        jump(latch, head);
        cfg_.blocks[head].latches.insert(latch);
        cur = exit;
      }
    }
    straight_line(cur);
    return cur;
  }

  std::string render() const {
    std::ostringstream o;
    o << "GLOBAL g 0\n";
    o << "FUNC ha 0x" << std::hex << kHelperA << " v:scalar\nBLOCK e\nINSTR 0x" << kHelperA + 4
      << " ret v\nENDFUNC\n";
    o << "FUNC hb 0x" << kHelperB << " v:scalar\nBLOCK e\nINSTR 0x" << kHelperB + 4 << " ret v\nENDFUNC\n";
    o << "FUNC f 0x" << kEntry << " p:scalar q:ptr\n" << std::dec;
    for (std::size_t i = 0; i < cfg_.blocks.size(); ++i) {
      const OBlock& b = cfg_.blocks[i];
      o << "BLOCK " << b.label << (i == 0 ? " entry" : "") << '\n';
      for (const auto& l : b.lines) o << l << '\n';
      if (b.end == OBlock::End::Next) o << "EDGE " << b.label << ' ' << cfg_.blocks[b.next].label << '\n';
      if (b.end == OBlock::End::Branch) {
        o << "EDGE " << b.label << ' ' << cfg_.blocks[b.on_true].label << " T\n";
        o << "EDGE " << b.label << ' ' << cfg_.blocks[b.on_false].label << " F\n";
      }
    }
    o << "ENDFUNC\nSECURE 0 f\n";
    return o.str();
  }

  std::mt19937_64 rng_;
  int max_blocks_, max_loops_;
  GeneratedCfg cfg_;
  std::uint64_t addr_ = 0;
};

/// Enumerates every block path from the entry to a return in which no loop
/// header is entered more than kLoopBound times per activation, and records
/// consecutive action patterns as edges.
class PathEnumerator {
 public:
  explicit PathEnumerator(const GeneratedCfg& cfg) : cfg_(cfg) {}

  GraphSets run() {
    out_ = {};
    Walk w;
    w.visits.assign(cfg_.blocks.size(), 0);
    enter(w, -1, 0);
    return out_;
  }

 private:
  struct Walk {
    std::vector<int> visits;
    std::optional<ActionPattern> last;
  };

  void step(Walk& w, const ActionPattern& p) {
    out_.vertices.insert(p);
    if (w.last)
      out_.edges.insert({*w.last, p});
    else
      out_.entries.insert(p);
    w.last = p;
  }

  void enter(Walk w, int from, int to) {
    const OBlock& b = cfg_.blocks[to];
    if (b.header) {
      w.visits[to] = b.latches.contains(from) ? w.visits[to] + 1 : 1;
      if (w.visits[to] > kLoopBound) return;
    }
    sites(std::move(w), to, 0);
  }

  void sites(Walk w, int bi, std::size_t k) {
    const OBlock& b = cfg_.blocks[bi];
    if (k < b.sites.size()) {
      for (const auto& chain : b.sites[k]) {
        Walk fork = w;
        for (const auto& p : chain) step(fork, p);
        sites(std::move(fork), bi, k + 1);
      }
      return;
    }
    switch (b.end) {
      case OBlock::End::Ret:
        ++out_.paths;
        return;
      case OBlock::End::Next:
        return enter(std::move(w), bi, b.next);
      case OBlock::End::Branch:
        for (int taken = 0; taken < 2; ++taken) {
          Walk fork = w;
          step(fork, {ActionType::Branch, b.branch_site, Condition::equals(taken)});
          enter(std::move(fork), bi, taken ? b.on_true : b.on_false);
        }
        return;
    }
  }

  const GeneratedCfg& cfg_;
  GraphSets out_;
};

}  // namespace oracle
