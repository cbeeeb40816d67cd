#include <algorithm>
#include <functional>

#include "encprov/extractor.hpp"

namespace encprov {

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

/// Reverse postorder of the blocks reachable from the entry.
std::vector<std::size_t> reverse_postorder(const Function& f) {
  std::vector<std::size_t> post;
  std::vector<char> seen(f.blocks.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> stack;  // (block, next successor slot)
  stack.emplace_back(f.entry_block, 0);
  seen[f.entry_block] = 1;
  while (!stack.empty()) {
    auto& [b, slot] = stack.back();
    const auto succ = f.blocks[b].successors();
    if (slot < succ.size()) {
      const std::size_t s = succ[slot++];
      if (!seen[s]) {
        seen[s] = 1;
        stack.emplace_back(s, 0);
      }
    } else {
      post.push_back(b);
      stack.pop_back();
    }
  }
  std::reverse(post.begin(), post.end());
  return post;
}

}  // namespace

LoopInfo loop_analysis(const Function& f) {
  LoopInfo info;
  const std::size_t n = f.blocks.size();
  const auto rpo = reverse_postorder(f);
  std::vector<std::size_t> order(n, kNone);
  for (std::size_t i = 0; i < rpo.size(); ++i) order[rpo[i]] = i;

  std::vector<std::vector<std::size_t>> preds(n);
  for (std::size_t b : rpo)
    for (std::size_t s : f.blocks[b].successors()) preds[s].push_back(b);

  // Immediate dominators (Cooper, Harvey, Kennedy).
  std::vector<std::size_t> idom(n, kNone);
  idom[f.entry_block] = f.entry_block;
  auto intersect = [&](std::size_t a, std::size_t b) {
    while (a != b) {
      while (order[a] > order[b]) a = idom[a];
      while (order[b] > order[a]) b = idom[b];
    }
    return a;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 1; i < rpo.size(); ++i) {
      const std::size_t b = rpo[i];
      std::size_t d = kNone;
      for (std::size_t p : preds[b]) {
        if (idom[p] == kNone) continue;
        d = d == kNone ? p : intersect(p, d);
      }
      if (d != idom[b]) {
        idom[b] = d;
        changed = true;
      }
    }
  }
  auto dominates = [&](std::size_t h, std::size_t u) {
    for (std::size_t x = u;; x = idom[x]) {
      if (x == h) return true;
      if (x == f.entry_block) return false;
    }
  };

  // A retreating edge in RPO that is not a dominator back edge makes the
  // CFG irreducible.
  for (std::size_t u : rpo)
    for (std::size_t h : f.blocks[u].successors()) {
      if (dominates(h, u))
        info.back_edges.emplace(u, h);
      else if (order[h] <= order[u])
        info.reducible = false;
    }

  for (const auto& [u, h] : info.back_edges) {
    auto& body = info.body[h];
    body.insert(h);
    std::vector<std::size_t> work{u};
    while (!work.empty()) {
      const std::size_t x = work.back();
      work.pop_back();
      if (!body.insert(x).second) continue;
      for (std::size_t p : preds[x]) work.push_back(p);
    }
  }
  for (const auto& [h, body] : info.body) info.headers.push_back(h);
  return info;
}

}  // namespace encprov
