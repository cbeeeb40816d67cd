// Acceptance driver: one PASS/FAIL line per criterion, detail lines
// prefixed with '#'. Exit status is 0 only when every criterion passes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "encprov/attack.hpp"
#include "encprov/channel.hpp"
#include "encprov/extractor.hpp"
#include "encprov/monitor.hpp"
#include "encprov/transport.hpp"
#include "cfg_oracle.hpp"
#include "corpus.hpp"
#include "fsm_table.hpp"
#include "sha256_ref.hpp"

using namespace encprov;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 2) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(prec);
  o << v;
  return o.str();
}

const std::vector<std::uint8_t> kMacKey = {0x6b, 0x65, 0x79, 0x2d, 0x61, 0x63, 0x63};

/// Extracts, seals and reloads the model the way the monitor would see it.
EnclaveModel sealed_model(const TraceProgram& p) {
  const std::string text = extract_model(p).model.serialize(kMacKey);
  return EnclaveModel::parse(text, kMacKey);
}

SessionSummary run_pipe_session(const TraceProgram& p, const EnclaveModel& m, const DriveOptions& opt) {
  auto [target, monitor] = make_memory_pipe();
  SessionSummary s;
  std::thread t([&] { s = run_session(*monitor, m); });
  try {
    drive_target(*target, p, opt);
  } catch (...) {
    target->close();
    t.join();
    throw;
  }
  t.join();
  return s;
}

// 1 ---------------------------------------------------------------------------

Verdict benign_corpus() {
  const auto t0 = Clock::now();
  std::size_t sessions = 0, anomalies = 0, actions = 0;
  for (const auto& name : corpus::benign()) {
    const TraceProgram p = load_program(corpus::path(name));
    const EnclaveModel m = sealed_model(p);
    for (std::uint16_t threads : {1, 2, 4}) {
      DriveOptions opt;
      opt.target.threads = threads;
      opt.dummies = DummyConfig{2, std::chrono::microseconds(0)};
      const SessionSummary s = run_pipe_session(p, m, opt);
      ++sessions;
      actions += s.actions;
      anomalies += s.anomalies.size();
      for (const auto& a : s.anomalies) std::cout << "# " << name << " threads=" << threads << ' ' << a.to_line() << '\n';
      if (s.end != SessionEnd::Closed) {
        std::cout << "# " << name << " ended " << to_string(s.end) << '\n';
        ++anomalies;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {anomalies == 0 && secs < 10.0 && corpus::benign().size() >= 5,
          std::to_string(corpus::benign().size()) + " programs, " + std::to_string(sessions) + " sessions, " +
              std::to_string(actions) + " actions, " + std::to_string(anomalies) + " anomalies, " + fmt(secs) + " s"};
}

// 2 ---------------------------------------------------------------------------

Verdict attack_matrix() {
  const auto t0 = Clock::now();
  const TraceProgram p = load_program(corpus::path("attack_demo.ir"));
  const EnclaveModel m = sealed_model(p);
  int detected = 0;
  for (Scenario s : kAllScenarios) {
    const AttackOutcome o = run_attack(s, p, m);
    bool exact = o.detected();
    for (const auto& a : o.summary.anomalies) exact = exact && a.cls == o.expected;
    detected += exact;
    std::cout << "# " << to_string(s) << " expected=" << to_string(o.expected)
              << " got=" << (o.first ? std::string(to_string(o.first->cls)) : std::string("none"))
              << " fired=" << o.fired << (exact ? "" : " MISMATCH") << '\n';
  }
  const double secs = seconds_since(t0);
  return {detected == 7 && secs < 10.0, std::to_string(detected) + "/7 detected, " + fmt(secs) + " s"};
}

// 3 ---------------------------------------------------------------------------

Verdict protocol_properties() {
  std::mt19937_64 rng(0x5eedf00d);
  const Key k0 = random_key();

  // A 1000-packet run, with the verifier key expected before each packet.
  constexpr std::size_t kRun = 1000;
  std::vector<Packet> packets;
  std::vector<Key> before;
  ChannelState rep(ChannelRole::Reporter, k0);
  for (std::size_t i = 0; i < kRun; ++i) {
    before.push_back(rep.key());
    const Action a = Action::edge(rng() & 0xffffff, rng() & 0xffffff);
    packets.push_back(i % 7 == 3 ? seal_dummy(rep) : report_log(rep, a, static_cast<std::uint16_t>(1 + i % 3)));
  }
  before.push_back(rep.key());

  // The clean run verifies end to end.
  bool clean = true;
  {
    ChannelState ver(ChannelRole::Verifier, k0);
    for (const auto& p : packets) clean = clean && verify_log(ver, p).kind != VerifyOutcome::Kind::Untrusted;
  }

  // (a) every bit of every packet.
  std::size_t flips = 0, flips_caught = 0;
  for (std::size_t i = 0; i < kRun; ++i)
    for (std::size_t bit = 0; bit < kPacketBytes * 8; ++bit) {
      Packet p = packets[i];
      p[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      ChannelState ver(ChannelRole::Verifier, before[i]);
      ++flips;
      if (verify_log(ver, p).kind != VerifyOutcome::Kind::Untrusted) continue;
      // Absorbing: the genuine successor is refused too.
      if (i + 1 < kRun && verify_log(ver, packets[i + 1]).kind != VerifyOutcome::Kind::Untrusted) continue;
      ++flips_caught;
    }

  // (b) every earlier packet injected at every later position (and at the end).
  std::size_t replays = 0, replays_caught = 0;
  for (std::size_t at = 1; at <= kRun; ++at)
    for (std::size_t src = 0; src < at; ++src) {
      ChannelState ver(ChannelRole::Verifier, before[at]);
      ++replays;
      replays_caught += verify_log(ver, packets[src]).kind == VerifyOutcome::Kind::Untrusted;
    }

  // (c) forging with the key disclosed after packet i was emitted, aimed at
  // a verifier still expecting packet i (or an earlier one).
  constexpr std::size_t kForges = 10'000;
  std::size_t forged_ok = 0;
  for (std::size_t n = 0; n < kForges; ++n) {
    const std::size_t i = rng() % kRun;
    const std::size_t target = i - std::min<std::size_t>(i, rng() % 4);
    Key leaked = before[i + 1];
    for (std::uint64_t extra = rng() % 3; extra > 0; --extra) leaked = key_evolve(leaked);
    ChannelState forger(ChannelRole::Reporter, leaked);
    Packet forged;
    switch (n % 3) {
      case 0:
        forged = report_log(forger, Action::edge(rng(), 0xdead0000), 1);
        break;
      case 1:
        forged = seal_dummy(forger);
        break;
      default: {
        // Splice the genuine ciphertext body with a MAC recomputed under the leak.
        forged = packets[target];
        ActionBytes guess;
        for (auto& b : guess) b = static_cast<std::uint8_t>(rng());
        const Mac mac = mac_compute(guess, leaked);
        for (std::size_t b = 0; b < kMacBytes; ++b) forged[kActionBytes + b] = mac[b] ^ leaked[kActionBytes + b];
        break;
      }
    }
    ChannelState ver(ChannelRole::Verifier, before[target]);
    forged_ok += verify_log(ver, forged).kind != VerifyOutcome::Kind::Untrusted;
  }

  // (d) both endpoints evolve in lockstep; the final key matches an
  // independent computation of the schedule.
  constexpr std::size_t kEvolutions = 100'000;
  bool sync = true;
  ChannelState a(ChannelRole::Reporter, k0), b(ChannelRole::Verifier, k0);
  Key ref_key = k0;
  for (std::size_t n = 0; n < kEvolutions; ++n) {
    const Packet p = report_log(a, Action::branch(n, n & 1), 1);
    sync = sync && verify_log(b, p).kind == VerifyOutcome::Kind::Action;
    std::vector<std::uint8_t> m(ref_key.begin(), ref_key.end());
    m.push_back(0);
    const auto h0 = ref::sha256(m);
    m.back() = 1;
    const auto h1 = ref::sha256(m);
    std::copy(h0.begin(), h0.end(), ref_key.begin());
    std::copy_n(h1.begin(), 16, ref_key.begin() + 32);
  }
  sync = sync && a.key() == b.key() && a.key() == ref_key;

  std::cout << "# flips " << flips_caught << '/' << flips << " replays " << replays_caught << '/' << replays
            << " forges accepted " << forged_ok << '/' << kForges << " sync over " << kEvolutions << ' '
            << (sync ? "ok" : "broken") << '\n';
  return {clean && flips_caught == flips && replays_caught == replays && forged_ok == 0 && sync,
          "(a) " + std::to_string(flips_caught) + "/" + std::to_string(flips) + " flips (b) " +
              std::to_string(replays_caught) + "/" + std::to_string(replays) + " replays (c) " +
              std::to_string(forged_ok) + "/" + std::to_string(kForges) + " forges verified (d) " +
              (sync ? "in sync" : "out of sync") + " after " + std::to_string(kEvolutions)};
}

// 4 ---------------------------------------------------------------------------

Verdict extractor_oracle() {
  constexpr int kGraphs = 50;
  int equal = 0, with_loops = 0, nested = 0;
  for (int n = 0; n < kGraphs; ++n) {
    const std::uint64_t seed = 0xC0FFEE00u + static_cast<std::uint64_t>(n);
    const oracle::GeneratedCfg cfg = oracle::Generator(seed, 12, 2).generate();
    with_loops += cfg.loops > 0;
    nested += cfg.max_depth > 1;
    const TraceProgram p = parse_program(cfg.program);
    const Function& f = *p.find("f");
    ExtractOptions opt;
    const ExplorationResult r =
        symbolic_exploration(p, f, set_symbolic_free_args(f, set_symbolic_globals(p)), opt);
    const oracle::GraphSets want = oracle::PathEnumerator(cfg).run();
    const oracle::GraphSets got = oracle::sets_of(r.graph);
    const bool same = r.method == ExtractionMethod::Symbolic && got.vertices == want.vertices &&
                      got.edges == want.edges && got.entries == want.entries;
    if (!same) std::cout << "# seed " << seed << " differs (" << cfg.blocks.size() << " blocks)\n";
    equal += same;
  }
  return {equal == kGraphs, std::to_string(equal) + "/" + std::to_string(kGraphs) + " graphs equal (" +
                                std::to_string(with_loops) + " with loops, " + std::to_string(nested) + " nested)"};
}

// 5 ---------------------------------------------------------------------------

Verdict fallback_monotonicity() {
  std::size_t functions = 0, superset = 0, covered = 0, reachable = 0;
  for (const auto& name : corpus::benign()) {
    const TraceProgram p = load_program(corpus::path(name));
    const ExtractionReport rep = extract_model(p);
    for (const auto& f : p.functions) {
      const ExplorationResult& sym = rep.results.at(f.name);
      const auto ins = insensitive_analysis(p, f).graph.edge_patterns();
      bool ok = true;
      for (const auto& e : sym.graph.edge_patterns()) ok = ok && ins.contains(e);
      ++functions;
      superset += ok;
      covered += sym.covered_sites;
      reachable += sym.reachable_sites;
      std::cout << "# COVERAGE " << name << ' ' << f.name << ' ' << sym.covered_sites << '/' << sym.reachable_sites
                << ' ' << fmt(100.0 * sym.coverage, 1) << "% method=" << to_string(sym.method)
                << " symbolic_edges=" << sym.graph.edge_count() << " insensitive_edges=" << ins.size()
                << (ok ? "" : " NOT-SUPERSET") << '\n';
    }
  }
  const double aggregate = reachable ? static_cast<double>(covered) / static_cast<double>(reachable) : 0.0;
  return {superset == functions && aggregate >= 0.90,
          std::to_string(superset) + "/" + std::to_string(functions) + " functions superset, aggregate coverage " +
              fmt(100.0 * aggregate, 1) + "%"};
}

// 6 ---------------------------------------------------------------------------

Verdict throughput() {
  TraceProgram p = load_program(corpus::path("loop_heavy.ir"));
  p.workload.clear();
  for (int i = 0; i < 6; ++i) p.workload.push_back({0, {20000}});
  p.workload.push_back({1, {}});
  const EnclaveModel m = sealed_model(p);

  TcpListener listener({"127.0.0.1", 0});
  SessionSummary s;
  std::unique_ptr<TcpStream> server;
  const auto t0 = Clock::now();
  std::thread mon([&] {
    server = listener.accept(std::chrono::seconds(10));
    if (server) s = run_session(*server, m);
  });
  auto client = TcpStream::connect({"127.0.0.1", listener.port()}, std::chrono::seconds(5));
  drive_target(*client, p);
  mon.join();
  const double secs = seconds_since(t0);
  const double rate = static_cast<double>(s.actions) / secs;
  return {s.trusted() && s.end == SessionEnd::Closed && s.actions >= 1'000'000 && rate >= 100'000.0,
          std::to_string(s.actions) + " actions in " + fmt(secs) + " s = " + fmt(rate / 1000.0, 0) +
              "K actions/s over loopback TCP" + (s.trusted() ? "" : " (untrusted!)")};
}

// 7 ---------------------------------------------------------------------------

Verdict fsm_conformance() {
  const fsm_table::Outcome o = fsm_table::run();
  for (const auto& f : o.failures) std::cout << "# " << f << '\n';
  return {o.failures.empty() && o.checked == kFsmPhaseCount * fsm_table::probes().size(),
          std::to_string(o.checked - o.failures.size()) + "/" + std::to_string(o.checked) +
              " (phase, stop-action) pairs conform, " + std::to_string(fsm_table::accepted().size()) + " admissible"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"benign corpus has zero false positives", benign_corpus},
      {"attack matrix", attack_matrix},
      {"protocol properties", protocol_properties},
      {"extractor equals path-enumeration oracle", extractor_oracle},
      {"fallback monotonicity and coverage", fallback_monotonicity},
      {"pipeline throughput", throughput},
      {"life-cycle conformance", fsm_conformance},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << v.detail
              << std::endl;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << criteria.size() - static_cast<std::size_t>(failed) << '/'
            << criteria.size() << std::endl;
  return failed ? 1 : 0;
}
