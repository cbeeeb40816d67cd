// encprov: extract models, run the monitor, drive targets and attacks, and
// query verdicts.
//
// Exit codes: 0 success, 1 usage or malformed input, 2 I/O failure,
// 3 verification refusal (bad model MAC, untrusted verdict, missed attack).

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "encprov/attack.hpp"
#include "encprov/errors.hpp"
#include "encprov/extractor.hpp"
#include "encprov/model.hpp"
#include "encprov/monitor.hpp"
#include "encprov/program.hpp"
#include "encprov/target.hpp"
#include "encprov/transport.hpp"

using namespace encprov;
using namespace std::chrono_literals;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitRefused = 3;

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TransportError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct ExtractArgs {
  std::string program, output, mac_key;
  double timeout_s = 10.0;
  std::size_t path_cap = 10'000;
  bool insensitive = false;
};

int cmd_extract(const ExtractArgs& a) {
  const TraceProgram p = load_program(a.program);
  ExtractOptions opt;
  opt.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(a.timeout_s * 1000));
  opt.path_cap = a.path_cap;
  opt.force_insensitive = a.insensitive;
  const ExtractionReport r = extract_model(p, opt);
  for (const auto& [name, res] : r.results)
    std::cout << "COVERAGE " << name << " method=" << to_string(res.method) << " covered=" << res.covered_sites
              << " reachable=" << res.reachable_sites << " coverage=" << res.coverage
              << " vertices=" << res.graph.vertex_count() << " paths=" << res.paths
              << (res.timed_out ? " timed-out" : "") << (res.irreducible ? " irreducible" : "") << '\n';
  std::cout << "AGGREGATE coverage=" << r.aggregate_coverage() << " handlers=" << r.handlers.size() << '\n';
  save_model(r.model, a.output, load_or_create_mac_key(a.mac_key));
  return 0;
}

struct MonitorArgs {
  std::string config, model, mac_key, listen, status, log;
  std::int64_t timeout_ms = 0;
  std::size_t queue = 0;
  std::size_t sessions = 0;
};

int cmd_monitor(const MonitorArgs& a) {
  MonitorConfig cfg;
  if (!a.config.empty()) cfg = parse_monitor_config(read_file(a.config));
  if (!a.model.empty()) cfg.model_path = a.model;
  if (!a.mac_key.empty()) cfg.mac_key_path = a.mac_key;
  if (!a.listen.empty()) cfg.listen = a.listen;
  if (!a.status.empty()) cfg.status_listen = a.status;
  if (!a.log.empty()) cfg.log_path = a.log;
  if (a.timeout_ms) cfg.timeout = std::chrono::milliseconds(a.timeout_ms);
  if (a.queue) cfg.queue_capacity = a.queue;
  cfg.validate();
  if (cfg.model_path.empty() || cfg.mac_key_path.empty()) throw ContractViolation("monitor needs a model and a MAC key");

  EnclaveModel model = load_model(cfg.model_path, load_mac_key(cfg.mac_key_path));
  Monitor m(cfg, std::move(model));
  m.start();
  std::cout << "LISTENING port=" << m.port() << " status=" << m.status_port() << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) {
    std::this_thread::sleep_for(50ms);
    if (a.sessions == 0) continue;
    const auto ss = m.sessions();
    std::size_t done = 0;
    for (const auto& s : ss) done += s.end != SessionEnd::Running;
    if (done >= a.sessions) break;
  }
  m.stop();
  bool trusted = true;
  for (const auto& s : m.sessions()) {
    std::cout << "SESSION " << s.id << " end=" << to_string(s.end) << " packets=" << s.packets
              << " verdict=" << (s.trusted() ? "trusted" : "untrusted") << '\n';
    trusted = trusted && s.trusted();
  }
  return a.sessions && !trusted ? kExitRefused : 0;
}

struct TargetArgs {
  std::string program, monitor, scenario, schedule, transcript;
  std::uint16_t threads = 1;
  std::uint32_t dummy_k = 0;
  std::int64_t dummy_t_us = 0;
};

DriveOptions drive_options(const TargetArgs& a) {
  DriveOptions opt;
  opt.target.threads = a.threads;
  if (!a.schedule.empty()) opt.target.schedule = parse_schedule(read_file(a.schedule), a.threads);
  if (!a.scenario.empty()) {
    opt.scenario = scenario_from_string(a.scenario);
    if (!opt.scenario) throw ContractViolation("unknown scenario " + a.scenario);
  }
  if (a.dummy_k) opt.dummies = DummyConfig{a.dummy_k, std::chrono::microseconds(a.dummy_t_us)};
  opt.transcript = !a.transcript.empty();
  return opt;
}

void write_transcript(const std::string& path, const std::vector<DecodedAction>& actions) {
  std::ofstream out(path);
  if (!out) throw TransportError("cannot write " + path);
  for (const auto& d : actions) out << d.thread_id << ' ' << to_string(d.action) << '\n';
}

int cmd_target(const TargetArgs& a) {
  const TraceProgram p = load_program(a.program);
  const DriveOptions opt = drive_options(a);
  auto conn = TcpStream::connect(parse_endpoint(a.monitor), 5000ms);
  const DriveResult r = drive_target(*conn, p, opt);
  if (!a.transcript.empty()) write_transcript(a.transcript, r.transcript);
  std::cout << "TARGET actions=" << r.run.actions << " packets=" << r.packets << " crashed=" << r.run.crashed
            << " local=" << conn->local_name() << '\n';
  return 0;
}

struct AttackArgs {
  TargetArgs target;
  std::string status;
  std::int64_t wait_ms = 10'000;
};

int cmd_attack(const AttackArgs& a) {
  const TraceProgram p = load_program(a.target.program);
  const DriveOptions opt = drive_options(a.target);
  const Scenario s = *opt.scenario;
  auto conn = TcpStream::connect(parse_endpoint(a.target.monitor), 5000ms);
  const std::string local = conn->local_name();
  const DriveResult r = drive_target(*conn, p, opt);
  if (!a.target.transcript.empty()) write_transcript(a.target.transcript, r.transcript);
  if (!r.attack_fired) {
    std::cout << "ATTACK " << to_string(s) << " not applicable to this program\n";
    return kExitRefused;
  }

  const Endpoint status = parse_endpoint(a.status);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(a.wait_ms);
  for (;;) {
    const auto found = query_status(status, "FIND " + local);
    if (found.front().rfind("SESSION ", 0) == 0) {
      const std::string id = found.front().substr(8);
      const auto lines = query_status(status, "STATUS " + id);
      const bool ended = lines.front().find(" end=running") == std::string::npos;
      if (ended && lines.size() >= 2) {
        const std::string want = "UNTRUSTED " + std::string(to_string(expected_class(s))) + " ";
        std::cout << lines[1] << '\n';
        const bool ok = lines[1].rfind(want, 0) == 0;
        std::cout << "ATTACK " << to_string(s) << (ok ? " detected" : " missed") << '\n';
        return ok ? 0 : kExitRefused;
      }
    }
    if (std::chrono::steady_clock::now() > deadline) {
      std::cout << "ATTACK " << to_string(s) << " no verdict before deadline\n";
      return kExitRefused;
    }
    std::this_thread::sleep_for(50ms);
  }
}

int cmd_status(const std::string& endpoint, const std::vector<std::string>& request) {
  std::string line;
  for (const auto& w : request) line += (line.empty() ? "" : " ") + w;
  if (line.empty()) line = "STATUS latest";
  const auto lines = query_status(parse_endpoint(endpoint), line);
  for (const auto& l : lines) std::cout << l << '\n';
  return lines.front().rfind("ERR", 0) == 0 ? kExitUsage : 0;
}

void add_target_options(CLI::App* c, TargetArgs& a) {
  c->add_option("program", a.program, "trace program (.ir)")->required()->check(CLI::ExistingFile);
  c->add_option("--monitor", a.monitor, "monitor host:port")->required();
  c->add_option("--threads", a.threads, "host threads")->check(CLI::Range(1, 64));
  c->add_option("--schedule", a.schedule, "file of 1-based thread ids giving the turn order");
  c->add_option("--transcript", a.transcript, "write the decrypted action log here");
  c->add_option("--dummy-k", a.dummy_k, "maximum dummy packets after each action");
  c->add_option("--dummy-t-us", a.dummy_t_us, "maximum delay before each dummy (us)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Enclave provenance: model extraction, monitoring and attack replay"};
  app.require_subcommand(1);

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "extract a signed model from a trace program");
  extract->add_option("program", ex.program, "trace program (.ir)")->required()->check(CLI::ExistingFile);
  extract->add_option("-o,--output", ex.output, "model output path")->required();
  extract->add_option("--mac-key", ex.mac_key, "MAC key file (created if absent)")->required();
  extract->add_option("--timeout", ex.timeout_s, "per-function symbolic budget (s)");
  extract->add_option("--path-cap", ex.path_cap, "per-function path cap");
  extract->add_flag("--force-insensitive", ex.insensitive, "skip symbolic exploration");

  MonitorArgs mo;
  auto* monitor = app.add_subcommand("monitor", "serve target sessions and status queries");
  monitor->add_option("--config", mo.config, "key=value config file")->check(CLI::ExistingFile);
  monitor->add_option("--model", mo.model, "model file");
  monitor->add_option("--mac-key", mo.mac_key, "MAC key file");
  monitor->add_option("--listen", mo.listen, "target endpoint host:port");
  monitor->add_option("--status", mo.status, "status endpoint host:port");
  monitor->add_option("--timeout-ms", mo.timeout_ms, "inactivity timeout");
  monitor->add_option("--queue", mo.queue, "ingestion queue capacity (batches)");
  monitor->add_option("--log", mo.log, "anomaly log file");
  monitor->add_option("--sessions", mo.sessions, "exit after this many sessions ended");

  TargetArgs ta;
  auto* target = app.add_subcommand("target", "run a trace program against a monitor");
  add_target_options(target, ta);
  target->add_option("--scenario", ta.scenario, "attack scenario to inject");

  AttackArgs at;
  auto* attack = app.add_subcommand("attack", "replay an attack scenario and check the monitor's verdict");
  attack->add_option("scenario", at.target.scenario, "scenario name")->required();
  add_target_options(attack, at.target);
  attack->add_option("--status", at.status, "monitor status endpoint host:port")->required();
  attack->add_option("--wait-ms", at.wait_ms, "how long to wait for the verdict");

  std::string st_endpoint;
  std::vector<std::string> st_request;
  auto* status = app.add_subcommand("status", "query a monitor's status endpoint");
  status->add_option("endpoint", st_endpoint, "status host:port")->required();
  status->add_option("request", st_request, "request words (default: STATUS latest)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*extract) return cmd_extract(ex);
    if (*monitor) return cmd_monitor(mo);
    if (*target) return cmd_target(ta);
    if (*attack) {
      if (!scenario_from_string(at.target.scenario)) throw ContractViolation("unknown scenario " + at.target.scenario);
      return cmd_attack(at);
    }
    if (*status) return cmd_status(st_endpoint, st_request);
  } catch (const ModelIntegrityError& e) {
    std::cerr << "refused: " << e.what() << '\n';
    return kExitRefused;
  } catch (const TransportError& e) {
    std::cerr << "i/o: " << e.what() << '\n';
    return kExitIo;
  } catch (const HandshakeFailed& e) {
    std::cerr << "i/o: " << e.what() << '\n';
    return kExitIo;
  } catch (const ModelError& e) {
    std::cerr << "model: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
