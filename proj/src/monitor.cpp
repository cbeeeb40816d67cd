#include "encprov/monitor.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include "encprov/crypto.hpp"
#include "encprov/errors.hpp"

namespace encprov {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ContractViolation("config: bad value for " + std::string(key) + ": " + std::string(v));
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ContractViolation("config: bad boolean for " + std::string(key));
}

std::vector<std::string_view> split_words(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    const std::size_t j = s.find(' ', i);
    const std::size_t end = j == std::string_view::npos ? s.size() : j;
    if (end > i) out.push_back(s.substr(i, end - i));
    i = end;
  }
  return out;
}

std::string hex(std::uint64_t v) {
  std::ostringstream o;
  o << "0x" << std::hex << v;
  return o.str();
}

}  // namespace

void MonitorConfig::validate() const {
  if (queue_capacity == 0) throw ContractViolation("queue capacity must be at least 1");
  if (timeout.count() <= 0) throw ContractViolation("timeout must be positive");
}

MonitorConfig parse_monitor_config(std::string_view text, MonitorConfig cfg) {
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    std::string_view line = raw;
    if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ContractViolation("config: expected key=value: " + std::string(line));
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view v = trim(line.substr(eq + 1));
    if (key == "listen") cfg.listen = v;
    else if (key == "status") cfg.status_listen = v;
    else if (key == "model") cfg.model_path = v;
    else if (key == "mac_key") cfg.mac_key_path = v;
    else if (key == "timeout_ms") cfg.timeout = std::chrono::milliseconds(parse_number<std::int64_t>(key, v));
    else if (key == "queue_capacity") cfg.queue_capacity = parse_number<std::size_t>(key, v);
    else if (key == "dummy_k_max") cfg.dummies.k_max = parse_number<std::uint32_t>(key, v);
    else if (key == "dummy_t_max_us") cfg.dummies.t_max = std::chrono::microseconds(parse_number<std::int64_t>(key, v));
    else if (key == "log") cfg.log_path = v;
    else if (key == "keep_reading_untrusted") cfg.keep_reading_untrusted = parse_bool(key, v);
    else throw ContractViolation("config: unknown key " + std::string(key));
  }
  cfg.validate();
  return cfg;
}

std::string_view to_string(SessionEnd e) {
  switch (e) {
    case SessionEnd::Running: return "running";
    case SessionEnd::Closed: return "closed";
    case SessionEnd::Timeout: return "timeout";
    case SessionEnd::HandshakeFailed: return "handshake-failed";
    case SessionEnd::TransportFailed: return "transport-failed";
    case SessionEnd::Stopped: return "stopped";
  }
  return "?";
}

std::string verdict_line(const AnomalyReport& r) {
  std::ostringstream out;
  out << "UNTRUSTED " << to_string(r.cls) << " src=" << (r.action && r.action->src ? hex(*r.action->src) : "-")
      << " expected={";
  for (std::size_t i = 0; i < r.expected.size(); ++i) out << (i ? "," : "") << to_string(r.expected[i]);
  out << "} thread=" << r.thread_id << " action=" << (r.action ? to_string(*r.action) : std::string("none"))
      << " state=" << to_string(r.state) << " fsm=" << coarse_name(r.phase) << " at="
      << (r.function.empty() ? "-" : r.function) << '/' << (r.vertex ? std::to_string(*r.vertex) : "-")
      << " seq=" << r.seq;
  return out.str();
}

std::string status_line(const ThreadSnapshot& t) {
  if (t.anomaly) return verdict_line(*t.anomaly);
  std::ostringstream out;
  out << "TRUSTED thread=" << t.thread_id << " state=" << to_string(t.state) << " fsm=" << coarse_name(t.phase)
      << " shadow=" << t.shadow_depth << " structures=" << t.structure_depth << " transactions=" << t.transactions
      << " actions=" << t.actions;
  return out.str();
}

// ---------------------------------------------------------------------------
// Session

Session::Session(std::uint64_t id, Transport& transport, const EnclaveModel& model, SessionOptions opts)
    : id_(id), transport_(transport), opts_(std::move(opts)), verifier_(model), queue_(opts_.queue_capacity) {
  s_.id = id;
  s_.peer = transport.peer_name();
  s_.started = std::chrono::system_clock::now();
}

bool Session::finished() const {
  std::lock_guard lock(mu_);
  return s_.end != SessionEnd::Running;
}

SessionSummary Session::summary() const {
  std::lock_guard lock(mu_);
  SessionSummary out = s_;
  out.threads = verifier_.snapshot();
  out.actions = verifier_.actions_processed();
  return out;
}

void Session::record(const AnomalyReport& r) {
  s_.anomalies.push_back(r);
  if (opts_.log) opts_.log("session=" + std::to_string(id_) + " " + r.to_line());
}

void Session::record_all(const std::vector<AnomalyReport>& rs) {
  for (const auto& r : rs) record(r);
}

void Session::channel_failure(AnomalyClass cls) {
  if (!s_.channel_trusted) return;
  s_.channel_trusted = false;
  // Charged to the channel first: no thread can be blamed for a broken stream.
  AnomalyReport r;
  r.cls = cls;
  r.seq = s_.packets;
  record(r);
  record_all(cls == AnomalyClass::Timeout ? verifier_.channel_timeout() : verifier_.channel_tampered());
}

void Session::run() {
  std::optional<ChannelState> ch;
  try {
    ch.emplace(verifier_handshake(transport_, opts_.timeout));
  } catch (const Error& e) {
    std::lock_guard lock(mu_);
    s_.end = SessionEnd::HandshakeFailed;
    s_.channel_trusted = false;
    s_.ended = std::chrono::system_clock::now();
    if (opts_.log) opts_.log("session=" + std::to_string(id_) + " handshake failed: " + e.what());
    return;
  }

  std::thread reader([&] { read_loop(); });
  while (auto b = queue_.pop()) {
    consume(*ch, *b);
    if (b->end != SessionEnd::Running) break;
  }
  queue_.close();
  reader.join();

  std::lock_guard lock(mu_);
  if (s_.end == SessionEnd::Running) s_.end = SessionEnd::Closed;
  s_.ended = std::chrono::system_clock::now();
  if (opts_.log)
    opts_.log("session=" + std::to_string(id_) + " end=" + std::string(to_string(s_.end)) +
              " packets=" + std::to_string(s_.packets) + " verdict=" + (s_.anomalies.empty() ? "trusted" : "untrusted"));
}

void Session::read_loop() {
  constexpr std::size_t kChunk = kPacketBytes * 1024;
  constexpr std::chrono::milliseconds kSlice{100};
  std::vector<std::uint8_t> buf(kChunk);
  std::size_t fill = 0;
  auto idle = std::chrono::steady_clock::now();
  bool stop_reading = false;

  auto finish = [&](SessionEnd end) {
    Batch b;
    b.bytes.assign(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(fill));
    b.end = end;
    queue_.push(std::move(b));
  };

  while (!stop_reading) {
    if (opts_.stop && opts_.stop->load()) return finish(SessionEnd::Stopped);
    std::pair<ReadStatus, std::size_t> r;
    try {
      r = transport_.read_some(std::span(buf).subspan(fill), std::min(kSlice, opts_.timeout));
    } catch (const TransportError&) {
      return finish(SessionEnd::TransportFailed);
    }
    if (r.first == ReadStatus::Eof) return finish(SessionEnd::Closed);
    if (r.first == ReadStatus::Timeout) {
      if (std::chrono::steady_clock::now() - idle >= opts_.timeout) return finish(SessionEnd::Timeout);
      continue;
    }
    idle = std::chrono::steady_clock::now();
    fill += r.second;
    const std::size_t whole = fill - fill % kPacketBytes;
    if (whole == 0) continue;
    Batch b;
    b.bytes.assign(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(whole));
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(whole), buf.begin() + static_cast<std::ptrdiff_t>(fill),
              buf.begin());
    fill -= whole;
    if (!queue_.push(std::move(b))) stop_reading = true;
  }
}

void Session::consume(ChannelState& ch, const Batch& b) {
  std::lock_guard lock(mu_);
  const std::size_t n = b.bytes.size() / kPacketBytes;
  for (std::size_t i = 0; i < n; ++i) {
    ++s_.packets;
    if (!s_.channel_trusted) {
      ++s_.ignored;
      continue;
    }
    Packet p;
    std::copy_n(b.bytes.begin() + static_cast<std::ptrdiff_t>(i * kPacketBytes), kPacketBytes, p.begin());
    const VerifyOutcome o = verify_log(ch, p);
    switch (o.kind) {
      case VerifyOutcome::Kind::Dummy:
        ++s_.dummies;
        break;
      case VerifyOutcome::Kind::Action:
        if (auto r = verifier_.process(o.decoded.action, o.decoded.thread_id)) record(*r);
        break;
      case VerifyOutcome::Kind::Untrusted:
        channel_failure(AnomalyClass::ProtocolTamper);
        break;
    }
  }
  switch (b.end) {
    case SessionEnd::Running:
      break;
    case SessionEnd::Closed:
      // A trailing partial packet cannot come from an honest reporter.
      if (b.bytes.size() % kPacketBytes != 0) channel_failure(AnomalyClass::ProtocolTamper);
      s_.end = b.end;
      break;
    case SessionEnd::Timeout:
      channel_failure(AnomalyClass::Timeout);
      s_.end = b.end;
      break;
    case SessionEnd::TransportFailed:
      channel_failure(AnomalyClass::ProtocolTamper);
      s_.end = b.end;
      break;
    default:
      s_.end = b.end;
      break;
  }
  if (!s_.channel_trusted && !opts_.keep_reading_untrusted && s_.end == SessionEnd::Running) {
    s_.end = SessionEnd::Stopped;
    queue_.close();
  }
}

SessionSummary run_session(Transport& t, const EnclaveModel& model, SessionOptions opts) {
  Session s(0, t, model, std::move(opts));
  s.run();
  return s.summary();
}

// ---------------------------------------------------------------------------
// Monitor

struct Monitor::Entry {
  std::unique_ptr<Transport> transport;
  std::string target_address;
  std::unique_ptr<Session> session;
  std::thread worker;
};

Monitor::Monitor(MonitorConfig cfg, EnclaveModel model) : cfg_(std::move(cfg)), model_(std::move(model)) {
  cfg_.validate();
  Verifier probe(model_);  // rejects models without runtime graphs up front
  if (!cfg_.log_path.empty()) {
    auto f = std::make_unique<std::ofstream>(cfg_.log_path, std::ios::app);
    if (!*f) throw TransportError("cannot open log file " + cfg_.log_path);
    log_file_ = std::move(f);
  }
}

Monitor::~Monitor() { stop(); }

void Monitor::start() {
  listener_ = std::make_unique<TcpListener>(parse_endpoint(cfg_.listen));
  status_listener_ = std::make_unique<TcpListener>(parse_endpoint(cfg_.status_listen));
  accept_thread_ = std::thread([this] { accept_loop(); });
  status_thread_ = std::thread([this] { status_loop(); });
}

void Monitor::stop() {
  if (stop_.exchange(true)) return;
  if (accept_thread_.joinable()) accept_thread_.join();
  if (status_thread_.joinable()) status_thread_.join();
  std::lock_guard lock(mu_);
  for (auto& e : sessions_)
    if (e->worker.joinable()) e->worker.join();
  stopped_cv_.notify_all();
}

void Monitor::wait() {
  std::unique_lock lock(mu_);
  stopped_cv_.wait(lock, [&] { return stop_.load(); });
}

std::uint16_t Monitor::port() const { return listener_ ? listener_->port() : 0; }
std::uint16_t Monitor::status_port() const { return status_listener_ ? status_listener_->port() : 0; }

void Monitor::accept_loop() {
  while (!stop_) {
    std::unique_ptr<TcpStream> conn = listener_->accept(std::chrono::milliseconds(100));
    if (!conn) continue;
    auto entry = std::make_unique<Entry>();
    entry->target_address = conn->peer_name();
    entry->transport = std::move(conn);
    SessionOptions opts;
    opts.timeout = cfg_.timeout;
    opts.queue_capacity = cfg_.queue_capacity;
    opts.keep_reading_untrusted = cfg_.keep_reading_untrusted;
    opts.stop = &stop_;
    opts.log = [this](const std::string& line) {
      std::lock_guard lock(log_mu_);
      std::ostream& out = log_file_ ? *log_file_ : std::cerr;
      out << line << '\n';
      out.flush();
    };
    std::lock_guard lock(mu_);
    entry->session = std::make_unique<Session>(next_id_++, *entry->transport, model_, std::move(opts));
    Session* s = entry->session.get();
    entry->worker = std::thread([s] { s->run(); });
    sessions_.push_back(std::move(entry));
  }
  listener_->close();
}

void Monitor::status_loop() {
  while (!stop_) {
    std::unique_ptr<TcpStream> conn = status_listener_->accept(std::chrono::milliseconds(100));
    if (!conn) continue;
    try {
      // One connection at a time; each request is answered from a snapshot.
      while (auto line = read_line(*conn, std::chrono::milliseconds(2000))) {
        const std::string reply = handle_status(*line);
        conn->write(as_bytes(reply));
        conn->flush();
      }
      conn->close();
    } catch (const TransportError&) {
    }
  }
  status_listener_->close();
}

std::optional<SessionSummary> Monitor::lookup(std::string_view which) const {
  std::lock_guard lock(mu_);
  if (sessions_.empty()) return std::nullopt;
  if (which == "latest") return sessions_.back()->session->summary();
  std::uint64_t id = 0;
  auto [p, ec] = std::from_chars(which.data(), which.data() + which.size(), id);
  if (ec != std::errc{} || p != which.data() + which.size()) return std::nullopt;
  for (const auto& e : sessions_)
    if (e->session->summary().id == id) return e->session->summary();
  return std::nullopt;
}

std::vector<SessionSummary> Monitor::sessions() const {
  std::lock_guard lock(mu_);
  std::vector<SessionSummary> out;
  for (const auto& e : sessions_) out.push_back(e->session->summary());
  return out;
}

std::string Monitor::handle_status(std::string_view request) const {
  const auto words = split_words(trim(request));
  if (words.empty()) return "ERR bad-request\n";
  std::ostringstream out;
  auto session_line = [&](const SessionSummary& s) {
    out << "SESSION " << s.id << " peer=" << s.peer << " end=" << to_string(s.end)
        << " channel=" << (s.channel_trusted ? "trusted" : "untrusted") << " packets=" << s.packets
        << " actions=" << s.actions << " dummies=" << s.dummies << '\n';
  };

  if (words[0] == "SESSIONS" && words.size() == 1) {
    for (const auto& s : sessions()) session_line(s);
    out << "END\n";
    return out.str();
  }
  if (words[0] == "FIND" && words.size() == 2) {
    std::lock_guard lock(mu_);
    for (auto it = sessions_.rbegin(); it != sessions_.rend(); ++it)
      if ((*it)->target_address == words[1]) return "SESSION " + std::to_string((*it)->session->summary().id) + "\n";
    return "ERR unknown-session\n";
  }
  if (words[0] != "STATUS" || words.size() < 2 || words.size() > 3) return "ERR bad-request\n";

  std::optional<std::uint16_t> tid;
  if (words.size() == 3) {
    std::uint16_t v = 0;
    auto [p, ec] = std::from_chars(words[2].data(), words[2].data() + words[2].size(), v);
    if (ec != std::errc{} || p != words[2].data() + words[2].size()) return "ERR bad-request\n";
    tid = v;
  }
  const auto s = lookup(words[1]);
  if (!s) return "ERR unknown-session\n";
  if (tid) {
    for (const auto& t : s->threads)
      if (t.thread_id == *tid) return status_line(t) + "\nEND\n";
    return "ERR unknown-thread\n";
  }
  session_line(*s);
  if (auto first = s->first_anomaly()) out << verdict_line(*first) << '\n';
  else out << "TRUSTED threads=" << s->threads.size() << '\n';
  for (const auto& t : s->threads) out << "THREAD " << status_line(t) << '\n';
  out << "END\n";
  return out.str();
}

std::vector<std::string> query_status(const Endpoint& ep, const std::string& request,
                                      std::chrono::milliseconds timeout) {
  auto conn = TcpStream::connect(ep, timeout);
  const std::string line = request + "\n";
  conn->write(as_bytes(line));
  conn->flush();
  std::vector<std::string> out;
  while (auto l = read_line(*conn, timeout)) {
    out.push_back(*l);
    const bool single = request.rfind("FIND", 0) == 0;
    if (*l == "END" || l->rfind("ERR", 0) == 0 || single) break;
  }
  conn->close();
  if (out.empty()) throw TransportError("no response from status endpoint");
  return out;
}

}  // namespace encprov
