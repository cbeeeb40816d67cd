#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "encprov/channel.hpp"
#include "encprov/model.hpp"
#include "encprov/transport.hpp"
#include "encprov/verifier.hpp"

namespace encprov {

struct MonitorConfig {
  std::string listen = "127.0.0.1:7700";
  std::string status_listen = "127.0.0.1:7701";
  std::string model_path;
  std::string mac_key_path;
  std::chrono::milliseconds timeout = kDefaultChannelTimeout;
  /// In packet batches; one batch is whatever a single transport read returned.
  std::size_t queue_capacity = 64;
  /// Advertised to targets; the monitor discards dummies whatever their rate.
  DummyConfig dummies;
  /// Anomaly log file; empty logs to stderr.
  std::string log_path;
  /// Keep reading (and counting) a session's packets after it turned untrusted.
  bool keep_reading_untrusted = true;

  /// Throws ContractViolation when capacity is 0 or the timeout is not positive.
  void validate() const;
};

/// key=value lines, `#` comments. Unknown keys and bad values throw
/// ContractViolation. Keys not present keep their defaults.
MonitorConfig parse_monitor_config(std::string_view text, MonitorConfig base = {});

/// FIFO with a fixed capacity: push blocks while full (backpressure reaches
/// the transport reader), pop blocks while empty. close() wakes everyone;
/// pop then drains what is left before returning nullopt.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  /// Returns false if the queue was closed.
  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

 private:
  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct SessionOptions {
  std::chrono::milliseconds timeout = kDefaultChannelTimeout;
  std::size_t queue_capacity = 64;
  bool keep_reading_untrusted = true;
  /// Receives one line per anomaly and per session end; may be empty.
  std::function<void(const std::string&)> log;
  /// Set by the owner to end the session early; checked between reads.
  const std::atomic<bool>* stop = nullptr;
};

enum class SessionEnd : std::uint8_t { Running, Closed, Timeout, HandshakeFailed, TransportFailed, Stopped };

std::string_view to_string(SessionEnd e);

struct SessionSummary {
  std::uint64_t id = 0;
  std::string peer;
  SessionEnd end = SessionEnd::Running;
  bool channel_trusted = true;
  std::uint64_t packets = 0;
  std::uint64_t actions = 0;
  std::uint64_t dummies = 0;
  /// Packets received after the channel turned untrusted (read, not verified).
  std::uint64_t ignored = 0;
  std::vector<ThreadSnapshot> threads;
  /// Every anomaly in detection order, including channel-level ones that no
  /// thread could be charged with (thread id 0).
  std::vector<AnomalyReport> anomalies;
  std::chrono::system_clock::time_point started, ended;

  bool trusted() const { return channel_trusted && anomalies.empty(); }
  std::optional<AnomalyReport> first_anomaly() const {
    return anomalies.empty() ? std::nullopt : std::optional(anomalies.front());
  }
};

/// One target connection: a reader thread feeding a bounded queue and a
/// consumer that authenticates packets and drives the verifier.
class Session {
 public:
  Session(std::uint64_t id, Transport& transport, const EnclaveModel& model, SessionOptions opts);
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Handshake, then ingest until end of stream, inactivity timeout or stop.
  void run();

  SessionSummary summary() const;
  bool finished() const;

 private:
  struct Batch {
    std::vector<std::uint8_t> bytes;
    SessionEnd end = SessionEnd::Running;
  };

  void read_loop();
  void consume(ChannelState& ch, const Batch& b);
  void record(const AnomalyReport& r);
  void record_all(const std::vector<AnomalyReport>& rs);
  void channel_failure(AnomalyClass cls);

  const std::uint64_t id_;
  Transport& transport_;
  SessionOptions opts_;
  Verifier verifier_;
  BoundedQueue<Batch> queue_;

  mutable std::mutex mu_;
  SessionSummary s_;
};

/// Runs one session on the calling thread and returns its final summary.
SessionSummary run_session(Transport& t, const EnclaveModel& model, SessionOptions opts = {});

/// `TRUSTED ...` or `UNTRUSTED <class> src=.. expected={..} ...` for one thread.
std::string status_line(const ThreadSnapshot& t);
/// `UNTRUSTED <class> src=.. expected={..} thread=.. ...` for one report.
std::string verdict_line(const AnomalyReport& r);

/// TCP monitor: accepts target sessions and serves the status protocol.
///
///   STATUS <session|latest> [thread]  ->  verdict lines, then END
///   FIND <host:port>                  ->  SESSION <id>   (target's local address)
///   SESSIONS                          ->  one SESSION line each, then END
///
/// Errors are single lines: `ERR bad-request`, `ERR unknown-session`,
/// `ERR unknown-thread`.
class Monitor {
 public:
  /// The model must already be MAC-verified.
  Monitor(MonitorConfig cfg, EnclaveModel model);
  ~Monitor();
  Monitor(const Monitor&) = delete;
  Monitor& operator=(const Monitor&) = delete;

  /// Binds both listeners and starts serving. Throws TransportError on bind failure.
  void start();
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

  std::uint16_t port() const;
  std::uint16_t status_port() const;

  std::string handle_status(std::string_view request) const;
  std::vector<SessionSummary> sessions() const;

 private:
  struct Entry;

  void accept_loop();
  void status_loop();
  std::optional<SessionSummary> lookup(std::string_view which) const;

  MonitorConfig cfg_;
  EnclaveModel model_;
  std::unique_ptr<TcpListener> listener_, status_listener_;
  std::atomic<bool> stop_{false};
  std::thread accept_thread_, status_thread_;
  mutable std::mutex mu_;
  std::condition_variable stopped_cv_;
  std::vector<std::unique_ptr<Entry>> sessions_;
  std::uint64_t next_id_ = 1;
  std::unique_ptr<std::ostream> log_file_;
  std::mutex log_mu_;
};

/// Client side of the status protocol: sends one request and returns the
/// response lines (up to END or a single ERR line). Throws TransportError.
std::vector<std::string> query_status(const Endpoint& ep, const std::string& request,
                                      std::chrono::milliseconds timeout = std::chrono::milliseconds(3000));

}  // namespace encprov
