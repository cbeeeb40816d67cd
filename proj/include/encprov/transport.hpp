#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace encprov {

enum class ReadStatus { Ok, Eof, Timeout };

using Timeout = std::optional<std::chrono::milliseconds>;

/// Ordered, reliable byte stream between the target and the monitor.
class Transport {
 public:
  virtual ~Transport() = default;

  /// Queues bytes for delivery; implementations may buffer until flush().
  /// Throws TransportError when the stream is broken.
  virtual void write(std::span<const std::uint8_t> data) = 0;
  virtual void flush() {}

  /// Reads at least one byte (up to out.size()). Returns the byte count, or
  /// Eof/Timeout with count 0. `timeout` bounds inactivity.
  virtual std::pair<ReadStatus, std::size_t> read_some(std::span<std::uint8_t> out, Timeout timeout) = 0;

  /// Signals end of stream to the peer after flushing pending bytes.
  virtual void close() = 0;

  /// Fills `out` completely. Eof mid-buffer is reported as Eof.
  ReadStatus read_exact(std::span<std::uint8_t> out, Timeout timeout);

  virtual std::string peer_name() const { return "local"; }
  virtual std::string local_name() const { return "local"; }
};

/// Creates a connected in-process pair. Writes on one end are read on the
/// other; `capacity` (bytes, 0 = unbounded) makes writers block when full.
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_memory_pipe(std::size_t capacity = 0);

/// Simulates a severed link: every subsequent write or read on either end of
/// the pipe fails with TransportError.
void break_memory_pipe(Transport& end);

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

/// Parses "host:port". Throws std::invalid_argument.
Endpoint parse_endpoint(std::string_view text);

/// Blocking TCP stream with an outbound buffer (flushed when full or on
/// flush()/close()).
class TcpStream final : public Transport {
 public:
  static std::unique_ptr<TcpStream> connect(const Endpoint& ep, std::chrono::milliseconds timeout);
  explicit TcpStream(int fd);
  ~TcpStream() override;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  void write(std::span<const std::uint8_t> data) override;
  void flush() override;
  std::pair<ReadStatus, std::size_t> read_some(std::span<std::uint8_t> out, Timeout timeout) override;
  void close() override;

  std::string peer_name() const override;
  std::string local_name() const override;

 private:
  int fd_;
  bool write_closed_ = false;
  std::vector<std::uint8_t> out_;
};

class TcpListener {
 public:
  /// Binds and listens; port 0 picks an ephemeral port. Throws TransportError.
  explicit TcpListener(const Endpoint& ep);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  /// Returns nullptr on timeout or after close().
  std::unique_ptr<TcpStream> accept(std::chrono::milliseconds timeout);
  void close();

 private:
  int fd_;
  std::uint16_t port_ = 0;
};

/// Reads one '\n'-terminated line (without the terminator). Returns nullopt
/// on EOF before any byte or on timeout.
std::optional<std::string> read_line(Transport& t, Timeout timeout, std::size_t max_len = 4096);

}  // namespace encprov
