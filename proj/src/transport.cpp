#include "encprov/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <stdexcept>

#include "encprov/errors.hpp"

namespace encprov {

ReadStatus Transport::read_exact(std::span<std::uint8_t> out, Timeout timeout) {
  std::size_t got = 0;
  while (got < out.size()) {
    auto [status, n] = read_some(out.subspan(got), timeout);
    if (status != ReadStatus::Ok) return status;
    got += n;
  }
  return ReadStatus::Ok;
}

std::optional<std::string> read_line(Transport& t, Timeout timeout, std::size_t max_len) {
  std::string line;
  std::uint8_t c = 0;
  while (line.size() < max_len) {
    auto status = t.read_exact(std::span<std::uint8_t>(&c, 1), timeout);
    if (status != ReadStatus::Ok) {
      if (line.empty()) return std::nullopt;
      return line;
    }
    if (c == '\n') return line;
    line += static_cast<char>(c);
  }
  return line;
}

// ---------------------------------------------------------------------------
// In-process pipe

namespace {

struct Lane {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::uint8_t> bytes;
  std::size_t capacity = 0;
  bool closed = false;
  bool broken = false;
};

struct PipeShared {
  Lane lanes[2];
};

class MemoryEnd final : public Transport {
 public:
  MemoryEnd(std::shared_ptr<PipeShared> shared, int side) : shared_(std::move(shared)), side_(side) {}
  ~MemoryEnd() override { close(); }

  void write(std::span<const std::uint8_t> data) override {
    Lane& lane = shared_->lanes[side_];
    std::unique_lock lock(lane.mu);
    for (std::size_t i = 0; i < data.size();) {
      if (lane.broken) throw TransportError("memory pipe broken");
      if (lane.closed) throw TransportError("write after close");
      if (lane.capacity && lane.bytes.size() >= lane.capacity) {
        lane.cv.wait(lock, [&] { return lane.broken || lane.bytes.size() < lane.capacity; });
        continue;
      }
      std::size_t room = lane.capacity ? lane.capacity - lane.bytes.size() : data.size() - i;
      std::size_t n = std::min(room, data.size() - i);
      lane.bytes.insert(lane.bytes.end(), data.begin() + static_cast<std::ptrdiff_t>(i),
                        data.begin() + static_cast<std::ptrdiff_t>(i + n));
      i += n;
      lane.cv.notify_all();
    }
  }

  std::pair<ReadStatus, std::size_t> read_some(std::span<std::uint8_t> out, Timeout timeout) override {
    Lane& lane = shared_->lanes[1 - side_];
    std::unique_lock lock(lane.mu);
    auto ready = [&] { return lane.broken || lane.closed || !lane.bytes.empty(); };
    if (timeout) {
      if (!lane.cv.wait_for(lock, *timeout, ready)) return {ReadStatus::Timeout, 0};
    } else {
      lane.cv.wait(lock, ready);
    }
    if (lane.broken) throw TransportError("memory pipe broken");
    if (lane.bytes.empty()) return {ReadStatus::Eof, 0};
    std::size_t n = std::min(out.size(), lane.bytes.size());
    std::copy_n(lane.bytes.begin(), n, out.begin());
    lane.bytes.erase(lane.bytes.begin(), lane.bytes.begin() + static_cast<std::ptrdiff_t>(n));
    lane.cv.notify_all();
    return {ReadStatus::Ok, n};
  }

  void close() override {
    Lane& lane = shared_->lanes[side_];
    std::lock_guard lock(lane.mu);
    lane.closed = true;
    lane.cv.notify_all();
  }

  void sever() {
    for (Lane& lane : shared_->lanes) {
      std::lock_guard lock(lane.mu);
      lane.broken = true;
      lane.cv.notify_all();
    }
  }

 private:
  std::shared_ptr<PipeShared> shared_;
  int side_;
};

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_memory_pipe(std::size_t capacity) {
  auto shared = std::make_shared<PipeShared>();
  shared->lanes[0].capacity = capacity;
  shared->lanes[1].capacity = capacity;
  return {std::make_unique<MemoryEnd>(shared, 0), std::make_unique<MemoryEnd>(shared, 1)};
}

void break_memory_pipe(Transport& end) {
  auto* m = dynamic_cast<MemoryEnd*>(&end);
  if (!m) throw ContractViolation("break_memory_pipe requires a memory pipe end");
  m->sever();
}

// ---------------------------------------------------------------------------
// TCP

Endpoint parse_endpoint(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) throw std::invalid_argument("expected host:port");
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  auto port = text.substr(colon + 1);
  unsigned value = 0;
  auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (ec != std::errc{} || p != port.data() + port.size() || value > 65535)
    throw std::invalid_argument("bad port in '" + std::string(text) + "'");
  ep.port = static_cast<std::uint16_t>(value);
  return ep;
}

namespace {

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  std::string host = ep.host == "localhost" ? "127.0.0.1" : ep.host;
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
    throw TransportError("cannot resolve host " + ep.host);
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

std::string name_of(const sockaddr_in& addr) {
  char buf[INET_ADDRSTRLEN] = {};
  inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
  return std::string(buf) + ":" + std::to_string(ntohs(addr.sin_port));
}

std::string sys_error(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

int poll_one(int fd, short events, Timeout timeout) {
  pollfd p{fd, events, 0};
  const int ms = timeout ? static_cast<int>(timeout->count()) : -1;
  for (;;) {
    int r = ::poll(&p, 1, ms);
    if (r >= 0) return r;
    if (errno != EINTR) throw TransportError(sys_error("poll"));
  }
}

constexpr std::size_t kOutBufferBytes = 64 * 1024;

}  // namespace

std::unique_ptr<TcpStream> TcpStream::connect(const Endpoint& ep, std::chrono::milliseconds timeout) {
  const sockaddr_in addr = resolve(ep);
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw TransportError(sys_error("socket"));
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
  int r = ::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr);
  if (r < 0 && errno != EINPROGRESS) {
    ::close(fd);
    throw TransportError(sys_error("connect"));
  }
  if (r < 0) {
    if (poll_one(fd, POLLOUT, timeout) == 0) {
      ::close(fd);
      throw TransportError("connect to " + ep.host + ":" + std::to_string(ep.port) + " timed out");
    }
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      ::close(fd);
      errno = err;
      throw TransportError(sys_error("connect"));
    }
  }
  ::fcntl(fd, F_SETFL, flags);
  return std::make_unique<TcpStream>(fd);
}

TcpStream::TcpStream(int fd) : fd_(fd) {
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  out_.reserve(kOutBufferBytes);
}

TcpStream::~TcpStream() {
  try {
    flush();
  } catch (const TransportError&) {
  }
  ::close(fd_);
}

void TcpStream::write(std::span<const std::uint8_t> data) {
  if (write_closed_) throw TransportError("write after close");
  out_.insert(out_.end(), data.begin(), data.end());
  if (out_.size() >= kOutBufferBytes) flush();
}

void TcpStream::flush() {
  std::size_t sent = 0;
  while (sent < out_.size()) {
    ssize_t n = ::send(fd_, out_.data() + sent, out_.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      out_.clear();
      throw TransportError(sys_error("send"));
    }
    sent += static_cast<std::size_t>(n);
  }
  out_.clear();
}

std::pair<ReadStatus, std::size_t> TcpStream::read_some(std::span<std::uint8_t> out, Timeout timeout) {
  if (poll_one(fd_, POLLIN, timeout) == 0) return {ReadStatus::Timeout, 0};
  for (;;) {
    ssize_t n = ::recv(fd_, out.data(), out.size(), 0);
    if (n > 0) return {ReadStatus::Ok, static_cast<std::size_t>(n)};
    if (n == 0) return {ReadStatus::Eof, 0};
    if (errno == EINTR) continue;
    if (errno == ECONNRESET) return {ReadStatus::Eof, 0};
    throw TransportError(sys_error("recv"));
  }
}

void TcpStream::close() {
  if (write_closed_) return;
  flush();
  ::shutdown(fd_, SHUT_WR);
  write_closed_ = true;
}

std::string TcpStream::peer_name() const {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getpeername(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) return "unknown";
  return name_of(addr);
}

std::string TcpStream::local_name() const {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) return "unknown";
  return name_of(addr);
}

TcpListener::TcpListener(const Endpoint& ep) {
  const sockaddr_in addr = resolve(ep);
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw TransportError(sys_error("socket"));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const auto msg = sys_error("bind");
    ::close(fd_);
    throw TransportError(msg);
  }
  if (::listen(fd_, 64) != 0) {
    const auto msg = sys_error("listen");
    ::close(fd_);
    throw TransportError(msg);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() { close(); }

std::unique_ptr<TcpStream> TcpListener::accept(std::chrono::milliseconds timeout) {
  if (fd_ < 0) return nullptr;
  if (poll_one(fd_, POLLIN, timeout) == 0) return nullptr;
  int c = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (c < 0) {
    if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) return nullptr;
    throw TransportError(sys_error("accept"));
  }
  return std::make_unique<TcpStream>(c);
}

void TcpListener::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

}  // namespace encprov
