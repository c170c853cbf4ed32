#include "tlsqkd/net/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "tlsqkd/sae/kme_client.hpp"

namespace tlsqkd::net {

namespace {

[[noreturn]] void throw_errno(const std::string& what) {
  throw TransportError(what + ": " + std::strerror(errno));
}

void set_timeouts(int fd, std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

TcpRecordStream::TcpRecordStream(int fd) : fd_(fd) {}

TcpRecordStream::~TcpRecordStream() {
  if (fd_ >= 0) ::close(fd_);
}

TcpRecordStream::TcpRecordStream(TcpRecordStream&& other) noexcept : fd_(other.fd_) {
  other.fd_ = -1;
}

TcpRecordStream TcpRecordStream::connect(const std::string& host, std::uint16_t port,
                                         std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  auto service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw TransportError("resolve " + host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    set_timeouts(fd, timeout);
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw_errno("connect " + host + ":" + service);
  return TcpRecordStream(fd);
}

void TcpRecordStream::send(const tls::Record& record) {
  auto wire = encode_record(record);
  std::size_t off = 0;
  while (off < wire.size()) {
    auto n = ::send(fd_, wire.data() + off, wire.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("send");
    }
    off += static_cast<std::size_t>(n);
  }
}

void TcpRecordStream::read_exact(std::uint8_t* out, std::size_t n) {
  while (n > 0) {
    auto got = ::recv(fd_, out, n, 0);
    if (got == 0) throw TransportError("connection closed by peer");
    if (got < 0) {
      if (errno == EINTR) continue;
      throw_errno("recv");
    }
    out += got;
    n -= static_cast<std::size_t>(got);
  }
}

tls::Record TcpRecordStream::receive() {
  Bytes wire(tls::kRecordHeaderSize);
  read_exact(wire.data(), wire.size());
  std::size_t len = (std::size_t{wire[3]} << 8) | wire[4];
  if (len > tls::kMaxRecordBody) throw TransportError("oversized record");
  wire.resize(tls::kRecordHeaderSize + len);
  read_exact(wire.data() + tls::kRecordHeaderSize, len);
  try {
    return tls::decode_record(wire);
  } catch (const DecodeError& e) {
    throw TransportError(std::string("bad record: ") + e.what());
  }
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw_errno("socket");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw TransportError("invalid listen address " + host);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 16) != 0) {
    int saved = errno;
    ::close(fd_);
    errno = saved;
    throw_errno("listen " + host + ":" + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { ::close(fd_); }

TcpRecordStream TcpListener::accept(std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (rc == 0) throw TransportError("accept timed out");
  if (rc < 0) throw_errno("poll");
  int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw_errno("accept");
  set_timeouts(fd, std::chrono::seconds(30));
  return TcpRecordStream(fd);
}

}  // namespace tlsqkd::net
