#pragma once

#include <chrono>
#include <cstdint>
#include <string>

#include "tlsqkd/tls/session.hpp"

namespace tlsqkd::net {

/// Record transport over a connected TCP socket.
class TcpRecordStream final : public tls::RecordTransport {
 public:
  explicit TcpRecordStream(int fd);
  ~TcpRecordStream() override;
  TcpRecordStream(TcpRecordStream&& other) noexcept;
  TcpRecordStream& operator=(TcpRecordStream&&) = delete;

  static TcpRecordStream connect(const std::string& host, std::uint16_t port,
                                 std::chrono::milliseconds timeout = std::chrono::seconds(5));

  void send(const tls::Record& record) override;
  tls::Record receive() override;

 private:
  void read_exact(std::uint8_t* out, std::size_t n);
  int fd_;
};

class TcpListener {
 public:
  /// Port 0 picks an ephemeral port; see port().
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  TcpRecordStream accept(std::chrono::milliseconds timeout = std::chrono::seconds(30));

 private:
  int fd_;
  std::uint16_t port_;
};

}  // namespace tlsqkd::net
