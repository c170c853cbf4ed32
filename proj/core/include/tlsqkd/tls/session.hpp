#pragma once

#include <cstddef>

#include "tlsqkd/tls/handshake.hpp"

namespace tlsqkd::tls {

/// Ordered, reliable record carrier (a TCP stream or a simulated link).
class RecordTransport {
 public:
  virtual ~RecordTransport() = default;
  /// Both throw TransportError when the carrier fails.
  virtual void send(const Record& record) = 0;
  virtual Record receive() = 0;
};

/// Drive the endpoint until it is ESTABLISHED or FAILED. Returns established().
bool run_master_handshake(MasterHandshake& master, RecordTransport& transport);
bool run_slave_handshake(SlaveHandshake& slave, RecordTransport& transport);

/// Byte-stream view over an established endpoint.
class SecureChannel {
 public:
  SecureChannel(Endpoint& endpoint, RecordTransport& transport);

  /// Splits into records of at most kMaxFragment bytes.
  void write(ByteView data);
  /// Blocks until `n` bytes arrived. Throws RecordAuthError if the endpoint
  /// fails on an incoming record.
  Bytes read(std::size_t n);

  std::size_t records_sent() const { return records_sent_; }
  std::size_t records_received() const { return records_received_; }

 private:
  Endpoint& endpoint_;
  RecordTransport& transport_;
  Bytes pending_;
  std::size_t records_sent_ = 0;
  std::size_t records_received_ = 0;
};

/// Master: writes `payload` one record at a time and reads each echo back
/// before sending the next. Returns the reassembled echo.
Bytes echo_exchange(SecureChannel& channel, ByteView payload);
/// Slave: echoes records until `total` bytes were returned.
void echo_serve(SecureChannel& channel, std::size_t total);

}  // namespace tlsqkd::tls
