#pragma once

#include <cstdint>
#include <stdexcept>

#include "tlsqkd/tls/challenge.hpp"
#include "tlsqkd/tls/wire.hpp"

namespace tlsqkd::tls {

class RecordAuthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrafficKeys {
  crypto::Key256 key{};
  crypto::Nonce base_iv{};
  Direction direction = Direction::MasterToSlave;
};

/// AES-256-GCM record layer. The associated data is the record header
/// (type ‖ version ‖ ciphertext length); each direction keeps its own
/// sequence counter.
class RecordProtection {
 public:
  RecordProtection(TrafficKeys send, TrafficKeys receive, std::uint16_t version,
                   std::uint64_t first_seq, SealObserver observer = {});
  ~RecordProtection();
  RecordProtection(const RecordProtection&) = delete;
  RecordProtection& operator=(const RecordProtection&) = delete;

  /// Throws std::length_error above kMaxFragment, RecordAuthError on
  /// counter exhaustion.
  Record protect(ByteView plaintext);
  /// Throws RecordAuthError on any authentication or framing fault.
  Bytes unprotect(const Record& record);

  std::uint16_t version() const { return version_; }
  std::uint64_t send_seq() const { return send_seq_; }
  std::uint64_t recv_seq() const { return recv_seq_; }

 private:
  TrafficKeys send_;
  TrafficKeys recv_;
  std::uint16_t version_;
  std::uint64_t send_seq_;
  std::uint64_t recv_seq_;
  SealObserver observer_;
};

}  // namespace tlsqkd::tls
