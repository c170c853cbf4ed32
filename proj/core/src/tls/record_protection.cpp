#include "tlsqkd/tls/record_protection.hpp"

#include <limits>

namespace tlsqkd::tls {

RecordProtection::RecordProtection(TrafficKeys send, TrafficKeys receive, std::uint16_t version,
                                   std::uint64_t first_seq, SealObserver observer)
    : send_(send),
      recv_(receive),
      version_(version),
      send_seq_(first_seq),
      recv_seq_(first_seq),
      observer_(std::move(observer)) {}

RecordProtection::~RecordProtection() {
  crypto::secure_zero(send_.key);
  crypto::secure_zero(recv_.key);
}

Record RecordProtection::protect(ByteView plaintext) {
  if (plaintext.size() > kMaxFragment) throw std::length_error("record fragment too large");
  if (send_seq_ == std::numeric_limits<std::uint64_t>::max()) {
    throw RecordAuthError("send sequence number exhausted");
  }
  auto nonce = derive_nonce(send_.base_iv, send_.direction, send_seq_++);
  auto header =
      record_header(ContentType::ApplicationData, version_, plaintext.size() + crypto::kTagSize);
  if (observer_) observer_(send_.key, nonce);
  return Record{ContentType::ApplicationData, version_,
                crypto::aead_seal(send_.key, nonce, header, plaintext)};
}

Bytes RecordProtection::unprotect(const Record& record) {
  if (record.type != ContentType::ApplicationData) throw RecordAuthError("not an application record");
  if (record.version != version_) throw RecordAuthError("record version mismatch");
  if (recv_seq_ == std::numeric_limits<std::uint64_t>::max()) {
    throw RecordAuthError("receive sequence number exhausted");
  }
  auto nonce = derive_nonce(recv_.base_iv, recv_.direction, recv_seq_);
  auto header = record_header(record.type, record.version, record.body.size());
  auto opened = crypto::aead_open(recv_.key, nonce, header, record.body);
  if (!opened) throw RecordAuthError("record does not authenticate");
  ++recv_seq_;
  return std::move(*opened);
}

}  // namespace tlsqkd::tls
