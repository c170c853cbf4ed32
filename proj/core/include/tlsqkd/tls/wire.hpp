#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "tlsqkd/common/bytes.hpp"
#include "tlsqkd/common/ids.hpp"
#include "tlsqkd/crypto/crypto.hpp"

namespace tlsqkd::tls {

inline constexpr std::uint16_t kVersionQkd = 0x0E00;
inline constexpr std::uint16_t kVersionClassical = 0x0304;

inline constexpr std::uint16_t kExtQkdHello = 0xFEA6;
inline constexpr std::uint16_t kExtQkdChallenge = 0xFEA7;
inline constexpr std::uint16_t kExtKeyShare = 0x0033;

inline constexpr std::size_t kQkdHelloBodySize = 36;
inline constexpr std::size_t kChallengePlaintextSize = 64;
inline constexpr std::size_t kChallengeCiphertextSize = kChallengePlaintextSize + crypto::kTagSize;

inline constexpr std::size_t kRecordHeaderSize = 5;
inline constexpr std::size_t kMaxFragment = 16384;
inline constexpr std::size_t kMaxRecordBody = kMaxFragment + 256;

enum class ContentType : std::uint8_t {
  Alert = 0x15,
  Handshake = 0x16,
  ApplicationData = 0x17,
  ChallengeAck = 0x50,
};

enum class HandshakeType : std::uint8_t {
  ClientHello = 1,
  ServerHello = 2,
  CertificateVerify = 15,
  Finished = 20,
};

/// `type ‖ version ‖ u16 length ‖ body`.
struct Record {
  ContentType type = ContentType::Handshake;
  std::uint16_t version = kVersionQkd;
  Bytes body;

  bool operator==(const Record&) const = default;
};

std::array<std::uint8_t, kRecordHeaderSize> record_header(ContentType type, std::uint16_t version,
                                                          std::size_t length);
Bytes encode_record(const Record& record);
/// Exactly one record; trailing bytes or a short body raise DecodeError.
Record decode_record(ByteView wire);
/// Pops one complete record off the front of `buffer` if present.
std::optional<Record> take_record(Bytes& buffer);

class MalformedExtension : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

struct Extension {
  std::uint16_t type = 0;
  Bytes body;
  bool operator==(const Extension&) const = default;
};

/// Body of extension 0xFEA6: `u64 sae id ‖ 16-byte uuid ‖ 12-byte iv`.
struct QkdHelloExtension {
  SaeId client_sae_id;
  Uuid key_uuid;
  crypto::Nonce iv{};

  Bytes encode() const;
  static QkdHelloExtension decode(ByteView body);
  bool operator==(const QkdHelloExtension&) const = default;
};

/// ClientHello / ServerHello:
/// `u8 type ‖ u24 len ‖ u16 version ‖ random[32] ‖ u16 ext_len ‖ extensions`.
struct Hello {
  HandshakeType type = HandshakeType::ClientHello;
  std::uint16_t version = kVersionQkd;
  std::array<std::uint8_t, 32> random{};
  std::vector<Extension> extensions;

  const Extension* find(std::uint16_t ext_type) const;
  bool operator==(const Hello&) const = default;
};

/// Handshake message framing `u8 type ‖ u24 length ‖ body`.
Bytes encode_handshake_message(HandshakeType type, ByteView body);
struct HandshakeMessage {
  HandshakeType type;
  Bytes body;
  Bytes raw;  // framed bytes, for transcripts
};
/// Splits a handshake record body into its messages.
std::vector<HandshakeMessage> split_handshake_messages(ByteView record_body);

Bytes encode_hello(const Hello& hello);
/// Parses one framed hello message. Duplicate extensions are a DecodeError.
Hello decode_hello(ByteView framed);

/// ClientHello flight for TLS-QKD. `key_share` adds a classical X25519 share
/// so a classical server can still answer.
Record encode_client_hello(SaeId client_sae_id, const Uuid& key_uuid, const crypto::Nonce& iv,
                           const std::array<std::uint8_t, 32>& random,
                           const std::optional<std::array<std::uint8_t, 32>>& key_share = {});

struct ClientHelloInfo {
  Hello hello;
  Bytes raw;  // framed hello, for the classical transcript
  std::optional<QkdHelloExtension> qkd;  // empty: classical client
  std::optional<std::array<std::uint8_t, 32>> key_share;

  bool is_qkd() const { return qkd.has_value(); }
};

/// Throws MalformedExtension when 0xFEA6 is present but not 36 bytes, and
/// DecodeError for any other framing fault.
ClientHelloInfo decode_client_hello(const Record& record);

/// ServerHello flight carrying the 80-byte challenge in 0xFEA7.
Record encode_qkd_server_hello(const std::array<std::uint8_t, 32>& random,
                               ByteView challenge_ciphertext);

/// Record 0x50 with the 80-byte answer.
Record encode_challenge_ack(ByteView ciphertext);

enum class AlertLevel : std::uint8_t { Warning = 1, Fatal = 2 };

Record encode_alert(std::uint8_t description, std::uint16_t version);
/// Returns the description byte. DecodeError unless the body is 2 bytes.
std::uint8_t decode_alert(const Record& record);

}  // namespace tlsqkd::tls
