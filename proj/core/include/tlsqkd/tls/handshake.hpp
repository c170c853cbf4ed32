#pragma once

#include <array>
#include <deque>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "tlsqkd/sae/kme_client.hpp"
#include "tlsqkd/tls/challenge.hpp"
#include "tlsqkd/tls/record_protection.hpp"
#include "tlsqkd/tls/wire.hpp"

namespace tlsqkd::tls {

enum class Role { Master, Slave };

enum class Phase {
  Start,
  HelloSent,
  ChallengeSent,
  AckWait,
  Established,
  FallbackClassical,
  Failed,
};

enum class Mode { None, TlsQkd, Classical };

enum class Failure {
  None,
  DecodeError,
  MalformedExtension,
  UnexpectedMessage,
  WrongQuantumKey,
  BadAuth,
  TokenMismatch,
  SeedReplayed,
  KeyUnavailable,
  KeyPoolExhausted,
  KmeUnavailable,
  DowngradeRefused,
  ProtocolVersion,
  ClassicalAuthFailed,
  PeerAlert,
  RecordAuthFailure,
  TransportError,
  InternalError,
};

std::string_view to_string(Role r);
std::string_view to_string(Phase p);
std::string_view to_string(Mode m);
std::string_view to_string(Failure f);

namespace alert {
inline constexpr std::uint8_t kUnexpectedMessage = 10;
inline constexpr std::uint8_t kBadRecordMac = 20;
inline constexpr std::uint8_t kHandshakeFailure = 40;
inline constexpr std::uint8_t kDecodeError = 50;
inline constexpr std::uint8_t kDecryptError = 51;
inline constexpr std::uint8_t kProtocolVersion = 70;
inline constexpr std::uint8_t kInsufficientSecurity = 71;
inline constexpr std::uint8_t kInternalError = 80;
// Private-use range for the TLS-QKD rejection reasons.
inline constexpr std::uint8_t kQkdBadAuth = 0xE1;
inline constexpr std::uint8_t kQkdTokenMismatch = 0xE2;
inline constexpr std::uint8_t kQkdSeedReplayed = 0xE3;
inline constexpr std::uint8_t kQkdKeyUnavailable = 0xE4;
inline constexpr std::uint8_t kQkdWrongQuantumKey = 0xE5;
}  // namespace alert

/// Alert description sent when failing with `f`.
std::uint8_t alert_for(Failure f);

struct HandshakeConfig {
  /// Offer (master) or accept (slave) TLS-QKD.
  bool qkd_enabled = true;
  /// Refuse to fall back to the classical handshake.
  bool qkd_only = false;
  /// Classical server signing key; generated on demand when absent.
  std::optional<crypto::Ed25519KeyPair> server_identity;
  /// Classical client: expected server signing key. Absent means any key.
  std::optional<std::array<std::uint8_t, 32>> pinned_server_key;
  SealObserver seal_observer;
};

/// Event-driven handshake endpoint. Feed it records with on_record() and
/// send whatever it returns. After ESTABLISHED the same object protects and
/// opens application records.
class Endpoint {
 public:
  virtual ~Endpoint();
  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  std::vector<Record> on_record(const Record& record);
  /// The carrier broke; moves to FAILED with TransportError.
  void on_transport_error();

  Role role() const { return role_; }
  Phase phase() const { return phase_; }
  Mode mode() const { return mode_; }
  Failure failure() const { return failure_; }
  std::optional<std::uint8_t> peer_alert() const { return peer_alert_; }
  bool established() const { return phase_ == Phase::Established; }
  bool failed() const { return phase_ == Phase::Failed; }
  const std::vector<Phase>& phase_history() const { return history_; }

  /// Present from key retrieval until FAILED, where it is wiped.
  const std::optional<crypto::Key256>& quantum_key() const { return quantum_key_; }
  /// Public-key operations performed so far (keygen, agreement, sign, verify).
  int asymmetric_ops() const { return asymmetric_ops_; }

  /// Application data. Throws std::logic_error before ESTABLISHED.
  Record seal(ByteView plaintext);
  /// Plaintexts of application records received after ESTABLISHED.
  std::deque<Bytes>& inbox() { return inbox_; }

 protected:
  Endpoint(Role role, HandshakeConfig config, crypto::RandomSource& rng);

  virtual std::vector<Record> handle(const Record& record) = 0;

  std::vector<Record> fail(Failure f, bool send_alert = true);
  void set_phase(Phase p);
  void establish(Mode mode, std::unique_ptr<RecordProtection> protection);
  std::uint16_t wire_version() const { return qkd_attempted_ ? kVersionQkd : kVersionClassical; }

  HandshakeConfig config_;
  crypto::RandomSource& rng_;
  std::optional<crypto::Key256> quantum_key_;
  bool qkd_attempted_ = false;
  int asymmetric_ops_ = 0;

 private:
  std::vector<Record> handle_established(const Record& record);

  Role role_;
  Phase phase_ = Phase::Start;
  Mode mode_ = Mode::None;
  Failure failure_ = Failure::None;
  std::optional<std::uint8_t> peer_alert_;
  std::vector<Phase> history_{Phase::Start};
  std::unique_ptr<RecordProtection> protection_;
  std::deque<Bytes> inbox_;
};

/// TLS client, the initiating ("master") SAE.
class MasterHandshake final : public Endpoint {
 public:
  /// `kme` may be null only when `config.qkd_enabled` is false.
  MasterHandshake(KmeSession* kme, SaeId slave, HandshakeConfig config, crypto::RandomSource& rng);

  /// Obtains the quantum key from the local KME and emits the ClientHello.
  /// KME failures leave the endpoint FAILED with nothing to send.
  std::vector<Record> start();

 private:
  std::vector<Record> handle(const Record& record) override;
  std::vector<Record> on_server_flight(const Record& record);
  std::vector<Record> finish_classical(const std::vector<HandshakeMessage>& msgs);

  KmeSession* kme_;
  SaeId slave_;
  crypto::Nonce base_iv_{};
  std::optional<crypto::X25519KeyPair> share_;
  Bytes client_hello_raw_;
};

/// TLS server, the responding ("slave") SAE.
class SlaveHandshake final : public Endpoint {
 public:
  SlaveHandshake(KmeSession* kme, HandshakeConfig config, crypto::RandomSource& rng);

 private:
  std::vector<Record> handle(const Record& record) override;
  std::vector<Record> on_client_hello(const Record& record);
  std::vector<Record> answer_classical(const ClientHelloInfo& hello);
  std::vector<Record> on_challenge_ack(const Record& record);
  std::vector<Record> on_client_finished(const Record& record);

  KmeSession* kme_;
  crypto::Nonce base_iv_{};
  std::optional<ChallengePayload> kept_;
  Bytes transcript_;
  std::array<std::uint8_t, 32> client_finished_key_{};
  std::unique_ptr<RecordProtection> pending_;
};

}  // namespace tlsqkd::tls
