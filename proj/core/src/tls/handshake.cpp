#include "tlsqkd/tls/handshake.hpp"

#include <openssl/crypto.h>

#include <stdexcept>

namespace tlsqkd::tls {

std::string_view to_string(Role r) { return r == Role::Master ? "master" : "slave"; }

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Start: return "START";
    case Phase::HelloSent: return "HELLO_SENT";
    case Phase::ChallengeSent: return "CHALLENGE_SENT";
    case Phase::AckWait: return "ACK_WAIT";
    case Phase::Established: return "ESTABLISHED";
    case Phase::FallbackClassical: return "FALLBACK_CLASSICAL";
    case Phase::Failed: return "FAILED";
  }
  return "?";
}

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::None: return "none";
    case Mode::TlsQkd: return "TLS-QKD";
    case Mode::Classical: return "classical";
  }
  return "?";
}

std::string_view to_string(Failure f) {
  switch (f) {
    case Failure::None: return "None";
    case Failure::DecodeError: return "DecodeError";
    case Failure::MalformedExtension: return "MalformedExtension";
    case Failure::UnexpectedMessage: return "UnexpectedMessage";
    case Failure::WrongQuantumKey: return "WrongQuantumKey";
    case Failure::BadAuth: return "BadAuth";
    case Failure::TokenMismatch: return "TokenMismatch";
    case Failure::SeedReplayed: return "SeedReplayed";
    case Failure::KeyUnavailable: return "KeyUnavailable";
    case Failure::KeyPoolExhausted: return "KeyPoolExhausted";
    case Failure::KmeUnavailable: return "KmeUnavailable";
    case Failure::DowngradeRefused: return "DowngradeRefused";
    case Failure::ProtocolVersion: return "ProtocolVersion";
    case Failure::ClassicalAuthFailed: return "ClassicalAuthFailed";
    case Failure::PeerAlert: return "PeerAlert";
    case Failure::RecordAuthFailure: return "RecordAuthFailure";
    case Failure::TransportError: return "TransportError";
    case Failure::InternalError: return "InternalError";
  }
  return "?";
}

std::uint8_t alert_for(Failure f) {
  switch (f) {
    case Failure::DecodeError:
    case Failure::MalformedExtension: return alert::kDecodeError;
    case Failure::UnexpectedMessage: return alert::kUnexpectedMessage;
    case Failure::WrongQuantumKey: return alert::kQkdWrongQuantumKey;
    case Failure::BadAuth: return alert::kQkdBadAuth;
    case Failure::TokenMismatch: return alert::kQkdTokenMismatch;
    case Failure::SeedReplayed: return alert::kQkdSeedReplayed;
    case Failure::KeyUnavailable: return alert::kQkdKeyUnavailable;
    case Failure::DowngradeRefused: return alert::kInsufficientSecurity;
    case Failure::ProtocolVersion: return alert::kProtocolVersion;
    case Failure::ClassicalAuthFailed: return alert::kDecryptError;
    case Failure::RecordAuthFailure: return alert::kBadRecordMac;
    default: return alert::kInternalError;
  }
}

namespace {

constexpr std::string_view kSignatureContext = "tlsqkd classical server signature";
constexpr std::string_view kKeyScheduleLabel = "tlsqkd classical key schedule";

struct ClassicalSecrets {
  crypto::Key256 client_key{};
  crypto::Key256 server_key{};
  crypto::Nonce client_iv{};
  crypto::Nonce server_iv{};
  std::array<std::uint8_t, 32> server_finished_key{};
  std::array<std::uint8_t, 32> client_finished_key{};
};

ClassicalSecrets derive_classical(const std::array<std::uint8_t, 32>& shared,
                                  ByteView transcript) {
  auto salt = crypto::sha256(transcript);
  Bytes okm = crypto::hkdf_sha256(shared, salt, as_bytes(kKeyScheduleLabel), 32 * 4 + 12 * 2);
  ClassicalSecrets s;
  auto it = okm.begin();
  auto take = [&](auto& dst) {
    std::copy_n(it, dst.size(), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  take(s.client_key);
  take(s.server_key);
  take(s.client_iv);
  take(s.server_iv);
  take(s.server_finished_key);
  take(s.client_finished_key);
  crypto::secure_zero(okm);
  return s;
}

Bytes signature_input(ByteView ch_sh) {
  Bytes m(kSignatureContext.begin(), kSignatureContext.end());
  auto h = crypto::sha256(ch_sh);
  m.insert(m.end(), h.begin(), h.end());
  return m;
}

Bytes concat(std::initializer_list<ByteView> parts) {
  Bytes out;
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

bool equal_ct(ByteView a, ByteView b) {
  return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

Failure failure_for(SaeClientErrc code, Role role) {
  if (role == Role::Master) {
    return code == SaeClientErrc::PoolExhausted ? Failure::KeyPoolExhausted : Failure::KmeUnavailable;
  }
  switch (code) {
    case SaeClientErrc::NotFound:
    case SaeClientErrc::Unauthorized:
    case SaeClientErrc::AlreadyConsumed: return Failure::KeyUnavailable;
    default: return Failure::KmeUnavailable;
  }
}

}  // namespace

Endpoint::Endpoint(Role role, HandshakeConfig config, crypto::RandomSource& rng)
    : config_(std::move(config)), rng_(rng), role_(role) {
  if (config_.qkd_only && !config_.qkd_enabled) {
    throw std::invalid_argument("qkd_only requires qkd_enabled");
  }
}

Endpoint::~Endpoint() {
  if (quantum_key_) crypto::secure_zero(*quantum_key_);
}

std::vector<Record> Endpoint::on_record(const Record& record) {
  if (phase_ == Phase::Failed) return {};
  if (record.type == ContentType::Alert && record.body.size() == 2) peer_alert_ = record.body[1];
  if (phase_ == Phase::Established) return handle_established(record);
  try {
    return handle(record);
  } catch (const MalformedExtension&) {
    return fail(Failure::MalformedExtension);
  } catch (const DecodeError&) {
    return fail(Failure::DecodeError);
  } catch (const crypto::CryptoError&) {
    return fail(Failure::InternalError);
  }
}

void Endpoint::on_transport_error() {
  if (phase_ != Phase::Failed) fail(Failure::TransportError, false);
}

std::vector<Record> Endpoint::handle_established(const Record& record) {
  switch (record.type) {
    case ContentType::ApplicationData:
      try {
        inbox_.push_back(protection_->unprotect(record));
        return {};
      } catch (const RecordAuthError&) {
        return fail(Failure::RecordAuthFailure);
      }
    case ContentType::Alert: return fail(Failure::PeerAlert, false);
    default: return fail(Failure::UnexpectedMessage);
  }
}

Record Endpoint::seal(ByteView plaintext) {
  if (!established()) throw std::logic_error("connection is not established");
  return protection_->protect(plaintext);
}

std::vector<Record> Endpoint::fail(Failure f, bool send_alert) {
  failure_ = f;
  set_phase(Phase::Failed);
  if (quantum_key_) {
    crypto::secure_zero(*quantum_key_);
    quantum_key_.reset();
  }
  protection_.reset();
  if (!send_alert) return {};
  std::uint8_t desc = alert_for(f);
  if (f == Failure::DowngradeRefused && role_ == Role::Slave) desc = alert::kProtocolVersion;
  return {encode_alert(desc, wire_version())};
}

void Endpoint::set_phase(Phase p) {
  phase_ = p;
  history_.push_back(p);
}

void Endpoint::establish(Mode mode, std::unique_ptr<RecordProtection> protection) {
  mode_ = mode;
  protection_ = std::move(protection);
  set_phase(Phase::Established);
}

// ---------------------------------------------------------------------------

MasterHandshake::MasterHandshake(KmeSession* kme, SaeId slave, HandshakeConfig config,
                                 crypto::RandomSource& rng)
    : Endpoint(Role::Master, std::move(config), rng), kme_(kme), slave_(slave) {
  if (config_.qkd_enabled && !kme_) throw std::invalid_argument("TLS-QKD master needs a KME session");
}

std::vector<Record> MasterHandshake::start() {
  if (phase() != Phase::Start) throw std::logic_error("handshake already started");
  Record hello;
  try {
    auto random = rng_.array<32>();
    if (!config_.qkd_only) {
      share_ = crypto::X25519KeyPair::generate(rng_);
      ++asymmetric_ops_;
    }
    std::optional<std::array<std::uint8_t, 32>> key_share;
    if (share_) key_share = share_->public_key;

    if (config_.qkd_enabled) {
      qkd_attempted_ = true;
      SaeId me = kme_->fetch_own_sae_id();
      auto delivered = kme_->request_key(slave_);
      quantum_key_ = delivered.material;
      crypto::secure_zero(delivered.material);
      base_iv_ = rng_.array<crypto::kNonceSize>();
      hello = encode_client_hello(me, delivered.uuid, base_iv_, random, key_share);
    } else {
      Hello h;
      h.type = HandshakeType::ClientHello;
      h.version = kVersionClassical;
      h.random = random;
      h.extensions.push_back({kExtKeyShare, Bytes(key_share->begin(), key_share->end())});
      hello = Record{ContentType::Handshake, kVersionClassical, encode_hello(h)};
    }
  } catch (const SaeClientError& e) {
    return fail(failure_for(e.code(), Role::Master), false);
  } catch (const crypto::CryptoError&) {
    return fail(Failure::InternalError, false);
  }
  client_hello_raw_ = hello.body;
  set_phase(Phase::HelloSent);
  return {hello};
}

std::vector<Record> MasterHandshake::handle(const Record& record) {
  if (phase() != Phase::HelloSent) return fail(Failure::UnexpectedMessage);
  switch (record.type) {
    case ContentType::Alert: {
      auto desc = decode_alert(record);
      if (qkd_attempted_ && config_.qkd_only && desc == alert::kProtocolVersion) {
        return fail(Failure::DowngradeRefused, false);
      }
      return fail(Failure::PeerAlert, false);
    }
    case ContentType::Handshake: return on_server_flight(record);
    default: return fail(Failure::UnexpectedMessage);
  }
}

std::vector<Record> MasterHandshake::on_server_flight(const Record& record) {
  auto msgs = split_handshake_messages(record.body);
  if (msgs[0].type != HandshakeType::ServerHello) return fail(Failure::UnexpectedMessage);
  Hello sh = decode_hello(msgs[0].raw);

  if (const auto* challenge = sh.find(kExtQkdChallenge)) {
    if (!qkd_attempted_) return fail(Failure::UnexpectedMessage);
    if (msgs.size() != 1 || sh.version != kVersionQkd || record.version != kVersionQkd) {
      return fail(Failure::DecodeError);
    }
    Bytes ack;
    try {
      ack = answer_challenge(*quantum_key_, base_iv_, challenge->body, rng_, config_.seal_observer);
    } catch (const ChallengeError&) {
      return fail(Failure::WrongQuantumKey);
    }
    auto protection = std::make_unique<RecordProtection>(
        TrafficKeys{*quantum_key_, base_iv_, Direction::MasterToSlave},
        TrafficKeys{*quantum_key_, base_iv_, Direction::SlaveToMaster}, kVersionQkd, 1,
        config_.seal_observer);
    establish(Mode::TlsQkd, std::move(protection));
    return {encode_challenge_ack(ack)};
  }

  if (qkd_attempted_ && config_.qkd_only) return fail(Failure::DowngradeRefused);
  if (!share_) return fail(Failure::UnexpectedMessage);
  if (qkd_attempted_) set_phase(Phase::FallbackClassical);
  return finish_classical(msgs);
}

std::vector<Record> MasterHandshake::finish_classical(const std::vector<HandshakeMessage>& msgs) {
  if (msgs.size() != 3 || msgs[1].type != HandshakeType::CertificateVerify ||
      msgs[2].type != HandshakeType::Finished) {
    return fail(Failure::UnexpectedMessage);
  }
  Hello sh = decode_hello(msgs[0].raw);
  const auto* ks = sh.find(kExtKeyShare);
  if (sh.version != kVersionClassical || !ks || ks->body.size() != 32) {
    return fail(Failure::DecodeError);
  }

  std::array<std::uint8_t, 32> shared;
  try {
    shared = share_->agree(ks->body);
    ++asymmetric_ops_;
  } catch (const crypto::CryptoError&) {
    return fail(Failure::ClassicalAuthFailed);
  }
  if (quantum_key_) {
    // The quantum key was fetched but the server is classical; it is unused.
    crypto::secure_zero(*quantum_key_);
    quantum_key_.reset();
  }

  Bytes ch_sh = concat({client_hello_raw_, msgs[0].raw});
  const Bytes& cv = msgs[1].body;
  if (cv.size() != 96) return fail(Failure::DecodeError);
  ByteView server_pub(cv.data(), 32);
  ByteView signature(cv.data() + 32, 64);
  if (config_.pinned_server_key && !equal_ct(server_pub, *config_.pinned_server_key)) {
    return fail(Failure::ClassicalAuthFailed);
  }
  ++asymmetric_ops_;
  if (!crypto::ed25519_verify(server_pub, signature_input(ch_sh), signature)) {
    return fail(Failure::ClassicalAuthFailed);
  }

  Bytes th = concat({ch_sh, msgs[1].raw});
  auto secrets = derive_classical(shared, th);
  crypto::secure_zero(shared);
  auto expected = crypto::hmac_sha256(secrets.server_finished_key, crypto::sha256(th));
  if (!equal_ct(expected, msgs[2].body)) return fail(Failure::ClassicalAuthFailed);

  Bytes full = concat({th, msgs[2].raw});
  auto client_finished = crypto::hmac_sha256(secrets.client_finished_key, crypto::sha256(full));

  auto protection = std::make_unique<RecordProtection>(
      TrafficKeys{secrets.client_key, secrets.client_iv, Direction::MasterToSlave},
      TrafficKeys{secrets.server_key, secrets.server_iv, Direction::SlaveToMaster},
      kVersionClassical, 0, config_.seal_observer);
  establish(Mode::Classical, std::move(protection));
  return {Record{ContentType::Handshake, kVersionClassical,
                 encode_handshake_message(HandshakeType::Finished, client_finished)}};
}

// ---------------------------------------------------------------------------

SlaveHandshake::SlaveHandshake(KmeSession* kme, HandshakeConfig config, crypto::RandomSource& rng)
    : Endpoint(Role::Slave, std::move(config), rng), kme_(kme) {
  if (config_.qkd_enabled && !kme_) throw std::invalid_argument("TLS-QKD slave needs a KME session");
}

std::vector<Record> SlaveHandshake::handle(const Record& record) {
  if (record.type == ContentType::Alert) {
    decode_alert(record);
    return fail(Failure::PeerAlert, false);
  }
  switch (phase()) {
    case Phase::Start:
      if (record.type != ContentType::Handshake) return fail(Failure::UnexpectedMessage);
      return on_client_hello(record);
    case Phase::AckWait:
      if (record.type != ContentType::ChallengeAck) return fail(Failure::UnexpectedMessage);
      return on_challenge_ack(record);
    case Phase::FallbackClassical:
      if (record.type != ContentType::Handshake) return fail(Failure::UnexpectedMessage);
      return on_client_finished(record);
    default: return fail(Failure::UnexpectedMessage);
  }
}

std::vector<Record> SlaveHandshake::on_client_hello(const Record& record) {
  auto info = decode_client_hello(record);

  if (!info.is_qkd() || !config_.qkd_enabled) {
    if (config_.qkd_only) return fail(Failure::DowngradeRefused);
    return answer_classical(info);
  }

  qkd_attempted_ = true;
  if (record.version != kVersionQkd || info.hello.version != kVersionQkd) {
    return fail(Failure::DecodeError);
  }
  try {
    quantum_key_ = kme_->request_key_by_id(info.qkd->client_sae_id, info.qkd->key_uuid);
  } catch (const SaeClientError& e) {
    return fail(failure_for(e.code(), Role::Slave));
  }
  base_iv_ = info.qkd->iv;

  auto built = build_challenge(*quantum_key_, base_iv_, rng_, config_.seal_observer);
  kept_ = built.kept;
  set_phase(Phase::ChallengeSent);
  auto reply = encode_qkd_server_hello(rng_.array<32>(), built.ciphertext);
  set_phase(Phase::AckWait);
  return {reply};
}

std::vector<Record> SlaveHandshake::answer_classical(const ClientHelloInfo& info) {
  if (!info.key_share) return fail(Failure::ProtocolVersion);

  auto share = crypto::X25519KeyPair::generate(rng_);
  ++asymmetric_ops_;
  std::array<std::uint8_t, 32> shared;
  try {
    shared = share.agree(*info.key_share);
    ++asymmetric_ops_;
  } catch (const crypto::CryptoError&) {
    return fail(Failure::ClassicalAuthFailed);
  }
  if (!config_.server_identity) config_.server_identity = crypto::Ed25519KeyPair::generate(rng_);

  Hello sh;
  sh.type = HandshakeType::ServerHello;
  sh.version = kVersionClassical;
  sh.random = rng_.array<32>();
  sh.extensions.push_back({kExtKeyShare, Bytes(share.public_key.begin(), share.public_key.end())});
  Bytes sh_raw = encode_hello(sh);

  Bytes ch_sh = concat({info.raw, sh_raw});
  auto signature = config_.server_identity->sign(signature_input(ch_sh));
  ++asymmetric_ops_;
  Bytes cv_raw = encode_handshake_message(
      HandshakeType::CertificateVerify,
      concat({config_.server_identity->public_key, signature}));

  Bytes th = concat({ch_sh, cv_raw});
  auto secrets = derive_classical(shared, th);
  crypto::secure_zero(shared);
  auto server_finished = crypto::hmac_sha256(secrets.server_finished_key, crypto::sha256(th));
  Bytes sf_raw = encode_handshake_message(HandshakeType::Finished, server_finished);

  transcript_ = concat({th, sf_raw});
  client_finished_key_ = secrets.client_finished_key;
  pending_ = std::make_unique<RecordProtection>(
      TrafficKeys{secrets.server_key, secrets.server_iv, Direction::SlaveToMaster},
      TrafficKeys{secrets.client_key, secrets.client_iv, Direction::MasterToSlave},
      kVersionClassical, 0, config_.seal_observer);
  set_phase(Phase::FallbackClassical);
  return {Record{ContentType::Handshake, kVersionClassical, concat({sh_raw, cv_raw, sf_raw})}};
}

std::vector<Record> SlaveHandshake::on_client_finished(const Record& record) {
  auto msgs = split_handshake_messages(record.body);
  if (msgs.size() != 1 || msgs[0].type != HandshakeType::Finished) {
    return fail(Failure::UnexpectedMessage);
  }
  auto expected = crypto::hmac_sha256(client_finished_key_, crypto::sha256(transcript_));
  crypto::secure_zero(client_finished_key_);
  if (!equal_ct(expected, msgs[0].body)) return fail(Failure::ClassicalAuthFailed);
  establish(Mode::Classical, std::move(pending_));
  return {};
}

std::vector<Record> SlaveHandshake::on_challenge_ack(const Record& record) {
  if (record.version != kVersionQkd) return fail(Failure::DecodeError);
  switch (verify_challenge_ack(*kept_, *quantum_key_, base_iv_, record.body)) {
    case AckVerdict::Accept: break;
    case AckVerdict::BadAuth: return fail(Failure::BadAuth);
    case AckVerdict::TokenMismatch: return fail(Failure::TokenMismatch);
    case AckVerdict::SeedReplayed: return fail(Failure::SeedReplayed);
  }
  kept_.reset();
  auto protection = std::make_unique<RecordProtection>(
      TrafficKeys{*quantum_key_, base_iv_, Direction::SlaveToMaster},
      TrafficKeys{*quantum_key_, base_iv_, Direction::MasterToSlave}, kVersionQkd, 1,
      config_.seal_observer);
  establish(Mode::TlsQkd, std::move(protection));
  return {};
}

}  // namespace tlsqkd::tls
