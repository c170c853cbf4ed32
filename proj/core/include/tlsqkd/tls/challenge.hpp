#pragma once

#include <array>
#include <cstdint>
#include <functional>

#include "tlsqkd/crypto/crypto.hpp"
#include "tlsqkd/tls/wire.hpp"

namespace tlsqkd::tls {

enum class Direction : std::uint8_t { MasterToSlave, SlaveToMaster };

/// base_iv with byte 0 xored by 0x80 for slave->master traffic and bytes
/// 4..11 xored with the big-endian sequence number.
crypto::Nonce derive_nonce(const crypto::Nonce& base_iv, Direction direction, std::uint64_t seq);

/// Called with every (key, nonce) pair used for encryption.
using SealObserver = std::function<void(const crypto::Key256&, const crypto::Nonce&)>;

struct ChallengePayload {
  std::array<std::uint8_t, 32> token{};
  std::array<std::uint8_t, 32> seed{};

  Bytes plaintext() const;
  static ChallengePayload from_plaintext(ByteView plaintext);
  bool operator==(const ChallengePayload&) const = default;
};

struct BuiltChallenge {
  ChallengePayload kept;
  Bytes ciphertext;  // 80 bytes, the body of extension 0xFEA7
};

/// Slave side: fresh token and seed sealed under the slave->master nonce for
/// sequence 0, with empty associated data.
BuiltChallenge build_challenge(const crypto::Key256& key, const crypto::Nonce& base_iv,
                               crypto::RandomSource& rng, const SealObserver& observer = {});

class ChallengeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Master side: opens the challenge and reseals the token with a new seed
/// under the master->slave nonce for sequence 0. Throws ChallengeError when
/// the challenge does not authenticate under `key`.
Bytes answer_challenge(const crypto::Key256& key, const crypto::Nonce& base_iv,
                       ByteView challenge_ciphertext, crypto::RandomSource& rng,
                       const SealObserver& observer = {});

enum class AckVerdict { Accept, BadAuth, TokenMismatch, SeedReplayed };

std::string_view to_string(AckVerdict v);

/// Accepts iff the ack authenticates, echoes the token, and carries a seed
/// different from the challenge's.
AckVerdict verify_challenge_ack(const ChallengePayload& kept, const crypto::Key256& key,
                                const crypto::Nonce& base_iv, ByteView ack_ciphertext);

}  // namespace tlsqkd::tls
