#include "tlsqkd/tls/challenge.hpp"

#include <openssl/crypto.h>

namespace tlsqkd::tls {

crypto::Nonce derive_nonce(const crypto::Nonce& base_iv, Direction direction, std::uint64_t seq) {
  crypto::Nonce n = base_iv;
  if (direction == Direction::SlaveToMaster) n[0] ^= 0x80;
  for (int i = 0; i < 8; ++i) n[4 + i] ^= static_cast<std::uint8_t>(seq >> (56 - 8 * i));
  return n;
}

Bytes ChallengePayload::plaintext() const {
  Bytes out(token.begin(), token.end());
  out.insert(out.end(), seed.begin(), seed.end());
  return out;
}

ChallengePayload ChallengePayload::from_plaintext(ByteView plaintext) {
  if (plaintext.size() != kChallengePlaintextSize) {
    throw DecodeError("challenge plaintext must be 64 bytes");
  }
  ChallengePayload p;
  std::copy_n(plaintext.begin(), 32, p.token.begin());
  std::copy_n(plaintext.begin() + 32, 32, p.seed.begin());
  return p;
}

BuiltChallenge build_challenge(const crypto::Key256& key, const crypto::Nonce& base_iv,
                               crypto::RandomSource& rng, const SealObserver& observer) {
  BuiltChallenge out;
  rng.fill(out.kept.token);
  rng.fill(out.kept.seed);
  auto nonce = derive_nonce(base_iv, Direction::SlaveToMaster, 0);
  if (observer) observer(key, nonce);
  Bytes pt = out.kept.plaintext();
  out.ciphertext = crypto::aead_seal(key, nonce, {}, pt);
  crypto::secure_zero(pt);
  return out;
}

Bytes answer_challenge(const crypto::Key256& key, const crypto::Nonce& base_iv,
                       ByteView challenge_ciphertext, crypto::RandomSource& rng,
                       const SealObserver& observer) {
  if (challenge_ciphertext.size() != kChallengeCiphertextSize) {
    throw ChallengeError("challenge must be 80 bytes");
  }
  auto opened = crypto::aead_open(key, derive_nonce(base_iv, Direction::SlaveToMaster, 0), {},
                                  challenge_ciphertext);
  if (!opened) throw ChallengeError("challenge does not authenticate under the quantum key");
  auto payload = ChallengePayload::from_plaintext(*opened);
  crypto::secure_zero(*opened);

  auto received_seed = payload.seed;
  do {
    rng.fill(payload.seed);
  } while (payload.seed == received_seed);

  auto nonce = derive_nonce(base_iv, Direction::MasterToSlave, 0);
  if (observer) observer(key, nonce);
  Bytes pt = payload.plaintext();
  Bytes ack = crypto::aead_seal(key, nonce, {}, pt);
  crypto::secure_zero(pt);
  return ack;
}

std::string_view to_string(AckVerdict v) {
  switch (v) {
    case AckVerdict::Accept: return "Accept";
    case AckVerdict::BadAuth: return "BadAuth";
    case AckVerdict::TokenMismatch: return "TokenMismatch";
    case AckVerdict::SeedReplayed: return "SeedReplayed";
  }
  return "?";
}

AckVerdict verify_challenge_ack(const ChallengePayload& kept, const crypto::Key256& key,
                                const crypto::Nonce& base_iv, ByteView ack_ciphertext) {
  if (ack_ciphertext.size() != kChallengeCiphertextSize) return AckVerdict::BadAuth;
  auto opened = crypto::aead_open(key, derive_nonce(base_iv, Direction::MasterToSlave, 0), {},
                                  ack_ciphertext);
  if (!opened) return AckVerdict::BadAuth;
  auto answer = ChallengePayload::from_plaintext(*opened);
  crypto::secure_zero(*opened);
  if (CRYPTO_memcmp(answer.token.data(), kept.token.data(), answer.token.size()) != 0) {
    return AckVerdict::TokenMismatch;
  }
  if (answer.seed == kept.seed) return AckVerdict::SeedReplayed;
  return AckVerdict::Accept;
}

}  // namespace tlsqkd::tls
