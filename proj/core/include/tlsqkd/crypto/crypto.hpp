#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>

#include "tlsqkd/common/bytes.hpp"

// Thin wrappers over OpenSSL's EVP interfaces. Everything here is stateless
// except the random sources.
namespace tlsqkd::crypto {

inline constexpr std::size_t kKeySize = 32;
inline constexpr std::size_t kNonceSize = 12;
inline constexpr std::size_t kTagSize = 16;

using Key256 = std::array<std::uint8_t, kKeySize>;
using Nonce = std::array<std::uint8_t, kNonceSize>;
using Digest20 = std::array<std::uint8_t, 20>;
using Digest32 = std::array<std::uint8_t, 32>;

class CryptoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Digest20 sha1(ByteView data);
Digest32 sha256(ByteView data);
Digest32 hmac_sha256(ByteView key, ByteView data);
Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t length);

/// AES-256-GCM. Output is ciphertext followed by the 16-byte tag.
Bytes aead_seal(const Key256& key, const Nonce& nonce, ByteView aad, ByteView plaintext);
/// Returns nullopt when the tag does not authenticate.
std::optional<Bytes> aead_open(const Key256& key, const Nonce& nonce, ByteView aad,
                               ByteView sealed);

/// Overwrites memory in a way the optimizer cannot elide.
void secure_zero(std::span<std::uint8_t> data);

class RandomSource {
 public:
  virtual ~RandomSource() = default;
  /// Throws CryptoError if the source cannot deliver.
  virtual void fill(std::span<std::uint8_t> out) = 0;

  template <std::size_t N>
  std::array<std::uint8_t, N> array() {
    std::array<std::uint8_t, N> out;
    fill(out);
    return out;
  }
};

/// Operating-system randomness via RAND_bytes.
class OsRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

/// Deterministic AES-256-CTR keystream keyed by SHA-256 of the seed.
/// Output is indistinguishable from random for anyone not holding the seed,
/// so it doubles as reproducible test randomness and simulated key material.
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed, std::string_view label = {});
  ~SeededRandom() override;
  SeededRandom(const SeededRandom&) = delete;
  SeededRandom& operator=(const SeededRandom&) = delete;

  void fill(std::span<std::uint8_t> out) override;

 private:
  struct Impl;
  Impl* impl_;
};

struct X25519KeyPair {
  std::array<std::uint8_t, 32> private_key{};
  std::array<std::uint8_t, 32> public_key{};

  static X25519KeyPair generate(RandomSource& rng);
  /// Throws CryptoError on a low-order peer point.
  std::array<std::uint8_t, 32> agree(ByteView peer_public) const;
};

struct Ed25519KeyPair {
  std::array<std::uint8_t, 32> private_key{};
  std::array<std::uint8_t, 32> public_key{};

  static Ed25519KeyPair generate(RandomSource& rng);
  std::array<std::uint8_t, 64> sign(ByteView message) const;
};

bool ed25519_verify(ByteView public_key, ByteView message, ByteView signature);

}  // namespace tlsqkd::crypto
