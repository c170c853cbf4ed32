#include "tlsqkd/crypto/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/kdf.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <memory>
#include <string>

namespace tlsqkd::crypto {
namespace {

struct CipherCtxFree {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
struct PkeyFree {
  void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
struct PkeyCtxFree {
  void operator()(EVP_PKEY_CTX* c) const { EVP_PKEY_CTX_free(c); }
};
struct MdCtxFree {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};

using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree>;
using Pkey = std::unique_ptr<EVP_PKEY, PkeyFree>;
using PkeyCtx = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxFree>;
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxFree>;

void check(int ok, const char* what) {
  if (ok != 1) throw CryptoError(std::string("openssl: ") + what);
}

CipherCtx new_cipher_ctx() {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw CryptoError("EVP_CIPHER_CTX_new");
  return ctx;
}

Pkey raw_private(int type, ByteView priv) {
  Pkey k(EVP_PKEY_new_raw_private_key(type, nullptr, priv.data(), priv.size()));
  if (!k) throw CryptoError("EVP_PKEY_new_raw_private_key");
  return k;
}

std::array<std::uint8_t, 32> raw_public_of(EVP_PKEY* k) {
  std::array<std::uint8_t, 32> pub{};
  std::size_t len = pub.size();
  check(EVP_PKEY_get_raw_public_key(k, pub.data(), &len), "EVP_PKEY_get_raw_public_key");
  return pub;
}

}  // namespace

Digest20 sha1(ByteView data) {
  Digest20 out;
  SHA1(data.data(), data.size(), out.data());
  return out;
}

Digest32 sha256(ByteView data) {
  Digest32 out;
  SHA256(data.data(), data.size(), out.data());
  return out;
}

Digest32 hmac_sha256(ByteView key, ByteView data) {
  Digest32 out;
  unsigned int len = out.size();
  if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(),
            out.data(), &len)) {
    throw CryptoError("HMAC");
  }
  return out;
}

Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t length) {
  PkeyCtx ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
  if (!ctx) throw CryptoError("EVP_PKEY_CTX_new_id(HKDF)");
  check(EVP_PKEY_derive_init(ctx.get()), "hkdf init");
  check(EVP_PKEY_CTX_set_hkdf_md(ctx.get(), EVP_sha256()), "hkdf md");
  check(EVP_PKEY_CTX_set1_hkdf_salt(ctx.get(), salt.data(), static_cast<int>(salt.size())),
        "hkdf salt");
  check(EVP_PKEY_CTX_set1_hkdf_key(ctx.get(), ikm.data(), static_cast<int>(ikm.size())),
        "hkdf key");
  check(EVP_PKEY_CTX_add1_hkdf_info(ctx.get(), info.data(), static_cast<int>(info.size())),
        "hkdf info");
  Bytes out(length);
  std::size_t len = length;
  check(EVP_PKEY_derive(ctx.get(), out.data(), &len), "hkdf derive");
  return out;
}

Bytes aead_seal(const Key256& key, const Nonce& nonce, ByteView aad, ByteView plaintext) {
  auto ctx = new_cipher_ctx();
  check(EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr), "gcm init");
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceSize, nullptr), "gcm ivlen");
  check(EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()), "gcm key");

  int len = 0;
  if (!aad.empty()) {
    check(EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())),
          "gcm aad");
  }
  Bytes out(plaintext.size() + kTagSize);
  int written = 0;
  if (!plaintext.empty()) {
    check(EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                            static_cast<int>(plaintext.size())),
          "gcm update");
    written = len;
  }
  check(EVP_EncryptFinal_ex(ctx.get(), out.data() + written, &len), "gcm final");
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagSize,
                            out.data() + plaintext.size()),
        "gcm tag");
  return out;
}

std::optional<Bytes> aead_open(const Key256& key, const Nonce& nonce, ByteView aad,
                               ByteView sealed) {
  if (sealed.size() < kTagSize) return std::nullopt;
  const std::size_t body = sealed.size() - kTagSize;

  auto ctx = new_cipher_ctx();
  check(EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr), "gcm init");
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceSize, nullptr), "gcm ivlen");
  check(EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()), "gcm key");

  int len = 0;
  if (!aad.empty()) {
    check(EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())),
          "gcm aad");
  }
  Bytes out(body);
  int written = 0;
  if (body) {
    check(EVP_DecryptUpdate(ctx.get(), out.data(), &len, sealed.data(), static_cast<int>(body)),
          "gcm update");
    written = len;
  }
  Bytes tag(sealed.begin() + body, sealed.end());
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagSize, tag.data()), "gcm tag");
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + written, &len) != 1) {
    secure_zero(out);
    return std::nullopt;
  }
  return out;
}

void secure_zero(std::span<std::uint8_t> data) {
  if (!data.empty()) OPENSSL_cleanse(data.data(), data.size());
}

void OsRandom::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw CryptoError("RAND_bytes failed");
  }
}

struct SeededRandom::Impl {
  CipherCtx ctx = new_cipher_ctx();
};

SeededRandom::SeededRandom(std::uint64_t seed, std::string_view label) : impl_(new Impl) {
  ByteWriter w;
  w.raw(as_bytes("tlsqkd-seeded-random"));
  w.u64(seed);
  w.raw(as_bytes(label));
  Digest32 key = sha256(w.bytes());
  std::array<std::uint8_t, 16> iv{};
  check(EVP_EncryptInit_ex(impl_->ctx.get(), EVP_aes_256_ctr(), nullptr, key.data(), iv.data()),
        "ctr init");
  secure_zero(key);
}

SeededRandom::~SeededRandom() { delete impl_; }

void SeededRandom::fill(std::span<std::uint8_t> out) {
  std::fill(out.begin(), out.end(), 0);
  std::size_t done = 0;
  while (done < out.size()) {
    int chunk = static_cast<int>(std::min<std::size_t>(out.size() - done, 1 << 20));
    int len = 0;
    check(EVP_EncryptUpdate(impl_->ctx.get(), out.data() + done, &len, out.data() + done, chunk),
          "ctr update");
    done += static_cast<std::size_t>(len);
  }
}

X25519KeyPair X25519KeyPair::generate(RandomSource& rng) {
  X25519KeyPair kp;
  rng.fill(kp.private_key);
  auto k = raw_private(EVP_PKEY_X25519, kp.private_key);
  kp.public_key = raw_public_of(k.get());
  return kp;
}

std::array<std::uint8_t, 32> X25519KeyPair::agree(ByteView peer_public) const {
  if (peer_public.size() != 32) throw CryptoError("x25519 public key must be 32 bytes");
  auto mine = raw_private(EVP_PKEY_X25519, private_key);
  Pkey peer(EVP_PKEY_new_raw_public_key(EVP_PKEY_X25519, nullptr, peer_public.data(), 32));
  if (!peer) throw CryptoError("EVP_PKEY_new_raw_public_key");
  PkeyCtx ctx(EVP_PKEY_CTX_new(mine.get(), nullptr));
  if (!ctx) throw CryptoError("EVP_PKEY_CTX_new");
  check(EVP_PKEY_derive_init(ctx.get()), "x25519 derive init");
  check(EVP_PKEY_derive_set_peer(ctx.get(), peer.get()), "x25519 set peer");
  std::array<std::uint8_t, 32> secret{};
  std::size_t len = secret.size();
  check(EVP_PKEY_derive(ctx.get(), secret.data(), &len), "x25519 derive");
  return secret;
}

Ed25519KeyPair Ed25519KeyPair::generate(RandomSource& rng) {
  Ed25519KeyPair kp;
  rng.fill(kp.private_key);
  auto k = raw_private(EVP_PKEY_ED25519, kp.private_key);
  kp.public_key = raw_public_of(k.get());
  return kp;
}

std::array<std::uint8_t, 64> Ed25519KeyPair::sign(ByteView message) const {
  auto k = raw_private(EVP_PKEY_ED25519, private_key);
  MdCtx md(EVP_MD_CTX_new());
  if (!md) throw CryptoError("EVP_MD_CTX_new");
  check(EVP_DigestSignInit(md.get(), nullptr, nullptr, nullptr, k.get()), "ed25519 sign init");
  std::array<std::uint8_t, 64> sig{};
  std::size_t len = sig.size();
  check(EVP_DigestSign(md.get(), sig.data(), &len, message.data(), message.size()),
        "ed25519 sign");
  return sig;
}

bool ed25519_verify(ByteView public_key, ByteView message, ByteView signature) {
  if (public_key.size() != 32 || signature.size() != 64) return false;
  Pkey k(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, public_key.data(), 32));
  if (!k) return false;
  MdCtx md(EVP_MD_CTX_new());
  if (!md) throw CryptoError("EVP_MD_CTX_new");
  if (EVP_DigestVerifyInit(md.get(), nullptr, nullptr, nullptr, k.get()) != 1) return false;
  return EVP_DigestVerify(md.get(), signature.data(), signature.size(), message.data(),
                          message.size()) == 1;
}

}  // namespace tlsqkd::crypto
