#include "tlsqkd/tls/wire.hpp"

#include <set>

namespace tlsqkd::tls {

std::array<std::uint8_t, kRecordHeaderSize> record_header(ContentType type, std::uint16_t version,
                                                          std::size_t length) {
  if (length > 0xffff) throw std::length_error("record body exceeds 65535 bytes");
  return {static_cast<std::uint8_t>(type), static_cast<std::uint8_t>(version >> 8),
          static_cast<std::uint8_t>(version), static_cast<std::uint8_t>(length >> 8),
          static_cast<std::uint8_t>(length)};
}

Bytes encode_record(const Record& record) {
  auto header = record_header(record.type, record.version, record.body.size());
  Bytes out(header.begin(), header.end());
  out.insert(out.end(), record.body.begin(), record.body.end());
  return out;
}

Record decode_record(ByteView wire) {
  ByteReader r(wire);
  Record rec;
  rec.type = static_cast<ContentType>(r.u8());
  rec.version = r.u16();
  auto len = r.u16();
  auto body = r.raw(len);
  rec.body.assign(body.begin(), body.end());
  r.expect_end("record");
  return rec;
}

std::optional<Record> take_record(Bytes& buffer) {
  if (buffer.size() < kRecordHeaderSize) return std::nullopt;
  std::size_t len = static_cast<std::size_t>(buffer[3]) << 8 | buffer[4];
  if (buffer.size() < kRecordHeaderSize + len) return std::nullopt;
  Record rec;
  rec.type = static_cast<ContentType>(buffer[0]);
  rec.version = static_cast<std::uint16_t>(buffer[1] << 8 | buffer[2]);
  rec.body.assign(buffer.begin() + kRecordHeaderSize, buffer.begin() + kRecordHeaderSize + len);
  buffer.erase(buffer.begin(), buffer.begin() + kRecordHeaderSize + len);
  return rec;
}

Bytes QkdHelloExtension::encode() const {
  ByteWriter w;
  w.u64(client_sae_id.value);
  w.raw(key_uuid.bytes());
  w.raw(iv);
  return w.take();
}

QkdHelloExtension QkdHelloExtension::decode(ByteView body) {
  if (body.size() != kQkdHelloBodySize) {
    throw MalformedExtension("TLS-QKD hello extension must be 36 bytes, got " +
                             std::to_string(body.size()));
  }
  ByteReader r(body);
  QkdHelloExtension ext;
  ext.client_sae_id = SaeId{r.u64()};
  Uuid::Storage u;
  auto ub = r.raw(16);
  std::copy(ub.begin(), ub.end(), u.begin());
  ext.key_uuid = Uuid(u);
  auto iv = r.raw(crypto::kNonceSize);
  std::copy(iv.begin(), iv.end(), ext.iv.begin());
  return ext;
}

const Extension* Hello::find(std::uint16_t ext_type) const {
  for (const auto& e : extensions) {
    if (e.type == ext_type) return &e;
  }
  return nullptr;
}

Bytes encode_handshake_message(HandshakeType type, ByteView body) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(type));
  w.u24(static_cast<std::uint32_t>(body.size()));
  w.raw(body);
  return w.take();
}

std::vector<HandshakeMessage> split_handshake_messages(ByteView record_body) {
  std::vector<HandshakeMessage> out;
  ByteReader r(record_body);
  while (!r.empty()) {
    HandshakeMessage m;
    m.type = static_cast<HandshakeType>(r.u8());
    auto len = r.u24();
    auto body = r.raw(len);
    m.body.assign(body.begin(), body.end());
    m.raw = encode_handshake_message(m.type, body);
    out.push_back(std::move(m));
  }
  if (out.empty()) throw DecodeError("empty handshake record");
  return out;
}

Bytes encode_hello(const Hello& hello) {
  ByteWriter body;
  body.u16(hello.version);
  body.raw(hello.random);
  auto ext_len = body.open_length(2);
  for (const auto& e : hello.extensions) {
    body.u16(e.type);
    body.u16(static_cast<std::uint16_t>(e.body.size()));
    body.raw(e.body);
  }
  body.close_length(ext_len, 2);
  return encode_handshake_message(hello.type, body.bytes());
}

Hello decode_hello(ByteView framed) {
  ByteReader outer(framed);
  Hello h;
  h.type = static_cast<HandshakeType>(outer.u8());
  if (h.type != HandshakeType::ClientHello && h.type != HandshakeType::ServerHello) {
    throw DecodeError("not a hello message");
  }
  auto len = outer.u24();
  ByteReader r(outer.raw(len));
  outer.expect_end("hello message");

  h.version = r.u16();
  auto random = r.raw(32);
  std::copy(random.begin(), random.end(), h.random.begin());
  auto ext_len = r.u16();
  ByteReader exts(r.raw(ext_len));
  r.expect_end("hello body");

  std::set<std::uint16_t> seen;
  while (!exts.empty()) {
    Extension e;
    e.type = exts.u16();
    auto body_len = exts.u16();
    auto body = exts.raw(body_len);
    e.body.assign(body.begin(), body.end());
    if (!seen.insert(e.type).second) throw DecodeError("duplicate extension");
    h.extensions.push_back(std::move(e));
  }
  return h;
}

Record encode_client_hello(SaeId client_sae_id, const Uuid& key_uuid, const crypto::Nonce& iv,
                           const std::array<std::uint8_t, 32>& random,
                           const std::optional<std::array<std::uint8_t, 32>>& key_share) {
  Hello h;
  h.type = HandshakeType::ClientHello;
  h.version = kVersionQkd;
  h.random = random;
  h.extensions.push_back({kExtQkdHello, QkdHelloExtension{client_sae_id, key_uuid, iv}.encode()});
  if (key_share) h.extensions.push_back({kExtKeyShare, Bytes(key_share->begin(), key_share->end())});
  return Record{ContentType::Handshake, kVersionQkd, encode_hello(h)};
}

ClientHelloInfo decode_client_hello(const Record& record) {
  if (record.type != ContentType::Handshake) throw DecodeError("not a handshake record");
  auto msgs = split_handshake_messages(record.body);
  if (msgs.size() != 1 || msgs[0].type != HandshakeType::ClientHello) {
    throw DecodeError("expected a lone ClientHello");
  }
  ClientHelloInfo info;
  info.raw = msgs[0].raw;
  info.hello = decode_hello(info.raw);
  if (const auto* e = info.hello.find(kExtQkdHello)) {
    info.qkd = QkdHelloExtension::decode(e->body);
  }
  if (const auto* e = info.hello.find(kExtKeyShare)) {
    if (e->body.size() != 32) throw DecodeError("key_share must be 32 bytes");
    std::array<std::uint8_t, 32> ks;
    std::copy(e->body.begin(), e->body.end(), ks.begin());
    info.key_share = ks;
  }
  return info;
}

Record encode_qkd_server_hello(const std::array<std::uint8_t, 32>& random,
                               ByteView challenge_ciphertext) {
  Hello h;
  h.type = HandshakeType::ServerHello;
  h.version = kVersionQkd;
  h.random = random;
  h.extensions.push_back(
      {kExtQkdChallenge, Bytes(challenge_ciphertext.begin(), challenge_ciphertext.end())});
  return Record{ContentType::Handshake, kVersionQkd, encode_hello(h)};
}

Record encode_challenge_ack(ByteView ciphertext) {
  return Record{ContentType::ChallengeAck, kVersionQkd, Bytes(ciphertext.begin(), ciphertext.end())};
}

Record encode_alert(std::uint8_t description, std::uint16_t version) {
  return Record{ContentType::Alert, version,
                Bytes{static_cast<std::uint8_t>(AlertLevel::Fatal), description}};
}

std::uint8_t decode_alert(const Record& record) {
  if (record.type != ContentType::Alert || record.body.size() != 2) {
    throw DecodeError("malformed alert");
  }
  return record.body[1];
}

}  // namespace tlsqkd::tls
