#include "support.hpp"

#include <openssl/bn.h>
#include <openssl/ec.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/x509v3.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "tlsqkd/common/log.hpp"
#include "tlsqkd/crypto/crypto.hpp"

namespace tlsqkd::testkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
// Request logging drowns test output; TLSQKD_TEST_LOG=1 restores it.
const bool quiet_logs = [] {
  if (!std::getenv("TLSQKD_TEST_LOG")) log().set_level(spdlog::level::warn);
  return true;
}();
}  // namespace

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("tlsqkd-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

KmeHttpResponse StubKmeTransport::get(const std::string& path) {
  ++requests_;
  if (fail_with) return {fail_with, R"({"message":"stub failure"})"};
  if (path.find("/sae/info/me") != std::string::npos) {
    return {200, json{{"SAE_ID", self_.value}}.dump()};
  }
  json key{{"key_ID", uuid_.to_string()}, {"key", base64_encode(key_)}};
  return {200, json{{"keys", json::array({key})}}.dump()};
}

std::unique_ptr<KmeSession> stub_session(SaeId self, const Uuid& uuid, const KeyMaterial& key) {
  return std::make_unique<KmeSession>(std::make_unique<StubKmeTransport>(self, uuid, key));
}

Bytes seeded_material(std::uint64_t seed, std::size_t bytes) {
  return seeded_key_material(seed, bytes);
}

KmeConfig pair_config(KmeId self) {
  KmeConfig c;
  c.kme_id = self;
  KmeId other{self.value == 1 ? 2u : 1u};
  c.peers[other] = PeerKme{other, {}, other.value == 1 ? "e1" : "e2"};
  if (self.value == 1) {
    c.saes.push_back({"a1", SaeId{1}, self});
    c.routes[SaeId{2}] = other;
    c.routes[SaeId{3}] = other;
  } else {
    c.saes.push_back({"b2", SaeId{2}, self});
    c.saes.push_back({"c3", SaeId{3}, self});
    c.routes[SaeId{1}] = other;
  }
  for (const auto& s : c.saes) c.routes[s.sae_id] = self;
  c.admin_serials.push_back("ad");
  return c;
}

KmePair::KmePair(std::size_t keys, std::uint64_t seed, std::optional<std::uint64_t> kme2_seed)
    : store1(std::make_shared<KeyStore>()), store2(std::make_shared<KeyStore>()) {
  store1->ingest_stream(KmeId{2}, seeded_material(seed, keys * kQkdKeySize));
  store2->ingest_stream(KmeId{1}, seeded_material(kme2_seed.value_or(seed), keys * kQkdKeySize));
  notifier1 = std::make_shared<InProcessPeerNotifier>("e1");
  notifier2 = std::make_shared<InProcessPeerNotifier>("e2");
  kme1 = std::make_unique<KmeService>(pair_config(KmeId{1}), store1, notifier1);
  kme2 = std::make_unique<KmeService>(pair_config(KmeId{2}), store2, notifier2);
  notifier1->add_peer(KmeId{2}, kme2.get());
  notifier2->add_peer(KmeId{1}, kme1.get());
}

std::unique_ptr<KmeSession> KmePair::session(const std::string& serial) {
  KmeService& home = serial == "a1" ? *kme1 : *kme2;
  return std::make_unique<KmeSession>(std::make_unique<InProcessKmeTransport>(home, serial));
}

KmeResponse KmePair::get(KmeService& kme, const std::string& serial, const std::string& path) {
  return kme.handle(make_get_request(Listener::Sae, serial, path));
}

std::vector<tls::Record> converse(tls::MasterHandshake& master, tls::SlaveHandshake& slave) {
  std::vector<tls::Record> log;
  std::vector<tls::Record> to_slave = master.start();
  std::vector<tls::Record> to_master;
  while (!to_slave.empty() || !to_master.empty()) {
    std::vector<tls::Record> next_to_master, next_to_slave;
    for (const auto& r : to_slave) {
      log.push_back(r);
      for (auto& out : slave.on_record(r)) next_to_master.push_back(std::move(out));
    }
    for (const auto& r : to_master) {
      log.push_back(r);
      for (auto& out : master.on_record(r)) next_to_slave.push_back(std::move(out));
    }
    to_slave = std::move(next_to_slave);
    to_master = std::move(next_to_master);
  }
  return log;
}

// --- PKI --------------------------------------------------------------------

namespace {

struct KeyFree {
  void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
struct CertFree {
  void operator()(X509* x) const { X509_free(x); }
};
using KeyPtr = std::unique_ptr<EVP_PKEY, KeyFree>;
using CertPtr = std::unique_ptr<X509, CertFree>;

KeyPtr new_key() {
  KeyPtr k(EVP_EC_gen("P-256"));
  if (!k) throw std::runtime_error("EC key generation failed");
  return k;
}

void add_ext(X509* cert, X509* issuer, int nid, const char* value) {
  X509V3_CTX ctx;
  X509V3_set_ctx_nodb(&ctx);
  X509V3_set_ctx(&ctx, issuer, cert, nullptr, nullptr, 0);
  X509_EXTENSION* ext = X509V3_EXT_conf_nid(nullptr, &ctx, nid, value);
  if (!ext) throw std::runtime_error("bad extension");
  X509_add_ext(cert, ext, -1);
  X509_EXTENSION_free(ext);
}

CertPtr make_cert(const std::string& cn, const std::string& serial_hex, EVP_PKEY* key,
                  X509* issuer, EVP_PKEY* issuer_key, bool ca) {
  CertPtr cert(X509_new());
  X509_set_version(cert.get(), 2);
  BIGNUM* bn = nullptr;
  BN_hex2bn(&bn, serial_hex.c_str());
  BN_to_ASN1_INTEGER(bn, X509_get_serialNumber(cert.get()));
  BN_free(bn);
  X509_gmtime_adj(X509_getm_notBefore(cert.get()), -3600);
  X509_gmtime_adj(X509_getm_notAfter(cert.get()), 3600L * 24 * 365);
  X509_set_pubkey(cert.get(), key);
  X509_NAME* name = X509_get_subject_name(cert.get());
  X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC,
                             reinterpret_cast<const unsigned char*>(cn.c_str()), -1, -1, 0);
  X509_set_issuer_name(cert.get(), issuer ? X509_get_subject_name(issuer) : name);
  X509* iss = issuer ? issuer : cert.get();
  if (ca) {
    add_ext(cert.get(), iss, NID_basic_constraints, "critical,CA:TRUE");
    add_ext(cert.get(), iss, NID_key_usage, "critical,keyCertSign,cRLSign");
  } else {
    add_ext(cert.get(), iss, NID_basic_constraints, "CA:FALSE");
    add_ext(cert.get(), iss, NID_key_usage, "critical,digitalSignature,keyAgreement");
    add_ext(cert.get(), iss, NID_ext_key_usage, "serverAuth,clientAuth");
    add_ext(cert.get(), iss, NID_subject_alt_name, "IP:127.0.0.1,DNS:localhost");
  }
  if (!X509_sign(cert.get(), issuer_key, EVP_sha256())) throw std::runtime_error("sign failed");
  return cert;
}

void write_pem(const fs::path& path, X509* cert) {
  FILE* f = std::fopen(path.c_str(), "w");
  PEM_write_X509(f, cert);
  std::fclose(f);
}

void write_pem(const fs::path& path, EVP_PKEY* key) {
  FILE* f = std::fopen(path.c_str(), "w");
  PEM_write_PrivateKey(f, key, nullptr, nullptr, 0, nullptr, nullptr);
  std::fclose(f);
}

}  // namespace

Pki::Pki(const fs::path& d, const std::map<std::string, std::string>& leaves) : dir(d) {
  fs::create_directories(dir);
  auto ca_key = new_key();
  auto ca = make_cert("test CA", "01", ca_key.get(), nullptr, ca_key.get(), true);
  auto rogue_key = new_key();
  auto rogue = make_cert("rogue CA", "02", rogue_key.get(), nullptr, rogue_key.get(), true);
  write_pem(dir / "ca.pem", ca.get());
  write_pem(dir / "ca.key", ca_key.get());
  write_pem(dir / "rogue_ca.pem", rogue.get());
  for (const auto& [name, serial] : leaves) {
    auto key = new_key();
    auto cert = make_cert(name, serial, key.get(), ca.get(), ca_key.get(), false);
    write_pem(dir / (name + ".pem"), cert.get());
    write_pem(dir / (name + ".key"), key.get());
    auto rkey = new_key();
    auto rcert = make_cert(name, serial, rkey.get(), rogue.get(), rogue_key.get(), false);
    write_pem(dir / ("rogue_" + name + ".pem"), rcert.get());
    write_pem(dir / ("rogue_" + name + ".key"), rkey.get());
  }
}

TlsCredentials Pki::credentials(const std::string& name) const {
  return {dir / (name + ".pem"), dir / (name + ".key"), dir / "ca.pem"};
}

// --- exhaustive -------------------------------------------------------------

std::string_view to_string(Symbol s) {
  switch (s) {
    case Symbol::Hello: return "hello";
    case Symbol::HelloExt: return "hello+ext";
    case Symbol::Challenge: return "challenge";
    case Symbol::Ack: return "ack";
    case Symbol::AppData: return "appdata";
    case Symbol::Garbage: return "garbage";
  }
  return "?";
}

namespace {

constexpr std::uint64_t kMasterSeed = 101;
constexpr std::uint64_t kSlaveSeed = 202;

struct Alphabet {
  KeyMaterial key{};
  Uuid uuid;
  crypto::Ed25519KeyPair server_identity;
  std::array<tls::Record, kSymbolCount> records;
  tls::Record appdata_to_master;
  tls::Record appdata_to_slave;
};

tls::HandshakeConfig config_with(const Alphabet& a) {
  tls::HandshakeConfig cfg;
  cfg.server_identity = a.server_identity;
  return cfg;
}

Alphabet build_alphabet() {
  Alphabet a;
  crypto::SeededRandom material(9, "exhaustive-key");
  material.fill(a.key);
  a.uuid = derive_key_uuid(a.key);
  crypto::SeededRandom id_rng(10, "exhaustive-identity");
  a.server_identity = crypto::Ed25519KeyPair::generate(id_rng);

  // Honest co-simulation; the machines under test replay the same seeds.
  auto mk = stub_session(SaeId{1}, a.uuid, a.key);
  auto sk = stub_session(SaeId{2}, a.uuid, a.key);
  crypto::SeededRandom mrng(kMasterSeed, "master");
  crypto::SeededRandom srng(kSlaveSeed, "slave");
  tls::MasterHandshake master(mk.get(), SaeId{2}, config_with(a), mrng);
  tls::SlaveHandshake slave(sk.get(), config_with(a), srng);
  auto log = converse(master, slave);
  if (log.size() != 3 || !master.established() || !slave.established()) {
    throw std::logic_error("honest co-simulation did not establish");
  }
  a.records[static_cast<int>(Symbol::HelloExt)] = log[0];
  a.records[static_cast<int>(Symbol::Challenge)] = log[1];
  a.records[static_cast<int>(Symbol::Ack)] = log[2];
  a.appdata_to_slave = master.seal(as_bytes("probe"));
  a.appdata_to_master = slave.seal(as_bytes("probe"));

  tls::HandshakeConfig classical;
  classical.qkd_enabled = false;
  crypto::SeededRandom crng(303, "classical");
  tls::MasterHandshake cm(nullptr, SaeId{2}, classical, crng);
  a.records[static_cast<int>(Symbol::Hello)] = cm.start().at(0);

  crypto::SeededRandom grng(404, "garbage");
  Bytes junk(40);
  grng.fill(junk);
  a.records[static_cast<int>(Symbol::Garbage)] = tls::Record{tls::ContentType::Handshake,
                                                             tls::kVersionQkd, junk};
  return a;
}

}  // namespace

ExhaustiveResult exhaustive_check(tls::Role role, std::size_t max_len) {
  static const Alphabet alphabet = build_alphabet();
  const auto& a = alphabet;
  const std::vector<Symbol> honest =
      role == tls::Role::Slave ? std::vector<Symbol>{Symbol::HelloExt, Symbol::Ack}
                               : std::vector<Symbol>{Symbol::Challenge};

  ExhaustiveResult result;
  std::vector<Symbol> seq;
  auto run_one = [&] {
    ++result.sequences;
    auto kme = stub_session(role == tls::Role::Master ? SaeId{1} : SaeId{2}, a.uuid, a.key);
    crypto::SeededRandom rng(role == tls::Role::Master ? kMasterSeed : kSlaveSeed,
                             role == tls::Role::Master ? "master" : "slave");
    std::unique_ptr<tls::Endpoint> ep;
    if (role == tls::Role::Master) {
      auto m = std::make_unique<tls::MasterHandshake>(kme.get(), SaeId{2}, config_with(a), rng);
      m->start();
      ep = std::move(m);
    } else {
      ep = std::make_unique<tls::SlaveHandshake>(kme.get(), config_with(a), rng);
    }
    std::optional<std::size_t> established_at;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const tls::Record& r = seq[i] == Symbol::AppData
                                 ? (role == tls::Role::Master ? a.appdata_to_master : a.appdata_to_slave)
                                 : a.records[static_cast<int>(seq[i])];
      ep->on_record(r);
      if (!established_at && ep->established() && ep->mode() == tls::Mode::TlsQkd) {
        established_at = i;
      }
    }
    if (!established_at) return;
    ++result.qkd_established;
    bool honest_prefix = *established_at + 1 == honest.size() &&
                         std::equal(honest.begin(), honest.end(), seq.begin());
    if (!honest_prefix) {
      ++result.violations;
      if (result.examples.size() < 10) {
        std::string s;
        for (auto sym : seq) s += std::string(to_string(sym)) + " ";
        result.examples.push_back(s);
      }
    }
  };

  // Depth-first over all sequences of length 1..max_len.
  std::function<void()> extend = [&] {
    if (!seq.empty()) run_one();
    if (seq.size() == max_len) return;
    for (std::size_t s = 0; s < kSymbolCount; ++s) {
      seq.push_back(static_cast<Symbol>(s));
      extend();
      seq.pop_back();
    }
  };
  extend();
  return result;
}

}  // namespace tlsqkd::testkit
