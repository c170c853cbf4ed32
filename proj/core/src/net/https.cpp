#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "tlsqkd/net/https.hpp"

#include <httplib.h>
#include <openssl/bn.h>
#include <openssl/pem.h>
#include <openssl/ssl.h>
#include <openssl/x509.h>

#include <array>
#include <thread>

#include "tlsqkd/common/log.hpp"
#include "tlsqkd/kme/in_process.hpp"

namespace tlsqkd::net {

namespace {

struct BioDeleter {
  void operator()(BIO* b) const { BIO_free(b); }
};
struct X509Deleter {
  void operator()(X509* x) const { X509_free(x); }
};
struct KeyDeleter {
  void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};

std::unique_ptr<BIO, BioDeleter> open_pem(const std::filesystem::path& path, const char* what) {
  std::unique_ptr<BIO, BioDeleter> bio(BIO_new_file(path.c_str(), "r"));
  if (!bio) throw ConfigError(std::string("cannot read ") + what + " " + path.string());
  return bio;
}

std::unique_ptr<X509, X509Deleter> read_cert(const std::filesystem::path& path, const char* what) {
  auto bio = open_pem(path, what);
  std::unique_ptr<X509, X509Deleter> cert(PEM_read_bio_X509(bio.get(), nullptr, nullptr, nullptr));
  if (!cert) throw ConfigError(std::string("invalid ") + what + " " + path.string());
  return cert;
}

std::string serial_of(const X509* cert) {
  BIGNUM* bn = ASN1_INTEGER_to_BN(X509_get0_serialNumber(cert), nullptr);
  if (!bn) return {};
  char* hex = BN_bn2hex(bn);
  std::string out = hex ? normalize_serial(hex) : std::string{};
  OPENSSL_free(hex);
  BN_free(bn);
  return out;
}

std::optional<std::string> verified_peer_serial(const SSL* ssl) {
  if (!ssl) return std::nullopt;
  X509* peer = SSL_get0_peer_certificate(ssl);
  if (!peer || SSL_get_verify_result(ssl) != X509_V_OK) return std::nullopt;
  auto serial = serial_of(peer);
  if (serial.empty()) return std::nullopt;
  return serial;
}

std::unique_ptr<httplib::SSLClient> make_client(const Endpoint& to, const TlsCredentials& creds,
                                                std::chrono::milliseconds timeout) {
  auto cli = std::make_unique<httplib::SSLClient>(to.host, to.port, creds.certificate.string(),
                                                  creds.private_key.string());
  if (!cli->is_valid()) {
    throw ConfigError("cannot load client credentials " + creds.certificate.string() + " / " +
                      creds.private_key.string());
  }
  cli->set_ca_cert_path(creds.trust_anchor.string());
  cli->enable_server_certificate_verification(true);
  cli->set_connection_timeout(timeout);
  cli->set_read_timeout(timeout);
  cli->set_write_timeout(timeout);
  return cli;
}

}  // namespace

void check_credentials(const TlsCredentials& creds) {
  auto cert = read_cert(creds.certificate, "certificate");
  auto bio = open_pem(creds.private_key, "private key");
  std::unique_ptr<EVP_PKEY, KeyDeleter> key(
      PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr));
  if (!key) throw ConfigError("invalid private key " + creds.private_key.string());
  if (X509_check_private_key(cert.get(), key.get()) != 1) {
    throw ConfigError("private key " + creds.private_key.string() + " does not match " +
                      creds.certificate.string());
  }
  read_cert(creds.trust_anchor, "trust anchor");
}

std::string certificate_serial(const std::filesystem::path& pem) {
  return serial_of(read_cert(pem, "certificate").get());
}

// ---------------------------------------------------------------------------

struct KmeHttpsServer::Impl {
  struct Slot {
    Listener listener;
    Endpoint address;
    std::unique_ptr<httplib::SSLServer> server;
    std::thread thread;
    int port = 0;
  };

  std::shared_ptr<KmeService> service;
  std::array<Slot, 3> slots;
  bool running = false;

  void serve(Slot& slot, const TlsCredentials& creds) {
    slot.server = std::make_unique<httplib::SSLServer>([&creds](SSL_CTX& ctx) {
      SSL_CTX_set_min_proto_version(&ctx, TLS1_2_VERSION);
      if (SSL_CTX_use_certificate_chain_file(&ctx, creds.certificate.c_str()) != 1 ||
          SSL_CTX_use_PrivateKey_file(&ctx, creds.private_key.c_str(), SSL_FILETYPE_PEM) != 1 ||
          SSL_CTX_check_private_key(&ctx) != 1 ||
          SSL_CTX_load_verify_locations(&ctx, creds.trust_anchor.c_str(), nullptr) != 1) {
        return false;
      }
      // Accept the handshake either way and reject unverified callers with 401.
      SSL_CTX_set_verify(&ctx, SSL_VERIFY_PEER, [](int, X509_STORE_CTX*) { return 1; });
      return true;
    });
    if (!slot.server->is_valid()) {
      throw ConfigError("cannot initialise TLS with " + creds.certificate.string());
    }
    auto handler = [this, listener = slot.listener](const httplib::Request& req,
                                                    httplib::Response& res) {
      KmeRequest kreq;
      kreq.listener = listener;
      kreq.caller.cert_serial = verified_peer_serial(req.ssl);
      kreq.method = req.method;
      kreq.path = req.path;
      for (const auto& [k, v] : req.params) kreq.query.emplace(k, v);
      kreq.body = req.body;
      auto kres = service->handle(kreq);
      res.status = kres.status;
      res.set_content(kres.body, "application/json");
    };
    slot.server->Get(R"(/.*)", handler);
    slot.server->Post(R"(/.*)", handler);

    if (slot.address.port == 0) {
      slot.port = slot.server->bind_to_any_port(slot.address.host);
    } else {
      slot.port = slot.server->bind_to_port(slot.address.host, slot.address.port)
                      ? slot.address.port
                      : -1;
    }
    if (slot.port <= 0) throw TransportError("cannot listen on " + slot.address.to_string());
    slot.thread = std::thread([s = slot.server.get()] { s->listen_after_bind(); });
    slot.server->wait_until_ready();
  }
};

KmeHttpsServer::KmeHttpsServer(std::shared_ptr<KmeService> service) : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  const auto& cfg = impl_->service->config();
  impl_->slots[0].listener = Listener::Sae;
  impl_->slots[0].address = cfg.sae_listen;
  impl_->slots[1].listener = Listener::Kme;
  impl_->slots[1].address = cfg.kme_listen;
  impl_->slots[2].listener = Listener::Admin;
  impl_->slots[2].address = cfg.admin_listen;
}

KmeHttpsServer::~KmeHttpsServer() { stop(); }

void KmeHttpsServer::start() {
  if (impl_->running) return;
  const auto& creds = impl_->service->config().server_credentials;
  check_credentials(creds);
  impl_->running = true;
  try {
    for (auto& slot : impl_->slots) impl_->serve(slot, creds);
  } catch (...) {
    stop();
    throw;
  }
  log().info("KME {} listening: sae={} kme={} admin={}", impl_->service->config().kme_id.value,
             impl_->slots[0].port, impl_->slots[1].port, impl_->slots[2].port);
}

void KmeHttpsServer::stop() {
  if (!impl_->running) return;
  for (auto& slot : impl_->slots) {
    if (slot.server) slot.server->stop();
    if (slot.thread.joinable()) slot.thread.join();
    slot.server.reset();
  }
  impl_->running = false;
}

int KmeHttpsServer::port(Listener listener) const {
  for (const auto& slot : impl_->slots) {
    if (slot.listener == listener) return slot.port;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct HttpsKmeTransport::Impl {
  std::unique_ptr<httplib::SSLClient> client;
};

HttpsKmeTransport::HttpsKmeTransport(const Endpoint& kme, const TlsCredentials& client,
                                     std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>()) {
  check_credentials(client);
  impl_->client = make_client(kme, client, timeout);
  impl_->client->set_keep_alive(true);
}

HttpsKmeTransport::~HttpsKmeTransport() = default;

KmeHttpResponse HttpsKmeTransport::get(const std::string& path_and_query) {
  ++requests_;
  auto res = impl_->client->Get(path_and_query);
  if (!res) throw TransportError("KME request failed: " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

HttpsPeerNotifier::HttpsPeerNotifier(KmeConfig config, std::chrono::milliseconds timeout)
    : config_(std::move(config)), timeout_(timeout) {}

void HttpsPeerNotifier::notify(KmeId peer, const KeyActivation& activation) {
  auto it = config_.peers.find(peer);
  if (it == config_.peers.end()) {
    throw PeerNotificationError("no address for peer KME " + std::to_string(peer.value));
  }
  auto cli = make_client(it->second.address, config_.peer_client_credentials, timeout_);
  auto res = cli->Post("/api/v1/internal/activate", activation_body(activation), "application/json");
  if (!res) {
    throw PeerNotificationError("peer KME " + it->second.address.to_string() +
                                " unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw PeerNotificationError("peer KME answered " + std::to_string(res->status));
  }
}

}  // namespace tlsqkd::net
