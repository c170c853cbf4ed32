#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "tlsqkd/kme/service.hpp"
#include "tlsqkd/sae/kme_client.hpp"

namespace tlsqkd::net {

/// Checks that the certificate, key and trust anchor parse and that the key
/// matches. Throws ConfigError naming the offending file.
void check_credentials(const TlsCredentials& creds);

/// Lowercase-hex serial of a certificate file, as normalize_serial().
std::string certificate_serial(const std::filesystem::path& pem);

/// The three mutually authenticated listeners (SAE, peer KME, admin) in
/// front of a KmeService.
class KmeHttpsServer {
 public:
  explicit KmeHttpsServer(std::shared_ptr<KmeService> service);
  ~KmeHttpsServer();
  KmeHttpsServer(const KmeHttpsServer&) = delete;
  KmeHttpsServer& operator=(const KmeHttpsServer&) = delete;

  /// Binds all listeners (port 0 picks an ephemeral port) and serves on
  /// background threads. Throws ConfigError or TransportError.
  void start();
  void stop();

  int port(Listener listener) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// SAE side of the key delivery API over HTTPS with a client certificate.
/// One keep-alive connection per instance.
class HttpsKmeTransport final : public KmeTransport {
 public:
  HttpsKmeTransport(const Endpoint& kme, const TlsCredentials& client,
                    std::chrono::milliseconds timeout = std::chrono::seconds(5));
  ~HttpsKmeTransport() override;

  KmeHttpResponse get(const std::string& path_and_query) override;
  std::size_t request_count() const override { return requests_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t requests_ = 0;
};

/// POSTs activations to peer KMEs, one short-lived connection per call.
class HttpsPeerNotifier final : public PeerNotifier {
 public:
  HttpsPeerNotifier(KmeConfig config,
                    std::chrono::milliseconds timeout = std::chrono::seconds(5));
  void notify(KmeId peer, const KeyActivation& activation) override;

 private:
  KmeConfig config_;
  std::chrono::milliseconds timeout_;
};

}  // namespace tlsqkd::net
