#pragma once

#include <functional>
#include <map>
#include <string>

#include "tlsqkd/kme/service.hpp"
#include "tlsqkd/sae/kme_client.hpp"

namespace tlsqkd {

/// Splits "path?a=b&c=d" into a KmeRequest. No percent-decoding: every
/// parameter this API uses is a decimal number or a uuid.
KmeRequest make_get_request(Listener listener, const std::string& serial,
                            const std::string& path_and_query);

/// Calls a KmeService directly as the holder of certificate `serial`.
class InProcessKmeTransport final : public KmeTransport {
 public:
  InProcessKmeTransport(KmeService& service, std::string serial)
      : service_(service), serial_(std::move(serial)) {}

  KmeHttpResponse get(const std::string& path_and_query) override;
  std::size_t request_count() const override { return requests_; }

 private:
  KmeService& service_;
  std::string serial_;
  std::size_t requests_ = 0;
};

/// Delivers activations straight into peer services, presenting `serial`.
class InProcessPeerNotifier final : public PeerNotifier {
 public:
  explicit InProcessPeerNotifier(std::string serial) : serial_(std::move(serial)) {}

  void add_peer(KmeId id, KmeService* service) { peers_[id] = service; }
  void notify(KmeId peer, const KeyActivation& activation) override;

 private:
  std::string serial_;
  std::map<KmeId, KmeService*> peers_;
};

/// JSON body of POST /api/v1/internal/activate.
std::string activation_body(const KeyActivation& activation);

}  // namespace tlsqkd
