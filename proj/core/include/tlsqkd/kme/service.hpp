#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "tlsqkd/keystore/key_store.hpp"
#include "tlsqkd/kme/config.hpp"

namespace tlsqkd {

enum class Listener { Sae, Kme, Admin };

/// Identity established by the transport. `cert_serial` is empty when the
/// client presented no certificate or one that failed chain verification.
struct Caller {
  std::optional<std::string> cert_serial;
};

struct KmeRequest {
  Listener listener = Listener::Sae;
  Caller caller;
  std::string method = "GET";
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct KmeResponse {
  int status = 200;
  std::string body;  // JSON
};

inline constexpr std::string_view kPoolExhaustedReason = "key pool exhausted";

/// Delivers a KeyActivation to the KME that shares the key's pool.
/// Any exception means the peer did not acknowledge.
class PeerNotifier {
 public:
  virtual ~PeerNotifier() = default;
  virtual void notify(KmeId peer, const KeyActivation& activation) = 0;
};

class PeerNotificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// ETSI GS QKD 014 style key delivery. Pure request/response logic; the
/// HTTPS listeners and the in-process harness both feed it KmeRequests.
class KmeService {
 public:
  KmeService(KmeConfig config, std::shared_ptr<KeyStore> store,
             std::shared_ptr<PeerNotifier> notifier);

  KmeResponse handle(const KmeRequest& request);

  KmeResponse get_key(const Caller& caller, std::string_view slave_text,
                      const std::map<std::string, std::string>& params);
  KmeResponse get_key_by_id(const Caller& caller, std::string_view master_text,
                            std::string_view key_id_text);
  KmeResponse activate(const Caller& caller, const std::string& body);
  KmeResponse sae_info_me(const Caller& caller);
  KmeResponse status(const Caller& caller, std::string_view slave_text);
  KmeResponse admin_entropy(const Caller& caller, std::string_view peer_text);

  const KmeConfig& config() const { return config_; }
  const SaeRegistry& registry() const { return registry_; }
  KeyStore& store() { return *store_; }
  void set_notifier(std::shared_ptr<PeerNotifier> notifier) { notifier_ = std::move(notifier); }

 private:
  KmeResponse route(const KmeRequest& request);

  KmeConfig config_;
  SaeRegistry registry_;
  std::shared_ptr<KeyStore> store_;
  std::shared_ptr<PeerNotifier> notifier_;
};

}  // namespace tlsqkd
