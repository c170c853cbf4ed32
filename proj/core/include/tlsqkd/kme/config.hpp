#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tlsqkd/common/ids.hpp"

namespace tlsqkd {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Canonical text form of a certificate serial: lowercase hex, no leading
/// zeros, no separators. Accepts "0x", colons and either case.
std::string normalize_serial(std::string_view serial);

struct SaeIdentity {
  std::string cert_serial;
  SaeId sae_id;
  KmeId home_kme;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  int port = 0;
  std::string to_string() const { return host + ":" + std::to_string(port); }
};

struct PeerKme {
  KmeId id;
  Endpoint address;
  std::string cert_serial;  // serial of the client certificate the peer presents to us
};

struct TlsCredentials {
  std::filesystem::path certificate;
  std::filesystem::path private_key;
  std::filesystem::path trust_anchor;
};

struct KmeConfig {
  KmeId kme_id;
  Endpoint sae_listen;
  Endpoint kme_listen;
  Endpoint admin_listen;
  std::map<KmeId, PeerKme> peers;
  std::vector<SaeIdentity> saes;
  std::map<SaeId, KmeId> routes;
  std::vector<std::string> admin_serials;

  TlsCredentials server_credentials;
  TlsCredentials peer_client_credentials;  // used when calling other KMEs

  std::filesystem::path key_directory;
  std::optional<std::filesystem::path> journal;
  int rescan_interval_s = 5;

  /// Throws ConfigError on duplicate serials or ids, or unknown routes.
  void validate() const;

  static KmeConfig from_json_text(const std::string& text,
                                  const std::filesystem::path& base_dir = {});
  static KmeConfig load(const std::filesystem::path& path);
};

/// Lookup tables over KmeConfig. Immutable once built.
class SaeRegistry {
 public:
  explicit SaeRegistry(const KmeConfig& config);

  const SaeIdentity* by_serial(std::string_view serial) const;
  const SaeIdentity* by_id(SaeId id) const;
  std::optional<KmeId> route(SaeId id) const;
  std::optional<KmeId> peer_by_serial(std::string_view serial) const;
  bool is_admin(std::string_view serial) const;

 private:
  std::map<std::string, SaeIdentity, std::less<>> by_serial_;
  std::map<SaeId, SaeIdentity> by_id_;
  std::map<SaeId, KmeId> routes_;
  std::map<std::string, KmeId, std::less<>> peers_;
  std::vector<std::string> admins_;
};

}  // namespace tlsqkd
