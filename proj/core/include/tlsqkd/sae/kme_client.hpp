#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "tlsqkd/common/ids.hpp"
#include "tlsqkd/keystore/key_store.hpp"

namespace tlsqkd {

struct KmeHttpResponse {
  int status = 0;
  std::string body;
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One authenticated channel from an SAE to its local KME.
class KmeTransport {
 public:
  virtual ~KmeTransport() = default;
  /// Throws TransportError when no response arrives.
  virtual KmeHttpResponse get(const std::string& path_and_query) = 0;
  /// Requests issued so far; lets callers observe caching.
  virtual std::size_t request_count() const = 0;
};

enum class SaeClientErrc {
  Unreachable,
  NotRegistered,
  PoolExhausted,
  ProtocolError,
  NotFound,
  Unauthorized,
  AlreadyConsumed,
  KmeError,
};

std::string_view to_string(SaeClientErrc code);

class SaeClientError : public std::runtime_error {
 public:
  SaeClientError(SaeClientErrc code, const std::string& what, int http_status = 0)
      : std::runtime_error(what), code_(code), http_status_(http_status) {}
  SaeClientErrc code() const { return code_; }
  int http_status() const { return http_status_; }

 private:
  SaeClientErrc code_;
  int http_status_;
};

struct DeliveredKey {
  Uuid uuid;
  KeyMaterial material{};
};

/// Blocking client for the key delivery API. No retries: every enc_keys call
/// consumes material, so retry policy belongs to the caller.
class KmeSession {
 public:
  explicit KmeSession(std::unique_ptr<KmeTransport> transport);

  /// Cached after the first successful call.
  SaeId fetch_own_sae_id();
  DeliveredKey request_key(SaeId slave);
  KeyMaterial request_key_by_id(SaeId master, const Uuid& key_uuid);

  KmeTransport& transport() { return *transport_; }

 private:
  KmeHttpResponse call(const std::string& path);

  std::unique_ptr<KmeTransport> transport_;
  std::optional<SaeId> own_id_;
};

/// Parses a `{"keys":[{"key_ID","key"}]}` container holding exactly one key.
/// Throws SaeClientError(ProtocolError) on any deviation.
DeliveredKey parse_key_container(const std::string& body);

}  // namespace tlsqkd
