#include "tlsqkd/sae/kme_client.hpp"

#include "json.hpp"
#include "tlsqkd/crypto/crypto.hpp"

namespace tlsqkd {
using nlohmann::json;

std::string_view to_string(SaeClientErrc code) {
  switch (code) {
    case SaeClientErrc::Unreachable: return "Unreachable";
    case SaeClientErrc::NotRegistered: return "NotRegistered";
    case SaeClientErrc::PoolExhausted: return "PoolExhausted";
    case SaeClientErrc::ProtocolError: return "ProtocolError";
    case SaeClientErrc::NotFound: return "NotFound";
    case SaeClientErrc::Unauthorized: return "Unauthorized";
    case SaeClientErrc::AlreadyConsumed: return "AlreadyConsumed";
    case SaeClientErrc::KmeError: return "KmeError";
  }
  return "?";
}

namespace {

std::string message_of(const KmeHttpResponse& r) {
  json j = json::parse(r.body, nullptr, false);
  if (j.is_object() && j.contains("message") && j["message"].is_string()) {
    return j["message"].get<std::string>();
  }
  return "HTTP " + std::to_string(r.status);
}

[[noreturn]] void throw_kme_error(const KmeHttpResponse& r) {
  throw SaeClientError(SaeClientErrc::KmeError, "KME error: " + message_of(r), r.status);
}

}  // namespace

DeliveredKey parse_key_container(const std::string& body) {
  auto bad = [](const std::string& why) {
    return SaeClientError(SaeClientErrc::ProtocolError, "malformed key container: " + why);
  };
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("keys") || !j["keys"].is_array()) {
    throw bad("missing keys array");
  }
  if (j["keys"].size() != 1) throw bad("expected exactly one key");
  const auto& k = j["keys"][0];
  if (!k.is_object() || !k.contains("key_ID") || !k["key_ID"].is_string() || !k.contains("key") ||
      !k["key"].is_string()) {
    throw bad("key entry lacks key_ID or key");
  }
  auto uuid = Uuid::parse(k["key_ID"].get<std::string>());
  if (!uuid) throw bad("key_ID is not a uuid");
  Bytes raw;
  try {
    raw = base64_decode(k["key"].get<std::string>());
  } catch (const DecodeError& e) {
    throw bad(e.what());
  }
  if (raw.size() != kQkdKeySize) {
    crypto::secure_zero(raw);
    throw bad("key is " + std::to_string(raw.size()) + " bytes, expected 32");
  }
  DeliveredKey out;
  out.uuid = *uuid;
  std::copy(raw.begin(), raw.end(), out.material.begin());
  crypto::secure_zero(raw);
  return out;
}

KmeSession::KmeSession(std::unique_ptr<KmeTransport> transport)
    : transport_(std::move(transport)) {}

KmeHttpResponse KmeSession::call(const std::string& path) {
  try {
    return transport_->get(path);
  } catch (const TransportError& e) {
    throw SaeClientError(SaeClientErrc::Unreachable, std::string("KME unreachable: ") + e.what());
  }
}

SaeId KmeSession::fetch_own_sae_id() {
  if (own_id_) return *own_id_;
  auto r = call("/api/v1/sae/info/me");
  if (r.status == 401) {
    throw SaeClientError(SaeClientErrc::NotRegistered, "certificate not registered at KME", 401);
  }
  if (r.status != 200) throw_kme_error(r);
  json j = json::parse(r.body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("SAE_ID") ||
      !j["SAE_ID"].is_number_unsigned()) {
    throw SaeClientError(SaeClientErrc::ProtocolError, "malformed SAE info response");
  }
  own_id_ = SaeId{j["SAE_ID"].get<std::uint64_t>()};
  return *own_id_;
}

DeliveredKey KmeSession::request_key(SaeId slave) {
  auto r = call("/api/v1/keys/" + to_string(slave) + "/enc_keys?number=1&size=256");
  switch (r.status) {
    case 200: return parse_key_container(r.body);
    case 503:
      throw SaeClientError(SaeClientErrc::PoolExhausted, "KME key pool exhausted", 503);
    case 401:
      throw SaeClientError(SaeClientErrc::NotRegistered, "certificate not registered at KME", 401);
    case 404:
      throw SaeClientError(SaeClientErrc::NotFound, "slave SAE not routable: " + message_of(r), 404);
    default: throw_kme_error(r);
  }
}

KeyMaterial KmeSession::request_key_by_id(SaeId master, const Uuid& key_uuid) {
  auto r = call("/api/v1/keys/" + to_string(master) + "/dec_keys?key_ID=" + key_uuid.to_string());
  switch (r.status) {
    case 200: {
      auto k = parse_key_container(r.body);
      if (k.uuid != key_uuid) {
        throw SaeClientError(SaeClientErrc::ProtocolError, "KME returned a different key_ID");
      }
      return k.material;
    }
    case 404: throw SaeClientError(SaeClientErrc::NotFound, message_of(r), 404);
    case 401: throw SaeClientError(SaeClientErrc::Unauthorized, message_of(r), 401);
    case 410: throw SaeClientError(SaeClientErrc::AlreadyConsumed, message_of(r), 410);
    default: throw_kme_error(r);
  }
}

}  // namespace tlsqkd
