#include "tlsqkd/kme/service.hpp"

#include <vector>

#include "json.hpp"
#include "tlsqkd/common/log.hpp"
#include "tlsqkd/crypto/crypto.hpp"

namespace tlsqkd {
using nlohmann::json;

namespace {

KmeResponse reply(int status, const json& body) { return {status, body.dump()}; }

KmeResponse error(int status, std::string_view message) {
  return reply(status, json{{"message", message}});
}

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  while (!path.empty()) {
    auto slash = path.find('/');
    auto part = path.substr(0, slash);
    if (!part.empty()) parts.push_back(part);
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
  }
  return parts;
}

int status_for(KeyStoreErrc code) {
  switch (code) {
    case KeyStoreErrc::PoolExhausted: return 503;
    case KeyStoreErrc::NotFound: return 404;
    case KeyStoreErrc::Unauthorized: return 401;
    case KeyStoreErrc::Gone: return 410;
    case KeyStoreErrc::NoMaterial: return 404;
    case KeyStoreErrc::ActivationConflict: return 409;
    case KeyStoreErrc::IngestFailed:
    case KeyStoreErrc::UuidCollision: return 500;
  }
  return 500;
}

const char* listener_name(Listener l) {
  switch (l) {
    case Listener::Sae: return "sae";
    case Listener::Kme: return "kme";
    case Listener::Admin: return "admin";
  }
  return "?";
}

}  // namespace

KmeService::KmeService(KmeConfig config, std::shared_ptr<KeyStore> store,
                       std::shared_ptr<PeerNotifier> notifier)
    : config_(std::move(config)),
      registry_(config_),
      store_(std::move(store)),
      notifier_(std::move(notifier)) {
  config_.validate();
}

KmeResponse KmeService::handle(const KmeRequest& request) {
  KmeResponse resp = route(request);
  std::string who = request.caller.cert_serial.value_or("-");
  if (request.caller.cert_serial) {
    if (const auto* sae = registry_.by_serial(*request.caller.cert_serial)) {
      who = "sae " + to_string(sae->sae_id);
    } else if (auto peer = registry_.peer_by_serial(*request.caller.cert_serial)) {
      who = "kme " + to_string(*peer);
    }
  }
  log().info("[kme {}] {} {} {} caller={} -> {}", to_string(config_.kme_id),
             listener_name(request.listener), request.method, request.path, who, resp.status);
  return resp;
}

KmeResponse KmeService::route(const KmeRequest& req) {
  // Authentication precedes routing so that unauthenticated probes learn
  // nothing about which paths exist.
  const auto& serial = req.caller.cert_serial;
  switch (req.listener) {
    case Listener::Sae:
      if (!serial || !registry_.by_serial(*serial)) return error(401, "unknown client certificate");
      break;
    case Listener::Kme:
      if (!serial || !registry_.peer_by_serial(*serial)) return error(401, "unknown peer KME certificate");
      break;
    case Listener::Admin:
      if (!serial || !registry_.is_admin(*serial)) return error(401, "admin credential required");
      break;
  }

  auto parts = split_path(req.path);
  auto is = [&](std::initializer_list<std::string_view> expect) {
    if (parts.size() != expect.size()) return false;
    std::size_t i = 0;
    for (auto e : expect) {
      if (!e.empty() && parts[i] != e) return false;
      ++i;
    }
    return true;
  };
  const bool get = req.method == "GET";
  const bool post = req.method == "POST";

  if (req.listener == Listener::Sae) {
    if (is({"api", "v1", "keys", "", "enc_keys"})) {
      if (!get && !post) return error(405, "method not allowed");
      auto params = req.query;
      if (post && !req.body.empty()) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) return error(400, "malformed request body");
        if (body.contains("number")) params["number"] = body["number"].dump();
        if (body.contains("size")) params["size"] = body["size"].dump();
      }
      return get_key(req.caller, parts[3], params);
    }
    if (is({"api", "v1", "keys", "", "dec_keys"})) {
      if (!get && !post) return error(405, "method not allowed");
      std::string key_id;
      if (auto it = req.query.find("key_ID"); it != req.query.end()) key_id = it->second;
      if (post && key_id.empty() && !req.body.empty()) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("key_IDs") ||
            !body["key_IDs"].is_array() || body["key_IDs"].size() != 1 ||
            !body["key_IDs"][0].is_object() || !body["key_IDs"][0].contains("key_ID") ||
            !body["key_IDs"][0]["key_ID"].is_string()) {
          return error(400, "malformed request body");
        }
        key_id = body["key_IDs"][0]["key_ID"].get<std::string>();
      }
      return get_key_by_id(req.caller, parts[3], key_id);
    }
    if (is({"api", "v1", "keys", "", "status"})) {
      if (!get) return error(405, "method not allowed");
      return status(req.caller, parts[3]);
    }
    if (is({"api", "v1", "sae", "info", "me"})) {
      if (!get) return error(405, "method not allowed");
      return sae_info_me(req.caller);
    }
  } else if (req.listener == Listener::Kme) {
    if (is({"api", "v1", "internal", "activate"})) {
      if (!post) return error(405, "method not allowed");
      return activate(req.caller, req.body);
    }
  } else if (req.listener == Listener::Admin) {
    if (is({"api", "v1", "admin", "entropy", ""})) {
      if (!get) return error(405, "method not allowed");
      return admin_entropy(req.caller, parts[4]);
    }
  }
  return error(404, "no such route");
}

KmeResponse KmeService::get_key(const Caller& caller, std::string_view slave_text,
                                const std::map<std::string, std::string>& params) {
  const SaeIdentity* master = caller.cert_serial ? registry_.by_serial(*caller.cert_serial) : nullptr;
  if (!master) return error(401, "unknown client certificate");

  if (auto it = params.find("number"); it != params.end() && it->second != "1") {
    return error(400, "only single-key requests are supported");
  }
  if (auto it = params.find("size"); it != params.end() && it->second != "256") {
    return error(400, "key size is fixed to 256 bits");
  }
  auto slave_value = parse_u64(slave_text);
  if (!slave_value) return error(400, "slave SAE id must be a decimal integer");
  SaeId slave{*slave_value};
  auto owner = registry_.route(slave);
  if (!owner || *owner == config_.kme_id || !config_.peers.count(*owner)) {
    return error(404, "slave SAE is not routable");
  }

  try {
    auto reservation = store_->begin_reservation(*owner, master->sae_id, slave);
    try {
      if (!notifier_) throw PeerNotificationError("no peer notifier configured");
      notifier_->notify(*owner, reservation.activation());
    } catch (const std::exception& e) {
      // The reservation's destructor returns the key to the pool.
      log().error("[kme {}] activation of {} at KME {} failed: {}", to_string(config_.kme_id),
                  reservation.uuid().to_string(), to_string(*owner), e.what());
      return error(502, "peer KME did not acknowledge the key activation");
    }
    reservation.commit();
    json key{{"key_ID", reservation.uuid().to_string()},
             {"key", base64_encode(reservation.material())}};
    return reply(200, json{{"keys", json::array({key})}});
  } catch (const KeyStoreError& e) {
    if (e.code() == KeyStoreErrc::PoolExhausted) return error(503, kPoolExhaustedReason);
    return error(status_for(e.code()), e.what());
  }
}

KmeResponse KmeService::get_key_by_id(const Caller& caller, std::string_view master_text,
                                      std::string_view key_id_text) {
  const SaeIdentity* slave = caller.cert_serial ? registry_.by_serial(*caller.cert_serial) : nullptr;
  if (!slave) return error(401, "unknown client certificate");
  auto master_value = parse_u64(master_text);
  if (!master_value) return error(400, "master SAE id must be a decimal integer");
  auto uuid = Uuid::parse(key_id_text);
  if (!uuid) return error(400, "key_ID must be a uuid");

  try {
    KeyMaterial material = store_->take_key_by_uuid(*uuid, slave->sae_id, SaeId{*master_value});
    json key{{"key_ID", uuid->to_string()}, {"key", base64_encode(material)}};
    crypto::secure_zero(material);
    return reply(200, json{{"keys", json::array({key})}});
  } catch (const KeyStoreError& e) {
    return error(status_for(e.code()), e.what());
  }
}

KmeResponse KmeService::activate(const Caller& caller, const std::string& body) {
  auto peer = caller.cert_serial ? registry_.peer_by_serial(*caller.cert_serial) : std::nullopt;
  if (!peer) return error(401, "unknown peer KME certificate");

  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("key_ID") || !j["key_ID"].is_string() ||
      !j.contains("master_SAE_ID") || !j["master_SAE_ID"].is_number_unsigned() ||
      !j.contains("slave_SAE_ID") || !j["slave_SAE_ID"].is_number_unsigned()) {
    return error(400, "malformed activation");
  }
  auto uuid = Uuid::parse(j["key_ID"].get<std::string>());
  if (!uuid) return error(400, "key_ID must be a uuid");
  KeyActivation act{*uuid, SaeId{j["master_SAE_ID"].get<std::uint64_t>()},
                    SaeId{j["slave_SAE_ID"].get<std::uint64_t>()}};
  try {
    auto outcome = store_->apply_activation(*peer, act);
    return reply(200, json{{"key_ID", uuid->to_string()},
                           {"status", outcome == ActivationOutcome::Applied ? "activated"
                                                                            : "already-activated"}});
  } catch (const KeyStoreError& e) {
    if (e.code() == KeyStoreErrc::NotFound) {
      log().critical("[kme {}] ALERT: KME {} activated unknown key {}; key streams may be "
                     "desynchronized",
                     to_string(config_.kme_id), to_string(*peer), uuid->to_string());
    }
    return error(status_for(e.code()), e.what());
  }
}

KmeResponse KmeService::sae_info_me(const Caller& caller) {
  const SaeIdentity* sae = caller.cert_serial ? registry_.by_serial(*caller.cert_serial) : nullptr;
  if (!sae) return error(401, "unknown client certificate");
  return reply(200, json{{"SAE_ID", sae->sae_id.value}});
}

KmeResponse KmeService::status(const Caller& caller, std::string_view slave_text) {
  const SaeIdentity* master = caller.cert_serial ? registry_.by_serial(*caller.cert_serial) : nullptr;
  if (!master) return error(401, "unknown client certificate");
  auto slave_value = parse_u64(slave_text);
  if (!slave_value) return error(400, "slave SAE id must be a decimal integer");
  auto owner = registry_.route(SaeId{*slave_value});
  if (!owner || *owner == config_.kme_id) return error(404, "slave SAE is not routable");

  auto s = store_->status(*owner);
  return reply(200, json{{"source_KME_ID", to_string(config_.kme_id)},
                         {"target_KME_ID", to_string(*owner)},
                         {"master_SAE_ID", master->sae_id.value},
                         {"slave_SAE_ID", *slave_value},
                         {"key_size", s.key_size_bits},
                         {"stored_key_count", s.stored_key_count},
                         {"max_key_per_request", s.max_keys_per_request},
                         {"max_keys_per_request", s.max_keys_per_request},
                         {"max_key_size", s.key_size_bits},
                         {"min_key_size", s.key_size_bits}});
}

KmeResponse KmeService::admin_entropy(const Caller& caller, std::string_view peer_text) {
  if (!caller.cert_serial || !registry_.is_admin(*caller.cert_serial)) {
    return error(401, "admin credential required");
  }
  auto peer_value = parse_u64(peer_text);
  if (!peer_value) return error(400, "peer KME id must be a decimal integer");
  KmeId peer{*peer_value};
  try {
    double h = store_->entropy_report(peer);
    auto s = store_->status(peer);
    return reply(200, json{{"peer_KME_ID", peer.value},
                           {"entropy_bits_per_byte", h},
                           {"stored_key_count", s.stored_key_count},
                           {"total_key_count", store_->total_keys(peer)}});
  } catch (const KeyStoreError& e) {
    return error(status_for(e.code()), e.what());
  }
}

}  // namespace tlsqkd
