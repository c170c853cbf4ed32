#include "tlsqkd/kme/in_process.hpp"

#include "json.hpp"

namespace tlsqkd {

KmeRequest make_get_request(Listener listener, const std::string& serial,
                            const std::string& path_and_query) {
  KmeRequest req;
  req.listener = listener;
  req.caller.cert_serial = serial;
  req.method = "GET";
  auto q = path_and_query.find('?');
  req.path = path_and_query.substr(0, q);
  if (q != std::string::npos) {
    std::string_view rest(path_and_query);
    rest.remove_prefix(q + 1);
    while (!rest.empty()) {
      auto amp = rest.find('&');
      auto pair = rest.substr(0, amp);
      auto eq = pair.find('=');
      if (eq != std::string_view::npos) {
        req.query[std::string(pair.substr(0, eq))] = std::string(pair.substr(eq + 1));
      }
      if (amp == std::string_view::npos) break;
      rest.remove_prefix(amp + 1);
    }
  }
  return req;
}

KmeHttpResponse InProcessKmeTransport::get(const std::string& path_and_query) {
  ++requests_;
  auto resp = service_.handle(make_get_request(Listener::Sae, serial_, path_and_query));
  return {resp.status, resp.body};
}

std::string activation_body(const KeyActivation& activation) {
  return nlohmann::json{{"key_ID", activation.key_uuid.to_string()},
                        {"master_SAE_ID", activation.master_sae.value},
                        {"slave_SAE_ID", activation.slave_sae.value}}
      .dump();
}

void InProcessPeerNotifier::notify(KmeId peer, const KeyActivation& activation) {
  auto it = peers_.find(peer);
  if (it == peers_.end()) throw PeerNotificationError("no route to KME " + to_string(peer));
  KmeRequest req;
  req.listener = Listener::Kme;
  req.caller.cert_serial = serial_;
  req.method = "POST";
  req.path = "/api/v1/internal/activate";
  req.body = activation_body(activation);
  auto resp = it->second->handle(req);
  if (resp.status != 200) {
    throw PeerNotificationError("KME " + to_string(peer) + " answered " +
                                std::to_string(resp.status));
  }
}

}  // namespace tlsqkd
