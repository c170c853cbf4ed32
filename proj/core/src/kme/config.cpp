#include "tlsqkd/kme/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tlsqkd {
namespace fs = std::filesystem;
using nlohmann::json;

std::string normalize_serial(std::string_view serial) {
  std::string out;
  std::string_view s = serial;
  if (s.size() >= 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) s.remove_prefix(2);
  for (char c : s) {
    if (c == ':' || c == ' ') continue;
    if (!std::isxdigit(static_cast<unsigned char>(c))) {
      throw ConfigError("certificate serial is not hexadecimal: " + std::string(serial));
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  auto nz = out.find_first_not_of('0');
  out = nz == std::string::npos ? "0" : out.substr(nz);
  return out;
}

namespace {

Endpoint parse_endpoint(const json& j, const char* what) {
  Endpoint e;
  if (j.is_string()) {
    auto text = j.get<std::string>();
    auto colon = text.rfind(':');
    if (colon == std::string::npos) throw ConfigError(std::string(what) + ": expected host:port");
    e.host = text.substr(0, colon);
    auto port = parse_u64(text.substr(colon + 1));
    if (!port || *port > 65535) throw ConfigError(std::string(what) + ": bad port");
    e.port = static_cast<int>(*port);
    return e;
  }
  e.host = j.value("host", e.host);
  e.port = j.value("port", 0);
  return e;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

TlsCredentials parse_credentials(const json& j, const fs::path& base) {
  TlsCredentials c;
  c.certificate = resolve(base, j.at("certificate").get<std::string>());
  c.private_key = resolve(base, j.at("private_key").get<std::string>());
  c.trust_anchor = resolve(base, j.at("trust_anchor").get<std::string>());
  return c;
}

}  // namespace

void KmeConfig::validate() const {
  std::set<std::string> serials;
  std::set<SaeId> ids;
  for (const auto& s : saes) {
    if (!serials.insert(s.cert_serial).second) {
      throw ConfigError("duplicate SAE certificate serial " + s.cert_serial);
    }
    if (!ids.insert(s.sae_id).second) {
      throw ConfigError("duplicate SAE id " + to_string(s.sae_id));
    }
  }
  for (const auto& [sae, kme] : routes) {
    if (kme != kme_id && !peers.count(kme)) {
      throw ConfigError("route for SAE " + to_string(sae) + " names unknown KME " + to_string(kme));
    }
  }
  std::set<std::string> peer_serials;
  for (const auto& [id, p] : peers) {
    if (id == kme_id) throw ConfigError("KME lists itself as a peer");
    if (!peer_serials.insert(p.cert_serial).second) {
      throw ConfigError("duplicate peer KME serial " + p.cert_serial);
    }
  }
}

KmeConfig KmeConfig::from_json_text(const std::string& text, const fs::path& base_dir) {
  KmeConfig c;
  try {
    json j = json::parse(text);
    c.kme_id = KmeId{j.at("kme_id").get<std::uint64_t>()};
    c.sae_listen = parse_endpoint(j.at("listen").at("sae"), "listen.sae");
    c.kme_listen = parse_endpoint(j.at("listen").at("kme"), "listen.kme");
    c.admin_listen = parse_endpoint(j.at("listen").at("admin"), "listen.admin");
    for (const auto& p : j.value("peers", json::array())) {
      PeerKme peer;
      peer.id = KmeId{p.at("kme_id").get<std::uint64_t>()};
      peer.address = parse_endpoint(p.at("address"), "peers.address");
      peer.cert_serial = normalize_serial(p.at("cert_serial").get<std::string>());
      c.peers[peer.id] = peer;
    }
    for (const auto& s : j.value("saes", json::array())) {
      SaeIdentity id;
      id.cert_serial = normalize_serial(s.at("cert_serial").get<std::string>());
      id.sae_id = SaeId{s.at("sae_id").get<std::uint64_t>()};
      id.home_kme = KmeId{s.value("home_kme", c.kme_id.value)};
      c.saes.push_back(id);
    }
    for (const auto& r : j.value("routes", json::array())) {
      c.routes[SaeId{r.at("sae_id").get<std::uint64_t>()}] = KmeId{r.at("kme_id").get<std::uint64_t>()};
    }
    // Local SAEs are routable to this KME without an explicit entry.
    for (const auto& s : c.saes) c.routes.emplace(s.sae_id, s.home_kme);
    for (const auto& a : j.value("admin_serials", json::array())) {
      c.admin_serials.push_back(normalize_serial(a.get<std::string>()));
    }
    c.server_credentials = parse_credentials(j.at("server_credentials"), base_dir);
    if (j.contains("peer_client_credentials")) {
      c.peer_client_credentials = parse_credentials(j.at("peer_client_credentials"), base_dir);
    } else {
      c.peer_client_credentials = c.server_credentials;
    }
    c.key_directory = resolve(base_dir, j.at("key_directory").get<std::string>());
    if (j.contains("journal")) c.journal = resolve(base_dir, j.at("journal").get<std::string>());
    c.rescan_interval_s = j.value("rescan_interval_s", c.rescan_interval_s);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid KME config: ") + e.what());
  }
  c.validate();
  return c;
}

KmeConfig KmeConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str(), path.parent_path());
}

SaeRegistry::SaeRegistry(const KmeConfig& config) : routes_(config.routes) {
  for (const auto& s : config.saes) {
    by_serial_.emplace(s.cert_serial, s);
    by_id_.emplace(s.sae_id, s);
  }
  for (const auto& [id, p] : config.peers) peers_.emplace(p.cert_serial, id);
  admins_ = config.admin_serials;
}

const SaeIdentity* SaeRegistry::by_serial(std::string_view serial) const {
  auto it = by_serial_.find(serial);
  return it == by_serial_.end() ? nullptr : &it->second;
}

const SaeIdentity* SaeRegistry::by_id(SaeId id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &it->second;
}

std::optional<KmeId> SaeRegistry::route(SaeId id) const {
  auto it = routes_.find(id);
  if (it == routes_.end()) return std::nullopt;
  return it->second;
}

std::optional<KmeId> SaeRegistry::peer_by_serial(std::string_view serial) const {
  auto it = peers_.find(serial);
  if (it == peers_.end()) return std::nullopt;
  return it->second;
}

bool SaeRegistry::is_admin(std::string_view serial) const {
  return std::find(admins_.begin(), admins_.end(), serial) != admins_.end();
}

}  // namespace tlsqkd
