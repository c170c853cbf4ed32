#include "tlsqkd/sim/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "json.hpp"
#include "tlsqkd/kme/in_process.hpp"
#include "tlsqkd/tls/challenge.hpp"

namespace tlsqkd::sim {

using nlohmann::json;
using tls::Record;

namespace {

bool is_lan(LinkId l) {
  return l == LinkId::MasterKme1 || l == LinkId::SlaveKme2 || l == LinkId::ThirdKme2;
}

std::optional<Node> parse_node(std::string_view name) {
  for (auto n : {Node::SaeMaster, Node::SaeSlave, Node::Kme1, Node::Kme2, Node::SaeThird}) {
    if (to_string(n) == name) return n;
  }
  return std::nullopt;
}

std::string_view to_string(Fault::Kind k) {
  switch (k) {
    case Fault::Kind::DropOnce: return "drop_once";
    case Fault::Kind::CorruptByte: return "corrupt_byte";
    case Fault::Kind::Duplicate: return "duplicate";
  }
  return "?";
}

/// SAE -> KME request/response legs over a simulated keep-alive HTTPS
/// connection. The first request pays the connection setup.
class SimKmeTransport final : public KmeTransport {
 public:
  using Hook = std::function<void(Node, KmeHttpResponse&)>;

  SimKmeTransport(Simulator& sim, LinkId link, Node sae, KmeService& kme, std::string serial,
                  int setup_rtts, Hook hook)
      : sim_(sim), link_(link), sae_(sae), kme_node_(ends(link)[1]), kme_(kme),
        serial_(std::move(serial)), setup_rtts_(setup_rtts), hook_(std::move(hook)) {}

  KmeHttpResponse get(const std::string& path_and_query) override {
    ++requests_;
    if (!connected_) {
      for (int i = 0; i < setup_rtts_; ++i) {
        sim_.exchange(link_, sae_, 0, "https setup");
        sim_.exchange(link_, kme_node_, 0, "https setup");
      }
      connected_ = true;
    }
    sim_.exchange(link_, sae_, path_and_query.size(), "GET " + path_and_query);
    auto resp = kme_.handle(make_get_request(Listener::Sae, serial_, path_and_query));
    KmeHttpResponse out{resp.status, resp.body};
    sim_.exchange(link_, kme_node_, out.body.size(), "HTTP " + std::to_string(out.status));
    if (hook_) hook_(sae_, out);
    return out;
  }

  std::size_t request_count() const override { return requests_; }

 private:
  Simulator& sim_;
  LinkId link_;
  Node sae_;
  Node kme_node_;
  KmeService& kme_;
  std::string serial_;
  int setup_rtts_;
  Hook hook_;
  bool connected_ = false;
  std::size_t requests_ = 0;
};

/// KME -> KME activation over a fresh simulated HTTPS connection per call.
class SimPeerNotifier final : public PeerNotifier {
 public:
  SimPeerNotifier(Simulator& sim, Node self, KmeService* peer, std::string serial, int setup_rtts)
      : sim_(sim), self_(self), peer_(peer), serial_(std::move(serial)), setup_rtts_(setup_rtts) {}

  void notify(KmeId, const KeyActivation& activation) override {
    Node other = self_ == Node::Kme1 ? Node::Kme2 : Node::Kme1;
    for (int i = 0; i < setup_rtts_; ++i) {
      sim_.exchange(LinkId::Kme1Kme2, self_, 0, "https setup");
      sim_.exchange(LinkId::Kme1Kme2, other, 0, "https setup");
    }
    KmeRequest req;
    req.listener = Listener::Kme;
    req.caller.cert_serial = serial_;
    req.method = "POST";
    req.path = "/api/v1/internal/activate";
    req.body = activation_body(activation);
    sim_.exchange(LinkId::Kme1Kme2, self_, req.body.size(), "POST activate");
    auto resp = peer_->handle(req);
    sim_.exchange(LinkId::Kme1Kme2, other, resp.body.size(), "HTTP " + std::to_string(resp.status));
    if (resp.status != 200) {
      throw PeerNotificationError("peer KME answered " + std::to_string(resp.status));
    }
  }

 private:
  Simulator& sim_;
  Node self_;
  KmeService* peer_;
  std::string serial_;
  int setup_rtts_;
};

KmeConfig make_kme_config(KmeId self) {
  KmeConfig c;
  c.kme_id = self;
  KmeId other = self == kKme1 ? kKme2 : kKme1;
  c.peers[other] = PeerKme{other, {}, Testbed::serial(other == kKme1 ? Node::Kme1 : Node::Kme2)};
  c.saes.push_back({Testbed::serial(Node::SaeMaster), kMasterSae, kKme1});
  c.saes.push_back({Testbed::serial(Node::SaeSlave), kSlaveSae, kKme2});
  c.saes.push_back({Testbed::serial(Node::SaeThird), kThirdSae, kKme2});
  for (const auto& s : c.saes) c.routes[s.sae_id] = s.home_kme;
  c.admin_serials.push_back("ad");
  c.validate();
  return c;
}

Bytes material(std::uint64_t seed, std::size_t keys) {
  return seeded_key_material(seed, keys * kQkdKeySize);
}

std::string record_label(const Record& r) {
  switch (r.type) {
    case tls::ContentType::Handshake: {
      if (r.body.empty()) return "handshake";
      switch (static_cast<tls::HandshakeType>(r.body[0])) {
        case tls::HandshakeType::ClientHello: return "ClientHello";
        case tls::HandshakeType::ServerHello: return "ServerHello";
        case tls::HandshakeType::Finished: return "Finished";
        default: return "handshake";
      }
    }
    case tls::ContentType::ChallengeAck: return "ChallengeAck";
    case tls::ContentType::Alert: return "Alert";
    case tls::ContentType::ApplicationData: return "ApplicationData";
  }
  return "record";
}

Stats stats_of(std::vector<double> samples) {
  Stats s;
  s.min = *std::min_element(samples.begin(), samples.end());
  s.max = *std::max_element(samples.begin(), samples.end());
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  s.samples = std::move(samples);
  return s;
}

json stats_json(const Stats& s) {
  return {{"mean_ms", s.mean}, {"min_ms", s.min}, {"max_ms", s.max}, {"samples_ms", s.samples}};
}

json per_link_json(const std::map<LinkId, LinkCount>& m) {
  json j = json::object();
  for (const auto& [link, c] : m) {
    j[std::string(to_string(link))] = {
        {"forward", c.forward}, {"backward", c.backward}, {"total", c.total()}};
  }
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------

double ScenarioConfig::latency(LinkId link) const {
  if (auto it = link_latency_ms.find(link); it != link_latency_ms.end()) return it->second;
  return is_lan(link) ? lan_ms : wan_ms;
}

ScenarioConfig ScenarioConfig::from_json_text(const std::string& text) {
  ScenarioConfig c;
  try {
    json j = json::parse(text);
    c.lan_ms = j.value("lan_ms", c.lan_ms);
    c.wan_ms = j.value("wan_ms", c.wan_ms);
    c.jitter_ms = j.value("jitter_ms", c.jitter_ms);
    const json overrides = j.value("link_latency_ms", json::object());
    for (const auto& [name, v] : overrides.items()) {
      auto link = parse_link(name);
      if (!link) throw ConfigError("unknown link " + name);
      c.link_latency_ms[*link] = v.get<double>();
    }
    c.setup_rtts = j.value("setup_rtts", c.setup_rtts);
    c.pk_op_ms = j.value("pk_op_ms", c.pk_op_ms);
    auto flags = [](const json& f, EndpointFlags d) {
      d.qkd = f.value("qkd", d.qkd);
      d.qkd_only = f.value("qkd_only", d.qkd_only);
      return d;
    };
    c.client = flags(j.value("client", json::object()), c.client);
    c.server = flags(j.value("server", json::object()), c.server);
    c.keys_per_pool = j.value("keys_per_pool", c.keys_per_pool);
    c.seed = j.value("seed", c.seed);
    c.material_seed = j.value("material_seed", c.material_seed);
    if (j.contains("slave_material_seed")) {
      c.slave_material_seed = j.at("slave_material_seed").get<std::uint64_t>();
    }
    c.echo_bytes = j.value("echo_bytes", c.echo_bytes);
    const json fault_list = j.value("faults", json::array());
    for (const auto& f : fault_list) {
      Fault fault;
      auto link = parse_link(f.at("link").get<std::string>());
      auto from = parse_node(f.at("from").get<std::string>());
      if (!link || !from) throw ConfigError("fault names an unknown link or node");
      fault.link = *link;
      fault.from = *from;
      fault.message_index = f.value("index", std::size_t{0});
      fault.offset = f.value("offset", std::size_t{0});
      auto kind = f.at("kind").get<std::string>();
      if (kind == "drop_once") {
        fault.kind = Fault::Kind::DropOnce;
      } else if (kind == "corrupt_byte") {
        fault.kind = Fault::Kind::CorruptByte;
      } else if (kind == "duplicate") {
        fault.kind = Fault::Kind::Duplicate;
      } else {
        throw ConfigError("unknown fault kind " + kind);
      }
      c.faults.push_back(fault);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  if (c.lan_ms < 0 || c.wan_ms < 0 || c.jitter_ms < 0 || c.pk_op_ms < 0 || c.setup_rtts < 0) {
    throw ConfigError("scenario: latencies and costs must be non-negative");
  }
  if ((c.client.qkd_only && !c.client.qkd) || (c.server.qkd_only && !c.server.qkd)) {
    throw ConfigError("scenario: qkd_only requires qkd");
  }
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string ScenarioConfig::to_json() const {
  json j{{"lan_ms", lan_ms},
         {"wan_ms", wan_ms},
         {"jitter_ms", jitter_ms},
         {"setup_rtts", setup_rtts},
         {"pk_op_ms", pk_op_ms},
         {"client", {{"qkd", client.qkd}, {"qkd_only", client.qkd_only}}},
         {"server", {{"qkd", server.qkd}, {"qkd_only", server.qkd_only}}},
         {"keys_per_pool", keys_per_pool},
         {"seed", seed},
         {"material_seed", material_seed},
         {"echo_bytes", echo_bytes}};
  if (slave_material_seed) j["slave_material_seed"] = *slave_material_seed;
  json overrides = json::object();
  for (const auto& [l, v] : link_latency_ms) overrides[std::string(to_string(l))] = v;
  j["link_latency_ms"] = overrides;
  json fault_list = json::array();
  for (const auto& f : faults) {
    fault_list.push_back({{"link", to_string(f.link)},
                      {"from", to_string(f.from)},
                      {"index", f.message_index},
                      {"offset", f.offset},
                      {"kind", to_string(f.kind)}});
  }
  j["faults"] = fault_list;
  return j.dump();
}

// ---------------------------------------------------------------------------

std::string Testbed::serial(Node node) {
  switch (node) {
    case Node::SaeMaster: return "a1";
    case Node::SaeSlave: return "b2";
    case Node::SaeThird: return "c3";
    case Node::Kme1: return "e1";
    case Node::Kme2: return "e2";
  }
  return {};
}

Testbed::Testbed(ScenarioConfig config)
    : config_(std::move(config)), sim_(config_.seed),
      store1_(std::make_shared<KeyStore>()), store2_(std::make_shared<KeyStore>()) {
  for (std::size_t i = 0; i < kLinkCount; ++i) {
    auto l = static_cast<LinkId>(i);
    sim_.set_link(l, config_.latency(l), config_.jitter_ms);
  }
  for (const auto& f : config_.faults) sim_.add_fault(f);

  store1_->ingest_stream(kKme2, material(config_.material_seed, config_.keys_per_pool));
  store2_->ingest_stream(
      kKme1, material(config_.slave_material_seed.value_or(config_.material_seed),
                      config_.keys_per_pool));

  kme1_ = std::make_unique<KmeService>(make_kme_config(kKme1), store1_, nullptr);
  kme2_ = std::make_unique<KmeService>(make_kme_config(kKme2), store2_, nullptr);
  kme1_->set_notifier(std::make_shared<SimPeerNotifier>(sim_, Node::Kme1, kme2_.get(),
                                                        serial(Node::Kme1), config_.setup_rtts));
  kme2_->set_notifier(std::make_shared<SimPeerNotifier>(sim_, Node::Kme2, kme1_.get(),
                                                        serial(Node::Kme2), config_.setup_rtts));
}

Testbed::~Testbed() = default;

crypto::SeededRandom& Testbed::rng(Node node) {
  auto& slot = rngs_[node];
  if (!slot) {
    slot = std::make_unique<crypto::SeededRandom>(config_.seed,
                                                  std::string("endpoint:") + std::string(to_string(node)));
  }
  return *slot;
}

std::unique_ptr<KmeSession> Testbed::session(Node sae) {
  return std::make_unique<KmeSession>(std::make_unique<SimKmeTransport>(
      sim_, sae == Node::SaeMaster ? LinkId::MasterKme1
            : sae == Node::SaeSlave ? LinkId::SlaveKme2
                                    : LinkId::ThirdKme2,
      sae, sae == Node::SaeMaster ? *kme1_ : *kme2_, serial(sae), config_.setup_rtts, nullptr));
}

ScenarioResult Testbed::run_handshake(const RunOptions& options) {
  ++runs_;
  ScenarioResult result;
  const std::size_t trace_start = sim_.trace().size();
  std::array<std::uint64_t, kLinkCount * 2> counts_before{};
  for (std::size_t i = 0; i < kLinkCount; ++i) {
    const auto& l = sim_.link(static_cast<LinkId>(i));
    counts_before[2 * i] = l.messages(0);
    counts_before[2 * i + 1] = l.messages(1);
  }

  KmeSession master_kme(std::make_unique<SimKmeTransport>(
      sim_, LinkId::MasterKme1, Node::SaeMaster, *kme1_, serial(Node::SaeMaster),
      config_.setup_rtts, options.kme_response_hook));
  KmeSession slave_kme(std::make_unique<SimKmeTransport>(
      sim_, LinkId::SlaveKme2, Node::SaeSlave, *kme2_, serial(Node::SaeSlave), config_.setup_rtts,
      options.kme_response_hook));

  tls::HandshakeConfig mcfg;
  mcfg.qkd_enabled = config_.client.qkd;
  mcfg.qkd_only = config_.client.qkd_only;
  tls::HandshakeConfig scfg;
  scfg.qkd_enabled = config_.server.qkd;
  scfg.qkd_only = config_.server.qkd_only;

  tls::MasterHandshake master(mcfg.qkd_enabled ? &master_kme : nullptr, kSlaveSae, mcfg,
                              rng(Node::SaeMaster));
  tls::SlaveHandshake slave(scfg.qkd_enabled ? &slave_kme : nullptr, scfg, rng(Node::SaeSlave));
  if (options.on_start) options.on_start(master, slave);

  std::optional<Uuid> uuid_seen;
  int master_ops = 0;
  int slave_ops = 0;
  auto charge = [&](tls::Endpoint& ep, Node node, int& seen) {
    int fresh = ep.asymmetric_ops() - seen;
    seen = ep.asymmetric_ops();
    sim_.compute(node, fresh * config_.pk_op_ms, fmt::format("{} public-key op(s)", fresh));
  };

  std::function<void(Node, const std::vector<Record>&)> send;
  auto deliver = [&](Node to) {
    return [&, to](Bytes wire) {
      tls::Endpoint& ep = to == Node::SaeMaster ? static_cast<tls::Endpoint&>(master) : slave;
      std::vector<Record> out;
      try {
        out = ep.on_record(tls::decode_record(wire));
      } catch (const DecodeError&) {
        ep.on_transport_error();
      }
      charge(ep, to, to == Node::SaeMaster ? master_ops : slave_ops);
      send(to, out);
    };
  };
  send = [&](Node from, const std::vector<Record>& records) {
    for (const auto& r : records) {
      if (from == Node::SaeMaster && r.type == tls::ContentType::Handshake && !uuid_seen) {
        try {
          auto info = tls::decode_client_hello(r);
          if (info.qkd) uuid_seen = info.qkd->key_uuid;
        } catch (const DecodeError&) {
        }
      }
      std::vector<std::pair<Node, Record>> wire_out;
      if (options.interceptor) {
        wire_out = options.interceptor(from, r);
      } else {
        wire_out.emplace_back(from, r);
      }
      for (auto& [sender, rec] : wire_out) {
        Bytes wire = tls::encode_record(rec);
        result.wire_records.push_back(wire);
        Node to = sender == Node::SaeMaster ? Node::SaeSlave : Node::SaeMaster;
        sim_.post(LinkId::MasterSlave, sender, std::move(wire), record_label(rec), deliver(to));
      }
    }
  };

  result.start_ms = sim_.now();
  auto first = master.start();
  charge(master, Node::SaeMaster, master_ops);
  send(Node::SaeMaster, first);
  sim_.run();
  result.wall_time_ms = sim_.now() - result.start_ms;

  if (master.quantum_key() && slave.quantum_key()) {
    result.keys_match = *master.quantum_key() == *slave.quantum_key();
  }
  result.key_uuid = uuid_seen;

  if (master.established() && slave.established() && config_.echo_bytes > 0) {
    crypto::SeededRandom prng(config_.seed + runs_, "echo-payload");
    Bytes payload(config_.echo_bytes);
    prng.fill(payload);
    Bytes echoed;
    std::size_t offset = 0;
    // Lockstep: the next fragment leaves when the previous echo is back.
    std::function<void()> next = [&] {
      if (offset >= payload.size() || !master.established()) return;
      auto n = std::min(payload.size() - offset, tls::kMaxFragment);
      send(Node::SaeMaster, {master.seal(ByteView(payload).subspan(offset, n))});
      offset += n;
    };
    auto& slave_inbox = slave.inbox();
    auto& master_inbox = master.inbox();
    next();
    while (sim_.step()) {
      while (!slave_inbox.empty() && slave.established()) {
        send(Node::SaeSlave, {slave.seal(slave_inbox.front())});
        slave_inbox.pop_front();
      }
      while (!master_inbox.empty()) {
        echoed.insert(echoed.end(), master_inbox.front().begin(), master_inbox.front().end());
        master_inbox.pop_front();
        next();
      }
    }
    result.echo_bytes = echoed.size();
    result.echo_ok = echoed == payload;
  }

  result.master_phase = master.phase();
  result.slave_phase = slave.phase();
  result.master_failure = master.failure();
  result.slave_failure = slave.failure();
  result.master_peer_alert = master.peer_alert();
  result.slave_peer_alert = slave.peer_alert();
  result.established = master.established() && slave.established();
  if (result.established && master.mode() == slave.mode()) result.mode = master.mode();

  for (std::size_t i = 0; i < kLinkCount; ++i) {
    auto id = static_cast<LinkId>(i);
    const auto& l = sim_.link(id);
    LinkCount c{l.messages(0) - counts_before[2 * i], l.messages(1) - counts_before[2 * i + 1]};
    if (c.total() > 0) result.per_link[id] = c;
    result.total_messages += c.total();
  }
  result.trace.assign(sim_.trace().begin() + static_cast<std::ptrdiff_t>(trace_start),
                      sim_.trace().end());
  return result;
}

ScenarioResult run_handshake_scenario(const ScenarioConfig& config) {
  Testbed bed(config);
  return bed.run_handshake();
}

std::string scenario_result_json(const ScenarioResult& r) {
  json j{{"established_mode", tls::to_string(r.mode)},
         {"established", r.established},
         {"master", {{"phase", tls::to_string(r.master_phase)},
                     {"failure", tls::to_string(r.master_failure)}}},
         {"slave", {{"phase", tls::to_string(r.slave_phase)},
                    {"failure", tls::to_string(r.slave_failure)}}},
         {"wall_time_ms", r.wall_time_ms},
         {"total_messages", r.total_messages},
         {"per_link", per_link_json(r.per_link)},
         {"keys_match", r.keys_match}};
  if (r.master_peer_alert) j["master"]["peer_alert"] = *r.master_peer_alert;
  if (r.slave_peer_alert) j["slave"]["peer_alert"] = *r.slave_peer_alert;
  if (r.key_uuid) j["key_uuid"] = r.key_uuid->to_string();
  if (r.echo_bytes > 0) j["echo"] = {{"bytes", r.echo_bytes}, {"ok", r.echo_ok}};
  return j.dump();
}

// ---------------------------------------------------------------------------

BenchmarkReport run_latency_benchmark(const ScenarioConfig& config, std::size_t trials) {
  if (trials < 10) throw std::invalid_argument("benchmark needs at least 10 trials");
  BenchmarkReport report;
  report.config = config;
  report.trials = trials;
  std::vector<double> qkd_times, classical_times;
  for (std::size_t i = 0; i < trials; ++i) {
    for (bool qkd : {true, false}) {
      ScenarioConfig c = config;
      c.seed = config.seed + i;
      c.client = {qkd, false};
      c.server = {qkd, false};
      c.faults.clear();
      c.echo_bytes = 0;
      auto r = run_handshake_scenario(c);
      auto want = qkd ? tls::Mode::TlsQkd : tls::Mode::Classical;
      if (r.mode != want) {
        throw BenchmarkError(fmt::format("trial {} ({}) failed: master {}, slave {}", i,
                                         qkd ? "TLS-QKD" : "classical",
                                         tls::to_string(r.master_failure),
                                         tls::to_string(r.slave_failure)));
      }
      (qkd ? qkd_times : classical_times).push_back(r.wall_time_ms);
      if (i == 0) {
        if (qkd) {
          report.qkd_messages = r.total_messages;
          report.qkd_per_link = r.per_link;
        } else {
          report.classical_messages = r.total_messages;
        }
      }
    }
  }
  report.qkd = stats_of(std::move(qkd_times));
  report.classical = stats_of(std::move(classical_times));
  report.ratio = report.classical.mean > 0 ? report.qkd.mean / report.classical.mean : 0;
  return report;
}

std::string BenchmarkReport::to_json() const {
  json j{{"trials", trials},
         {"scenario", json::parse(config.to_json())},
         {"qkd", stats_json(qkd)},
         {"classical", stats_json(classical)},
         {"ratio", ratio},
         {"messages", {{"qkd", qkd_messages}, {"classical", classical_messages}}},
         {"qkd_per_link", per_link_json(qkd_per_link)}};
  return j.dump(2);
}

std::string BenchmarkReport::to_table() const {
  std::string out = fmt::format("{:<12} {:>10} {:>10} {:>10} {:>9}\n", "mode", "mean_ms", "min_ms",
                                "max_ms", "messages");
  out += fmt::format("{:<12} {:>10.3f} {:>10.3f} {:>10.3f} {:>9}\n", "TLS-QKD", qkd.mean, qkd.min,
                     qkd.max, qkd_messages);
  out += fmt::format("{:<12} {:>10.3f} {:>10.3f} {:>10.3f} {:>9}\n", "classical", classical.mean,
                     classical.min, classical.max, classical_messages);
  out += fmt::format("ratio (TLS-QKD / classical): {:.3f} over {} trials\n", ratio, trials);
  return out;
}

// ---------------------------------------------------------------------------

bool AttackReport::all_passed() const {
  return !outcomes.empty() &&
         std::all_of(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.passed; });
}

std::string AttackReport::to_json() const {
  json arr = json::array();
  for (const auto& o : outcomes) {
    arr.push_back({{"id", o.id},
                   {"scenario", o.name},
                   {"expected", o.expected},
                   {"observed", o.observed},
                   {"reached_established_tls_qkd", o.reached_qkd_established},
                   {"passed", o.passed}});
  }
  return json{{"scenarios", arr}, {"all_passed", all_passed()}}.dump(2);
}

std::string AttackReport::to_table() const {
  std::string out = fmt::format("{:<4} {:<58} {:<26} {:<44} {}\n", "id", "scenario", "expected",
                                "observed", "result");
  for (const auto& o : outcomes) {
    out += fmt::format("{:<4} {:<58} {:<26} {:<44} {}\n", o.id, o.name, o.expected, o.observed,
                       o.passed ? "PASS" : "FAIL");
  }
  return out;
}

}  // namespace tlsqkd::sim
