// tlsqkd: key material generation, KME daemon, echo demo, simulated benchmarks.

#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tlsqkd/common/log.hpp"
#include "tlsqkd/crypto/crypto.hpp"
#include "tlsqkd/kme/service.hpp"
#include "tlsqkd/net/https.hpp"
#include "tlsqkd/net/tcp.hpp"
#include "tlsqkd/sim/scenario.hpp"
#include "tlsqkd/tls/session.hpp"

namespace fs = std::filesystem;
using namespace tlsqkd;

namespace {

enum Exit { kOk = 0, kUsage = 1, kRuntime = 2, kRejected = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Endpoint parse_endpoint(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos) throw UsageError("expected host:port, got '" + text + "'");
  Endpoint e;
  e.host = text.substr(0, colon);
  auto port = parse_u64(text.substr(colon + 1));
  if (!port || *port > 65535) throw UsageError("bad port in '" + text + "'");
  e.port = static_cast<int>(*port);
  return e;
}

// --- keygen ----------------------------------------------------------------

struct KeygenArgs {
  fs::path out;
  std::uint64_t peer = 0;
  std::size_t bytes = 0;
  std::uint64_t seed = 0;
  std::size_t files = 1;
};

int cmd_keygen(const KeygenArgs& a) {
  if (a.files == 0) throw UsageError("--files must be at least 1");
  std::vector<fs::path> written;
  try {
    written = write_key_files(a.out, KmeId{a.peer}, a.seed, a.bytes, a.files);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kRuntime;
  }
  for (const auto& f : written) std::cout << f.string() << " " << fs::file_size(f) << "\n";
  return kOk;
}

// --- kme serve -------------------------------------------------------------

int cmd_kme_serve(const fs::path& config_path, const fs::path& ready_file) {
  auto config = KmeConfig::load(config_path);
  auto store = std::make_shared<KeyStore>();
  if (config.journal) store->open_journal(*config.journal);
  auto report = store->ingest_directory(config.key_directory);
  log().info("ingested {} keys from {}", report.total_added(), config.key_directory.string());

  auto service = std::make_shared<KmeService>(config, store, std::make_shared<net::HttpsPeerNotifier>(config));
  net::KmeHttpsServer server(service);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  server.start();
  auto ports = fmt::format("sae={} kme={} admin={}", server.port(Listener::Sae),
                           server.port(Listener::Kme), server.port(Listener::Admin));
  std::cout << "ready " << ports << std::endl;
  if (!ready_file.empty()) {
    std::ofstream(ready_file) << ports << "\n";
  }

  for (;;) {
    timespec wait{std::max(config.rescan_interval_s, 1), 0};
    int sig = sigtimedwait(&signals, nullptr, &wait);
    if (sig == SIGINT || sig == SIGTERM) break;
    try {
      auto r = store->ingest_directory(config.key_directory);
      if (r.total_added() > 0) log().info("rescan ingested {} keys", r.total_added());
    } catch (const std::exception& e) {
      log().error("rescan failed: {}", e.what());
    }
  }
  log().info("shutting down");
  server.stop();
  return kOk;
}

// --- echo ------------------------------------------------------------------

struct EchoArgs {
  std::string role;
  std::string peer;  // master: connect to; slave: listen on
  std::string kme;
  fs::path cert, key, ca;
  std::uint64_t slave_sae = 0;
  bool qkd_only = false;
  bool classical = false;
  std::size_t payload_bytes = 0;
  std::optional<std::uint64_t> seed;
  std::string line = "hello over TLS-QKD";
};

void report_failure(const tls::Endpoint& ep) {
  std::cerr << "handshake failed: " << tls::to_string(ep.failure());
  if (ep.peer_alert()) std::cerr << " (peer alert " << int(*ep.peer_alert()) << ")";
  std::cerr << "\n";
}

int exit_for(const tls::Endpoint& ep) {
  switch (ep.failure()) {
    case tls::Failure::TransportError:
    case tls::Failure::KmeUnavailable:
    case tls::Failure::InternalError: return kRuntime;
    default: return kRejected;
  }
}

int cmd_echo(const EchoArgs& a) {
  std::unique_ptr<crypto::RandomSource> rng;
  if (a.seed) {
    rng = std::make_unique<crypto::SeededRandom>(*a.seed, "echo-" + a.role);
  } else {
    rng = std::make_unique<crypto::OsRandom>();
  }
  tls::HandshakeConfig cfg;
  cfg.qkd_enabled = !a.classical;
  cfg.qkd_only = a.qkd_only;
  if (a.classical && a.qkd_only) throw UsageError("--classical and --qkd-only are exclusive");

  std::unique_ptr<KmeSession> kme;
  if (cfg.qkd_enabled) {
    if (a.kme.empty() || a.cert.empty() || a.key.empty() || a.ca.empty()) {
      throw UsageError("TLS-QKD needs --kme, --cert, --key and --ca");
    }
    kme = std::make_unique<KmeSession>(
        std::make_unique<net::HttpsKmeTransport>(parse_endpoint(a.kme), TlsCredentials{a.cert, a.key, a.ca}));
  }
  Endpoint peer = parse_endpoint(a.peer);

  if (a.role == "master") {
    if (cfg.qkd_enabled && a.slave_sae == 0) throw UsageError("--slave-sae-id is required");
    auto stream = net::TcpRecordStream::connect(peer.host, static_cast<std::uint16_t>(peer.port));
    tls::MasterHandshake hs(kme.get(), SaeId{a.slave_sae}, cfg, *rng);
    if (!tls::run_master_handshake(hs, stream)) {
      report_failure(hs);
      return exit_for(hs);
    }
    std::cout << "mode: " << tls::to_string(hs.mode()) << std::endl;
    Bytes payload;
    if (a.payload_bytes > 0) {
      payload.resize(a.payload_bytes);
      crypto::SeededRandom(a.seed.value_or(0), "echo-payload").fill(payload);
    } else {
      payload.assign(a.line.begin(), a.line.end());
    }
    tls::SecureChannel channel(hs, stream);
    Bytes back = tls::echo_exchange(channel, payload);
    if (back != payload) {
      std::cerr << "echo mismatch\n";
      return kRuntime;
    }
    std::cout << "echo: " << payload.size() << " bytes ok" << std::endl;
    return kOk;
  }

  net::TcpListener listener(peer.host, static_cast<std::uint16_t>(peer.port));
  std::cout << "listening " << peer.host << ":" << listener.port() << std::endl;
  auto stream = listener.accept(std::chrono::minutes(5));
  tls::SlaveHandshake hs(kme.get(), cfg, *rng);
  if (!tls::run_slave_handshake(hs, stream)) {
    report_failure(hs);
    return exit_for(hs);
  }
  std::cout << "mode: " << tls::to_string(hs.mode()) << std::endl;
  std::size_t echoed = 0;
  try {
    for (;;) {
      auto replies = hs.on_record(stream.receive());
      for (const auto& r : replies) stream.send(r);
      if (hs.failed()) {
        report_failure(hs);
        return kRejected;
      }
      while (!hs.inbox().empty()) {
        stream.send(hs.seal(hs.inbox().front()));
        echoed += hs.inbox().front().size();
        hs.inbox().pop_front();
      }
    }
  } catch (const TransportError&) {
    // Peer closed the connection.
  }
  std::cout << "echoed: " << echoed << " bytes" << std::endl;
  return kOk;
}

// --- bench / attack --------------------------------------------------------

sim::ScenarioConfig scenario_from(const fs::path& file, std::optional<std::uint64_t> seed) {
  auto cfg = file.empty() ? sim::ScenarioConfig{} : sim::ScenarioConfig::load(file);
  if (seed) cfg.seed = *seed;
  return cfg;
}

int cmd_bench(const fs::path& scenario, std::size_t trials, std::optional<std::uint64_t> seed,
              const std::string& json_out) {
  if (trials < 10) throw UsageError("--trials must be at least 10");
  auto cfg = scenario_from(scenario, seed);
  auto report = sim::run_latency_benchmark(cfg, trials);
  auto single = sim::run_handshake_scenario(cfg);
  auto json = fmt::format("{{\"benchmark\":{},\"scenario_run\":{}}}\n", report.to_json(),
                          sim::scenario_result_json(single));
  if (json_out == "-") {
    std::cout << json;
  } else {
    std::cout << report.to_table();
    std::cout << fmt::format("scenario run: mode {} in {:.3f} ms, {} messages\n",
                             tls::to_string(single.mode), single.wall_time_ms, single.total_messages);
    if (!json_out.empty()) {
      std::ofstream f(json_out);
      f << json;
      if (!f) throw std::runtime_error("cannot write " + json_out);
    }
  }
  return kOk;
}

int cmd_attack(const fs::path& scenario, std::optional<std::uint64_t> seed, bool json) {
  auto report = sim::run_attack_suite(scenario_from(scenario, seed));
  std::cout << (json ? report.to_json() + "\n" : report.to_table());
  return report.all_passed() ? kOk : kRejected;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("tlsqkd"));

  CLI::App app{"TLS with QKD-delivered keys: KME, echo demo and simulated benchmarks"};
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--log-level", level, "trace|debug|info|warn|error|off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  KeygenArgs kg;
  auto* keygen = app.add_subcommand("keygen", "Write seeded stand-in QKD key files");
  keygen->add_option("--out", kg.out, "Material directory root")->required();
  keygen->add_option("--peer-kme", kg.peer, "Peer KME id (subdirectory name)")->required();
  keygen->add_option("--bytes", kg.bytes, "Total bytes to write")->required();
  keygen->add_option("--seed", kg.seed, "Seed; use the same value for both KMEs")->required();
  keygen->add_option("--files", kg.files, "Number of .cor files to split into")->capture_default_str();

  auto* kme = app.add_subcommand("kme", "Key management entity");
  kme->require_subcommand(1);
  auto* serve = kme->add_subcommand("serve", "Serve the key delivery API until SIGINT/SIGTERM");
  fs::path kme_config, ready_file;
  serve->add_option("--config", kme_config, "KME config (JSON)")->required();
  serve->add_option("--ready-file", ready_file, "Write bound ports here once listening");

  EchoArgs ea;
  auto* echo = app.add_subcommand("echo", "Echo demo over TLS-QKD on real sockets");
  echo->add_option("--role", ea.role, "master or slave")->required()->check(CLI::IsMember({"master", "slave"}));
  echo->add_option("--peer", ea.peer, "master: slave address; slave: listen address (host:port)")->required();
  echo->add_option("--kme", ea.kme, "Local KME SAE listener (host:port)");
  echo->add_option("--cert", ea.cert, "SAE client certificate (PEM)");
  echo->add_option("--key", ea.key, "SAE private key (PEM)");
  echo->add_option("--ca", ea.ca, "Trust anchor for the KME (PEM)");
  echo->add_option("--slave-sae-id", ea.slave_sae, "master: SAE id of the slave");
  echo->add_flag("--qkd-only", ea.qkd_only, "Refuse the classical fallback");
  echo->add_flag("--classical", ea.classical, "Disable TLS-QKD");
  echo->add_option("--payload-bytes", ea.payload_bytes, "master: echo this many seeded random bytes");
  echo->add_option("--line", ea.line, "master: text to echo when no payload size is given");
  std::uint64_t echo_seed = 0;
  auto* echo_seed_opt = echo->add_option("--seed", echo_seed, "Deterministic randomness (demo only)");

  auto* bench = app.add_subcommand("bench", "Simulated TLS-QKD vs classical latency benchmark");
  fs::path bench_scenario;
  std::size_t trials = 10;
  std::uint64_t bench_seed = 0;
  std::string json_out;
  bench->add_option("--scenario", bench_scenario, "Scenario file (JSON); defaults built in");
  bench->add_option("--trials", trials, "Trials per mode (>= 10)")->capture_default_str();
  auto* bench_seed_opt = bench->add_option("--seed", bench_seed, "Override the scenario seed");
  bench->add_option("--json", json_out, "Write the JSON report here ('-' for stdout)");

  auto* attack = app.add_subcommand("attack", "Run the simulated attack suite");
  fs::path attack_scenario;
  std::uint64_t attack_seed = 0;
  bool attack_json = false;
  attack->add_option("--scenario", attack_scenario, "Scenario file (JSON)");
  auto* attack_seed_opt = attack->add_option("--seed", attack_seed, "Override the scenario seed");
  attack->add_flag("--json", attack_json, "Emit JSON instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  // The simulated suites drive thousands of KME requests; keep them quiet
  // unless asked.
  if ((*bench || *attack) && app.get_option("--log-level")->count() == 0) level = "warn";
  spdlog::set_level(spdlog::level::from_str(level));

  try {
    if (*keygen) return cmd_keygen(kg);
    if (*serve) return cmd_kme_serve(kme_config, ready_file);
    if (*echo) {
      if (*echo_seed_opt) ea.seed = echo_seed;
      return cmd_echo(ea);
    }
    if (*bench) {
      return cmd_bench(bench_scenario, trials,
                       *bench_seed_opt ? std::optional(bench_seed) : std::nullopt, json_out);
    }
    if (*attack) {
      return cmd_attack(attack_scenario, *attack_seed_opt ? std::optional(attack_seed) : std::nullopt,
                        attack_json);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
