#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tlsqkd/kme/service.hpp"
#include "tlsqkd/sae/kme_client.hpp"
#include "tlsqkd/sim/simulator.hpp"
#include "tlsqkd/tls/handshake.hpp"

namespace tlsqkd::sim {

inline constexpr KmeId kKme1{1};
inline constexpr KmeId kKme2{2};
inline constexpr SaeId kMasterSae{1};
inline constexpr SaeId kSlaveSae{2};
inline constexpr SaeId kThirdSae{3};  // registered at KME2, never authorized for a key

struct EndpointFlags {
  bool qkd = true;
  bool qkd_only = false;
};

/// Declarative scenario. JSON form:
///   {"lan_ms":0.1,"wan_ms":1.0,"jitter_ms":0,"link_latency_ms":{"kme1-kme2":5},
///    "setup_rtts":2,"pk_op_ms":0.5,"client":{"qkd":true,"qkd_only":false},
///    "server":{...},"keys_per_pool":16,"seed":1,"material_seed":7,
///    "slave_material_seed":7,"echo_bytes":0,
///    "faults":[{"link":"sae_master-sae_slave","from":"SAE_master","index":2,
///               "kind":"corrupt_byte","offset":9}]}
struct ScenarioConfig {
  double lan_ms = 0.1;
  double wan_ms = 1.0;
  double jitter_ms = 0;
  std::map<LinkId, double> link_latency_ms;
  int setup_rtts = 2;
  double pk_op_ms = 0.5;
  EndpointFlags client;
  EndpointFlags server;
  std::size_t keys_per_pool = 16;
  std::uint64_t seed = 1;
  std::uint64_t material_seed = 7;
  /// KME2's material seed; differs from material_seed only to desynchronize.
  std::optional<std::uint64_t> slave_material_seed;
  std::vector<Fault> faults;
  std::size_t echo_bytes = 0;

  double latency(LinkId link) const;

  /// Throws ConfigError.
  static ScenarioConfig from_json_text(const std::string& text);
  static ScenarioConfig load(const std::filesystem::path& path);
  std::string to_json() const;
};

struct LinkCount {
  std::uint64_t forward = 0;  // from ends(link)[0]
  std::uint64_t backward = 0;
  std::uint64_t total() const { return forward + backward; }
};

struct ScenarioResult {
  tls::Mode mode = tls::Mode::None;
  bool established = false;  // both sides
  tls::Phase master_phase = tls::Phase::Start;
  tls::Phase slave_phase = tls::Phase::Start;
  tls::Failure master_failure = tls::Failure::None;
  tls::Failure slave_failure = tls::Failure::None;
  std::optional<std::uint8_t> master_peer_alert;
  std::optional<std::uint8_t> slave_peer_alert;
  double start_ms = 0;
  double wall_time_ms = 0;  // handshake only
  std::map<LinkId, LinkCount> per_link;
  std::uint64_t total_messages = 0;
  std::vector<TraceEntry> trace;  // entries produced by this run
  std::optional<Uuid> key_uuid;
  bool keys_match = false;  // quantum keys byte-equal on both sides
  std::size_t echo_bytes = 0;
  bool echo_ok = false;
  std::vector<Bytes> wire_records;  // every SAE-link record as sent, in order
};

/// Rewrites SAE-link traffic. Receives each record as its sender emits it and
/// returns what actually goes on the wire, tagged with the apparent sender
/// (SaeMaster or SaeSlave). Returning nothing drops the record.
using Interceptor =
    std::function<std::vector<std::pair<Node, tls::Record>>(Node from, const tls::Record&)>;

struct RunOptions {
  Interceptor interceptor;
  /// Called after each endpoint is constructed, before the first message.
  std::function<void(tls::MasterHandshake&, tls::SlaveHandshake&)> on_start;
  /// Sees (and may rewrite) every KME response an SAE receives.
  std::function<void(Node sae, KmeHttpResponse&)> kme_response_hook;
};

/// KME1 + KME2 + master/slave/third SAEs wired over simulated links. Both
/// KMEs ingest identical seeded material, emulating a shared QKD link.
/// State persists across runs, so pools drain.
class Testbed {
 public:
  explicit Testbed(ScenarioConfig config);
  ~Testbed();

  const ScenarioConfig& config() const { return config_; }
  Simulator& simulator() { return sim_; }
  KmeService& kme1() { return *kme1_; }
  KmeService& kme2() { return *kme2_; }
  KeyStore& store1() { return *store1_; }
  KeyStore& store2() { return *store2_; }

  /// Fresh KME session (new simulated HTTPS connection) for an SAE.
  std::unique_ptr<KmeSession> session(Node sae);

  ScenarioResult run_handshake(const RunOptions& options = {});

  /// Next deterministic randomness for a run participant.
  crypto::SeededRandom& rng(Node node);

  static std::string serial(Node node);

 private:
  ScenarioConfig config_;
  Simulator sim_;
  std::shared_ptr<KeyStore> store1_;
  std::shared_ptr<KeyStore> store2_;
  std::unique_ptr<KmeService> kme1_;
  std::unique_ptr<KmeService> kme2_;
  std::map<Node, std::unique_ptr<crypto::SeededRandom>> rngs_;
  std::uint64_t runs_ = 0;
};

/// One connection on a fresh testbed.
ScenarioResult run_handshake_scenario(const ScenarioConfig& config);

struct Stats {
  double mean = 0;
  double min = 0;
  double max = 0;
  std::vector<double> samples;
};

struct BenchmarkReport {
  ScenarioConfig config;
  std::size_t trials = 0;
  Stats qkd;
  Stats classical;
  double ratio = 0;
  std::uint64_t qkd_messages = 0;
  std::uint64_t classical_messages = 0;
  std::map<LinkId, LinkCount> qkd_per_link;

  std::string to_json() const;
  std::string to_table() const;
};

class BenchmarkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `trials` runs of each mode on identical links; `config.client` and
/// `config.server` are overridden per mode. Throws std::invalid_argument
/// when trials < 10 and BenchmarkError when a trial fails.
BenchmarkReport run_latency_benchmark(const ScenarioConfig& config, std::size_t trials);

struct AttackOutcome {
  std::string id;
  std::string name;
  std::string expected;
  std::string observed;
  bool reached_qkd_established = false;
  bool passed = false;
};

struct AttackReport {
  std::vector<AttackOutcome> outcomes;
  bool all_passed() const;
  std::string to_json() const;
  std::string to_table() const;
};

/// Fixed adversarial scenarios on fresh testbeds built from `config`.
AttackReport run_attack_suite(const ScenarioConfig& config);

std::string scenario_result_json(const ScenarioResult& r);

}  // namespace tlsqkd::sim
