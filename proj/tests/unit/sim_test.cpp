#include <gtest/gtest.h>

#include <set>

#include "json.hpp"
#include "tlsqkd/sim/scenario.hpp"

using namespace tlsqkd;
using namespace tlsqkd::sim;
using nlohmann::json;

namespace {

ScenarioConfig qkd_config(double wan, double lan) {
  ScenarioConfig c;
  c.wan_ms = wan;
  c.lan_ms = lan;
  return c;
}

ScenarioConfig classical_config(double wan, double lan) {
  ScenarioConfig c = qkd_config(wan, lan);
  c.client = {false, false};
  c.server = {false, false};
  return c;
}

/// Walks the trace of one run and adds up every latency and compute cost.
/// A handshake is a single causal chain, so nothing overlaps.
double serial_cost(const ScenarioResult& r) {
  double total = 0;
  for (const auto& e : r.trace) total += e.cost_ms;
  return total;
}

}  // namespace

TEST(Simulator, OrderedDeliveryAndClock) {
  Simulator s;
  s.set_link(LinkId::MasterSlave, 2.0);
  std::vector<int> got;
  s.post(LinkId::MasterSlave, Node::SaeMaster, Bytes{1}, "a", [&](Bytes b) { got.push_back(b[0]); });
  s.post(LinkId::MasterSlave, Node::SaeMaster, Bytes{2}, "b", [&](Bytes b) { got.push_back(b[0]); });
  s.run();
  EXPECT_EQ(got, (std::vector<int>{1, 2}));
  EXPECT_DOUBLE_EQ(s.now(), 2.0);
  s.exchange(LinkId::MasterSlave, Node::SaeSlave, 10, "x");
  EXPECT_DOUBLE_EQ(s.now(), 4.0);
  s.compute(Node::SaeSlave, 0.5, "c");
  EXPECT_DOUBLE_EQ(s.now(), 4.5);
  EXPECT_EQ(s.link(LinkId::MasterSlave).messages(0), 2u);
  EXPECT_EQ(s.link(LinkId::MasterSlave).messages(1), 1u);
  EXPECT_EQ(s.total_messages(), 3u);
  EXPECT_THROW(s.exchange(LinkId::MasterKme1, Node::SaeSlave, 0, "bad"), std::invalid_argument);
  EXPECT_THROW(s.set_link(LinkId::MasterSlave, -1), std::invalid_argument);
}

TEST(Simulator, Faults) {
  Simulator s;
  s.set_link(LinkId::MasterSlave, 1.0);
  s.add_fault({Fault::Kind::DropOnce, LinkId::MasterSlave, Node::SaeMaster, 0, 0});
  s.add_fault({Fault::Kind::CorruptByte, LinkId::MasterSlave, Node::SaeMaster, 1, 1});
  s.add_fault({Fault::Kind::Duplicate, LinkId::MasterSlave, Node::SaeMaster, 2, 0});
  std::vector<Bytes> got;
  for (int i = 0; i < 3; ++i) {
    s.post(LinkId::MasterSlave, Node::SaeMaster, Bytes{0, 0}, "m", [&](Bytes b) { got.push_back(b); });
  }
  s.run();
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0], (Bytes{0, 1}));
  EXPECT_EQ(got[1], (Bytes{0, 0}));
  EXPECT_EQ(got[2], (Bytes{0, 0}));
}

TEST(Links, NamesRoundTrip) {
  for (std::size_t i = 0; i < kLinkCount; ++i) {
    auto id = static_cast<LinkId>(i);
    EXPECT_EQ(parse_link(to_string(id)), id);
  }
  EXPECT_FALSE(parse_link("kme1-kme3"));
}

TEST(Scenario, QkdMessageCountsPinned) {
  auto r = run_handshake_scenario(qkd_config(1.0, 0.1));
  ASSERT_TRUE(r.established);
  EXPECT_EQ(r.mode, tls::Mode::TlsQkd);
  EXPECT_TRUE(r.keys_match);
  EXPECT_EQ(r.total_messages, 23u);
  EXPECT_EQ(r.per_link.at(LinkId::MasterKme1).total(), 8u);
  EXPECT_EQ(r.per_link.at(LinkId::Kme1Kme2).total(), 6u);
  EXPECT_EQ(r.per_link.at(LinkId::SlaveKme2).total(), 6u);
  EXPECT_EQ(r.per_link.at(LinkId::MasterSlave).forward, 2u);
  EXPECT_EQ(r.per_link.at(LinkId::MasterSlave).backward, 1u);
  EXPECT_FALSE(r.per_link.count(LinkId::ThirdKme2));
}

TEST(Scenario, ClassicalIsThreeFlights) {
  auto r = run_handshake_scenario(classical_config(1.0, 0.1));
  ASSERT_TRUE(r.established);
  EXPECT_EQ(r.mode, tls::Mode::Classical);
  EXPECT_EQ(r.total_messages, 3u);
  EXPECT_EQ(r.per_link.size(), 1u);
}

TEST(Scenario, TraceWalkMatchesWallTime) {
  for (double wan : {0.0, 0.3, 1.0, 7.5}) {
    for (double lan : {0.0, 0.1, 2.0}) {
      auto q = run_handshake_scenario(qkd_config(wan, lan));
      auto c = run_handshake_scenario(classical_config(wan, lan));
      EXPECT_NEAR(serial_cost(q), q.wall_time_ms, 1e-9) << wan << " " << lan;
      EXPECT_NEAR(serial_cost(c), c.wall_time_ms, 1e-9) << wan << " " << lan;
      double last_end = 0;
      for (const auto& e : q.trace) {
        EXPECT_GE(e.start_ms + 1e-12, last_end);
        last_end = e.end_ms;
      }
    }
  }
}

TEST(Scenario, ClosedFormLatency) {
  for (double wan : {0.0, 0.5, 1.0, 10.0}) {
    for (double lan : {0.05, 0.1, 1.0}) {
      auto q = run_handshake_scenario(qkd_config(wan, lan));
      auto c = run_handshake_scenario(classical_config(wan, lan));
      EXPECT_NEAR(q.wall_time_ms, 9 * wan + 14 * lan + 0.5, 1e-9);
      EXPECT_NEAR(c.wall_time_ms, 3 * wan + 3.0, 1e-9);
    }
  }
}

TEST(Scenario, ZeroLatencyCompletesQuickly) {
  auto q = run_handshake_scenario(qkd_config(0, 0));
  auto c = run_handshake_scenario(classical_config(0, 0));
  EXPECT_TRUE(q.established);
  EXPECT_TRUE(c.established);
  EXPECT_LT(q.wall_time_ms, 5.0);
  EXPECT_LT(c.wall_time_ms, 5.0);
}

TEST(Scenario, DeterministicPerSeed) {
  std::set<Bytes> first_records;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto c = qkd_config(1.0, 0.1);
    c.seed = seed;
    c.jitter_ms = 0.2;
    auto a = run_handshake_scenario(c);
    auto b = run_handshake_scenario(c);
    ASSERT_EQ(scenario_result_json(a), scenario_result_json(b)) << seed;
    ASSERT_EQ(a.wire_records, b.wire_records) << seed;
    first_records.insert(a.wire_records.at(0));
  }
  EXPECT_EQ(first_records.size(), 100u);
}

TEST(Scenario, LatencyRatioGrowsWithWan) {
  auto near = run_latency_benchmark(qkd_config(1.0, 0.1), 10);
  auto far = run_latency_benchmark(qkd_config(10.0, 0.1), 10);
  EXPECT_GE(near.ratio, 1.3);
  EXPECT_LE(near.ratio, 2.5);
  EXPECT_GT(far.ratio, near.ratio);
  EXPECT_EQ(near.qkd_messages, 23u);
  EXPECT_EQ(near.classical_messages, 3u);
  EXPECT_EQ(near.qkd.samples.size(), 10u);
  EXPECT_NEAR(near.ratio, 10.9 / 6.0, 1e-9);
  auto j = json::parse(near.to_json());
  EXPECT_EQ(j["trials"], 10);
  EXPECT_NE(near.to_table().find("23"), std::string::npos);
  EXPECT_THROW(run_latency_benchmark(qkd_config(1, 0.1), 9), std::invalid_argument);
}

TEST(Scenario, PoolExhaustionAfterNHandshakes) {
  auto c = qkd_config(1.0, 0.1);
  c.keys_per_pool = 5;
  Testbed bed(c);
  std::set<Uuid> uuids;
  for (int i = 0; i < 5; ++i) {
    auto r = bed.run_handshake();
    ASSERT_TRUE(r.established) << i;
    ASSERT_TRUE(r.key_uuid);
    EXPECT_TRUE(uuids.insert(*r.key_uuid).second);
  }
  auto r = bed.run_handshake();
  EXPECT_FALSE(r.established);
  EXPECT_EQ(r.master_failure, tls::Failure::KeyPoolExhausted);
  EXPECT_EQ(bed.store1().status(kKme2).stored_key_count, 0u);
  EXPECT_EQ(bed.store2().status(kKme1).stored_key_count, 0u);
  EXPECT_EQ(uuids.size(), 5u);
}

TEST(Scenario, DroppedChallengeStallsWithoutEstablishing) {
  auto c = qkd_config(1.0, 0.1);
  c.faults.push_back({Fault::Kind::DropOnce, LinkId::MasterSlave, Node::SaeSlave, 0, 0});
  auto r = run_handshake_scenario(c);
  EXPECT_FALSE(r.established);
  EXPECT_EQ(r.master_phase, tls::Phase::HelloSent);
  EXPECT_EQ(r.slave_phase, tls::Phase::AckWait);
}

TEST(Scenario, CorruptedChallengeIsWrongKey) {
  auto c = qkd_config(1.0, 0.1);
  // Header 5, hello prefix 49, then the 80-byte challenge: byte 128 is in the tag.
  c.faults.push_back({Fault::Kind::CorruptByte, LinkId::MasterSlave, Node::SaeSlave, 0, 128});
  auto r = run_handshake_scenario(c);
  EXPECT_FALSE(r.established);
  EXPECT_EQ(r.master_failure, tls::Failure::WrongQuantumKey);
  EXPECT_EQ(r.slave_peer_alert, tls::alert::kQkdWrongQuantumKey);
}

TEST(Scenario, CorruptedAppRecordFailsReceiver) {
  auto c = qkd_config(1.0, 0.1);
  c.echo_bytes = 4096;
  c.faults.push_back({Fault::Kind::CorruptByte, LinkId::MasterSlave, Node::SaeMaster, 2, 12});
  auto r = run_handshake_scenario(c);
  EXPECT_FALSE(r.echo_ok);
  EXPECT_EQ(r.slave_failure, tls::Failure::RecordAuthFailure);
}

TEST(Scenario, EchoOverSimulatedLink) {
  auto c = qkd_config(1.0, 0.1);
  c.echo_bytes = 100000;
  auto r = run_handshake_scenario(c);
  EXPECT_TRUE(r.echo_ok);
  EXPECT_EQ(r.echo_bytes, 100000u);
}

TEST(Scenario, DesynchronizedMaterialFailsAtKme) {
  auto c = qkd_config(1.0, 0.1);
  c.slave_material_seed = 8;
  Testbed bed(c);
  auto r = bed.run_handshake();
  EXPECT_FALSE(r.established);
  EXPECT_EQ(r.master_failure, tls::Failure::KmeUnavailable);
  EXPECT_EQ(bed.store1().status(kKme2).stored_key_count, c.keys_per_pool);
}

TEST(Scenario, AttackSuitePasses) {
  auto report = run_attack_suite(qkd_config(1.0, 0.1));
  EXPECT_TRUE(report.all_passed()) << report.to_table();
  std::set<std::string> ids;
  for (const auto& o : report.outcomes) {
    ids.insert(o.id);
    if (o.id != "0") EXPECT_FALSE(o.reached_qkd_established) << o.id;
  }
  for (const char* id : {"a", "b", "c", "d", "e", "f"}) EXPECT_TRUE(ids.count(id)) << id;
}

TEST(ScenarioConfigJson, RoundTripAndErrors) {
  auto c = ScenarioConfig::from_json_text(R"({
    "lan_ms": 0.2, "wan_ms": 3, "link_latency_ms": {"kme1-kme2": 5},
    "client": {"qkd": true, "qkd_only": true}, "server": {"qkd": false},
    "keys_per_pool": 4, "seed": 9, "echo_bytes": 10,
    "faults": [{"link": "sae_master-sae_slave", "from": "SAE_master", "index": 2,
                "kind": "corrupt_byte", "offset": 9}]})");
  EXPECT_DOUBLE_EQ(c.latency(LinkId::Kme1Kme2), 5);
  EXPECT_DOUBLE_EQ(c.latency(LinkId::MasterSlave), 3);
  EXPECT_DOUBLE_EQ(c.latency(LinkId::MasterKme1), 0.2);
  EXPECT_TRUE(c.client.qkd_only);
  EXPECT_FALSE(c.server.qkd);
  ASSERT_EQ(c.faults.size(), 1u);
  EXPECT_EQ(c.faults[0].offset, 9u);
  auto again = ScenarioConfig::from_json_text(c.to_json());
  EXPECT_EQ(again.to_json(), c.to_json());

  EXPECT_THROW(ScenarioConfig::from_json_text("{"), ConfigError);
  EXPECT_THROW(ScenarioConfig::from_json_text(R"({"wan_ms": -1})"), ConfigError);
  EXPECT_THROW(ScenarioConfig::from_json_text(R"({"link_latency_ms": {"x-y": 1}})"), ConfigError);
  EXPECT_THROW(ScenarioConfig::from_json_text(R"({"client": {"qkd": false, "qkd_only": true}})"),
               ConfigError);
}
