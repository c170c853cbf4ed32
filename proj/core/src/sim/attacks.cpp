#include <fmt/format.h>

#include "json.hpp"
#include "tlsqkd/sim/scenario.hpp"
#include "tlsqkd/tls/challenge.hpp"

namespace tlsqkd::sim {

using tls::Record;

namespace {

using Wire = std::vector<std::pair<Node, Record>>;

std::optional<Bytes> challenge_of(const Record& r) {
  if (r.type != tls::ContentType::Handshake) return std::nullopt;
  try {
    auto msgs = tls::split_handshake_messages(r.body);
    if (msgs.size() != 1 || msgs[0].type != tls::HandshakeType::ServerHello) return std::nullopt;
    auto sh = tls::decode_hello(msgs[0].raw);
    if (const auto* ext = sh.find(tls::kExtQkdChallenge)) return ext->body;
  } catch (const DecodeError&) {
  }
  return std::nullopt;
}

std::optional<tls::QkdHelloExtension> qkd_hello_of(const Record& r) {
  if (r.type != tls::ContentType::Handshake) return std::nullopt;
  try {
    return tls::decode_client_hello(r).qkd;
  } catch (const DecodeError&) {
    return std::nullopt;
  }
}

Bytes seal_ack(const crypto::Key256& key, const crypto::Nonce& iv, const tls::ChallengePayload& p) {
  return crypto::aead_seal(key, tls::derive_nonce(iv, tls::Direction::MasterToSlave, 0), {},
                           p.plaintext());
}

tls::ChallengePayload open_challenge(const crypto::Key256& key, const crypto::Nonce& iv,
                                     ByteView ct) {
  auto pt = crypto::aead_open(key, tls::derive_nonce(iv, tls::Direction::SlaveToMaster, 0), {}, ct);
  if (!pt) throw std::runtime_error("harness could not open the challenge");
  return tls::ChallengePayload::from_plaintext(*pt);
}

bool slave_reached_qkd(const ScenarioResult& r) {
  return r.slave_phase == tls::Phase::Established && r.mode == tls::Mode::TlsQkd;
}

bool master_reached_qkd(const ScenarioResult& r) {
  return r.master_phase == tls::Phase::Established && r.mode == tls::Mode::TlsQkd;
}

AttackOutcome finish(std::string id, std::string name, std::string expected, std::string observed,
                     bool reached, bool matched) {
  return {std::move(id), std::move(name), std::move(expected), std::move(observed), reached,
          matched && !reached};
}

// (a) The master's key copy is corrupted. An honest master then fails to open
// the challenge; a forging master answers anyway under its wrong key.
std::vector<AttackOutcome> corrupted_key(const ScenarioConfig& base) {
  std::vector<AttackOutcome> out;
  auto corrupt = [](crypto::Key256* captured) {
    return [captured](Node sae, KmeHttpResponse& resp) {
      if (sae != Node::SaeMaster || resp.status != 200) return;
      auto j = nlohmann::json::parse(resp.body, nullptr, false);
      if (!j.is_object() || !j.contains("keys")) return;
      auto key = base64_decode(j["keys"][0]["key"].get<std::string>());
      key[0] ^= 0xFF;
      if (captured) std::copy(key.begin(), key.end(), captured->begin());
      j["keys"][0]["key"] = base64_encode(key);
      resp.body = j.dump();
    };
  };

  {
    Testbed bed(base);
    RunOptions opt;
    opt.kme_response_hook = corrupt(nullptr);
    auto r = bed.run_handshake(opt);
    out.push_back(finish("a1", "honest master holding a corrupted key copy", "WrongQuantumKey",
                         fmt::format("master {}", tls::to_string(r.master_failure)),
                         slave_reached_qkd(r) || master_reached_qkd(r),
                         r.master_failure == tls::Failure::WrongQuantumKey));
  }
  {
    Testbed bed(base);
    crypto::Key256 wrong_key{};
    crypto::Nonce iv{};
    RunOptions opt;
    opt.kme_response_hook = corrupt(&wrong_key);
    opt.interceptor = [&](Node from, const Record& r) -> Wire {
      if (from == Node::SaeMaster) {
        if (auto h = qkd_hello_of(r)) iv = h->iv;
        if (r.type == tls::ContentType::Alert) {
          crypto::SeededRandom guess(base.seed, "forger");
          tls::ChallengePayload forged{guess.array<32>(), guess.array<32>()};
          return {{Node::SaeMaster, tls::encode_challenge_ack(seal_ack(wrong_key, iv, forged))}};
        }
      }
      return {{from, r}};
    };
    auto r = bed.run_handshake(opt);
    out.push_back(finish("a", "forging master with a corrupted key copy", "slave BadAuth",
                         fmt::format("slave {}", tls::to_string(r.slave_failure)),
                         slave_reached_qkd(r), r.slave_failure == tls::Failure::BadAuth));
  }
  return out;
}

// (b) A man in the middle reflects the challenge ciphertext back as the ack.
AttackOutcome reflection(const ScenarioConfig& base) {
  Testbed bed(base);
  RunOptions opt;
  opt.interceptor = [&](Node from, const Record& r) -> Wire {
    if (from == Node::SaeSlave) {
      if (auto ct = challenge_of(r)) return {{Node::SaeMaster, tls::encode_challenge_ack(*ct)}};
    }
    return {{from, r}};
  };
  auto r = bed.run_handshake(opt);
  return finish("b", "challenge ciphertext reflected as ack", "slave BadAuth",
                fmt::format("slave {}", tls::to_string(r.slave_failure)), slave_reached_qkd(r),
                r.slave_failure == tls::Failure::BadAuth);
}

// (c) A key holder answers with the challenge's own seed, or a wrong token.
AttackOutcome tampered_ack(const ScenarioConfig& base, bool replay_seed) {
  Testbed bed(base);
  const tls::MasterHandshake* master = nullptr;
  crypto::Nonce iv{};
  std::optional<tls::ChallengePayload> challenge;
  RunOptions opt;
  opt.on_start = [&](tls::MasterHandshake& m, tls::SlaveHandshake&) { master = &m; };
  opt.interceptor = [&](Node from, const Record& r) -> Wire {
    if (from == Node::SaeMaster) {
      if (auto h = qkd_hello_of(r)) iv = h->iv;
      if (r.type == tls::ContentType::ChallengeAck && master->quantum_key() && challenge) {
        tls::ChallengePayload p = *challenge;
        if (!replay_seed) {
          p.token[0] ^= 0x01;
          p.seed[0] ^= 0x01;
        }
        return {{from, tls::encode_challenge_ack(seal_ack(*master->quantum_key(), iv, p))}};
      }
    } else if (auto ct = challenge_of(r); ct && master->quantum_key()) {
      challenge = open_challenge(*master->quantum_key(), iv, *ct);
    }
    return {{from, r}};
  };
  auto r = bed.run_handshake(opt);
  auto want = replay_seed ? tls::Failure::SeedReplayed : tls::Failure::TokenMismatch;
  return finish(replay_seed ? "c" : "c2",
                replay_seed ? "ack replays the challenge seed" : "ack carries a wrong token",
                fmt::format("slave {}", tls::to_string(want)),
                fmt::format("slave {}", tls::to_string(r.slave_failure)), slave_reached_qkd(r),
                r.slave_failure == want);
}

// (d) A third SAE, registered at KME2 but not named in the activation,
// intercepts the ClientHello and asks for the key.
AttackOutcome third_party_fetch(const ScenarioConfig& base) {
  Testbed bed(base);
  int status = 0;
  std::optional<tls::Failure> impostor_failure;
  RunOptions opt;
  opt.interceptor = [&](Node from, const Record& r) -> Wire {
    auto h = from == Node::SaeMaster ? qkd_hello_of(r) : std::nullopt;
    if (!h) return {{from, r}};
    auto kme = bed.session(Node::SaeThird);
    try {
      kme->request_key_by_id(h->client_sae_id, h->key_uuid);
      status = 200;
    } catch (const SaeClientError& e) {
      status = e.http_status();
    }
    tls::HandshakeConfig cfg;
    auto impostor_kme = bed.session(Node::SaeThird);
    tls::SlaveHandshake impostor(impostor_kme.get(), cfg, bed.rng(Node::SaeThird));
    auto reply = impostor.on_record(r);
    impostor_failure = impostor.failure();
    Wire w;
    for (auto& rec : reply) w.emplace_back(Node::SaeSlave, rec);
    return w;
  };
  auto r = bed.run_handshake(opt);
  bool reached = master_reached_qkd(r) ||
                 (impostor_failure && *impostor_failure == tls::Failure::None);
  return finish("d", "unauthorized SAE certificate calls dec_keys", "HTTP 401",
                fmt::format("HTTP {}, impostor {}", status,
                            impostor_failure ? tls::to_string(*impostor_failure) : "-"),
                reached, status == 401);
}

// (e) A man in the middle strips TLS-QKD and answers the qkd_only master as a
// classical server, or claims the server does not speak the QKD version.
AttackOutcome downgrade(const ScenarioConfig& base, bool classical_flight) {
  ScenarioConfig c = base;
  c.client = {true, true};
  Testbed bed(c);
  RunOptions opt;
  opt.interceptor = [&](Node from, const Record& r) -> Wire {
    if (from != Node::SaeMaster || r.type != tls::ContentType::Handshake) return {{from, r}};
    if (!classical_flight) {
      return {{Node::SaeSlave, tls::encode_alert(tls::alert::kProtocolVersion, tls::kVersionQkd)}};
    }
    tls::HandshakeConfig classical;
    classical.qkd_enabled = false;
    tls::MasterHandshake bait(nullptr, kSlaveSae, classical, bed.rng(Node::SaeThird));
    tls::SlaveHandshake mitm(nullptr, classical, bed.rng(Node::SaeThird));
    Wire w;
    for (auto& rec : mitm.on_record(bait.start().at(0))) w.emplace_back(Node::SaeSlave, rec);
    return w;
  };
  auto r = bed.run_handshake(opt);
  return finish(classical_flight ? "e" : "e2",
                classical_flight ? "MITM answers qkd_only master with classical ServerHello"
                                 : "MITM answers qkd_only master with protocol_version alert",
                "master DowngradeRefused",
                fmt::format("master {}", tls::to_string(r.master_failure)),
                r.master_phase == tls::Phase::Established,
                r.master_failure == tls::Failure::DowngradeRefused);
}

// (f) One bit of the first application record flips in flight.
AttackOutcome record_bit_flip(const ScenarioConfig& base) {
  ScenarioConfig c = base;
  c.echo_bytes = 4096;
  // ClientHello and ChallengeAck precede the first application record.
  c.faults.push_back({Fault::Kind::CorruptByte, LinkId::MasterSlave, Node::SaeMaster, 2,
                      tls::kRecordHeaderSize + 7});
  Testbed bed(c);
  auto r = bed.run_handshake();
  return finish("f", "record bit flip after the handshake", "slave RecordAuthFailure",
                fmt::format("slave {}, master {}", tls::to_string(r.slave_failure),
                            tls::to_string(r.master_failure)),
                slave_reached_qkd(r), r.slave_failure == tls::Failure::RecordAuthFailure);
}

}  // namespace

AttackReport run_attack_suite(const ScenarioConfig& config) {
  ScenarioConfig base = config;
  base.client = {true, false};
  base.server = {true, false};
  base.faults.clear();
  base.echo_bytes = 0;

  AttackReport report;
  auto baseline = Testbed(base).run_handshake();
  report.outcomes.push_back({"0", "honest baseline", "ESTABLISHED TLS-QKD",
                             std::string(tls::to_string(baseline.mode)), false,
                             baseline.mode == tls::Mode::TlsQkd && baseline.keys_match});
  for (auto& o : corrupted_key(base)) report.outcomes.push_back(std::move(o));
  report.outcomes.push_back(reflection(base));
  report.outcomes.push_back(tampered_ack(base, true));
  report.outcomes.push_back(tampered_ack(base, false));
  report.outcomes.push_back(third_party_fetch(base));
  report.outcomes.push_back(downgrade(base, true));
  report.outcomes.push_back(downgrade(base, false));
  report.outcomes.push_back(record_bit_flip(base));
  return report;
}

}  // namespace tlsqkd::sim
