#include <gtest/gtest.h>

#include "support.hpp"
#include "tlsqkd/tls/handshake.hpp"

using namespace tlsqkd;
using namespace tlsqkd::tls;
using tlsqkd::testkit::converse;
using tlsqkd::testkit::KmePair;
using tlsqkd::testkit::stub_session;

namespace {

enum class Kind { Qkd, QkdOnly, Classical };

HandshakeConfig config_for(Kind k) {
  HandshakeConfig c;
  c.qkd_enabled = k != Kind::Classical;
  c.qkd_only = k == Kind::QkdOnly;
  return c;
}

struct Outcome {
  Mode master_mode, slave_mode;
  Failure master_failure, slave_failure;
  std::optional<std::uint8_t> master_alert, slave_alert;
  std::size_t records;
  bool keys_match;
};

Outcome run(Kind client, Kind server, KmePair& p) {
  auto mk = p.session("a1");
  auto sk = p.session("b2");
  crypto::SeededRandom mr(1, "m"), sr(2, "s");
  MasterHandshake m(client == Kind::Classical ? nullptr : mk.get(), SaeId{2}, config_for(client), mr);
  SlaveHandshake s(server == Kind::Classical ? nullptr : sk.get(), config_for(server), sr);
  auto log = converse(m, s);
  if (m.established() && s.established()) {
    auto r = m.seal(as_bytes("ping"));
    s.on_record(r);
    EXPECT_EQ(to_string(s.inbox().front()), "ping");
    s.on_record(r);  // replay
    EXPECT_TRUE(s.failed());
  }
  return {m.mode(), s.mode(), m.failure(), s.failure(), m.peer_alert(), s.peer_alert(), log.size(),
          false};
}

KeyMaterial material(std::uint8_t fill) {
  KeyMaterial k;
  k.fill(fill);
  return k;
}

}  // namespace

TEST(Compat, QkdBothSides) {
  KmePair p;
  for (auto c : {Kind::Qkd, Kind::QkdOnly}) {
    for (auto s : {Kind::Qkd, Kind::QkdOnly}) {
      auto o = run(c, s, p);
      EXPECT_EQ(o.master_mode, Mode::TlsQkd);
      EXPECT_EQ(o.slave_mode, Mode::TlsQkd);
      EXPECT_EQ(o.records, 3u);
    }
  }
}

TEST(Compat, ClassicalWhenEitherSideIsClassical) {
  KmePair p;
  for (auto [c, s] : {std::pair{Kind::Qkd, Kind::Classical}, std::pair{Kind::Classical, Kind::Qkd},
                      std::pair{Kind::Classical, Kind::Classical}}) {
    auto o = run(c, s, p);
    EXPECT_EQ(o.master_mode, Mode::Classical);
    EXPECT_EQ(o.slave_mode, Mode::Classical);
    EXPECT_EQ(o.records, 3u);
  }
}

TEST(Compat, QkdOnlyClientRefusesClassicalServer) {
  KmePair p;
  auto o = run(Kind::QkdOnly, Kind::Classical, p);
  EXPECT_EQ(o.master_failure, Failure::DowngradeRefused);
  EXPECT_EQ(o.slave_failure, Failure::ProtocolVersion);
  EXPECT_EQ(o.slave_mode, Mode::None);
}

TEST(Compat, QkdOnlyServerRefusesClassicalClient) {
  KmePair p;
  auto o = run(Kind::Classical, Kind::QkdOnly, p);
  EXPECT_EQ(o.slave_failure, Failure::DowngradeRefused);
  EXPECT_EQ(o.master_failure, Failure::PeerAlert);
  EXPECT_EQ(o.master_alert, alert::kProtocolVersion);
}

TEST(QkdHandshake, KeysAgreeAndAppDataFlows) {
  KmePair p;
  auto mk = p.session("a1");
  auto sk = p.session("b2");
  crypto::SeededRandom mr(1), sr(2);
  MasterHandshake m(mk.get(), SaeId{2}, {}, mr);
  SlaveHandshake s(sk.get(), {}, sr);
  auto log = converse(m, s);
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[0].type, ContentType::Handshake);
  EXPECT_EQ(log[0].version, kVersionQkd);
  EXPECT_EQ(log[1].type, ContentType::Handshake);
  EXPECT_EQ(log[2].type, ContentType::ChallengeAck);
  ASSERT_TRUE(m.quantum_key() && s.quantum_key());
  EXPECT_EQ(*m.quantum_key(), *s.quantum_key());
  EXPECT_EQ(m.asymmetric_ops(), 1);
  EXPECT_EQ(s.asymmetric_ops(), 0);
  EXPECT_EQ(s.phase_history(), (std::vector<Phase>{Phase::Start, Phase::ChallengeSent,
                                                   Phase::AckWait, Phase::Established}));
  EXPECT_EQ(m.phase_history(),
            (std::vector<Phase>{Phase::Start, Phase::HelloSent, Phase::Established}));

  for (int i = 0; i < 20; ++i) {
    s.on_record(m.seal(as_bytes("to slave")));
    m.on_record(s.seal(as_bytes("to master")));
  }
  EXPECT_EQ(s.inbox().size(), 20u);
  EXPECT_EQ(m.inbox().size(), 20u);
}

TEST(QkdHandshake, QkdOnlyMasterDoesNoPublicKeyWork) {
  KmePair p;
  auto mk = p.session("a1");
  auto sk = p.session("b2");
  crypto::SeededRandom mr(1), sr(2);
  MasterHandshake m(mk.get(), SaeId{2}, config_for(Kind::QkdOnly), mr);
  SlaveHandshake s(sk.get(), {}, sr);
  auto log = converse(m, s);
  EXPECT_TRUE(m.established());
  EXPECT_EQ(m.asymmetric_ops() + s.asymmetric_ops(), 0);
  EXPECT_FALSE(decode_client_hello(log[0]).key_share);
}

TEST(ClassicalHandshake, SixPublicKeyOperations) {
  crypto::SeededRandom mr(1), sr(2);
  MasterHandshake m(nullptr, SaeId{2}, config_for(Kind::Classical), mr);
  SlaveHandshake s(nullptr, config_for(Kind::Classical), sr);
  auto log = converse(m, s);
  ASSERT_TRUE(m.established() && s.established());
  EXPECT_EQ(m.asymmetric_ops() + s.asymmetric_ops(), 6);
  EXPECT_EQ(log[0].version, kVersionClassical);
  s.on_record(m.seal(as_bytes("x")));
  EXPECT_EQ(to_string(s.inbox().front()), "x");
  m.on_record(s.seal(as_bytes("y")));
  EXPECT_EQ(to_string(m.inbox().front()), "y");
}

TEST(ClassicalHandshake, PinnedServerKeyMismatch) {
  crypto::SeededRandom mr(1), sr(2), other(3);
  auto cfg = config_for(Kind::Classical);
  cfg.pinned_server_key = crypto::Ed25519KeyPair::generate(other).public_key;
  MasterHandshake m(nullptr, SaeId{2}, cfg, mr);
  SlaveHandshake s(nullptr, config_for(Kind::Classical), sr);
  converse(m, s);
  EXPECT_EQ(m.failure(), Failure::ClassicalAuthFailed);
  EXPECT_EQ(s.failure(), Failure::PeerAlert);
  EXPECT_EQ(s.peer_alert(), alert::kDecryptError);
}

TEST(ClassicalHandshake, TamperedServerFlightFails) {
  crypto::SeededRandom mr(1), sr(2);
  MasterHandshake m(nullptr, SaeId{2}, config_for(Kind::Classical), mr);
  SlaveHandshake s(nullptr, config_for(Kind::Classical), sr);
  auto flight = s.on_record(m.start().at(0)).at(0);
  flight.body[flight.body.size() - 3] ^= 1;  // inside server Finished
  auto reply = m.on_record(flight);
  EXPECT_EQ(m.failure(), Failure::ClassicalAuthFailed);
  ASSERT_EQ(reply.size(), 1u);
  EXPECT_EQ(decode_alert(reply[0]), alert::kDecryptError);
}

TEST(Failures, WrongQuantumKeyAtMaster) {
  auto uuid = derive_key_uuid(material(1));
  auto mk = stub_session(SaeId{1}, uuid, material(1));
  auto sk = stub_session(SaeId{2}, uuid, material(2));
  crypto::SeededRandom mr(1), sr(2);
  MasterHandshake m(mk.get(), SaeId{2}, {}, mr);
  SlaveHandshake s(sk.get(), {}, sr);
  converse(m, s);
  EXPECT_EQ(m.failure(), Failure::WrongQuantumKey);
  EXPECT_EQ(s.failure(), Failure::PeerAlert);
  EXPECT_EQ(s.peer_alert(), alert::kQkdWrongQuantumKey);
  EXPECT_FALSE(m.quantum_key());
  EXPECT_FALSE(s.quantum_key());
}

TEST(Failures, PoolExhaustedAtMaster) {
  KmePair p(0);
  auto mk = p.session("a1");
  crypto::SeededRandom mr(1);
  MasterHandshake m(mk.get(), SaeId{2}, {}, mr);
  EXPECT_TRUE(m.start().empty());
  EXPECT_EQ(m.failure(), Failure::KeyPoolExhausted);
}

TEST(Failures, KmeErrorAtMaster) {
  auto t = std::make_unique<testkit::StubKmeTransport>(SaeId{1}, Uuid{}, material(1));
  t->fail_with = 500;
  KmeSession session(std::move(t));
  crypto::SeededRandom mr(1);
  MasterHandshake m(&session, SaeId{2}, {}, mr);
  EXPECT_TRUE(m.start().empty());
  EXPECT_EQ(m.failure(), Failure::KmeUnavailable);
}

TEST(Failures, UnauthorizedSlaveGetsNoKey) {
  KmePair p;
  auto mk = p.session("a1");
  auto third = p.session("c3");
  crypto::SeededRandom mr(1), sr(2);
  MasterHandshake m(mk.get(), SaeId{2}, {}, mr);
  SlaveHandshake s(third.get(), {}, sr);
  auto log = converse(m, s);
  EXPECT_EQ(s.failure(), Failure::KeyUnavailable);
  EXPECT_EQ(m.peer_alert(), alert::kQkdKeyUnavailable);
  // The rightful slave can still retrieve it.
  auto info = decode_client_hello(log.at(0));
  auto rightful = p.session("b2");
  EXPECT_NO_THROW(rightful->request_key_by_id(SaeId{1}, info.qkd->key_uuid));
}

TEST(Failures, MalformedHelloExtension) {
  Hello h;
  h.extensions.push_back({kExtQkdHello, Bytes(35)});
  crypto::SeededRandom sr(2);
  auto sk = stub_session(SaeId{2}, Uuid{}, material(1));
  SlaveHandshake s(sk.get(), {}, sr);
  auto out = s.on_record(Record{ContentType::Handshake, kVersionQkd, encode_hello(h)});
  EXPECT_EQ(s.failure(), Failure::MalformedExtension);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(decode_alert(out[0]), alert::kDecodeError);
}

TEST(Failures, UnexpectedFirstRecord) {
  crypto::SeededRandom sr(2);
  auto sk = stub_session(SaeId{2}, Uuid{}, material(1));
  SlaveHandshake s(sk.get(), {}, sr);
  auto out = s.on_record(encode_challenge_ack(Bytes(80)));
  EXPECT_EQ(s.failure(), Failure::UnexpectedMessage);
  EXPECT_EQ(decode_alert(out.at(0)), alert::kUnexpectedMessage);
  EXPECT_TRUE(s.on_record(encode_challenge_ack(Bytes(80))).empty());
}

TEST(Failures, AlertAfterEstablishment) {
  KmePair p;
  auto mk = p.session("a1");
  auto sk = p.session("b2");
  crypto::SeededRandom mr(1), sr(2);
  MasterHandshake m(mk.get(), SaeId{2}, {}, mr);
  SlaveHandshake s(sk.get(), {}, sr);
  converse(m, s);
  m.on_record(encode_alert(alert::kInternalError, kVersionQkd));
  EXPECT_EQ(m.failure(), Failure::PeerAlert);
  EXPECT_EQ(m.peer_alert(), alert::kInternalError);
  EXPECT_FALSE(m.quantum_key());
  EXPECT_THROW(m.seal(as_bytes("x")), std::logic_error);
}

TEST(Failures, TransportErrorMovesToFailed) {
  crypto::SeededRandom sr(2);
  SlaveHandshake s(nullptr, config_for(Kind::Classical), sr);
  s.on_transport_error();
  EXPECT_EQ(s.failure(), Failure::TransportError);
}

TEST(Construction, Invariants) {
  crypto::SeededRandom r(1);
  HandshakeConfig bad;
  bad.qkd_enabled = false;
  bad.qkd_only = true;
  EXPECT_THROW(SlaveHandshake(nullptr, bad, r), std::invalid_argument);
  EXPECT_THROW(MasterHandshake(nullptr, SaeId{2}, {}, r), std::invalid_argument);
  MasterHandshake m(nullptr, SaeId{2}, config_for(Kind::Classical), r);
  EXPECT_THROW(m.seal(as_bytes("x")), std::logic_error);
  m.start();
  EXPECT_THROW(m.start(), std::logic_error);
}

TEST(Alerts, Mapping) {
  EXPECT_EQ(alert_for(Failure::BadAuth), 0xE1);
  EXPECT_EQ(alert_for(Failure::TokenMismatch), 0xE2);
  EXPECT_EQ(alert_for(Failure::SeedReplayed), 0xE3);
  EXPECT_EQ(alert_for(Failure::KeyUnavailable), 0xE4);
  EXPECT_EQ(alert_for(Failure::WrongQuantumKey), 0xE5);
  EXPECT_EQ(alert_for(Failure::DowngradeRefused), 71);
  EXPECT_EQ(alert_for(Failure::ProtocolVersion), 70);
  EXPECT_EQ(alert_for(Failure::RecordAuthFailure), 20);
  EXPECT_EQ(alert_for(Failure::DecodeError), 50);
  EXPECT_EQ(alert_for(Failure::UnexpectedMessage), 10);
  EXPECT_EQ(alert_for(Failure::InternalError), 80);
}
