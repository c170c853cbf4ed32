#include <gtest/gtest.h>

#include "json.hpp"
#include "support.hpp"
#include "tlsqkd/kme/in_process.hpp"

using namespace tlsqkd;
using nlohmann::json;
using tlsqkd::testkit::KmePair;

namespace {

KmeResponse call(KmeService& kme, Listener l, std::optional<std::string> serial, std::string method,
                 std::string path, std::string body = {}) {
  KmeRequest r;
  r.listener = l;
  r.caller.cert_serial = std::move(serial);
  r.method = std::move(method);
  r.path = std::move(path);
  r.body = std::move(body);
  return kme.handle(r);
}

struct FailingNotifier : PeerNotifier {
  int calls = 0;
  void notify(KmeId, const KeyActivation&) override {
    ++calls;
    throw PeerNotificationError("peer down");
  }
};

std::size_t stored(KmePair& p, const char* serial = "a1") {
  auto r = p.get(*p.kme1, serial, "/api/v1/keys/2/status");
  return json::parse(r.body)["stored_key_count"].get<std::size_t>();
}

}  // namespace

TEST(KmeService, EncThenDecDeliversSameKeyOnce) {
  KmePair p(4);
  auto enc = p.get(*p.kme1, "a1", "/api/v1/keys/2/enc_keys");
  ASSERT_EQ(enc.status, 200) << enc.body;
  auto j = json::parse(enc.body);
  ASSERT_EQ(j["keys"].size(), 1u);
  std::string id = j["keys"][0]["key_ID"];
  std::string key = j["keys"][0]["key"];
  EXPECT_EQ(base64_decode(key).size(), 32u);

  auto dec = p.get(*p.kme2, "b2", "/api/v1/keys/1/dec_keys?key_ID=" + id);
  ASSERT_EQ(dec.status, 200) << dec.body;
  EXPECT_EQ(json::parse(dec.body)["keys"][0]["key"], key);
  EXPECT_EQ(p.get(*p.kme2, "b2", "/api/v1/keys/1/dec_keys?key_ID=" + id).status, 410);
}

TEST(KmeService, DecKeysRefusals) {
  KmePair p(4);
  auto enc = p.get(*p.kme1, "a1", "/api/v1/keys/2/enc_keys");
  std::string id = json::parse(enc.body)["keys"][0]["key_ID"];
  EXPECT_EQ(p.get(*p.kme2, "c3", "/api/v1/keys/1/dec_keys?key_ID=" + id).status, 401);
  EXPECT_EQ(p.get(*p.kme2, "b2", "/api/v1/keys/5/dec_keys?key_ID=" + id).status, 404);
  EXPECT_EQ(p.get(*p.kme2, "b2", "/api/v1/keys/1/dec_keys?key_ID=nope").status, 400);
  EXPECT_EQ(p.get(*p.kme2, "b2",
                  "/api/v1/keys/1/dec_keys?key_ID=de8a847b-ff8c-543d-a9b8-53a215e6ee77")
                .status,
            404);
  EXPECT_EQ(p.get(*p.kme2, "b2", "/api/v1/keys/x/dec_keys?key_ID=" + id).status, 400);
  // Still deliverable to the rightful slave afterwards.
  EXPECT_EQ(p.get(*p.kme2, "b2", "/api/v1/keys/1/dec_keys?key_ID=" + id).status, 200);
}

TEST(KmeService, DecKeysPostBody) {
  KmePair p(4);
  auto enc = p.get(*p.kme1, "a1", "/api/v1/keys/2/enc_keys");
  std::string id = json::parse(enc.body)["keys"][0]["key_ID"];
  EXPECT_EQ(call(*p.kme2, Listener::Sae, "b2", "POST", "/api/v1/keys/1/dec_keys", "{}").status, 400);
  auto ok = call(*p.kme2, Listener::Sae, "b2", "POST", "/api/v1/keys/1/dec_keys",
                 json{{"key_IDs", json::array({json{{"key_ID", id}}})}}.dump());
  EXPECT_EQ(ok.status, 200) << ok.body;
}

TEST(KmeService, EncKeysParameters) {
  KmePair p(4);
  EXPECT_EQ(p.get(*p.kme1, "a1", "/api/v1/keys/2/enc_keys?number=2").status, 400);
  EXPECT_EQ(p.get(*p.kme1, "a1", "/api/v1/keys/2/enc_keys?size=128").status, 400);
  EXPECT_EQ(p.get(*p.kme1, "a1", "/api/v1/keys/2/enc_keys?number=1&size=256").status, 200);
  EXPECT_EQ(p.get(*p.kme1, "a1", "/api/v1/keys/99/enc_keys").status, 404);
  EXPECT_EQ(p.get(*p.kme1, "a1", "/api/v1/keys/1/enc_keys").status, 404);
  EXPECT_EQ(p.get(*p.kme1, "a1", "/api/v1/keys/-1/enc_keys").status, 400);
  EXPECT_EQ(call(*p.kme1, Listener::Sae, "a1", "POST", "/api/v1/keys/2/enc_keys",
                 R"({"number":1,"size":256})").status,
            200);
  EXPECT_EQ(call(*p.kme1, Listener::Sae, "a1", "POST", "/api/v1/keys/2/enc_keys", "[").status,
            400);
  EXPECT_EQ(call(*p.kme1, Listener::Sae, "a1", "DELETE", "/api/v1/keys/2/enc_keys").status, 405);
}

TEST(KmeService, PoolExhaustionIs503) {
  KmePair p(2);
  EXPECT_EQ(p.get(*p.kme1, "a1", "/api/v1/keys/2/enc_keys").status, 200);
  EXPECT_EQ(p.get(*p.kme1, "a1", "/api/v1/keys/2/enc_keys").status, 200);
  auto r = p.get(*p.kme1, "a1", "/api/v1/keys/2/enc_keys");
  EXPECT_EQ(r.status, 503);
  EXPECT_EQ(json::parse(r.body)["message"], std::string(kPoolExhaustedReason));
  EXPECT_EQ(stored(p), 0u);
}

TEST(KmeService, StatusReportsPool) {
  KmePair p(5);
  auto r = p.get(*p.kme1, "a1", "/api/v1/keys/2/status");
  ASSERT_EQ(r.status, 200);
  auto j = json::parse(r.body);
  EXPECT_EQ(j["stored_key_count"], 5);
  EXPECT_EQ(j["key_size"], 256);
  EXPECT_EQ(j["max_key_per_request"], 1);
  EXPECT_EQ(j["master_SAE_ID"], 1);
  EXPECT_EQ(j["slave_SAE_ID"], 2);
  EXPECT_EQ(j["source_KME_ID"], "1");
  EXPECT_EQ(j["target_KME_ID"], "2");
  p.get(*p.kme1, "a1", "/api/v1/keys/2/enc_keys");
  EXPECT_EQ(stored(p), 4u);
  // The slave side counts the activated key out of its pool as well.
  auto s2 = json::parse(p.get(*p.kme2, "b2", "/api/v1/keys/1/status").body);
  EXPECT_EQ(s2["stored_key_count"], 4);
}

TEST(KmeService, AuthenticationPrecedesRouting) {
  KmePair p(2);
  for (const char* path : {"/api/v1/keys/2/enc_keys", "/api/v1/keys/2/status", "/nonexistent",
                           "/api/v1/sae/info/me"}) {
    EXPECT_EQ(call(*p.kme1, Listener::Sae, std::nullopt, "GET", path).status, 401) << path;
    EXPECT_EQ(call(*p.kme1, Listener::Sae, "ff", "GET", path).status, 401) << path;
    EXPECT_EQ(call(*p.kme1, Listener::Sae, "e2", "GET", path).status, 401) << path;
  }
  EXPECT_EQ(call(*p.kme1, Listener::Sae, "a1", "GET", "/nonexistent").status, 404);
  EXPECT_EQ(call(*p.kme1, Listener::Kme, "a1", "POST", "/api/v1/internal/activate", "{}").status,
            401);
  EXPECT_EQ(call(*p.kme1, Listener::Admin, "a1", "GET", "/api/v1/admin/entropy/2").status, 401);
  EXPECT_EQ(stored(p), 2u);
}

TEST(KmeService, InfoMe) {
  KmePair p(1);
  auto r = p.get(*p.kme2, "c3", "/api/v1/sae/info/me");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(json::parse(r.body)["SAE_ID"], 3);
}

TEST(KmeService, UnacknowledgedActivationReturnsKey) {
  KmePair p(3);
  auto failing = std::make_shared<FailingNotifier>();
  p.kme1->set_notifier(failing);
  auto before = p.store1->find(derive_key_uuid(testkit::seeded_material(7, 32)));
  ASSERT_TRUE(before);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(p.get(*p.kme1, "a1", "/api/v1/keys/2/enc_keys").status, 502);
  }
  EXPECT_EQ(failing->calls, 5);
  EXPECT_EQ(stored(p), 3u);
  EXPECT_EQ(p.store1->find(before->uuid)->state, KeyState::Available);

  p.kme1->set_notifier(p.notifier1);
  auto ok = p.get(*p.kme1, "a1", "/api/v1/keys/2/enc_keys");
  ASSERT_EQ(ok.status, 200);
  // The compensated key is the next one handed out.
  EXPECT_EQ(json::parse(ok.body)["keys"][0]["key_ID"], before->uuid.to_string());
}

TEST(KmeService, ActivationEndpointTable) {
  KmePair p(3);
  auto material = testkit::seeded_material(7, 64);
  auto u = derive_key_uuid(ByteView(material).first(32));
  KeyActivation act{u, SaeId{1}, SaeId{2}};
  auto post = [&](const std::optional<std::string>& serial, const std::string& body) {
    return call(*p.kme2, Listener::Kme, serial, "POST", "/api/v1/internal/activate", body);
  };
  auto first = post("e1", activation_body(act));
  ASSERT_EQ(first.status, 200);
  EXPECT_EQ(json::parse(first.body)["status"], "activated");
  auto replay = post("e1", activation_body(act));
  EXPECT_EQ(replay.status, 200);
  EXPECT_EQ(json::parse(replay.body)["status"], "already-activated");
  EXPECT_EQ(post("e1", activation_body({u, SaeId{1}, SaeId{3}})).status, 409);
  EXPECT_EQ(post("e1", activation_body({derive_key_uuid(Bytes(32, 1)), SaeId{1}, SaeId{2}})).status,
            404);
  EXPECT_EQ(post("e1", R"({"key_ID":"x","master_SAE_ID":1,"slave_SAE_ID":2})").status, 400);
  EXPECT_EQ(post("e1", R"({"key_ID":")" + u.to_string() + R"(","master_SAE_ID":-1,"slave_SAE_ID":2})").status, 400);
  EXPECT_EQ(post("e1", "not json").status, 400);
  EXPECT_EQ(post("e2", activation_body(act)).status, 401);
  EXPECT_EQ(post(std::nullopt, activation_body(act)).status, 401);
  EXPECT_EQ(call(*p.kme2, Listener::Kme, "e1", "GET", "/api/v1/internal/activate").status, 405);
}

TEST(KmeService, AdminEntropy) {
  KmePair p(64);
  auto r = call(*p.kme1, Listener::Admin, "ad", "GET", "/api/v1/admin/entropy/2");
  ASSERT_EQ(r.status, 200);
  auto j = json::parse(r.body);
  EXPECT_GT(j["entropy_bits_per_byte"].get<double>(), 7.5);
  EXPECT_EQ(j["total_key_count"], 64);
  EXPECT_EQ(call(*p.kme1, Listener::Admin, "ad", "GET", "/api/v1/admin/entropy/9").status, 404);
  EXPECT_EQ(call(*p.kme1, Listener::Admin, "ad", "GET", "/api/v1/admin/entropy/x").status, 400);
}

TEST(KmeService, AdminEntropyExtremes) {
  auto store = std::make_shared<KeyStore>();
  store->ingest_stream(KmeId{2}, Bytes(32, 0));
  KmeService kme(testkit::pair_config(KmeId{1}), store, nullptr);
  auto zero = call(kme, Listener::Admin, "ad", "GET", "/api/v1/admin/entropy/2");
  EXPECT_DOUBLE_EQ(json::parse(zero.body)["entropy_bits_per_byte"].get<double>(), 0.0);

  auto big = std::make_shared<KeyStore>();
  big->ingest_stream(KmeId{2}, testkit::seeded_material(77, 1 << 20));
  KmeService kme_big(testkit::pair_config(KmeId{1}), big, nullptr);
  auto high = call(kme_big, Listener::Admin, "ad", "GET", "/api/v1/admin/entropy/2");
  EXPECT_GE(json::parse(high.body)["entropy_bits_per_byte"].get<double>(), 7.9);
}

TEST(KmeService, MissingNotifierIs502) {
  auto store = std::make_shared<KeyStore>();
  store->ingest_stream(KmeId{2}, testkit::seeded_material(1, 64));
  KmeService kme(testkit::pair_config(KmeId{1}), store, nullptr);
  EXPECT_EQ(kme.handle(make_get_request(Listener::Sae, "a1", "/api/v1/keys/2/enc_keys")).status,
            502);
  EXPECT_EQ(store->status(KmeId{2}).stored_key_count, 2u);
}

TEST(InProcess, GetRequestSplitsQuery) {
  auto r = make_get_request(Listener::Sae, "a1", "/p/q?a=1&b=x");
  EXPECT_EQ(r.path, "/p/q");
  EXPECT_EQ(r.query.at("a"), "1");
  EXPECT_EQ(r.query.at("b"), "x");
  EXPECT_EQ(r.caller.cert_serial, "a1");
}
