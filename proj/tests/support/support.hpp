#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tlsqkd/kme/in_process.hpp"
#include "tlsqkd/kme/service.hpp"
#include "tlsqkd/sae/kme_client.hpp"
#include "tlsqkd/tls/handshake.hpp"

namespace tlsqkd::testkit {

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Answers the key delivery API from a fixed table. Never consumes anything,
/// so the same key can be fetched by any number of endpoints.
class StubKmeTransport final : public KmeTransport {
 public:
  StubKmeTransport(SaeId self, Uuid uuid, KeyMaterial key) : self_(self), uuid_(uuid), key_(key) {}
  KmeHttpResponse get(const std::string& path_and_query) override;
  std::size_t request_count() const override { return requests_; }

  int fail_with = 0;  // non-zero: every request answers with this status

 private:
  SaeId self_;
  Uuid uuid_;
  KeyMaterial key_;
  std::size_t requests_ = 0;
};

std::unique_ptr<KmeSession> stub_session(SaeId self, const Uuid& uuid, const KeyMaterial& key);

/// Two in-process KMEs sharing seeded material: KME1 serves master SAE 1
/// ("a1"), KME2 serves slave SAE 2 ("b2") and SAE 3 ("c3").
struct KmePair {
  explicit KmePair(std::size_t keys = 16, std::uint64_t seed = 7,
                   std::optional<std::uint64_t> kme2_seed = std::nullopt);

  std::shared_ptr<KeyStore> store1, store2;
  std::unique_ptr<KmeService> kme1, kme2;
  std::shared_ptr<InProcessPeerNotifier> notifier1, notifier2;

  std::unique_ptr<KmeSession> session(const std::string& serial);
  KmeResponse get(KmeService& kme, const std::string& serial, const std::string& path);
};

KmeConfig pair_config(KmeId self);
Bytes seeded_material(std::uint64_t seed, std::size_t bytes);

/// Feeds records between two endpoints until neither has anything to say.
/// Returns every record in transmission order.
std::vector<tls::Record> converse(tls::MasterHandshake& master, tls::SlaveHandshake& slave);

/// Test PKI written as PEM files: ca.pem/ca.key plus `<name>.pem/.key` per
/// leaf, with the requested serials. Leaves carry SAN 127.0.0.1 and both TLS
/// usages. A second, untrusted CA signs `rogue_<name>` leaves.
struct Pki {
  explicit Pki(const std::filesystem::path& dir,
               const std::map<std::string, std::string>& leaves = {
                   {"kme1", "e1"}, {"kme2", "e2"}, {"sae1", "a1"},
                   {"sae2", "b2"}, {"sae3", "c3"}, {"admin", "ad"}});

  TlsCredentials credentials(const std::string& name) const;
  std::filesystem::path dir;
};

// --- exhaustive state-machine check -----------------------------------------

enum class Symbol { Hello, HelloExt, Challenge, Ack, AppData, Garbage };
inline constexpr std::size_t kSymbolCount = 6;
std::string_view to_string(Symbol s);

struct ExhaustiveResult {
  std::size_t sequences = 0;
  std::size_t qkd_established = 0;  // sequences reaching ESTABLISHED(TLS-QKD)
  std::size_t violations = 0;       // ... without the honest prefix
  std::vector<std::string> examples;
};

/// Enumerates every sequence of up to `max_len` symbols against a fresh
/// endpoint of `role`, whose randomness matches an honest co-simulation.
ExhaustiveResult exhaustive_check(tls::Role role, std::size_t max_len);

}  // namespace tlsqkd::testkit
