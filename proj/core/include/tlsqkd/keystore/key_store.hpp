#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tlsqkd/common/bytes.hpp"
#include "tlsqkd/common/ids.hpp"

namespace tlsqkd {

inline constexpr std::size_t kQkdKeySize = 32;
inline constexpr int kQkdKeySizeBits = 256;
inline constexpr int kMaxKeysPerRequest = 1;

using KeyMaterial = std::array<std::uint8_t, kQkdKeySize>;

enum class KeyState { Available, Reserved, Consumed };

std::string_view to_string(KeyState s);
std::optional<KeyState> parse_key_state(std::string_view s);

struct KeyActivation {
  Uuid key_uuid;
  SaeId master_sae;
  SaeId slave_sae;
  bool operator==(const KeyActivation&) const = default;
};

struct QkdKey {
  Uuid uuid;
  KeyMaterial material{};
  KmeId peer_kme;
  KeyState state = KeyState::Available;
  std::optional<KeyActivation> activation;
};

struct KeyPoolStatus {
  KmeId peer_kme;
  std::size_t stored_key_count = 0;
  int key_size_bits = kQkdKeySizeBits;
  int max_keys_per_request = kMaxKeysPerRequest;
};

enum class KeyStoreErrc {
  PoolExhausted,
  NotFound,
  Unauthorized,
  Gone,
  NoMaterial,
  IngestFailed,
  UuidCollision,
  ActivationConflict,
};

class KeyStoreError : public std::runtime_error {
 public:
  KeyStoreError(KeyStoreErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  KeyStoreErrc code() const { return code_; }

 private:
  KeyStoreErrc code_;
};

/// SHA-1 over the 32 bytes, truncated to 16, stamped as a version-5 RFC 4122
/// uuid. Throws std::invalid_argument unless `material` is exactly 32 bytes.
Uuid derive_key_uuid(ByteView material);

/// Stand-in for QKD output: a deterministic keystream, identical at both
/// ends of a link when they share `seed`.
Bytes seeded_key_material(std::uint64_t seed, std::size_t bytes);

/// Writes `bytes` of seeded material as `<root>/<peer>/key_NNNN.cor`, split
/// over `files` files. Throws std::runtime_error on I/O failure.
std::vector<std::filesystem::path> write_key_files(const std::filesystem::path& root, KmeId peer,
                                                   std::uint64_t seed, std::size_t bytes,
                                                   std::size_t files = 1);

/// Order-0 Shannon entropy of a byte histogram, in bits per byte.
double byte_entropy(const std::array<std::uint64_t, 256>& histogram);

struct IngestReport {
  std::map<KmeId, std::size_t> added;
  std::size_t duplicates_skipped = 0;
  std::size_t total_added() const;
};

class KeyStore;

/// A key taken out of circulation but not yet bound to an activation.
/// Destroying it without commit() puts the key back into the pool; the key's
/// observable state stays AVAILABLE throughout, so lifecycle order holds.
class Reservation {
 public:
  Reservation(Reservation&& other) noexcept;
  Reservation& operator=(Reservation&&) = delete;
  ~Reservation();

  const Uuid& uuid() const { return uuid_; }
  const KeyMaterial& material() const { return material_; }
  const KeyActivation& activation() const { return activation_; }

  /// AVAILABLE -> RESERVED with the pending activation.
  void commit();

 private:
  friend class KeyStore;
  Reservation(KeyStore* store, Uuid uuid, const KeyMaterial& material, KeyActivation act)
      : store_(store), uuid_(uuid), material_(material), activation_(act) {}

  KeyStore* store_;
  Uuid uuid_;
  KeyMaterial material_;
  KeyActivation activation_;
  bool done_ = false;
};

enum class ActivationOutcome { Applied, AlreadyApplied };

/// Thread-safe pool of one-time 32-byte keys, one pool per peer KME.
class KeyStore {
 public:
  using UuidFn = std::function<Uuid(ByteView)>;
  using TransitionObserver = std::function<void(const Uuid&, KeyState)>;

  KeyStore();
  /// `uuid_fn` replaces derive_key_uuid; only tests need this.
  explicit KeyStore(UuidFn uuid_fn);
  ~KeyStore();

  KeyStore(const KeyStore&) = delete;
  KeyStore& operator=(const KeyStore&) = delete;

  /// Scans `<root>/<peer_kme_id>/*.cor`. Files already seen by an earlier
  /// scan are skipped; new files are concatenated in filename order and
  /// sliced into 32-byte keys, the trailing remainder dropped.
  IngestReport ingest_directory(const std::filesystem::path& root);

  /// Slices a byte stream for one peer. Returns the number of keys added.
  std::size_t ingest_stream(KmeId peer, ByteView stream,
                            std::size_t* duplicates_skipped = nullptr);

  /// Reserve and commit in one step.
  std::pair<Uuid, KeyMaterial> reserve_key(KmeId peer, SaeId master, SaeId slave);
  Reservation begin_reservation(KmeId peer, SaeId master, SaeId slave);

  /// One-time delivery to the activation's slave SAE. When `expected_master`
  /// is given and differs from the activation, the key is reported NotFound.
  KeyMaterial take_key_by_uuid(const Uuid& uuid, SaeId requester,
                               std::optional<SaeId> expected_master = std::nullopt);

  /// Binds a key reserved by `peer` on its side. Replays with identical
  /// fields are idempotent; differing fields raise ActivationConflict.
  ActivationOutcome apply_activation(KmeId peer, const KeyActivation& activation);

  double entropy_report(KmeId peer) const;
  KeyPoolStatus status(KmeId peer) const;
  /// Every key ever stored for `peer`, whatever its state.
  std::size_t total_keys(KmeId peer) const;
  std::optional<QkdKey> find(const Uuid& uuid) const;
  std::size_t size() const;
  std::vector<KmeId> peers() const;

  /// Replays `<uuid> <state> <master> <slave>` lines and then appends every
  /// later transition to the same file.
  void open_journal(const std::filesystem::path& path);

  void set_transition_observer(TransitionObserver observer);

 private:
  friend class Reservation;

  struct Entry {
    QkdKey key;
    std::uint64_t order = 0;
  };
  struct Pool {
    std::map<std::uint64_t, Uuid> available;  // ingestion order -> uuid, excludes held keys
    std::size_t available_count = 0;          // AVAILABLE state, held or not
    std::size_t total = 0;
    std::array<std::uint64_t, 256> histogram{};
    std::set<std::string> seen_files;
  };

  void commit_reservation(const Reservation& r);
  void release_reservation(const Reservation& r);
  void transition(Entry& e, KeyState next);  // caller holds mutex_

  UuidFn uuid_fn_;
  mutable std::mutex mutex_;
  std::unordered_map<Uuid, Entry> keys_;
  std::map<KmeId, Pool> pools_;
  std::uint64_t next_order_ = 0;
  std::ofstream journal_;
  TransitionObserver observer_;
};

}  // namespace tlsqkd
