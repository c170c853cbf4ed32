#include "tlsqkd/keystore/key_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tlsqkd/common/log.hpp"
#include "tlsqkd/crypto/crypto.hpp"

namespace tlsqkd {
namespace fs = std::filesystem;

std::string_view to_string(KeyState s) {
  switch (s) {
    case KeyState::Available: return "AVAILABLE";
    case KeyState::Reserved: return "RESERVED";
    case KeyState::Consumed: return "CONSUMED";
  }
  return "?";
}

std::optional<KeyState> parse_key_state(std::string_view s) {
  if (s == "AVAILABLE") return KeyState::Available;
  if (s == "RESERVED") return KeyState::Reserved;
  if (s == "CONSUMED") return KeyState::Consumed;
  return std::nullopt;
}

Uuid derive_key_uuid(ByteView material) {
  if (material.size() != kQkdKeySize) {
    throw std::invalid_argument("key material must be exactly 32 bytes, got " +
                                std::to_string(material.size()));
  }
  auto digest = crypto::sha1(material);
  Uuid::Storage b;
  std::copy_n(digest.begin(), b.size(), b.begin());
  b[6] = static_cast<std::uint8_t>((b[6] & 0x0f) | 0x50);
  b[8] = static_cast<std::uint8_t>((b[8] & 0x3f) | 0x80);
  return Uuid(b);
}

double byte_entropy(const std::array<std::uint64_t, 256>& histogram) {
  std::uint64_t total = 0;
  for (auto c : histogram) total += c;
  if (total == 0) return 0.0;
  double h = 0.0;
  for (auto c : histogram) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return std::clamp(h, 0.0, 8.0);
}

std::size_t IngestReport::total_added() const {
  std::size_t n = 0;
  for (const auto& [_, c] : added) n += c;
  return n;
}

Reservation::Reservation(Reservation&& other) noexcept
    : store_(other.store_),
      uuid_(other.uuid_),
      material_(other.material_),
      activation_(other.activation_),
      done_(other.done_) {
  other.done_ = true;
}

Reservation::~Reservation() {
  if (!done_) store_->release_reservation(*this);
  crypto::secure_zero(material_);
}

void Reservation::commit() {
  if (done_) throw std::logic_error("reservation already settled");
  store_->commit_reservation(*this);
  done_ = true;
}

Bytes seeded_key_material(std::uint64_t seed, std::size_t bytes) {
  crypto::SeededRandom rng(seed, "qkd-material");
  Bytes out(bytes);
  rng.fill(out);
  return out;
}

std::vector<fs::path> write_key_files(const fs::path& root, KmeId peer, std::uint64_t seed,
                                      std::size_t bytes, std::size_t files) {
  if (files == 0) throw std::invalid_argument("at least one key file");
  Bytes all = seeded_key_material(seed, bytes);
  fs::path dir = root / to_string(peer);
  fs::create_directories(dir);
  std::vector<fs::path> written;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < files; ++i) {
    std::size_t n = bytes / files + (i < bytes % files ? 1 : 0);
    char name[32];
    std::snprintf(name, sizeof name, "key_%04zu.cor", i);
    fs::path file = dir / name;
    std::ofstream f(file, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(all.data() + offset), static_cast<std::streamsize>(n));
    f.close();
    if (!f) throw std::runtime_error("cannot write " + file.string());
    offset += n;
    written.push_back(file);
  }
  crypto::secure_zero(all);
  return written;
}

KeyStore::KeyStore() : KeyStore(derive_key_uuid) {}

KeyStore::KeyStore(UuidFn uuid_fn) : uuid_fn_(std::move(uuid_fn)) {}

KeyStore::~KeyStore() {
  for (auto& [_, e] : keys_) crypto::secure_zero(e.key.material);
}

IngestReport KeyStore::ingest_directory(const fs::path& root) {
  IngestReport report;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw KeyStoreError(KeyStoreErrc::IngestFailed,
                        "key material root is not a directory: " + root.string());
  }

  std::vector<fs::path> peer_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) peer_dirs.push_back(entry.path());
  }
  std::sort(peer_dirs.begin(), peer_dirs.end());

  for (const auto& dir : peer_dirs) {
    auto peer_value = parse_u64(dir.filename().string());
    if (!peer_value) {
      log().warn("[keystore] skipping {}: folder name is not a KME id", dir.string());
      continue;
    }
    KmeId peer{*peer_value};

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".cor") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

    std::vector<std::string> fresh;
    {
      std::lock_guard lock(mutex_);
      auto& seen = pools_[peer].seen_files;
      for (const auto& f : files) {
        if (!seen.count(f.filename().string())) fresh.push_back(f.filename().string());
      }
    }

    Bytes stream;
    for (const auto& name : fresh) {
      fs::path path = dir / name;
      std::ifstream in(path, std::ios::binary);
      if (!in) {
        throw KeyStoreError(KeyStoreErrc::IngestFailed, "cannot read key file " + path.string());
      }
      Bytes chunk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      if (in.bad()) {
        throw KeyStoreError(KeyStoreErrc::IngestFailed, "cannot read key file " + path.string());
      }
      stream.insert(stream.end(), chunk.begin(), chunk.end());
    }

    std::size_t dups = 0;
    std::size_t added = ingest_stream(peer, stream, &dups);
    crypto::secure_zero(stream);
    report.added[peer] += added;
    report.duplicates_skipped += dups;

    std::lock_guard lock(mutex_);
    auto& seen = pools_[peer].seen_files;
    seen.insert(fresh.begin(), fresh.end());
  }
  return report;
}

std::size_t KeyStore::ingest_stream(KmeId peer, ByteView stream,
                                    std::size_t* duplicates_skipped) {
  const std::size_t count = stream.size() / kQkdKeySize;
  std::vector<QkdKey> batch;
  batch.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    QkdKey k;
    std::copy_n(stream.begin() + i * kQkdKeySize, kQkdKeySize, k.material.begin());
    k.uuid = uuid_fn_(k.material);
    k.peer_kme = peer;
    batch.push_back(k);
  }

  std::lock_guard lock(mutex_);
  // Reject the whole batch before touching the pool if any uuid collides.
  std::unordered_map<Uuid, const KeyMaterial*> in_batch;
  for (const auto& k : batch) {
    const KeyMaterial* other = nullptr;
    if (auto it = keys_.find(k.uuid); it != keys_.end()) {
      other = &it->second.key.material;
    } else if (auto jt = in_batch.find(k.uuid); jt != in_batch.end()) {
      other = jt->second;
    }
    if (other && *other != k.material) {
      throw KeyStoreError(KeyStoreErrc::UuidCollision,
                          "uuid collision on distinct material: " + k.uuid.to_string());
    }
    in_batch.emplace(k.uuid, &k.material);
  }

  std::size_t added = 0;
  std::size_t dups = 0;
  auto& pool = pools_[peer];
  for (auto& k : batch) {
    if (keys_.count(k.uuid)) {
      ++dups;
      log().warn("[keystore] duplicate key {} for peer {} skipped", k.uuid.to_string(),
                 to_string(peer));
      continue;
    }
    for (auto b : k.material) ++pool.histogram[b];
    std::uint64_t order = next_order_++;
    pool.available.emplace(order, k.uuid);
    ++pool.available_count;
    ++pool.total;
    keys_.emplace(k.uuid, Entry{k, order});
    ++added;
  }
  for (auto& k : batch) crypto::secure_zero(k.material);
  if (duplicates_skipped) *duplicates_skipped += dups;
  return added;
}

std::pair<Uuid, KeyMaterial> KeyStore::reserve_key(KmeId peer, SaeId master, SaeId slave) {
  auto r = begin_reservation(peer, master, slave);
  r.commit();
  return {r.uuid(), r.material()};
}

Reservation KeyStore::begin_reservation(KmeId peer, SaeId master, SaeId slave) {
  std::lock_guard lock(mutex_);
  auto pit = pools_.find(peer);
  if (pit == pools_.end() || pit->second.available.empty()) {
    throw KeyStoreError(KeyStoreErrc::PoolExhausted,
                        "key pool exhausted for peer KME " + to_string(peer));
  }
  auto first = pit->second.available.begin();
  Uuid id = first->second;
  pit->second.available.erase(first);
  const auto& e = keys_.at(id);
  return Reservation(this, id, e.key.material, KeyActivation{id, master, slave});
}

void KeyStore::commit_reservation(const Reservation& r) {
  std::lock_guard lock(mutex_);
  auto& e = keys_.at(r.uuid());
  e.key.activation = r.activation();
  transition(e, KeyState::Reserved);
}

void KeyStore::release_reservation(const Reservation& r) {
  std::lock_guard lock(mutex_);
  auto& e = keys_.at(r.uuid());
  pools_[e.key.peer_kme].available.emplace(e.order, r.uuid());
}

KeyMaterial KeyStore::take_key_by_uuid(const Uuid& uuid, SaeId requester,
                                       std::optional<SaeId> expected_master) {
  std::lock_guard lock(mutex_);
  auto it = keys_.find(uuid);
  if (it == keys_.end() || !it->second.key.activation) {
    throw KeyStoreError(KeyStoreErrc::NotFound, "no activated key " + uuid.to_string());
  }
  auto& e = it->second;
  const auto& act = *e.key.activation;
  if (act.slave_sae != requester) {
    throw KeyStoreError(KeyStoreErrc::Unauthorized,
                        "SAE " + to_string(requester) + " is not the slave of " +
                            uuid.to_string());
  }
  if (expected_master && act.master_sae != *expected_master) {
    throw KeyStoreError(KeyStoreErrc::NotFound,
                        "no key " + uuid.to_string() + " for master " +
                            to_string(*expected_master));
  }
  if (e.key.state == KeyState::Consumed) {
    throw KeyStoreError(KeyStoreErrc::Gone, "key " + uuid.to_string() + " already delivered");
  }
  transition(e, KeyState::Consumed);
  return e.key.material;
}

ActivationOutcome KeyStore::apply_activation(KmeId peer, const KeyActivation& activation) {
  std::lock_guard lock(mutex_);
  auto it = keys_.find(activation.key_uuid);
  if (it == keys_.end() || it->second.key.peer_kme != peer) {
    throw KeyStoreError(KeyStoreErrc::NotFound,
                        "activation for unknown key " + activation.key_uuid.to_string());
  }
  auto& e = it->second;
  if (e.key.activation) {
    if (*e.key.activation == activation) return ActivationOutcome::AlreadyApplied;
    throw KeyStoreError(KeyStoreErrc::ActivationConflict,
                        "conflicting activation for " + activation.key_uuid.to_string());
  }
  auto& pool = pools_[peer];
  if (pool.available.erase(e.order) == 0) {
    // Held by an in-flight local reservation: the peer and we picked the
    // same key, which only happens if both sides reserve for the same link.
    throw KeyStoreError(KeyStoreErrc::ActivationConflict,
                        "key " + activation.key_uuid.to_string() + " is held locally");
  }
  e.key.activation = activation;
  transition(e, KeyState::Reserved);
  return ActivationOutcome::Applied;
}

void KeyStore::transition(Entry& e, KeyState next) {
  const KeyState prev = e.key.state;
  const bool forward = (prev == KeyState::Available && next == KeyState::Reserved) ||
                       (prev == KeyState::Reserved && next == KeyState::Consumed);
  if (!forward) {
    throw std::logic_error("illegal key transition " + std::string(to_string(prev)) + " -> " +
                           std::string(to_string(next)));
  }
  e.key.state = next;
  if (prev == KeyState::Available) --pools_[e.key.peer_kme].available_count;
  if (journal_.is_open()) {
    const auto& act = *e.key.activation;
    journal_ << e.key.uuid.to_string() << ' ' << to_string(next) << ' ' << act.master_sae.value
             << ' ' << act.slave_sae.value << '\n';
    journal_.flush();
  }
  if (observer_) observer_(e.key.uuid, next);
}

double KeyStore::entropy_report(KmeId peer) const {
  std::lock_guard lock(mutex_);
  auto it = pools_.find(peer);
  if (it == pools_.end() || it->second.total == 0) {
    throw KeyStoreError(KeyStoreErrc::NoMaterial, "no key material for peer " + to_string(peer));
  }
  return byte_entropy(it->second.histogram);
}

KeyPoolStatus KeyStore::status(KmeId peer) const {
  std::lock_guard lock(mutex_);
  KeyPoolStatus s;
  s.peer_kme = peer;
  if (auto it = pools_.find(peer); it != pools_.end()) s.stored_key_count = it->second.available_count;
  return s;
}

std::size_t KeyStore::total_keys(KmeId peer) const {
  std::lock_guard lock(mutex_);
  auto it = pools_.find(peer);
  return it == pools_.end() ? 0 : it->second.total;
}

std::optional<QkdKey> KeyStore::find(const Uuid& uuid) const {
  std::lock_guard lock(mutex_);
  auto it = keys_.find(uuid);
  if (it == keys_.end()) return std::nullopt;
  return it->second.key;
}

std::size_t KeyStore::size() const {
  std::lock_guard lock(mutex_);
  return keys_.size();
}

std::vector<KmeId> KeyStore::peers() const {
  std::lock_guard lock(mutex_);
  std::vector<KmeId> out;
  for (const auto& [id, _] : pools_) out.push_back(id);
  return out;
}

void KeyStore::open_journal(const fs::path& path) {
  std::lock_guard lock(mutex_);
  if (journal_.is_open()) throw std::logic_error("journal already open");

  if (std::ifstream in(path); in) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string uuid_text, state_text;
      std::uint64_t master = 0, slave = 0;
      if (!(fields >> uuid_text >> state_text >> master >> slave)) {
        throw KeyStoreError(KeyStoreErrc::IngestFailed,
                            "malformed journal line " + std::to_string(lineno) + " in " +
                                path.string());
      }
      auto uuid = Uuid::parse(uuid_text);
      auto state = parse_key_state(state_text);
      if (!uuid || !state || *state == KeyState::Available) {
        throw KeyStoreError(KeyStoreErrc::IngestFailed,
                            "malformed journal line " + std::to_string(lineno) + " in " +
                                path.string());
      }
      auto it = keys_.find(*uuid);
      if (it == keys_.end()) {
        log().warn("[keystore] journal names unknown key {}", uuid_text);
        continue;
      }
      auto& e = it->second;
      if (e.key.state >= *state) continue;
      if (e.key.state == KeyState::Available) {
        pools_[e.key.peer_kme].available.erase(e.order);
        e.key.activation = KeyActivation{*uuid, SaeId{master}, SaeId{slave}};
        transition(e, KeyState::Reserved);
      }
      if (*state == KeyState::Consumed) transition(e, KeyState::Consumed);
    }
  }
  journal_.open(path, std::ios::app);
  if (!journal_) {
    throw KeyStoreError(KeyStoreErrc::IngestFailed, "cannot open journal " + path.string());
  }
}

void KeyStore::set_transition_observer(TransitionObserver observer) {
  std::lock_guard lock(mutex_);
  observer_ = std::move(observer);
}

}  // namespace tlsqkd
