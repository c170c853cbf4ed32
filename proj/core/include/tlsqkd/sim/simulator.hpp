#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "tlsqkd/common/bytes.hpp"

namespace tlsqkd::sim {

enum class Node : std::uint8_t { SaeMaster, SaeSlave, Kme1, Kme2, SaeThird };
enum class LinkId : std::uint8_t { MasterKme1, SlaveKme2, Kme1Kme2, MasterSlave, ThirdKme2 };

inline constexpr std::size_t kLinkCount = 5;

std::string_view to_string(Node n);
std::string_view to_string(LinkId l);
std::optional<LinkId> parse_link(std::string_view name);

/// The two endpoints of a link; `ends(l)[0]` is the "forward" side.
std::array<Node, 2> ends(LinkId l);

struct Fault {
  enum class Kind { DropOnce, CorruptByte, Duplicate };
  Kind kind = Kind::CorruptByte;
  LinkId link = LinkId::MasterSlave;
  Node from = Node::SaeMaster;
  /// Zero-based index among the messages `from` sends on this link.
  std::size_t message_index = 0;
  /// CorruptByte: offset into the message, flipped with 0x01.
  std::size_t offset = 0;
};

struct TraceEntry {
  enum class Kind { Message, Compute };
  Kind kind = Kind::Message;
  LinkId link = LinkId::MasterSlave;  // messages only
  Node from = Node::SaeMaster;        // computing node for Compute
  Node to = Node::SaeMaster;
  double start_ms = 0;
  double end_ms = 0;
  double cost_ms = 0;  // latency or compute time
  std::size_t bytes = 0;
  std::string label;
};

/// Reliable ordered link with a one-way latency and per-direction counters.
class SimLink {
 public:
  SimLink() = default;
  SimLink(LinkId id, double latency_ms, double jitter_ms = 0)
      : id_(id), latency_ms_(latency_ms), jitter_ms_(jitter_ms) {}

  LinkId id() const { return id_; }
  double latency_ms() const { return latency_ms_; }
  double jitter_ms() const { return jitter_ms_; }

  /// Direction index: 0 from ends()[0], 1 from ends()[1].
  std::size_t direction(Node from) const;
  std::uint64_t messages(std::size_t dir) const { return messages_[dir]; }
  std::uint64_t bytes(std::size_t dir) const { return bytes_[dir]; }
  std::uint64_t total_messages() const { return messages_[0] + messages_[1]; }

 private:
  friend class Simulator;
  LinkId id_ = LinkId::MasterSlave;
  double latency_ms_ = 0;
  double jitter_ms_ = 0;
  std::array<std::uint64_t, 2> messages_{};
  std::array<std::uint64_t, 2> bytes_{};
};

/// Single-threaded discrete-event simulator with a virtual millisecond clock.
///
/// post() queues an asynchronous delivery; exchange() models a blocking
/// message within the current step and advances the clock immediately.
/// Steps run in delivery-time order (ties in send order).
class Simulator {
 public:
  using Deliver = std::function<void(Bytes)>;

  explicit Simulator(std::uint64_t seed = 0);

  SimLink& link(LinkId id) { return links_[static_cast<std::size_t>(id)]; }
  const SimLink& link(LinkId id) const { return links_[static_cast<std::size_t>(id)]; }
  void set_link(LinkId id, double latency_ms, double jitter_ms = 0);
  void add_fault(const Fault& fault) { faults_.push_back(fault); }

  double now() const { return now_; }

  /// Sends `payload` from `from` over `link`; `deliver` runs on arrival.
  void post(LinkId link, Node from, Bytes payload, std::string label, Deliver deliver);
  /// Synchronous leg of a request/response exchange. Faults do not apply.
  void exchange(LinkId link, Node from, std::size_t bytes, std::string label);
  /// Local processing time at `node`.
  void compute(Node node, double ms, std::string label);

  /// Runs one queued delivery. False when the queue is empty.
  bool step();
  void run();
  bool idle() const { return queue_.empty(); }

  const std::vector<TraceEntry>& trace() const { return trace_; }
  std::uint64_t total_messages() const;

 private:
  struct Event {
    double time;
    std::uint64_t order;
    Bytes payload;
    Deliver deliver;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.order > b.order;
    }
  };

  double transit(SimLink& l, Node from, std::size_t bytes, const std::string& label,
                 double start);
  const Fault* match_fault(LinkId link, Node from, std::uint64_t index) const;

  std::array<SimLink, kLinkCount> links_;
  std::vector<Fault> faults_;
  std::map<std::pair<LinkId, Node>, std::uint64_t> sent_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::vector<TraceEntry> trace_;
  std::array<double, kLinkCount * 2> last_arrival_{};
  std::mt19937_64 jitter_rng_;
  double now_ = 0;
  std::uint64_t order_ = 0;
};

}  // namespace tlsqkd::sim
