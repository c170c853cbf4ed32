#include "tlsqkd/sim/simulator.hpp"

#include <algorithm>
#include <stdexcept>

namespace tlsqkd::sim {

std::string_view to_string(Node n) {
  switch (n) {
    case Node::SaeMaster: return "SAE_master";
    case Node::SaeSlave: return "SAE_slave";
    case Node::Kme1: return "KME1";
    case Node::Kme2: return "KME2";
    case Node::SaeThird: return "SAE_third";
  }
  return "?";
}

namespace {
constexpr std::array<std::string_view, kLinkCount> kLinkNames = {
    "sae_master-kme1", "sae_slave-kme2", "kme1-kme2", "sae_master-sae_slave", "sae_third-kme2"};
}

std::string_view to_string(LinkId l) { return kLinkNames[static_cast<std::size_t>(l)]; }

std::optional<LinkId> parse_link(std::string_view name) {
  for (std::size_t i = 0; i < kLinkNames.size(); ++i) {
    if (kLinkNames[i] == name) return static_cast<LinkId>(i);
  }
  return std::nullopt;
}

std::array<Node, 2> ends(LinkId l) {
  switch (l) {
    case LinkId::MasterKme1: return {Node::SaeMaster, Node::Kme1};
    case LinkId::SlaveKme2: return {Node::SaeSlave, Node::Kme2};
    case LinkId::Kme1Kme2: return {Node::Kme1, Node::Kme2};
    case LinkId::MasterSlave: return {Node::SaeMaster, Node::SaeSlave};
    case LinkId::ThirdKme2: return {Node::SaeThird, Node::Kme2};
  }
  throw std::invalid_argument("bad link");
}

std::size_t SimLink::direction(Node from) const {
  auto e = ends(id_);
  if (from == e[0]) return 0;
  if (from == e[1]) return 1;
  throw std::invalid_argument(std::string(to_string(from)) + " is not on link " +
                              std::string(to_string(id_)));
}

Simulator::Simulator(std::uint64_t seed) : jitter_rng_(seed) {
  for (std::size_t i = 0; i < kLinkCount; ++i) links_[i] = SimLink(static_cast<LinkId>(i), 0);
}

void Simulator::set_link(LinkId id, double latency_ms, double jitter_ms) {
  if (latency_ms < 0 || jitter_ms < 0) throw std::invalid_argument("negative latency");
  auto& l = link(id);
  l.latency_ms_ = latency_ms;
  l.jitter_ms_ = jitter_ms;
}

double Simulator::transit(SimLink& l, Node from, std::size_t bytes, const std::string& label,
                          double start) {
  auto dir = l.direction(from);
  double latency = l.latency_ms_;
  if (l.jitter_ms_ > 0) {
    latency += std::uniform_real_distribution<double>(0, l.jitter_ms_)(jitter_rng_);
  }
  // Ordered delivery: never overtake an earlier message in the same direction.
  auto& last = last_arrival_[static_cast<std::size_t>(l.id_) * 2 + dir];
  double arrival = std::max(start + latency, last);
  last = arrival;
  ++l.messages_[dir];
  l.bytes_[dir] += bytes;
  trace_.push_back({TraceEntry::Kind::Message, l.id_, from, ends(l.id_)[1 - dir], start, arrival,
                    arrival - start, bytes, label});
  return arrival;
}

const Fault* Simulator::match_fault(LinkId link, Node from, std::uint64_t index) const {
  for (const auto& f : faults_) {
    if (f.link == link && f.from == from && f.message_index == index) return &f;
  }
  return nullptr;
}

void Simulator::post(LinkId id, Node from, Bytes payload, std::string label, Deliver deliver) {
  auto& l = link(id);
  auto index = sent_[{id, from}]++;
  const Fault* fault = match_fault(id, from, index);
  if (fault && fault->kind == Fault::Kind::DropOnce) {
    // Counted as sent but never delivered.
    auto dir = l.direction(from);
    ++l.messages_[dir];
    l.bytes_[dir] += payload.size();
    trace_.push_back({TraceEntry::Kind::Message, id, from, ends(id)[1 - dir], now_, now_, 0,
                      payload.size(), label + " [dropped]"});
    return;
  }
  if (fault && fault->kind == Fault::Kind::CorruptByte && fault->offset < payload.size()) {
    payload[fault->offset] ^= 0x01;
    label += " [corrupted]";
  }
  int copies = fault && fault->kind == Fault::Kind::Duplicate ? 2 : 1;
  for (int c = 0; c < copies; ++c) {
    double arrival = transit(l, from, payload.size(), label, now_);
    queue_.push(Event{arrival, order_++, payload, deliver});
  }
}

void Simulator::exchange(LinkId id, Node from, std::size_t bytes, std::string label) {
  now_ = transit(link(id), from, bytes, label, now_);
}

void Simulator::compute(Node node, double ms, std::string label) {
  if (ms <= 0) return;
  trace_.push_back({TraceEntry::Kind::Compute, LinkId::MasterSlave, node, node, now_, now_ + ms, ms,
                    0, std::move(label)});
  now_ += ms;
}

bool Simulator::step() {
  if (queue_.empty()) return false;
  Event ev = queue_.top();
  queue_.pop();
  now_ = std::max(now_, ev.time);
  ev.deliver(std::move(ev.payload));
  return true;
}

void Simulator::run() {
  while (step()) {
  }
}

std::uint64_t Simulator::total_messages() const {
  std::uint64_t n = 0;
  for (const auto& l : links_) n += l.total_messages();
  return n;
}

}  // namespace tlsqkd::sim
