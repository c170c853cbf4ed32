#include "tlsqkd/tls/session.hpp"

#include <algorithm>

#include "tlsqkd/sae/kme_client.hpp"

namespace tlsqkd::tls {

namespace {

bool drive(Endpoint& endpoint, RecordTransport& transport, std::vector<Record> out) {
  try {
    for (;;) {
      for (const auto& r : out) transport.send(r);
      if (endpoint.established() || endpoint.failed()) break;
      out = endpoint.on_record(transport.receive());
    }
  } catch (const TransportError&) {
    endpoint.on_transport_error();
  }
  return endpoint.established();
}

}  // namespace

bool run_master_handshake(MasterHandshake& master, RecordTransport& transport) {
  return drive(master, transport, master.start());
}

bool run_slave_handshake(SlaveHandshake& slave, RecordTransport& transport) {
  return drive(slave, transport, {});
}

SecureChannel::SecureChannel(Endpoint& endpoint, RecordTransport& transport)
    : endpoint_(endpoint), transport_(transport) {}

void SecureChannel::write(ByteView data) {
  do {
    auto n = std::min(data.size(), kMaxFragment);
    transport_.send(endpoint_.seal(data.first(n)));
    ++records_sent_;
    data = data.subspan(n);
  } while (!data.empty());
}

Bytes SecureChannel::read(std::size_t n) {
  auto& inbox = endpoint_.inbox();
  while (pending_.size() < n) {
    if (inbox.empty()) {
      auto replies = endpoint_.on_record(transport_.receive());
      ++records_received_;
      for (const auto& r : replies) transport_.send(r);
      if (endpoint_.failed()) {
        throw RecordAuthError(std::string("connection failed: ") +
                              std::string(to_string(endpoint_.failure())));
      }
      continue;
    }
    auto& front = inbox.front();
    pending_.insert(pending_.end(), front.begin(), front.end());
    inbox.pop_front();
  }
  Bytes out(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n));
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

Bytes echo_exchange(SecureChannel& channel, ByteView payload) {
  Bytes echoed;
  echoed.reserve(payload.size());
  while (!payload.empty()) {
    auto n = std::min(payload.size(), kMaxFragment);
    channel.write(payload.first(n));
    auto back = channel.read(n);
    echoed.insert(echoed.end(), back.begin(), back.end());
    payload = payload.subspan(n);
  }
  return echoed;
}

void echo_serve(SecureChannel& channel, std::size_t total) {
  while (total > 0) {
    auto n = std::min(total, kMaxFragment);
    channel.write(channel.read(n));
    total -= n;
  }
}

}  // namespace tlsqkd::tls
