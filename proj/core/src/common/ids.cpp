#include "tlsqkd/common/ids.hpp"

#include <charconv>

#include "tlsqkd/common/bytes.hpp"

namespace tlsqkd {

std::string to_string(SaeId id) { return std::to_string(id.value); }
std::string to_string(KmeId id) { return std::to_string(id.value); }

std::optional<std::uint64_t> parse_u64(std::string_view text) {
  if (text.empty() || text.size() > 20) return std::nullopt;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

std::string Uuid::to_string() const {
  std::string hex = to_hex(bytes_);
  return hex.substr(0, 8) + "-" + hex.substr(8, 4) + "-" + hex.substr(12, 4) + "-" +
         hex.substr(16, 4) + "-" + hex.substr(20, 12);
}

std::optional<Uuid> Uuid::parse(std::string_view text) {
  if (text.size() != 36) return std::nullopt;
  std::string hex;
  for (std::size_t i = 0; i < text.size(); ++i) {
    bool dash_slot = i == 8 || i == 13 || i == 18 || i == 23;
    if (dash_slot != (text[i] == '-')) return std::nullopt;
    if (!dash_slot) hex.push_back(text[i]);
  }
  try {
    Bytes raw = from_hex(hex);
    Storage s{};
    std::copy(raw.begin(), raw.end(), s.begin());
    return Uuid(s);
  } catch (const DecodeError&) {
    return std::nullopt;
  }
}

}  // namespace tlsqkd
