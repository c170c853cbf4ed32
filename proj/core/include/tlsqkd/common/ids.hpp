#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace tlsqkd {

// SAE and KME identifiers live in separate address spaces: a KME may carry
// the same numeric value as an SAE. Distinct types keep them from mixing.

struct SaeId {
  std::uint64_t value = 0;
  auto operator<=>(const SaeId&) const = default;
};

struct KmeId {
  std::uint64_t value = 0;
  auto operator<=>(const KmeId&) const = default;
};

std::string to_string(SaeId id);
std::string to_string(KmeId id);

/// Decimal rendering used in URL paths. Rejects signs, whitespace and overflow.
std::optional<std::uint64_t> parse_u64(std::string_view text);

/// 128-bit identifier with RFC 4122 text form.
class Uuid {
 public:
  using Storage = std::array<std::uint8_t, 16>;

  Uuid() = default;
  explicit Uuid(const Storage& bytes) : bytes_(bytes) {}

  const Storage& bytes() const { return bytes_; }

  /// Lowercase hyphenated 8-4-4-4-12 form.
  std::string to_string() const;
  /// Accepts the hyphenated form in either case.
  static std::optional<Uuid> parse(std::string_view text);

  auto operator<=>(const Uuid&) const = default;

 private:
  Storage bytes_{};
};

}  // namespace tlsqkd

template <>
struct std::hash<tlsqkd::SaeId> {
  std::size_t operator()(const tlsqkd::SaeId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};

template <>
struct std::hash<tlsqkd::KmeId> {
  std::size_t operator()(const tlsqkd::KmeId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value) ^ 0x9e3779b97f4a7c15ULL;
  }
};

template <>
struct std::hash<tlsqkd::Uuid> {
  std::size_t operator()(const tlsqkd::Uuid& u) const noexcept {
    std::size_t h = 0;
    for (auto b : u.bytes()) h = h * 131 + b;
    return h;
  }
};
